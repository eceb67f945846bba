#pragma once

#include <span>
#include <vector>

#include "pkm/matrix.hpp"
#include "pkm/memory.hpp"

namespace pkm::oracle {

/// Brute-force references for the two-stage selection path. Scoring, softmax
/// weighting and selection are reimplemented here from the definitions; the
/// only code shared with the memory module is the query network substrate.
/// Any divergence between the two routes is a real bug in one of them.

/// Combined scores for the full n1 x n2 grid: entry (i1,i2) = s1(i1) + s2(i2).
struct FullGridScores {
  std::size_t n1 = 0, n2 = 0;
  std::vector<double> scores;  // [i1*n2 + i2]
};

FullGridScores full_grid(std::span<const double> q1, std::span<const double> q2,
                         const DenseMatrix& k1, const DenseMatrix& k2, memory::Distance dist,
                         double alpha);

/// Exhaustive scoring of all n1*n2 combinations, full sort, ties broken by
/// lower flat index. O(|K| log |K|) per query by construction.
std::vector<memory::ScoredIndex> naive_topk(std::span<const double> q1,
                                            std::span<const double> q2, const DenseMatrix& k1,
                                            const DenseMatrix& k2, std::size_t k,
                                            memory::Distance dist, double alpha);

/// Full layer forward through exhaustive scoring. Takes the query network by
/// value-copy internally so running statistics are never touched.
DenseMatrix naive_forward(const memory::QueryNetwork& qnet, const memory::ProductKeyStore& store,
                          const memory::ValueTable& values, const memory::MemoryConfig& cfg,
                          const DenseMatrix& x, memory::Mode mode);

}  // namespace pkm::oracle
