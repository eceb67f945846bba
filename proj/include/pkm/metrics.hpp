#pragma once

#include <cstdint>
#include <vector>

namespace pkm::metrics {

/// Deterministic operation counters for the sublinear-scaling checks.
/// Two-stage selection costs exactly n1 + n2 + k^2 key-score evaluations per
/// sample per head; the brute-force reference costs n1*n2.
struct OpCounters {
  std::uint64_t key_score_evals = 0;
  std::uint64_t value_row_reads = 0;
  std::uint64_t sparse_writes = 0;
  std::uint64_t cosine_norm_clamps = 0;

  void reset() { *this = OpCounters{}; }
};

/// Accumulated softmax weight mass per flat value slot over an evaluation
/// pass. Basis for the KL-to-uniform memory-usage diagnostic.
struct AccessMass {
  std::vector<double> mass;
  double total = 0.0;

  explicit AccessMass(std::size_t slots) : mass(slots, 0.0) {}

  void add(std::uint32_t flat, double w) {
    mass[flat] += w;
    total += w;
  }

  std::size_t nonzero_slots() const {
    std::size_t n = 0;
    for (double m : mass)
      if (m != 0.0) ++n;
    return n;
  }

  double utilization_fraction() const {
    return mass.empty() ? 0.0
                        : static_cast<double>(nonzero_slots()) / static_cast<double>(mass.size());
  }
};

/// KL(p || uniform) in nats, p = mass/total, with 0*ln(0) = 0.
/// Throws on zero total mass.
double kl_to_uniform(const AccessMass& mass);

}  // namespace pkm::metrics
