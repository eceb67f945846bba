#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "pkm/matrix.hpp"
#include "pkm/metrics.hpp"
#include "pkm/numerics.hpp"
#include "pkm/rng.hpp"

namespace pkm::memory {

enum class Distance { Dot, Cosine };
enum class Mode { Train, Eval };

struct MemoryConfig {
  std::size_t d_in = 0;   // input width of the query network
  std::size_t d_q = 0;    // query width, even, divisible by 2*heads
  std::size_t d_v = 0;    // value width
  std::size_t n1 = 0;     // |K1| per head
  std::size_t n2 = 0;     // |K2| per head
  std::size_t k = 0;      // top-k
  std::size_t heads = 1;
  Distance distance = Distance::Dot;
  double alpha = 1.0;              // cosine length exponent, in [0, 1]
  double value_init_scale = 0.0;   // 0 resolves to 1/sqrt(d_v)
  bool bn_affine = true;

  std::size_t head_dim() const { return d_q / heads; }
  std::size_t half_dim() const { return d_q / (2 * heads); }
  std::size_t slot_count() const { return n1 * n2; }
  double resolved_value_scale() const;

  void validate() const;  // throws ConfigError
};

/// Two half-key tables per head. The Cartesian product of the tables forms
/// the addressable key space; slot counts never change for the lifetime of
/// the paired ValueTable (re-initialization replaces rows in place).
struct ProductKeyStore {
  std::vector<DenseMatrix> k1;  // per head, n1 x half_dim
  std::vector<DenseMatrix> k2;  // per head, n2 x half_dim

  /// Keys uniform per coordinate in [-1/sqrt(half_dim), +1/sqrt(half_dim)],
  /// matching the scale of batchnormed queries.
  static ProductKeyStore init(const MemoryConfig& cfg, Rng& rng);
};

/// n1*n2 value slots shared across heads; flat index = i1*n2 + i2.
struct ValueTable {
  DenseMatrix slots;

  /// Values ~ normal(0, scale^2), scale = cfg.resolved_value_scale().
  static ValueTable init(const MemoryConfig& cfg, Rng& rng);
};

struct QueryNetwork {
  numerics::Linear proj;          // d_in -> d_q
  numerics::BatchNormState bn;    // over d_q

  static QueryNetwork init(const MemoryConfig& cfg, Rng& rng);
};

struct ScoredIndex {
  std::uint32_t index = 0;
  double score = 0.0;
};

/// Dot mode returns q^T k. Cosine mode returns |q|^a |k|^a cos(theta), norms
/// clamped at 1e-12 with a diagnostic count instead of a hard failure.
double score(std::span<const double> q_half, std::span<const double> key, Distance dist,
             double alpha, metrics::OpCounters* counters = nullptr);

/// The k largest scores against one half table; ties broken by lower index,
/// result in descending score order.
std::vector<ScoredIndex> half_topk(std::span<const double> q_half, const DenseMatrix& keys,
                                   std::size_t k, Distance dist, double alpha,
                                   metrics::OpCounters* counters = nullptr);

/// Top-k over the k x k candidate grid of additive combined scores.
/// Flat index = i1*n2 + i2; ties broken by lower flat index.
std::vector<ScoredIndex> combine_topk(const std::vector<ScoredIndex>& top1,
                                      const std::vector<ScoredIndex>& top2, std::size_t k,
                                      std::size_t n2, metrics::OpCounters* counters = nullptr);

/// Forward output plus everything backward needs. Per sample and head, the
/// k selected flat indices are distinct and the weights sum to 1.
struct MemoryOutput {
  DenseMatrix m;  // batch x d_v

  // selected[(b*heads + h)*k + j], weights parallel
  std::vector<std::uint32_t> selected;
  std::vector<double> weights;

  bool train = false;
  std::size_t batch = 0;
  DenseMatrix x;  // cached input
  DenseMatrix q;  // post-batchnorm queries
  numerics::BatchNormCache bn_cache;

  std::span<const std::uint32_t> selected_for(std::size_t sample, std::size_t head,
                                              std::size_t heads, std::size_t k) const {
    return {selected.data() + (sample * heads + head) * k, k};
  }
  std::span<const double> weights_for(std::size_t sample, std::size_t head, std::size_t heads,
                                      std::size_t k) const {
    return {weights.data() + (sample * heads + head) * k, k};
  }
};

/// q = bn(proj(x)); the query splits into `heads` chunks, each chunk into two
/// halves scored against K1/K2; per head the product top-k is softmaxed and
/// the selected value rows summed; head outputs are summed into m(x).
/// Utilization counters are NOT touched here (see reinit::observe).
MemoryOutput memory_forward(QueryNetwork& qnet, const ProductKeyStore& store,
                            const ValueTable& values, const MemoryConfig& cfg,
                            const DenseMatrix& x, Mode mode,
                            metrics::OpCounters* counters = nullptr);

/// Sparse row gradients keyed by slot index; deterministic iteration order.
using SparseRowGrads = std::map<std::uint32_t, std::vector<double>>;

struct MemoryGrads {
  SparseRowGrads values;                    // flat slot -> d_v row
  std::vector<SparseRowGrads> keys1, keys2; // per head, half slot -> half_dim row
  numerics::LinearGrads proj;               // proj.dx is dL/dx for the caller
  numerics::BatchNormGrads bn;
};

/// Value gradients land only on selected slots; score gradients flow through
/// the softmax Jacobian to both half-keys and the query network. Requires a
/// train-mode cache.
MemoryGrads memory_backward(const QueryNetwork& qnet, const ProductKeyStore& store,
                            const ValueTable& values, const MemoryConfig& cfg,
                            const MemoryOutput& cache, const DenseMatrix& dm,
                            metrics::OpCounters* counters = nullptr);

}  // namespace pkm::memory
