#include "pkm/memory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pkm/errors.hpp"

namespace pkm::memory {

namespace {
constexpr double kNormClamp = 1e-12;
}

double MemoryConfig::resolved_value_scale() const {
  return value_init_scale > 0.0 ? value_init_scale : 1.0 / std::sqrt(static_cast<double>(d_v));
}

void MemoryConfig::validate() const {
  if (d_in == 0 || d_q == 0 || d_v == 0 || n1 == 0 || n2 == 0 || k == 0 || heads == 0)
    throw ConfigError("memory config: all dimensions must be positive");
  if (d_q % 2 != 0) throw ConfigError("memory config: d_q must be even");
  if (d_q % (2 * heads) != 0)
    throw ConfigError("memory config: d_q must be divisible by 2*heads");
  if (half_dim() < 1) throw ConfigError("memory config: d_q/(2*heads) must be >= 1");
  if (k > n1 || k > n2) throw ConfigError("memory config: k must be <= n1 and <= n2");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("memory config: alpha must be in [0,1]");
}

ProductKeyStore ProductKeyStore::init(const MemoryConfig& cfg, Rng& rng) {
  ProductKeyStore store;
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.half_dim()));
  store.k1.reserve(cfg.heads);
  store.k2.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    DenseMatrix a(cfg.n1, cfg.half_dim()), b(cfg.n2, cfg.half_dim());
    for (double& v : a.data) v = rng.uniform(-bound, bound);
    for (double& v : b.data) v = rng.uniform(-bound, bound);
    store.k1.push_back(std::move(a));
    store.k2.push_back(std::move(b));
  }
  return store;
}

ValueTable ValueTable::init(const MemoryConfig& cfg, Rng& rng) {
  ValueTable table;
  table.slots = DenseMatrix(cfg.slot_count(), cfg.d_v);
  const double scale = cfg.resolved_value_scale();
  for (double& v : table.slots.data) v = rng.normal(0.0, scale);
  return table;
}

QueryNetwork QueryNetwork::init(const MemoryConfig& cfg, Rng& rng) {
  QueryNetwork qnet;
  qnet.proj = numerics::Linear::init(cfg.d_in, cfg.d_q, rng);
  qnet.bn = numerics::BatchNormState::init(cfg.d_q, cfg.bn_affine);
  return qnet;
}

double score(std::span<const double> q_half, std::span<const double> key, Distance dist,
             double alpha, metrics::OpCounters* counters) {
  const double p = dot(q_half, key);
  if (dist == Distance::Dot) return p;
  double qn = norm2(q_half);
  double kn = norm2(key);
  if (qn < kNormClamp || kn < kNormClamp) {
    if (counters) ++counters->cosine_norm_clamps;
    qn = std::max(qn, kNormClamp);
    kn = std::max(kn, kNormClamp);
  }
  return std::pow(qn, alpha) * std::pow(kn, alpha) * (p / (qn * kn));
}

std::vector<ScoredIndex> half_topk(std::span<const double> q_half, const DenseMatrix& keys,
                                   std::size_t k, Distance dist, double alpha,
                                   metrics::OpCounters* counters) {
  std::vector<ScoredIndex> scored(keys.rows);
  for (std::size_t i = 0; i < keys.rows; ++i)
    scored[i] = {static_cast<std::uint32_t>(i), score(q_half, keys.row(i), dist, alpha, counters)};
  if (counters) counters->key_score_evals += keys.rows;

  const auto better = [](const ScoredIndex& a, const ScoredIndex& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    better);
  scored.resize(k);
  return scored;
}

std::vector<ScoredIndex> combine_topk(const std::vector<ScoredIndex>& top1,
                                      const std::vector<ScoredIndex>& top2, std::size_t k,
                                      std::size_t n2, metrics::OpCounters* counters) {
  std::vector<ScoredIndex> grid;
  grid.reserve(top1.size() * top2.size());
  for (const ScoredIndex& a : top1)
    for (const ScoredIndex& b : top2)
      grid.push_back({a.index * static_cast<std::uint32_t>(n2) + b.index, a.score + b.score});
  if (counters) counters->key_score_evals += top1.size() * top2.size();

  const auto better = [](const ScoredIndex& a, const ScoredIndex& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
  };
  std::partial_sort(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(k), grid.end(),
                    better);
  grid.resize(k);
  return grid;
}

MemoryOutput memory_forward(QueryNetwork& qnet, const ProductKeyStore& store,
                            const ValueTable& values, const MemoryConfig& cfg,
                            const DenseMatrix& x, Mode mode, metrics::OpCounters* counters) {
  cfg.validate();
  if (x.cols != cfg.d_in) throw ConfigError("memory_forward: input width != d_in");

  MemoryOutput out;
  out.train = mode == Mode::Train;
  out.batch = x.rows;
  out.x = x;

  DenseMatrix z = numerics::linear_forward(qnet.proj, x);
  out.q = numerics::batchnorm_forward(qnet.bn, z, out.train, out.train ? &out.bn_cache : nullptr);

  out.m = DenseMatrix(x.rows, cfg.d_v);
  out.selected.resize(x.rows * cfg.heads * cfg.k);
  out.weights.resize(x.rows * cfg.heads * cfg.k);

  const std::size_t half = cfg.half_dim();
  for (std::size_t b = 0; b < x.rows; ++b) {
    auto mrow = out.m.row(b);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const auto head_q = out.q.row(b).subspan(h * cfg.head_dim(), cfg.head_dim());
      const auto q1 = head_q.subspan(0, half);
      const auto q2 = head_q.subspan(half, half);

      const auto t1 = half_topk(q1, store.k1[h], cfg.k, cfg.distance, cfg.alpha, counters);
      const auto t2 = half_topk(q2, store.k2[h], cfg.k, cfg.distance, cfg.alpha, counters);
      const auto tc = combine_topk(t1, t2, cfg.k, cfg.n2, counters);

      std::vector<double> w(cfg.k);
      for (std::size_t j = 0; j < cfg.k; ++j) w[j] = tc[j].score;
      numerics::softmax_inplace(w);

      const std::size_t base = (b * cfg.heads + h) * cfg.k;
      for (std::size_t j = 0; j < cfg.k; ++j) {
        out.selected[base + j] = tc[j].index;
        out.weights[base + j] = w[j];
        const auto vrow = values.slots.row(tc[j].index);
        for (std::size_t c = 0; c < cfg.d_v; ++c) mrow[c] += w[j] * vrow[c];
      }
      if (counters) counters->value_row_reads += cfg.k;
    }
  }
  return out;
}

namespace {

// d(score)/d(q_half) and d(score)/d(key), scaled by the incoming score grad.
void score_backward(std::span<const double> q_half, std::span<const double> key, Distance dist,
                    double alpha, double gs, std::span<double> dq_half,
                    std::vector<double>& dkey) {
  const std::size_t d = q_half.size();
  if (dist == Distance::Dot) {
    for (std::size_t i = 0; i < d; ++i) {
      dq_half[i] += gs * key[i];
      dkey[i] += gs * q_half[i];
    }
    return;
  }
  const double p = dot(q_half, key);
  const double qn = std::max(norm2(q_half), kNormClamp);
  const double kn = std::max(norm2(key), kNormClamp);
  const double amp = std::pow(qn, alpha - 1.0) * std::pow(kn, alpha - 1.0);
  const double cq = (alpha - 1.0) * amp * p / (qn * qn);
  const double ck = (alpha - 1.0) * amp * p / (kn * kn);
  for (std::size_t i = 0; i < d; ++i) {
    dq_half[i] += gs * (amp * key[i] + cq * q_half[i]);
    dkey[i] += gs * (amp * q_half[i] + ck * key[i]);
  }
}

std::vector<double>& grad_row(SparseRowGrads& grads, std::uint32_t slot, std::size_t dim) {
  auto it = grads.find(slot);
  if (it == grads.end()) it = grads.emplace(slot, std::vector<double>(dim, 0.0)).first;
  return it->second;
}

}  // namespace

MemoryGrads memory_backward(const QueryNetwork& qnet, const ProductKeyStore& store,
                            const ValueTable& values, const MemoryConfig& cfg,
                            const MemoryOutput& cache, const DenseMatrix& dm,
                            metrics::OpCounters* counters) {
  if (!cache.train) throw ConfigError("memory_backward: cache is from an eval-mode forward");
  if (dm.rows != cache.batch || dm.cols != cfg.d_v)
    throw ConfigError("memory_backward: gradient shape mismatch");

  MemoryGrads g;
  g.keys1.resize(cfg.heads);
  g.keys2.resize(cfg.heads);

  DenseMatrix dq(cache.batch, cfg.d_q);
  const std::size_t half = cfg.half_dim();

  for (std::size_t b = 0; b < cache.batch; ++b) {
    const auto gm = dm.row(b);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const auto sel = cache.selected_for(b, h, cfg.heads, cfg.k);
      const auto w = cache.weights_for(b, h, cfg.heads, cfg.k);

      // dL/dw_j and the value gradient on each selected slot.
      std::vector<double> dw(cfg.k);
      for (std::size_t j = 0; j < cfg.k; ++j) {
        const auto vrow = values.slots.row(sel[j]);
        dw[j] = dot(vrow, gm);
        auto& vg = grad_row(g.values, sel[j], cfg.d_v);
        for (std::size_t c = 0; c < cfg.d_v; ++c) vg[c] += w[j] * gm[c];
      }
      if (counters) counters->value_row_reads += cfg.k;

      // Softmax Jacobian: ds_j = w_j (dw_j - sum_i w_i dw_i).
      double mix = 0.0;
      for (std::size_t j = 0; j < cfg.k; ++j) mix += w[j] * dw[j];

      // Combined score is additive, so ds accumulates per distinct half slot.
      std::map<std::uint32_t, double> gs1, gs2;
      for (std::size_t j = 0; j < cfg.k; ++j) {
        const double ds = w[j] * (dw[j] - mix);
        const std::uint32_t i1 = sel[j] / static_cast<std::uint32_t>(cfg.n2);
        const std::uint32_t i2 = sel[j] % static_cast<std::uint32_t>(cfg.n2);
        gs1[i1] += ds;
        gs2[i2] += ds;
      }

      const auto head_q = cache.q.row(b).subspan(h * cfg.head_dim(), cfg.head_dim());
      const auto q1 = head_q.subspan(0, half);
      const auto q2 = head_q.subspan(half, half);
      auto dq_head = dq.row(b).subspan(h * cfg.head_dim(), cfg.head_dim());
      auto dq1 = dq_head.subspan(0, half);
      auto dq2 = dq_head.subspan(half, half);

      for (const auto& [i1, gs] : gs1)
        score_backward(q1, store.k1[h].row(i1), cfg.distance, cfg.alpha, gs, dq1,
                       grad_row(g.keys1[h], i1, half));
      for (const auto& [i2, gs] : gs2)
        score_backward(q2, store.k2[h].row(i2), cfg.distance, cfg.alpha, gs, dq2,
                       grad_row(g.keys2[h], i2, half));
    }
  }

  g.bn = numerics::batchnorm_backward(qnet.bn, cache.bn_cache, dq);
  g.proj = numerics::linear_backward(qnet.proj, cache.x, g.bn.dx);
  return g;
}

}  // namespace pkm::memory
