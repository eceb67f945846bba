#include "pkm/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "pkm/errors.hpp"

namespace pkm::oracle {

namespace {

// Own scoring path, kept apart from memory::score on purpose.
double ref_score(std::span<const double> q, std::span<const double> key, memory::Distance dist,
                 double alpha) {
  double p = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) p += q[i] * key[i];
  if (dist == memory::Distance::Dot) return p;
  double qn2 = 0.0, kn2 = 0.0;
  for (double v : q) qn2 += v * v;
  for (double v : key) kn2 += v * v;
  const double qn = std::max(std::sqrt(qn2), 1e-12);
  const double kn = std::max(std::sqrt(kn2), 1e-12);
  return std::pow(qn, alpha) * std::pow(kn, alpha) * (p / (qn * kn));
}

void ref_softmax(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

}  // namespace

FullGridScores full_grid(std::span<const double> q1, std::span<const double> q2,
                         const DenseMatrix& k1, const DenseMatrix& k2, memory::Distance dist,
                         double alpha) {
  FullGridScores grid;
  grid.n1 = k1.rows;
  grid.n2 = k2.rows;
  std::vector<double> s1(k1.rows), s2(k2.rows);
  for (std::size_t i = 0; i < k1.rows; ++i) s1[i] = ref_score(q1, k1.row(i), dist, alpha);
  for (std::size_t j = 0; j < k2.rows; ++j) s2[j] = ref_score(q2, k2.row(j), dist, alpha);
  grid.scores.resize(k1.rows * k2.rows);
  for (std::size_t i = 0; i < k1.rows; ++i)
    for (std::size_t j = 0; j < k2.rows; ++j) grid.scores[i * k2.rows + j] = s1[i] + s2[j];
  return grid;
}

std::vector<memory::ScoredIndex> naive_topk(std::span<const double> q1,
                                            std::span<const double> q2, const DenseMatrix& k1,
                                            const DenseMatrix& k2, std::size_t k,
                                            memory::Distance dist, double alpha) {
  if (k > k1.rows * k2.rows) throw ConfigError("naive_topk: k exceeds grid size");
  const FullGridScores grid = full_grid(q1, q2, k1, k2, dist, alpha);
  std::vector<memory::ScoredIndex> all(grid.scores.size());
  for (std::size_t f = 0; f < grid.scores.size(); ++f)
    all[f] = {static_cast<std::uint32_t>(f), grid.scores[f]};
  std::sort(all.begin(), all.end(), [](const memory::ScoredIndex& a, const memory::ScoredIndex& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
  });
  all.resize(k);
  return all;
}

DenseMatrix naive_forward(const memory::QueryNetwork& qnet, const memory::ProductKeyStore& store,
                          const memory::ValueTable& values, const memory::MemoryConfig& cfg,
                          const DenseMatrix& x, memory::Mode mode) {
  cfg.validate();
  memory::QueryNetwork scratch = qnet;  // keep caller's running stats untouched
  DenseMatrix z = numerics::linear_forward(scratch.proj, x);
  DenseMatrix q = numerics::batchnorm_forward(scratch.bn, z, mode == memory::Mode::Train);

  DenseMatrix m(x.rows, cfg.d_v);
  const std::size_t half = cfg.half_dim();
  for (std::size_t b = 0; b < x.rows; ++b) {
    auto mrow = m.row(b);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const auto head_q = q.row(b).subspan(h * cfg.head_dim(), cfg.head_dim());
      const auto top = naive_topk(head_q.subspan(0, half), head_q.subspan(half, half),
                                  store.k1[h], store.k2[h], cfg.k, cfg.distance, cfg.alpha);
      std::vector<double> w(cfg.k);
      for (std::size_t j = 0; j < cfg.k; ++j) w[j] = top[j].score;
      ref_softmax(w);
      for (std::size_t j = 0; j < cfg.k; ++j) {
        const auto vrow = values.slots.row(top[j].index);
        for (std::size_t c = 0; c < cfg.d_v; ++c) mrow[c] += w[j] * vrow[c];
      }
    }
  }
  return m;
}

}  // namespace pkm::oracle
