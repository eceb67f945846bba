#include "pkm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pkm/errors.hpp"

namespace pkm::numerics {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  Linear lin;
  lin.w = DenseMatrix(out, in);
  lin.b.assign(out, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : lin.w.data) v = rng.uniform(-bound, bound);
  for (double& v : lin.b) v = rng.uniform(-bound, bound);
  return lin;
}

DenseMatrix linear_forward(const Linear& lin, const DenseMatrix& x) {
  if (x.cols != lin.w.cols)
    throw ConfigError("linear_forward: input width " + std::to_string(x.cols) +
                      " != weight cols " + std::to_string(lin.w.cols));
  const std::size_t out = lin.w.rows;
  DenseMatrix y(x.rows, out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto xr = x.row(r);
    auto yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) yr[o] = dot(lin.w.row(o), xr) + lin.b[o];
  }
  return y;
}

LinearGrads linear_backward(const Linear& lin, const DenseMatrix& x, const DenseMatrix& dy) {
  if (dy.rows != x.rows || dy.cols != lin.w.rows)
    throw ConfigError("linear_backward: gradient shape mismatch");
  LinearGrads g;
  g.dw = DenseMatrix(lin.w.rows, lin.w.cols);
  g.db.assign(lin.w.rows, 0.0);
  g.dx = DenseMatrix(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto xr = x.row(r);
    const auto dyr = dy.row(r);
    auto dxr = g.dx.row(r);
    for (std::size_t o = 0; o < lin.w.rows; ++o) {
      const double d = dyr[o];
      g.db[o] += d;
      auto dwr = g.dw.row(o);
      const auto wr = lin.w.row(o);
      for (std::size_t c = 0; c < x.cols; ++c) {
        dwr[c] += d * xr[c];
        dxr[c] += d * wr[c];
      }
    }
  }
  return g;
}

BatchNormState BatchNormState::init(std::size_t dim, bool affine) {
  BatchNormState s;
  s.dim = dim;
  s.gamma.assign(dim, 1.0);
  s.beta.assign(dim, 0.0);
  s.running_mean.assign(dim, 0.0);
  s.running_var.assign(dim, 1.0);
  s.affine = affine;
  return s;
}

DenseMatrix batchnorm_forward(BatchNormState& s, const DenseMatrix& x, bool train,
                              BatchNormCache* cache) {
  if (x.cols != s.dim) throw ConfigError("batchnorm_forward: feature dim mismatch");
  const std::size_t n = x.rows;
  DenseMatrix y(n, s.dim);

  if (!train) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < s.dim; ++c) {
        const double xhat = (x.at(r, c) - s.running_mean[c]) / std::sqrt(s.running_var[c] + s.eps);
        y.at(r, c) = s.affine ? s.gamma[c] * xhat + s.beta[c] : xhat;
      }
    return y;
  }

  if (n < 2) throw ConfigError("batchnorm_forward: train mode needs batch size >= 2");

  std::vector<double> mean(s.dim, 0.0), var(s.dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < s.dim; ++c) mean[c] += x.at(r, c);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < s.dim; ++c) {
      const double d = x.at(r, c) - mean[c];
      var[c] += d * d;
    }
  for (double& v : var) v /= static_cast<double>(n);

  std::vector<double> inv_std(s.dim);
  for (std::size_t c = 0; c < s.dim; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + s.eps);

  DenseMatrix xhat(n, s.dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < s.dim; ++c) {
      const double h = (x.at(r, c) - mean[c]) * inv_std[c];
      xhat.at(r, c) = h;
      y.at(r, c) = s.affine ? s.gamma[c] * h + s.beta[c] : h;
    }

  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::size_t c = 0; c < s.dim; ++c) {
    s.running_mean[c] = (1.0 - s.momentum) * s.running_mean[c] + s.momentum * mean[c];
    s.running_var[c] = (1.0 - s.momentum) * s.running_var[c] + s.momentum * var[c] * unbias;
  }

  if (cache) {
    cache->xhat = std::move(xhat);
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const BatchNormState& s, const BatchNormCache& cache,
                                  const DenseMatrix& dy) {
  const std::size_t n = dy.rows;
  BatchNormGrads g;
  g.dgamma.assign(s.dim, 0.0);
  g.dbeta.assign(s.dim, 0.0);
  g.dx = DenseMatrix(n, s.dim);

  std::vector<double> sum_dxhat(s.dim, 0.0), sum_dxhat_xhat(s.dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < s.dim; ++c) {
      const double d = dy.at(r, c);
      const double h = cache.xhat.at(r, c);
      g.dgamma[c] += d * h;
      g.dbeta[c] += d;
      const double dxhat = s.affine ? d * s.gamma[c] : d;
      sum_dxhat[c] += dxhat;
      sum_dxhat_xhat[c] += dxhat * h;
    }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < s.dim; ++c) {
      const double dxhat = s.affine ? dy.at(r, c) * s.gamma[c] : dy.at(r, c);
      g.dx.at(r, c) = cache.inv_std[c] * inv_n *
                      (static_cast<double>(n) * dxhat - sum_dxhat[c] -
                       cache.xhat.at(r, c) * sum_dxhat_xhat[c]);
    }
  return g;
}

void softmax_inplace(std::span<double> scores) {
  double mx = scores[0];
  for (double v : scores) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : scores) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : scores) v /= sum;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.begin(), scores.end());
  softmax_inplace(out);
  return out;
}

CrossEntropyResult cross_entropy(const DenseMatrix& logits, std::span<const std::uint32_t> labels) {
  if (labels.size() != logits.rows) throw ConfigError("cross_entropy: label count mismatch");
  CrossEntropyResult res;
  res.dlogits = DenseMatrix(logits.rows, logits.cols);
  const double inv_batch = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    if (labels[r] >= logits.cols)
      throw ConfigError("cross_entropy: label " + std::to_string(labels[r]) +
                        " out of range for " + std::to_string(logits.cols) + " classes");
    std::vector<double> p = softmax(logits.row(r));
    res.loss -= std::log(std::max(p[labels[r]], 1e-300)) * inv_batch;
    auto dr = res.dlogits.row(r);
    for (std::size_t c = 0; c < logits.cols; ++c) dr[c] = p[c] * inv_batch;
    dr[labels[r]] -= inv_batch;
  }
  return res;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<double> point, std::span<const double> analytic, double h) {
  GradCheckResult res;
  res.rel_err.resize(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double fp = f(point);
    point[i] = saved - h;
    const double fm = f(point);
    point[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite function value");
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    res.rel_err[i] = std::abs(analytic[i] - numeric) / denom;
    res.max_rel_err = std::max(res.max_rel_err, res.rel_err[i]);
  }
  return res;
}

}  // namespace pkm::numerics
