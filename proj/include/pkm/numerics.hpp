#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pkm/matrix.hpp"
#include "pkm/rng.hpp"

namespace pkm::numerics {

/// Fully connected layer, y = x W^T + b. W is (out x in).
struct Linear {
  DenseMatrix w;
  std::vector<double> b;

  /// Uniform init in [-1/sqrt(in), +1/sqrt(in)] for both W and b.
  static Linear init(std::size_t in, std::size_t out, Rng& rng);
};

DenseMatrix linear_forward(const Linear& lin, const DenseMatrix& x);

struct LinearGrads {
  DenseMatrix dw;
  std::vector<double> db;
  DenseMatrix dx;
};

/// x is the batch cached by the caller from the forward pass.
LinearGrads linear_backward(const Linear& lin, const DenseMatrix& x, const DenseMatrix& dy);

/// 1-D batch normalization over features. Train mode normalizes by batch
/// statistics (biased variance) and updates running stats with momentum,
/// storing the unbiased variance estimate; eval mode normalizes by the
/// running stats. Train mode requires batch size >= 2.
struct BatchNormState {
  std::size_t dim = 0;
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool affine = true;

  static BatchNormState init(std::size_t dim, bool affine = true);
};

struct BatchNormCache {
  DenseMatrix xhat;
  std::vector<double> mean, inv_std;
};

DenseMatrix batchnorm_forward(BatchNormState& s, const DenseMatrix& x, bool train,
                              BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  std::vector<double> dgamma, dbeta;
  DenseMatrix dx;
};

/// Train-mode backward only; needs the cache from a train-mode forward.
BatchNormGrads batchnorm_backward(const BatchNormState& s, const BatchNormCache& cache,
                                  const DenseMatrix& dy);

/// Numerically stabilized by max-subtraction. Output sums to 1.
void softmax_inplace(std::span<double> scores);
std::vector<double> softmax(std::span<const double> scores);

struct CrossEntropyResult {
  double loss = 0.0;       // mean negative log prob of the true class
  DenseMatrix dlogits;     // (softmax - onehot) / batch
};

CrossEntropyResult cross_entropy(const DenseMatrix& logits, std::span<const std::uint32_t> labels);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::vector<double> rel_err;  // per coordinate
};

/// Central finite differences with step h against a caller-supplied analytic
/// gradient. Relative error uses denominator max(|a|, |n|, 1e-8). The point
/// is restored after probing. Throws on non-finite f.
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<double> point, std::span<const double> analytic,
                           double h = 1e-5);

}  // namespace pkm::numerics
