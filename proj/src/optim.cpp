#include "pkm/optim.hpp"

#include <cmath>
#include <string>

#include "pkm/errors.hpp"

namespace pkm::optim {

void DenseSgd::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ConfigError("sgd step: shape mismatch");
  if (velocity.size() != params.size()) velocity.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    velocity[i] = momentum * velocity[i] + g;
    params[i] -= lr * velocity[i];
  }
}

void DenseAdam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ConfigError("adam step: shape mismatch");
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

SlotGrads to_slot_grads(const std::map<std::uint32_t, std::vector<double>>& grads) {
  SlotGrads out;
  out.reserve(grads.size());
  for (const auto& [slot, row] : grads) out.push_back({slot, row});
  return out;
}

namespace {

void check_slot_grads(const SlotGrads& grads, std::size_t slots, std::size_t dim) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].slot >= slots)
      throw ConfigError("sparse step: slot " + std::to_string(grads[i].slot) + " out of range");
    if (grads[i].grad.size() != dim) throw ConfigError("sparse step: grad row width mismatch");
    if (i > 0 && grads[i].slot <= grads[i - 1].slot)
      throw ConfigError("sparse step: duplicate or unsorted slot indices (merge first)");
  }
}

}  // namespace

SparseSgd::SparseSgd(std::size_t slots, std::size_t dim, double lr_, double momentum_,
                     double lr_multiplier_)
    : velocity_(slots, dim) {
  lr = lr_;
  momentum = momentum_;
  lr_multiplier = lr_multiplier_;
}

void SparseSgd::step(DenseMatrix& table, const SlotGrads& grads) {
  check_slot_grads(grads, table.rows, table.cols);
  const double eff_lr = lr * lr_multiplier;
  for (const SlotGrad& sg : grads) {
    auto vel = velocity_.row(sg.slot);
    auto row = table.row(sg.slot);
    for (std::size_t c = 0; c < table.cols; ++c) {
      vel[c] = momentum * vel[c] + sg.grad[c];
      row[c] -= eff_lr * vel[c];
    }
  }
}

void SparseSgd::reset_slots(std::span<const std::uint32_t> slots) {
  for (std::uint32_t s : slots) {
    auto vel = velocity_.row(s);
    for (double& x : vel) x = 0.0;
  }
}

SparseAdam::SparseAdam(std::size_t slots, std::size_t dim, double lr_, double beta1_,
                       double beta2_, double eps_, double lr_multiplier_)
    : m_(slots, dim), v_(slots, dim), step_count_(slots, 0) {
  lr = lr_;
  beta1 = beta1_;
  beta2 = beta2_;
  eps = eps_;
  lr_multiplier = lr_multiplier_;
}

void SparseAdam::step(DenseMatrix& table, const SlotGrads& grads) {
  check_slot_grads(grads, table.rows, table.cols);
  const double eff_lr = lr * lr_multiplier;
  for (const SlotGrad& sg : grads) {
    const std::uint32_t s = sg.slot;
    ++step_count_[s];
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_[s]));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_[s]));
    auto mr = m_.row(s);
    auto vr = v_.row(s);
    auto row = table.row(s);
    for (std::size_t c = 0; c < table.cols; ++c) {
      const double g = sg.grad[c];
      mr[c] = beta1 * mr[c] + (1.0 - beta1) * g;
      vr[c] = beta2 * vr[c] + (1.0 - beta2) * g * g;
      const double mhat = mr[c] / bc1;
      const double vhat = vr[c] / bc2;
      row[c] -= eff_lr * mhat / (std::sqrt(vhat) + eps);
    }
    if (counters) ++counters->sparse_writes;
  }
}

void SparseAdam::reset_slots(std::span<const std::uint32_t> slots) {
  for (std::uint32_t s : slots) {
    step_count_[s] = 0;
    auto mr = m_.row(s);
    auto vr = v_.row(s);
    for (std::size_t c = 0; c < m_.cols; ++c) {
      mr[c] = 0.0;
      vr[c] = 0.0;
    }
  }
}

}  // namespace pkm::optim
