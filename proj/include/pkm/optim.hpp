#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "pkm/matrix.hpp"
#include "pkm/metrics.hpp"

namespace pkm::optim {

/// Sparse optimizer states can zero the moments and step counts of selected
/// slots; re-initialization uses this to give replaced key/value slots a
/// fresh start.
class SlotResettable {
 public:
  virtual void reset_slots(std::span<const std::uint32_t> slots) = 0;

 protected:
  ~SlotResettable() = default;
};

struct DenseSgd {
  double lr = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::vector<double> velocity;

  void step(std::span<double> params, std::span<const double> grads);
};

struct DenseAdam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::uint64_t t = 0;

  void step(std::span<double> params, std::span<const double> grads);
};

struct SlotGrad {
  std::uint32_t slot = 0;
  std::vector<double> grad;
};

/// Merged, strictly ascending slot gradients. Duplicates must be merged
/// before the step; the optimizers reject them.
using SlotGrads = std::vector<SlotGrad>;

SlotGrads to_slot_grads(const std::map<std::uint32_t, std::vector<double>>& grads);

/// Momentum buffers are per slot and decay only when the slot is touched.
/// No weight decay on sparse parameters.
class SparseSgd : public SlotResettable {
 public:
  double lr = 0.1;
  double momentum = 0.0;
  double lr_multiplier = 1.0;

  SparseSgd() = default;
  SparseSgd(std::size_t slots, std::size_t dim, double lr, double momentum,
            double lr_multiplier = 1.0);

  void step(DenseMatrix& table, const SlotGrads& grads);
  void reset_slots(std::span<const std::uint32_t> slots) override;

  const DenseMatrix& velocity() const { return velocity_; }

 private:
  DenseMatrix velocity_;
};

/// Adam over slot rows with per-slot step counters: a slot's bias correction
/// advances only when the slot is touched, so a slot updated at every step
/// follows the dense Adam trajectory exactly. Untouched slots are never
/// read or written.
class SparseAdam : public SlotResettable {
 public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double lr_multiplier = 1.0;
  metrics::OpCounters* counters = nullptr;

  SparseAdam() = default;
  SparseAdam(std::size_t slots, std::size_t dim, double lr, double beta1, double beta2,
             double eps, double lr_multiplier = 1.0);

  void step(DenseMatrix& table, const SlotGrads& grads);
  void reset_slots(std::span<const std::uint32_t> slots) override;

  const DenseMatrix& first_moment() const { return m_; }
  const DenseMatrix& second_moment() const { return v_; }
  std::span<const std::uint32_t> step_counts() const { return step_count_; }

  // checkpoint plumbing
  DenseMatrix& mutable_first_moment() { return m_; }
  DenseMatrix& mutable_second_moment() { return v_; }
  std::vector<std::uint32_t>& mutable_step_counts() { return step_count_; }

 private:
  DenseMatrix m_, v_;
  std::vector<std::uint32_t> step_count_;
};

}  // namespace pkm::optim
