#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "pkm/memory.hpp"
#include "pkm/optim.hpp"
#include "pkm/rng.hpp"

namespace pkm::reinit {

/// Per-head, per-half selection counters plus the plateau-detection window.
/// Counters only increase between explicit resets.
struct UtilizationState {
  // counts[head][half][slot]
  std::vector<std::array<std::vector<std::uint64_t>, 2>> counts;

  std::vector<double> window;  // most recent utilization readings, oldest first
  std::size_t window_capacity = 5;
  std::int64_t step_of_last_reinit = 0;

  static UtilizationState init(std::size_t heads, std::size_t n1, std::size_t n2,
                               std::size_t window_capacity = 5);

  void push_window(double fraction);
  void reset_counters();
};

enum class ValueReinit { ResampleUniform, Zero };

struct ReinitConfig {
  std::uint64_t d_k = 1;               // a slot with c_i < d_k is dead
  std::optional<double> epsilon_d;     // fractional threshold form of d_k
  double sigma_n = 0.05;               // std of the additive key noise
  std::int64_t trigger_period = 1;     // steps between eligibility checks
  double plateau_delta = 0.01;         // relative window change below this = plateau
  ValueReinit value_reinit = ValueReinit::ResampleUniform;
  std::optional<std::uint32_t> max_replacements;  // cap per call, least utilized first
  bool reset_counters_after = true;

  /// d_k resolved from epsilon_d when set: ceil(epsilon_d * selections/epoch).
  std::uint64_t resolved_d_k(std::uint64_t selections_per_epoch) const;

  void validate() const;
};

/// Increment the counters for every selection event in `out`: flat index
/// (i1, i2) bumps c1[i1] and c2[i2] once per occurrence.
void observe(UtilizationState& util, const memory::MemoryOutput& out,
             const memory::MemoryConfig& cfg);

/// #{c_i != 0} / |half|.
double utilization_fraction(const UtilizationState& util, std::size_t head, std::size_t half);

/// Mean over heads and halves; the reading pushed into the plateau window.
double mean_utilization_fraction(const UtilizationState& util);

/// True iff >= trigger_period steps since the last re-init AND the window is
/// full AND its relative change (max-min over max) is below plateau_delta.
bool plateau_reached(const UtilizationState& util, const ReinitConfig& cfg, std::int64_t step);

struct ReinitReport {
  std::int64_t step = 0;
  // replaced[head][half] -> slot indices replaced, ascending
  std::vector<std::array<std::vector<std::uint32_t>, 2>> replaced;
  std::size_t value_slots_reset = 0;  // distinct flat slots
  double util_before = 0.0;
  double util_after = 0.0;
  std::vector<std::array<bool, 2>> all_dead;  // halves left untouched (no survivor)

  std::size_t total_replaced() const;
  std::size_t replaced_in_half(std::size_t half) const;
};

/// Optimizer states whose slots must be cleared alongside a replacement.
/// Null entries are skipped (library callers without optimizers).
struct OptimizerRefs {
  optim::SlotResettable* values = nullptr;
  std::vector<optim::SlotResettable*> keys1, keys2;  // per head
};

/// The re-initialization pass: per head and half, slots with c_i < d_k are
/// replaced in place by a uniformly chosen surviving slot's key plus
/// elementwise N(0, sigma_n^2) noise; every value row in the replaced slot's
/// cross-section is re-initialized; optimizer moments and counters of the
/// affected slots are zeroed. A half with no survivor is left untouched and
/// flagged. Key/value slot counts never change.
ReinitReport reinitialize(memory::ProductKeyStore& store, memory::ValueTable& values,
                          UtilizationState& util, const OptimizerRefs& opt,
                          const memory::MemoryConfig& mcfg, const ReinitConfig& cfg, Rng& rng,
                          std::int64_t step = 0);

}  // namespace pkm::reinit
