#include "pkm/reinit.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "pkm/errors.hpp"

namespace pkm::reinit {

UtilizationState UtilizationState::init(std::size_t heads, std::size_t n1, std::size_t n2,
                                        std::size_t window_capacity) {
  UtilizationState util;
  util.counts.resize(heads);
  for (auto& per_head : util.counts) {
    per_head[0].assign(n1, 0);
    per_head[1].assign(n2, 0);
  }
  util.window_capacity = window_capacity;
  return util;
}

void UtilizationState::push_window(double fraction) {
  window.push_back(fraction);
  if (window.size() > window_capacity) window.erase(window.begin());
}

void UtilizationState::reset_counters() {
  for (auto& per_head : counts)
    for (auto& half : per_head) std::fill(half.begin(), half.end(), 0);
}

std::uint64_t ReinitConfig::resolved_d_k(std::uint64_t selections_per_epoch) const {
  if (!epsilon_d) return d_k;
  const double raw = *epsilon_d * static_cast<double>(selections_per_epoch);
  return static_cast<std::uint64_t>(std::max(1.0, std::ceil(raw)));
}

void ReinitConfig::validate() const {
  if (d_k < 1) throw ConfigError("reinit config: d_k must be >= 1");
  if (sigma_n < 0.0) throw ConfigError("reinit config: sigma_n must be >= 0");
  if (trigger_period < 1) throw ConfigError("reinit config: trigger_period must be >= 1");
  if (epsilon_d && (*epsilon_d <= 0.0 || *epsilon_d >= 1.0))
    throw ConfigError("reinit config: epsilon_d must be in (0,1)");
}

void observe(UtilizationState& util, const memory::MemoryOutput& out,
             const memory::MemoryConfig& cfg) {
  if (util.counts.size() != cfg.heads) throw ConfigError("observe: head count mismatch");
  for (std::size_t b = 0; b < out.batch; ++b) {
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      for (std::uint32_t flat : out.selected_for(b, h, cfg.heads, cfg.k)) {
        const std::uint32_t i1 = flat / static_cast<std::uint32_t>(cfg.n2);
        const std::uint32_t i2 = flat % static_cast<std::uint32_t>(cfg.n2);
        if (i1 >= cfg.n1) throw ConfigError("observe: flat index out of range (corrupt cache)");
        ++util.counts[h][0][i1];
        ++util.counts[h][1][i2];
      }
    }
  }
}

double utilization_fraction(const UtilizationState& util, std::size_t head, std::size_t half) {
  const auto& c = util.counts[head][half];
  if (c.empty()) return 0.0;
  std::size_t used = 0;
  for (std::uint64_t v : c)
    if (v != 0) ++used;
  return static_cast<double>(used) / static_cast<double>(c.size());
}

double mean_utilization_fraction(const UtilizationState& util) {
  if (util.counts.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t h = 0; h < util.counts.size(); ++h)
    sum += utilization_fraction(util, h, 0) + utilization_fraction(util, h, 1);
  return sum / (2.0 * static_cast<double>(util.counts.size()));
}

bool plateau_reached(const UtilizationState& util, const ReinitConfig& cfg, std::int64_t step) {
  if (step - util.step_of_last_reinit < cfg.trigger_period) return false;
  if (util.window.size() < util.window_capacity) return false;
  double lo = util.window[0], hi = util.window[0];
  for (double v : util.window) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double rel = (hi - lo) / std::max(std::abs(hi), 1e-12);
  return rel < cfg.plateau_delta;
}

std::size_t ReinitReport::total_replaced() const {
  std::size_t n = 0;
  for (const auto& per_head : replaced) n += per_head[0].size() + per_head[1].size();
  return n;
}

std::size_t ReinitReport::replaced_in_half(std::size_t half) const {
  std::size_t n = 0;
  for (const auto& per_head : replaced) n += per_head[half].size();
  return n;
}

namespace {

// Dead slots (c_i < d_k), capped at max_replacements, least utilized first.
std::vector<std::uint32_t> pick_dead(const std::vector<std::uint64_t>& counts, std::uint64_t d_k,
                                     std::optional<std::uint32_t> cap) {
  std::vector<std::uint32_t> dead;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] < d_k) dead.push_back(static_cast<std::uint32_t>(i));
  if (cap && dead.size() > *cap) {
    std::stable_sort(dead.begin(), dead.end(), [&](std::uint32_t a, std::uint32_t b) {
      return counts[a] < counts[b] || (counts[a] == counts[b] && a < b);
    });
    dead.resize(*cap);
    std::sort(dead.begin(), dead.end());
  }
  return dead;
}

}  // namespace

ReinitReport reinitialize(memory::ProductKeyStore& store, memory::ValueTable& values,
                          UtilizationState& util, const OptimizerRefs& opt,
                          const memory::MemoryConfig& mcfg, const ReinitConfig& cfg, Rng& rng,
                          std::int64_t step) {
  cfg.validate();
  ReinitReport report;
  report.step = step;
  report.replaced.resize(mcfg.heads);
  report.all_dead.assign(mcfg.heads, {false, false});
  report.util_before = mean_utilization_fraction(util);

  const double value_scale = mcfg.resolved_value_scale();
  std::set<std::uint32_t> touched_values;

  for (std::size_t h = 0; h < mcfg.heads; ++h) {
    for (std::size_t half = 0; half < 2; ++half) {
      auto& counts = util.counts[h][half];
      DenseMatrix& keys = half == 0 ? store.k1[h] : store.k2[h];

      std::vector<std::uint32_t> dead = pick_dead(counts, cfg.d_k, cfg.max_replacements);
      if (dead.empty()) continue;

      std::vector<std::uint32_t> survivors;
      for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] >= cfg.d_k) survivors.push_back(static_cast<std::uint32_t>(i));
      if (survivors.empty()) {
        report.all_dead[h][half] = true;
        continue;
      }

      for (std::uint32_t slot : dead) {
        const std::uint32_t src = survivors[rng.below(survivors.size())];
        auto dst_row = keys.row(slot);
        const auto src_row = keys.row(src);
        for (std::size_t c = 0; c < keys.cols; ++c)
          dst_row[c] = src_row[c] + rng.normal(0.0, cfg.sigma_n);
        counts[slot] = 0;

        // The replaced slot addresses a full cross-section of the value grid.
        for (std::size_t other = 0; other < (half == 0 ? mcfg.n2 : mcfg.n1); ++other) {
          const std::uint32_t flat =
              half == 0 ? slot * static_cast<std::uint32_t>(mcfg.n2) + static_cast<std::uint32_t>(other)
                        : static_cast<std::uint32_t>(other) * static_cast<std::uint32_t>(mcfg.n2) + slot;
          auto vrow = values.slots.row(flat);
          for (std::size_t c = 0; c < values.slots.cols; ++c)
            vrow[c] = cfg.value_reinit == ValueReinit::Zero ? 0.0 : rng.normal(0.0, value_scale);
          touched_values.insert(flat);
        }
      }

      report.replaced[h][half] = dead;
      optim::SlotResettable* key_opt =
          half == 0 ? (h < opt.keys1.size() ? opt.keys1[h] : nullptr)
                    : (h < opt.keys2.size() ? opt.keys2[h] : nullptr);
      if (key_opt) key_opt->reset_slots(dead);
    }
  }

  report.value_slots_reset = touched_values.size();
  if (opt.values && !touched_values.empty()) {
    std::vector<std::uint32_t> flat(touched_values.begin(), touched_values.end());
    opt.values->reset_slots(flat);
  }

  report.util_after = mean_utilization_fraction(util);
  util.step_of_last_reinit = step;
  if (cfg.reset_counters_after && report.total_replaced() > 0) util.reset_counters();
  return report;
}

}  // namespace pkm::reinit
