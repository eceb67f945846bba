#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "pkm/data.hpp"
#include "pkm/memory.hpp"
#include "pkm/metrics.hpp"
#include "pkm/optim.hpp"
#include "pkm/reinit.hpp"

namespace pkm::experiments {

enum class ModelKind { Memory, WideMlp };

struct OptimizerConfig {
  double dense_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double sparse_lr_multiplier = 10.0;  // values
  double key_lr_multiplier = 1.0;      // half-key tables
};

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  double early_stop_top1 = 1.0;
  bool log_timings = false;  // off by default so metrics streams are byte-reproducible
};

/// Full configuration of a run. JSON round-trip stable; see config.hpp.
struct ExperimentSpec {
  std::uint64_t seed = 1;
  std::size_t dataset_n = 4096;
  std::size_t dataset_dim = 8;
  std::size_t classes = 10;

  ModelKind model = ModelKind::Memory;
  std::size_t embed_dim = 512;
  memory::MemoryConfig memory;  // d_in is filled from embed_dim
  std::size_t mlp_width = 2048;

  OptimizerConfig optimizer;
  TrainConfig train;

  bool reinit_enabled = false;
  reinit::ReinitConfig reinit;
  std::size_t reinit_window = 5;

  void validate() const;
  memory::MemoryConfig resolved_memory() const;  // memory with d_in = embed_dim
};

ExperimentSpec default_spec();

/// linear -> memory -> linear.
struct ToyMemoryModel {
  numerics::Linear embed;  // dataset_dim -> embed_dim
  memory::QueryNetwork qnet;
  memory::ProductKeyStore store;
  memory::ValueTable values;
  memory::MemoryConfig cfg;
  numerics::Linear head;  // d_v -> classes

  static ToyMemoryModel init(const ExperimentSpec& spec, Rng& rng);

  /// Returns logits; fills `out` with the memory layer output/cache.
  DenseMatrix forward(const DenseMatrix& x, memory::Mode mode, memory::MemoryOutput& out,
                      metrics::OpCounters* counters = nullptr);

  /// Cast every parameter (and batchnorm running stat) through f32, the
  /// checkpoint storage precision.
  void round_params_to_f32();
};

struct MemoryModelOptimizers {
  optim::DenseAdam embed_w, embed_b, proj_w, proj_b, bn_gamma, bn_beta, head_w, head_b;
  std::vector<optim::SparseAdam> keys1, keys2;  // per head
  optim::SparseAdam values;

  static MemoryModelOptimizers init(const ExperimentSpec& spec);
  reinit::OptimizerRefs refs();
};

/// embed -> wide linear -> relu -> wide linear -> head.
struct WideMlpBaseline {
  numerics::Linear embed;  // dataset_dim -> embed_dim
  numerics::Linear w1;     // embed_dim -> mlp_width
  numerics::Linear w2;     // mlp_width -> embed_dim
  numerics::Linear head;   // embed_dim -> classes

  static WideMlpBaseline init(const ExperimentSpec& spec, Rng& rng);
  DenseMatrix forward(const DenseMatrix& x) const;
  void round_params_to_f32();
};

struct MlpOptimizers {
  optim::DenseAdam embed_w, embed_b, w1_w, w1_b, w2_w, w2_b, head_w, head_b;
  static MlpOptimizers init(const ExperimentSpec& spec);
};

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double kl = 0.0;
  double util_flat = 0.0;                       // accessed flat slots / |K|, one pass
  std::vector<std::array<double, 2>> util_half; // per head, one pass
  std::uint64_t score_ops = 0;
};

/// Eval-mode pass over the whole dataset with fresh counters. When
/// `persistent` is given, the same selections are also observed into it
/// (the training loop's accumulated dead-key counters).
EvalResult evaluate(ToyMemoryModel& model, const data::RandomLabelDataset& ds,
                    std::size_t batch_size, reinit::UtilizationState* persistent = nullptr);
EvalResult evaluate(const WideMlpBaseline& model, const data::RandomLabelDataset& ds,
                    std::size_t batch_size);

struct TrainOutputs {
  std::vector<nlohmann::json> records;  // the metrics.jsonl lines, in order
  EvalResult final_eval;
  std::size_t epochs_run = 0;
  std::shared_ptr<data::RandomLabelDataset> dataset;
  std::shared_ptr<ToyMemoryModel> memory_model;
  std::shared_ptr<MemoryModelOptimizers> memory_opt;
  std::shared_ptr<WideMlpBaseline> mlp_model;
  std::shared_ptr<MlpOptimizers> mlp_opt;
};

/// Full training run. Per-epoch metrics come from an eval-mode pass, so the
/// last record matches evaluate() on the final model exactly. When out_dir
/// is given, writes metrics.jsonl, final.ckpt and resolved-config.json.
/// Throws on non-finite loss with a diagnostic message.
TrainOutputs train(const ExperimentSpec& spec,
                   const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// --- checkpointing (format is normative; see README) ---

void save_checkpoint(const ExperimentSpec& spec, const ToyMemoryModel& model,
                     const MemoryModelOptimizers* opt, const std::filesystem::path& path);
void save_checkpoint(const ExperimentSpec& spec, const WideMlpBaseline& model,
                     const MlpOptimizers* opt, const std::filesystem::path& path);

struct LoadedCheckpoint {
  ExperimentSpec spec;
  std::shared_ptr<ToyMemoryModel> memory_model;
  std::shared_ptr<MemoryModelOptimizers> memory_opt;
  std::shared_ptr<WideMlpBaseline> mlp_model;
  std::shared_ptr<MlpOptimizers> mlp_opt;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pkm::experiments
