#include "pkm/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "pkm/config.hpp"
#include "pkm/errors.hpp"
#include "pkm/oracle.hpp"

namespace pkm::experiments {

using nlohmann::json;

namespace {

// Child-stream tags off the run seed.
constexpr std::uint64_t kDataTag = 0x64617461;
constexpr std::uint64_t kModelTag = 0x6d6f64656c;
constexpr std::uint64_t kShuffleTag = 0x73687566;
constexpr std::uint64_t kReinitTag = 0x7265696e;

}  // namespace

void ExperimentSpec::validate() const {
  if (dataset_n < 1 || classes < 1) throw ConfigError("spec: dataset needs n >= 1, classes >= 1");
  if (embed_dim < 1) throw ConfigError("spec: embed_dim must be >= 1");
  if (train.batch_size < 2) throw ConfigError("spec: batch_size must be >= 2 (batchnorm)");
  if (model == ModelKind::Memory) resolved_memory().validate();
  if (model == ModelKind::WideMlp && mlp_width < 1) throw ConfigError("spec: mlp_width >= 1");
  if (optimizer.beta1 < 0 || optimizer.beta1 >= 1 || optimizer.beta2 < 0 || optimizer.beta2 >= 1)
    throw ConfigError("spec: adam betas must be in [0,1)");
  reinit.validate();
  if (reinit_window < 1) throw ConfigError("spec: reinit window must be >= 1");
}

memory::MemoryConfig ExperimentSpec::resolved_memory() const {
  memory::MemoryConfig cfg = memory;
  cfg.d_in = embed_dim;
  return cfg;
}

ExperimentSpec default_spec() {
  ExperimentSpec spec;
  spec.memory.d_q = 128;
  spec.memory.d_v = 128;
  spec.memory.n1 = 64;
  spec.memory.n2 = 64;
  spec.memory.k = 10;
  spec.memory.heads = 8;
  return spec;
}

ToyMemoryModel ToyMemoryModel::init(const ExperimentSpec& spec, Rng& rng) {
  ToyMemoryModel model;
  model.cfg = spec.resolved_memory();
  model.cfg.validate();
  model.embed = numerics::Linear::init(spec.dataset_dim, spec.embed_dim, rng);
  model.qnet = memory::QueryNetwork::init(model.cfg, rng);
  model.store = memory::ProductKeyStore::init(model.cfg, rng);
  model.values = memory::ValueTable::init(model.cfg, rng);
  model.head = numerics::Linear::init(model.cfg.d_v, spec.classes, rng);
  return model;
}

DenseMatrix ToyMemoryModel::forward(const DenseMatrix& x, memory::Mode mode,
                                    memory::MemoryOutput& out, metrics::OpCounters* counters) {
  DenseMatrix e = numerics::linear_forward(embed, x);
  out = memory::memory_forward(qnet, store, values, cfg, e, mode, counters);
  return numerics::linear_forward(head, out.m);
}

namespace {

void round_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}
void round_f32(DenseMatrix& m) { round_f32(m.data); }

}  // namespace

void ToyMemoryModel::round_params_to_f32() {
  round_f32(embed.w);
  round_f32(embed.b);
  round_f32(qnet.proj.w);
  round_f32(qnet.proj.b);
  round_f32(qnet.bn.gamma);
  round_f32(qnet.bn.beta);
  round_f32(qnet.bn.running_mean);
  round_f32(qnet.bn.running_var);
  for (auto& k : store.k1) round_f32(k);
  for (auto& k : store.k2) round_f32(k);
  round_f32(values.slots);
  round_f32(head.w);
  round_f32(head.b);
}

MemoryModelOptimizers MemoryModelOptimizers::init(const ExperimentSpec& spec) {
  const OptimizerConfig& oc = spec.optimizer;
  const memory::MemoryConfig cfg = spec.resolved_memory();
  MemoryModelOptimizers opt;
  for (optim::DenseAdam* a : {&opt.embed_w, &opt.embed_b, &opt.proj_w, &opt.proj_b,
                              &opt.bn_gamma, &opt.bn_beta, &opt.head_w, &opt.head_b}) {
    a->lr = oc.dense_lr;
    a->beta1 = oc.beta1;
    a->beta2 = oc.beta2;
    a->eps = oc.eps;
  }
  opt.keys1.reserve(cfg.heads);
  opt.keys2.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    opt.keys1.emplace_back(cfg.n1, cfg.half_dim(), oc.dense_lr, oc.beta1, oc.beta2, oc.eps,
                           oc.key_lr_multiplier);
    opt.keys2.emplace_back(cfg.n2, cfg.half_dim(), oc.dense_lr, oc.beta1, oc.beta2, oc.eps,
                           oc.key_lr_multiplier);
  }
  opt.values = optim::SparseAdam(cfg.slot_count(), cfg.d_v, oc.dense_lr, oc.beta1, oc.beta2,
                                 oc.eps, oc.sparse_lr_multiplier);
  return opt;
}

reinit::OptimizerRefs MemoryModelOptimizers::refs() {
  reinit::OptimizerRefs r;
  r.values = &values;
  for (auto& k : keys1) r.keys1.push_back(&k);
  for (auto& k : keys2) r.keys2.push_back(&k);
  return r;
}

WideMlpBaseline WideMlpBaseline::init(const ExperimentSpec& spec, Rng& rng) {
  WideMlpBaseline model;
  model.embed = numerics::Linear::init(spec.dataset_dim, spec.embed_dim, rng);
  model.w1 = numerics::Linear::init(spec.embed_dim, spec.mlp_width, rng);
  model.w2 = numerics::Linear::init(spec.mlp_width, spec.embed_dim, rng);
  model.head = numerics::Linear::init(spec.embed_dim, spec.classes, rng);
  return model;
}

namespace {

DenseMatrix relu(const DenseMatrix& x) {
  DenseMatrix y = x;
  for (double& v : y.data) v = std::max(v, 0.0);
  return y;
}

}  // namespace

DenseMatrix WideMlpBaseline::forward(const DenseMatrix& x) const {
  DenseMatrix e = numerics::linear_forward(embed, x);
  DenseMatrix a1 = numerics::linear_forward(w1, e);
  DenseMatrix r = relu(a1);
  DenseMatrix a2 = numerics::linear_forward(w2, r);
  return numerics::linear_forward(head, a2);
}

void WideMlpBaseline::round_params_to_f32() {
  for (numerics::Linear* lin : {&embed, &w1, &w2, &head}) {
    round_f32(lin->w);
    round_f32(lin->b);
  }
}

MlpOptimizers MlpOptimizers::init(const ExperimentSpec& spec) {
  MlpOptimizers opt;
  for (optim::DenseAdam* a : {&opt.embed_w, &opt.embed_b, &opt.w1_w, &opt.w1_b, &opt.w2_w,
                              &opt.w2_b, &opt.head_w, &opt.head_b}) {
    a->lr = spec.optimizer.dense_lr;
    a->beta1 = spec.optimizer.beta1;
    a->beta2 = spec.optimizer.beta2;
    a->eps = spec.optimizer.eps;
  }
  return opt;
}

namespace {

// Rank of the true label under (logit desc, class index asc).
std::size_t label_rank(std::span<const double> logits, std::uint32_t label) {
  std::size_t rank = 0;
  for (std::size_t c = 0; c < logits.size(); ++c)
    if (logits[c] > logits[label] || (logits[c] == logits[label] && c < label)) ++rank;
  return rank;
}

// Batch boundaries; a trailing singleton is folded into its predecessor so
// train-mode batchnorm always sees at least two samples.
std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t n, std::size_t bs) {
  std::vector<std::pair<std::size_t, std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += bs)
    batches.emplace_back(start, std::min(bs, n - start));
  if (batches.size() >= 2 && batches.back().second == 1) {
    batches.pop_back();
    batches.back().second += 1;
  }
  return batches;
}

DenseMatrix gather_rows(const DenseMatrix& src, std::span<const std::size_t> idx,
                        std::size_t start, std::size_t len) {
  DenseMatrix out(len, src.cols);
  for (std::size_t i = 0; i < len; ++i) {
    const auto row = src.row(idx[start + i]);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

double grad_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

EvalResult evaluate(ToyMemoryModel& model, const data::RandomLabelDataset& ds,
                    std::size_t batch_size, reinit::UtilizationState* persistent) {
  EvalResult res;
  metrics::OpCounters counters;
  metrics::AccessMass mass(model.cfg.slot_count());
  reinit::UtilizationState fresh =
      reinit::UtilizationState::init(model.cfg.heads, model.cfg.n1, model.cfg.n2);

  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);
  const auto batches = make_batches(ds.n, batch_size);

  double loss_sum = 0.0;
  std::size_t top1_hits = 0, top5_hits = 0;
  for (const auto& [start, len] : batches) {
    DenseMatrix x = gather_rows(ds.points, order, start, len);
    memory::MemoryOutput out;
    DenseMatrix logits = model.forward(x, memory::Mode::Eval, out, &counters);

    reinit::observe(fresh, out, model.cfg);
    if (persistent) reinit::observe(*persistent, out, model.cfg);
    for (std::size_t b = 0; b < len; ++b)
      for (std::size_t h = 0; h < model.cfg.heads; ++h) {
        const auto sel = out.selected_for(b, h, model.cfg.heads, model.cfg.k);
        const auto w = out.weights_for(b, h, model.cfg.heads, model.cfg.k);
        for (std::size_t j = 0; j < model.cfg.k; ++j) mass.add(sel[j], w[j]);
      }

    std::vector<std::uint32_t> labels(ds.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                      ds.labels.begin() + static_cast<std::ptrdiff_t>(start + len));
    const auto ce = numerics::cross_entropy(logits, labels);
    loss_sum += ce.loss * static_cast<double>(len);
    for (std::size_t b = 0; b < len; ++b) {
      const std::size_t rank = label_rank(logits.row(b), labels[b]);
      top1_hits += rank < 1;
      top5_hits += rank < 5;
    }
  }

  res.loss = loss_sum / static_cast<double>(ds.n);
  res.top1 = static_cast<double>(top1_hits) / static_cast<double>(ds.n);
  res.top5 = static_cast<double>(top5_hits) / static_cast<double>(ds.n);
  res.kl = metrics::kl_to_uniform(mass);
  res.util_flat = mass.utilization_fraction();
  res.util_half.resize(model.cfg.heads);
  for (std::size_t h = 0; h < model.cfg.heads; ++h)
    res.util_half[h] = {reinit::utilization_fraction(fresh, h, 0),
                        reinit::utilization_fraction(fresh, h, 1)};
  res.score_ops = counters.key_score_evals;
  return res;
}

EvalResult evaluate(const WideMlpBaseline& model, const data::RandomLabelDataset& ds,
                    std::size_t batch_size) {
  EvalResult res;
  const auto batches = make_batches(ds.n, batch_size);
  double loss_sum = 0.0;
  std::size_t top1_hits = 0, top5_hits = 0;
  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);
  for (const auto& [start, len] : batches) {
    DenseMatrix x = gather_rows(ds.points, order, start, len);
    DenseMatrix logits = model.forward(x);
    std::vector<std::uint32_t> labels(ds.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                      ds.labels.begin() + static_cast<std::ptrdiff_t>(start + len));
    const auto ce = numerics::cross_entropy(logits, labels);
    loss_sum += ce.loss * static_cast<double>(len);
    for (std::size_t b = 0; b < len; ++b) {
      const std::size_t rank = label_rank(logits.row(b), labels[b]);
      top1_hits += rank < 1;
      top5_hits += rank < 5;
    }
  }
  res.loss = loss_sum / static_cast<double>(ds.n);
  res.top1 = static_cast<double>(top1_hits) / static_cast<double>(ds.n);
  res.top5 = static_cast<double>(top5_hits) / static_cast<double>(ds.n);
  return res;
}

namespace {

json eval_record(const EvalResult& ev, std::size_t epoch, std::size_t step,
                 std::size_t replaced_this_epoch, bool log_timings, double ms_per_step) {
  json rec;
  rec["type"] = "epoch";
  rec["epoch"] = epoch;
  rec["step"] = step;
  rec["split"] = "train";
  rec["loss"] = ev.loss;
  rec["top1"] = ev.top1;
  rec["top5"] = ev.top5;
  rec["kl"] = ev.kl;
  rec["util_flat"] = ev.util_flat;
  json halves = json::array();
  for (const auto& h : ev.util_half) halves.push_back({h[0], h[1]});
  rec["util_frac"] = halves;
  rec["score_ops"] = ev.score_ops;
  rec["replaced_keys"] = replaced_this_epoch;
  if (log_timings) rec["ms_per_step"] = ms_per_step;
  return rec;
}

json reinit_record(const reinit::ReinitReport& report, std::size_t epoch) {
  json rec;
  rec["type"] = "reinit";
  rec["epoch"] = epoch;
  rec["step"] = report.step;
  rec["replaced_half1"] = report.replaced_in_half(0);
  rec["replaced_half2"] = report.replaced_in_half(1);
  rec["value_slots_reset"] = report.value_slots_reset;
  rec["util_before"] = report.util_before;
  rec["util_after"] = report.util_after;
  json flags = json::array();
  for (const auto& hd : report.all_dead) flags.push_back({hd[0], hd[1]});
  rec["all_dead_halves"] = flags;
  return rec;
}

struct RunWriter {
  std::ofstream metrics;
  explicit RunWriter(const std::optional<std::filesystem::path>& dir) {
    if (!dir) return;
    std::filesystem::create_directories(*dir);
    metrics.open(*dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("train: cannot open metrics.jsonl under " + dir->string());
  }
  void write(const json& rec) {
    if (metrics.is_open()) metrics << rec.dump() << "\n";
  }
};

TrainOutputs train_memory(const ExperimentSpec& spec,
                          const std::optional<std::filesystem::path>& out_dir) {
  Rng root(spec.seed);
  Rng model_rng = root.derive(kModelTag);
  Rng shuffle_rng = root.derive(kShuffleTag);
  Rng reinit_rng = root.derive(kReinitTag);

  TrainOutputs out;
  out.dataset = std::make_shared<data::RandomLabelDataset>(
      data::generate(spec.dataset_n, spec.dataset_dim, spec.classes,
                     root.derive(kDataTag).next_u64()));
  out.memory_model = std::make_shared<ToyMemoryModel>(ToyMemoryModel::init(spec, model_rng));
  out.memory_opt = std::make_shared<MemoryModelOptimizers>(MemoryModelOptimizers::init(spec));

  ToyMemoryModel& model = *out.memory_model;
  MemoryModelOptimizers& opt = *out.memory_opt;
  const data::RandomLabelDataset& ds = *out.dataset;

  reinit::UtilizationState util = reinit::UtilizationState::init(
      model.cfg.heads, model.cfg.n1, model.cfg.n2, spec.reinit_window);

  reinit::ReinitConfig rcfg = spec.reinit;
  rcfg.d_k = rcfg.resolved_d_k(model.cfg.k * ds.n);
  rcfg.epsilon_d.reset();

  RunWriter writer(out_dir);
  if (spec.train.epochs == 0) {
    out.final_eval = evaluate(model, ds, spec.train.batch_size);
    if (out_dir) save_checkpoint(spec, model, &opt, *out_dir / "final.ckpt");
    return out;
  }

  std::vector<std::size_t> perm(ds.n);
  std::iota(perm.begin(), perm.end(), 0);
  const auto batches = make_batches(ds.n, spec.train.batch_size);
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= spec.train.epochs; ++epoch) {
    // Fisher-Yates off the dedicated shuffle stream.
    for (std::size_t i = ds.n - 1; i > 0; --i)
      std::swap(perm[i], perm[shuffle_rng.below(i + 1)]);

    const auto epoch_start = std::chrono::steady_clock::now();
    for (const auto& [start, len] : batches) {
      DenseMatrix x = gather_rows(ds.points, perm, start, len);
      std::vector<std::uint32_t> labels(len);
      for (std::size_t i = 0; i < len; ++i) labels[i] = ds.labels[perm[start + i]];

      memory::MemoryOutput mem_out;
      DenseMatrix logits = model.forward(x, memory::Mode::Train, mem_out);
      const auto ce = numerics::cross_entropy(logits, labels);
      if (!std::isfinite(ce.loss))
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
            std::to_string(global_step) + " (batch [" + std::to_string(start) + "," +
            std::to_string(start + len) + "), dense_lr " + std::to_string(spec.optimizer.dense_lr) +
            ", |dlogits| " + std::to_string(grad_norm(ce.dlogits.data)) + ")");

      auto head_grads = numerics::linear_backward(model.head, mem_out.m, ce.dlogits);
      auto mem_grads =
          memory::memory_backward(model.qnet, model.store, model.values, model.cfg, mem_out,
                                  head_grads.dx);
      auto embed_grads = numerics::linear_backward(model.embed, x, mem_grads.proj.dx);

      opt.embed_w.step(model.embed.w.data, embed_grads.dw.data);
      opt.embed_b.step(model.embed.b, embed_grads.db);
      opt.proj_w.step(model.qnet.proj.w.data, mem_grads.proj.dw.data);
      opt.proj_b.step(model.qnet.proj.b, mem_grads.proj.db);
      if (model.cfg.bn_affine) {
        opt.bn_gamma.step(model.qnet.bn.gamma, mem_grads.bn.dgamma);
        opt.bn_beta.step(model.qnet.bn.beta, mem_grads.bn.dbeta);
      }
      opt.head_w.step(model.head.w.data, head_grads.dw.data);
      opt.head_b.step(model.head.b, head_grads.db);

      for (std::size_t h = 0; h < model.cfg.heads; ++h) {
        opt.keys1[h].step(model.store.k1[h], optim::to_slot_grads(mem_grads.keys1[h]));
        opt.keys2[h].step(model.store.k2[h], optim::to_slot_grads(mem_grads.keys2[h]));
      }
      opt.values.step(model.values.slots, optim::to_slot_grads(mem_grads.values));
      ++global_step;
    }
    const double epoch_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch_start)
            .count();

    std::size_t replaced_this_epoch = 0;
    EvalResult ev = evaluate(model, ds, spec.train.batch_size, &util);
    util.push_window(reinit::mean_utilization_fraction(util));

    std::optional<reinit::ReinitReport> report;
    if (spec.reinit_enabled &&
        reinit::plateau_reached(util, rcfg, static_cast<std::int64_t>(epoch))) {
      reinit::OptimizerRefs refs = opt.refs();
      report = reinit::reinitialize(model.store, model.values, util, refs, model.cfg, rcfg,
                                    reinit_rng, static_cast<std::int64_t>(epoch));
      replaced_this_epoch = report->total_replaced();
    }

    json rec = eval_record(ev, epoch, global_step, replaced_this_epoch, spec.train.log_timings,
                           epoch_ms / static_cast<double>(batches.size()));
    writer.write(rec);
    out.records.push_back(rec);
    if (report) {
      json rrec = reinit_record(*report, epoch);
      writer.write(rrec);
      out.records.push_back(rrec);
    }

    out.final_eval = ev;
    out.epochs_run = epoch;
    if (ev.top1 >= spec.train.early_stop_top1) break;
  }

  if (out_dir) save_checkpoint(spec, model, &opt, *out_dir / "final.ckpt");
  return out;
}

TrainOutputs train_mlp(const ExperimentSpec& spec,
                       const std::optional<std::filesystem::path>& out_dir) {
  Rng root(spec.seed);
  Rng model_rng = root.derive(kModelTag);
  Rng shuffle_rng = root.derive(kShuffleTag);

  TrainOutputs out;
  out.dataset = std::make_shared<data::RandomLabelDataset>(
      data::generate(spec.dataset_n, spec.dataset_dim, spec.classes,
                     root.derive(kDataTag).next_u64()));
  out.mlp_model = std::make_shared<WideMlpBaseline>(WideMlpBaseline::init(spec, model_rng));
  out.mlp_opt = std::make_shared<MlpOptimizers>(MlpOptimizers::init(spec));

  WideMlpBaseline& model = *out.mlp_model;
  MlpOptimizers& opt = *out.mlp_opt;
  const data::RandomLabelDataset& ds = *out.dataset;

  RunWriter writer(out_dir);
  if (spec.train.epochs == 0) {
    out.final_eval = evaluate(model, ds, spec.train.batch_size);
    if (out_dir) save_checkpoint(spec, model, &opt, *out_dir / "final.ckpt");
    return out;
  }

  std::vector<std::size_t> perm(ds.n);
  std::iota(perm.begin(), perm.end(), 0);
  const auto batches = make_batches(ds.n, spec.train.batch_size);
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= spec.train.epochs; ++epoch) {
    for (std::size_t i = ds.n - 1; i > 0; --i)
      std::swap(perm[i], perm[shuffle_rng.below(i + 1)]);

    const auto epoch_start = std::chrono::steady_clock::now();
    for (const auto& [start, len] : batches) {
      DenseMatrix x = gather_rows(ds.points, perm, start, len);
      std::vector<std::uint32_t> labels(len);
      for (std::size_t i = 0; i < len; ++i) labels[i] = ds.labels[perm[start + i]];

      DenseMatrix e = numerics::linear_forward(model.embed, x);
      DenseMatrix a1 = numerics::linear_forward(model.w1, e);
      DenseMatrix r = relu(a1);
      DenseMatrix a2 = numerics::linear_forward(model.w2, r);
      DenseMatrix logits = numerics::linear_forward(model.head, a2);

      const auto ce = numerics::cross_entropy(logits, labels);
      if (!std::isfinite(ce.loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(global_step));

      auto gh = numerics::linear_backward(model.head, a2, ce.dlogits);
      auto g2 = numerics::linear_backward(model.w2, r, gh.dx);
      for (std::size_t i = 0; i < a1.data.size(); ++i)
        if (a1.data[i] <= 0.0) g2.dx.data[i] = 0.0;
      auto g1 = numerics::linear_backward(model.w1, e, g2.dx);
      auto ge = numerics::linear_backward(model.embed, x, g1.dx);

      opt.embed_w.step(model.embed.w.data, ge.dw.data);
      opt.embed_b.step(model.embed.b, ge.db);
      opt.w1_w.step(model.w1.w.data, g1.dw.data);
      opt.w1_b.step(model.w1.b, g1.db);
      opt.w2_w.step(model.w2.w.data, g2.dw.data);
      opt.w2_b.step(model.w2.b, g2.db);
      opt.head_w.step(model.head.w.data, gh.dw.data);
      opt.head_b.step(model.head.b, gh.db);
      ++global_step;
    }
    const double epoch_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch_start)
            .count();

    EvalResult ev = evaluate(model, ds, spec.train.batch_size);
    json rec = eval_record(ev, epoch, global_step, 0, spec.train.log_timings,
                           epoch_ms / static_cast<double>(batches.size()));
    writer.write(rec);
    out.records.push_back(rec);

    out.final_eval = ev;
    out.epochs_run = epoch;
    if (ev.top1 >= spec.train.early_stop_top1) break;
  }

  if (out_dir) save_checkpoint(spec, model, &opt, *out_dir / "final.ckpt");
  return out;
}

}  // namespace

TrainOutputs train(const ExperimentSpec& spec,
                   const std::optional<std::filesystem::path>& out_dir) {
  spec.validate();
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::ofstream cfg(*out_dir / "resolved-config.json", std::ios::trunc);
    if (!cfg) throw IoError("train: cannot write resolved-config.json");
    cfg << config::spec_to_json(spec).dump(2) << "\n";
  }
  return spec.model == ModelKind::Memory ? train_memory(spec, out_dir)
                                         : train_mlp(spec, out_dir);
}

}  // namespace pkm::experiments
