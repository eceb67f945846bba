#include "pkm/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "pkm/errors.hpp"

namespace pkm::config {

using experiments::ExperimentSpec;
using experiments::ModelKind;
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const char* where, const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items())
    if (!known.contains(key))
      throw ConfigError(std::string("config: unknown field \"") + key + "\" in " + where);
}

template <typename T>
void get_field(const json& obj, const char* name, T& out) {
  if (!obj.contains(name) || obj[name].is_null()) return;
  try {
    out = obj[name].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for \"") + name + "\": " + e.what());
  }
}

template <typename T>
void get_optional(const json& obj, const char* name, std::optional<T>& out) {
  if (!obj.contains(name) || obj[name].is_null()) return;
  T v{};
  get_field(obj, name, v);
  out = v;
}

}  // namespace

ExperimentSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: document must be a JSON object");
  reject_unknown(j, "the top level", {"seed", "dataset", "model", "optimizer", "train", "reinit"});

  ExperimentSpec spec = experiments::default_spec();
  get_field(j, "seed", spec.seed);

  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    reject_unknown(d, "dataset", {"n", "dim", "classes"});
    get_field(d, "n", spec.dataset_n);
    get_field(d, "dim", spec.dataset_dim);
    get_field(d, "classes", spec.classes);
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, "model", {"kind", "embed_dim", "memory", "mlp_width"});
    std::string kind = "memory";
    get_field(m, "kind", kind);
    if (kind == "memory")
      spec.model = ModelKind::Memory;
    else if (kind == "wide-mlp")
      spec.model = ModelKind::WideMlp;
    else
      throw ConfigError("config: model.kind must be \"memory\" or \"wide-mlp\"");
    get_field(m, "embed_dim", spec.embed_dim);
    get_field(m, "mlp_width", spec.mlp_width);

    if (m.contains("memory")) {
      const json& mem = m["memory"];
      reject_unknown(mem, "model.memory",
                     {"d_q", "d_v", "n1", "n2", "k", "heads", "distance", "alpha",
                      "value_init_scale", "bn_affine"});
      get_field(mem, "d_q", spec.memory.d_q);
      get_field(mem, "d_v", spec.memory.d_v);
      get_field(mem, "n1", spec.memory.n1);
      get_field(mem, "n2", spec.memory.n2);
      get_field(mem, "k", spec.memory.k);
      get_field(mem, "heads", spec.memory.heads);
      std::string distance = spec.memory.distance == memory::Distance::Dot ? "dot" : "cosine";
      get_field(mem, "distance", distance);
      if (distance == "dot")
        spec.memory.distance = memory::Distance::Dot;
      else if (distance == "cosine")
        spec.memory.distance = memory::Distance::Cosine;
      else
        throw ConfigError("config: memory.distance must be \"dot\" or \"cosine\"");
      get_field(mem, "alpha", spec.memory.alpha);
      get_field(mem, "value_init_scale", spec.memory.value_init_scale);
      get_field(mem, "bn_affine", spec.memory.bn_affine);
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    reject_unknown(o, "optimizer",
                   {"dense_lr", "beta1", "beta2", "eps", "sparse_lr_multiplier",
                    "key_lr_multiplier"});
    get_field(o, "dense_lr", spec.optimizer.dense_lr);
    get_field(o, "beta1", spec.optimizer.beta1);
    get_field(o, "beta2", spec.optimizer.beta2);
    get_field(o, "eps", spec.optimizer.eps);
    get_field(o, "sparse_lr_multiplier", spec.optimizer.sparse_lr_multiplier);
    get_field(o, "key_lr_multiplier", spec.optimizer.key_lr_multiplier);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t, "train", {"batch_size", "epochs", "early_stop_top1", "log_timings"});
    get_field(t, "batch_size", spec.train.batch_size);
    get_field(t, "epochs", spec.train.epochs);
    get_field(t, "early_stop_top1", spec.train.early_stop_top1);
    get_field(t, "log_timings", spec.train.log_timings);
  }

  if (j.contains("reinit")) {
    const json& r = j["reinit"];
    reject_unknown(r, "reinit",
                   {"enabled", "d_k", "epsilon_d", "sigma_n", "trigger_period", "plateau_delta",
                    "window", "value_reinit", "max_replacements", "reset_counters_after"});
    get_field(r, "enabled", spec.reinit_enabled);
    get_field(r, "d_k", spec.reinit.d_k);
    get_optional(r, "epsilon_d", spec.reinit.epsilon_d);
    get_field(r, "sigma_n", spec.reinit.sigma_n);
    get_field(r, "trigger_period", spec.reinit.trigger_period);
    get_field(r, "plateau_delta", spec.reinit.plateau_delta);
    get_field(r, "window", spec.reinit_window);
    std::string vr = spec.reinit.value_reinit == reinit::ValueReinit::Zero ? "zero"
                                                                           : "resample-uniform";
    get_field(r, "value_reinit", vr);
    if (vr == "resample-uniform")
      spec.reinit.value_reinit = reinit::ValueReinit::ResampleUniform;
    else if (vr == "zero")
      spec.reinit.value_reinit = reinit::ValueReinit::Zero;
    else
      throw ConfigError("config: reinit.value_reinit must be \"resample-uniform\" or \"zero\"");
    get_optional(r, "max_replacements", spec.reinit.max_replacements);
    get_field(r, "reset_counters_after", spec.reinit.reset_counters_after);
  }

  spec.validate();
  return spec;
}

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["dataset"] = {{"n", spec.dataset_n}, {"dim", spec.dataset_dim}, {"classes", spec.classes}};
  j["model"] = {
      {"kind", spec.model == ModelKind::Memory ? "memory" : "wide-mlp"},
      {"embed_dim", spec.embed_dim},
      {"mlp_width", spec.mlp_width},
      {"memory",
       {{"d_q", spec.memory.d_q},
        {"d_v", spec.memory.d_v},
        {"n1", spec.memory.n1},
        {"n2", spec.memory.n2},
        {"k", spec.memory.k},
        {"heads", spec.memory.heads},
        {"distance", spec.memory.distance == memory::Distance::Dot ? "dot" : "cosine"},
        {"alpha", spec.memory.alpha},
        {"value_init_scale", spec.memory.resolved_value_scale()},
        {"bn_affine", spec.memory.bn_affine}}}};
  j["optimizer"] = {{"dense_lr", spec.optimizer.dense_lr},
                    {"beta1", spec.optimizer.beta1},
                    {"beta2", spec.optimizer.beta2},
                    {"eps", spec.optimizer.eps},
                    {"sparse_lr_multiplier", spec.optimizer.sparse_lr_multiplier},
                    {"key_lr_multiplier", spec.optimizer.key_lr_multiplier}};
  j["train"] = {{"batch_size", spec.train.batch_size},
                {"epochs", spec.train.epochs},
                {"early_stop_top1", spec.train.early_stop_top1},
                {"log_timings", spec.train.log_timings}};
  j["reinit"] = {{"enabled", spec.reinit_enabled},
                 {"d_k", spec.reinit.d_k},
                 {"epsilon_d", spec.reinit.epsilon_d ? json(*spec.reinit.epsilon_d) : json()},
                 {"sigma_n", spec.reinit.sigma_n},
                 {"trigger_period", spec.reinit.trigger_period},
                 {"plateau_delta", spec.reinit.plateau_delta},
                 {"window", spec.reinit_window},
                 {"value_reinit",
                  spec.reinit.value_reinit == reinit::ValueReinit::Zero ? "zero"
                                                                        : "resample-uniform"},
                 {"max_replacements",
                  spec.reinit.max_replacements ? json(*spec.reinit.max_replacements) : json()},
                 {"reset_counters_after", spec.reinit.reset_counters_after}};
  return j;
}

experiments::ExperimentSpec load_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
  }
  return spec_from_json(j);
}

}  // namespace pkm::config
