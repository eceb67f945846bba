#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pkm/config.hpp"
#include "pkm/errors.hpp"
#include "pkm/experiments.hpp"

// Checkpoint layout (all integers u32 little-endian, all floats f32):
//   "PKM1" | u32 version | u32 config_len | config JSON (resolved spec)
//   parameter segments per model kind; the memory segment is preceded by its
//   own dimensions header (d_in, d_q, d_v, n1, n2, k, heads, distance tag,
//   alpha as f32) and holds per head K1 then K2 row-major, then the value
//   table, then the query network parameters.
//   u32 optimizer flag | optimizer segment (dense groups: u32 t, m, v;
//   sparse groups: u32 per-slot steps, m, v).
// A reader that does not land exactly on EOF rejects the file.

namespace pkm::experiments {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'K', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("checkpoint save: cannot open " + path.string());
  }

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, sizeof(v)); }
  void f32(float v) { bytes(&v, sizeof(v)); }
  void f32_array(const std::vector<double>& v) {
    for (double x : v) f32(static_cast<float>(x));
  }
  void f32_matrix(const DenseMatrix& m) { f32_array(m.data); }
  void u32_array(std::span<const std::uint32_t> v) {
    for (std::uint32_t x : v) u32(x);
  }

  void done(const std::filesystem::path& path) {
    if (!out_) throw IoError("checkpoint save: write failed for " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("checkpoint load: cannot open " + path.string());
  }

  void bytes(void* p, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_)
      throw IoError("checkpoint load: truncated reading " + std::string(what) + " at offset " +
                    std::to_string(offset_));
    offset_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, sizeof(v), what);
    return v;
  }
  float f32(const char* what) {
    float v;
    bytes(&v, sizeof(v), what);
    return v;
  }
  void f32_array(std::vector<double>& v, const char* what) {
    for (double& x : v) x = static_cast<double>(f32(what));
  }
  void f32_matrix(DenseMatrix& m, const char* what) { f32_array(m.data, what); }
  void u32_array(std::vector<std::uint32_t>& v, const char* what) {
    for (std::uint32_t& x : v) x = u32(what);
  }

  std::size_t offset() const { return offset_; }

  void expect_eof() {
    in_.peek();
    if (!in_.eof())
      throw IoError("checkpoint load: trailing bytes at offset " + std::to_string(offset_));
  }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void write_linear(Writer& w, const numerics::Linear& lin) {
  w.f32_matrix(lin.w);
  w.f32_array(lin.b);
}

void read_linear(Reader& r, numerics::Linear& lin, std::size_t in, std::size_t out,
                 const char* what) {
  lin.w = DenseMatrix(out, in);
  lin.b.assign(out, 0.0);
  r.f32_matrix(lin.w, what);
  r.f32_array(lin.b, what);
}

void write_memory_segment(Writer& w, const ToyMemoryModel& model) {
  const memory::MemoryConfig& cfg = model.cfg;
  for (std::uint32_t v :
       {static_cast<std::uint32_t>(cfg.d_in), static_cast<std::uint32_t>(cfg.d_q),
        static_cast<std::uint32_t>(cfg.d_v), static_cast<std::uint32_t>(cfg.n1),
        static_cast<std::uint32_t>(cfg.n2), static_cast<std::uint32_t>(cfg.k),
        static_cast<std::uint32_t>(cfg.heads),
        static_cast<std::uint32_t>(cfg.distance == memory::Distance::Cosine ? 1 : 0)})
    w.u32(v);
  w.f32(static_cast<float>(cfg.alpha));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    w.f32_matrix(model.store.k1[h]);
    w.f32_matrix(model.store.k2[h]);
  }
  w.f32_matrix(model.values.slots);
  write_linear(w, model.qnet.proj);
  w.f32_array(model.qnet.bn.gamma);
  w.f32_array(model.qnet.bn.beta);
  w.f32_array(model.qnet.bn.running_mean);
  w.f32_array(model.qnet.bn.running_var);
}

void read_memory_segment(Reader& r, ToyMemoryModel& model) {
  const memory::MemoryConfig& cfg = model.cfg;
  const std::uint32_t dims[8] = {r.u32("d_in"), r.u32("d_q"), r.u32("d_v"), r.u32("n1"),
                                 r.u32("n2"),   r.u32("k"),   r.u32("heads"), r.u32("distance")};
  const std::uint32_t expect[8] = {
      static_cast<std::uint32_t>(cfg.d_in), static_cast<std::uint32_t>(cfg.d_q),
      static_cast<std::uint32_t>(cfg.d_v),  static_cast<std::uint32_t>(cfg.n1),
      static_cast<std::uint32_t>(cfg.n2),   static_cast<std::uint32_t>(cfg.k),
      static_cast<std::uint32_t>(cfg.heads),
      static_cast<std::uint32_t>(cfg.distance == memory::Distance::Cosine ? 1 : 0)};
  for (int i = 0; i < 8; ++i)
    if (dims[i] != expect[i])
      throw IoError("checkpoint load: memory dimensions header disagrees with config at offset " +
                    std::to_string(r.offset()));
  r.f32("alpha");  // informational; cfg.alpha comes from the config block

  model.store.k1.assign(cfg.heads, DenseMatrix(cfg.n1, cfg.half_dim()));
  model.store.k2.assign(cfg.heads, DenseMatrix(cfg.n2, cfg.half_dim()));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    r.f32_matrix(model.store.k1[h], "K1");
    r.f32_matrix(model.store.k2[h], "K2");
  }
  model.values.slots = DenseMatrix(cfg.slot_count(), cfg.d_v);
  r.f32_matrix(model.values.slots, "values");
  read_linear(r, model.qnet.proj, cfg.d_in, cfg.d_q, "projection");
  model.qnet.bn = numerics::BatchNormState::init(cfg.d_q, cfg.bn_affine);
  r.f32_array(model.qnet.bn.gamma, "bn gamma");
  r.f32_array(model.qnet.bn.beta, "bn beta");
  r.f32_array(model.qnet.bn.running_mean, "bn running mean");
  r.f32_array(model.qnet.bn.running_var, "bn running var");
}

void write_dense_adam(Writer& w, const optim::DenseAdam& a, std::size_t param_size) {
  w.u32(static_cast<std::uint32_t>(a.t));
  std::vector<double> m = a.m, v = a.v;
  m.resize(param_size, 0.0);  // never-stepped optimizers have empty buffers
  v.resize(param_size, 0.0);
  w.f32_array(m);
  w.f32_array(v);
}

void read_dense_adam(Reader& r, optim::DenseAdam& a, std::size_t param_size, const char* what) {
  a.t = r.u32(what);
  a.m.assign(param_size, 0.0);
  a.v.assign(param_size, 0.0);
  r.f32_array(a.m, what);
  r.f32_array(a.v, what);
}

void write_sparse_adam(Writer& w, const optim::SparseAdam& a) {
  w.u32_array(a.step_counts());
  w.f32_matrix(a.first_moment());
  w.f32_matrix(a.second_moment());
}

void read_sparse_adam(Reader& r, optim::SparseAdam& a, const char* what) {
  r.u32_array(a.mutable_step_counts(), what);
  r.f32_matrix(a.mutable_first_moment(), what);
  r.f32_matrix(a.mutable_second_moment(), what);
}

void write_header(Writer& w, const ExperimentSpec& spec) {
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  const std::string cfg = config::spec_to_json(spec).dump();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());
}

ExperimentSpec read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint load: bad magic at offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw IoError("checkpoint load: unsupported version " + std::to_string(version) +
                  " (expected " + std::to_string(kVersion) + ")");
  const std::uint32_t cfg_len = r.u32("config length");
  std::string cfg(cfg_len, '\0');
  r.bytes(cfg.data(), cfg_len, "config block");
  try {
    return config::spec_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint load: config block is not valid JSON: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const ExperimentSpec& spec, const ToyMemoryModel& model,
                     const MemoryModelOptimizers* opt, const std::filesystem::path& path) {
  Writer w(path);
  write_header(w, spec);
  write_linear(w, model.embed);
  write_memory_segment(w, model);
  write_linear(w, model.head);
  w.u32(opt ? 1 : 0);
  if (opt) {
    write_dense_adam(w, opt->embed_w, model.embed.w.data.size());
    write_dense_adam(w, opt->embed_b, model.embed.b.size());
    write_dense_adam(w, opt->proj_w, model.qnet.proj.w.data.size());
    write_dense_adam(w, opt->proj_b, model.qnet.proj.b.size());
    write_dense_adam(w, opt->bn_gamma, model.qnet.bn.gamma.size());
    write_dense_adam(w, opt->bn_beta, model.qnet.bn.beta.size());
    write_dense_adam(w, opt->head_w, model.head.w.data.size());
    write_dense_adam(w, opt->head_b, model.head.b.size());
    for (std::size_t h = 0; h < model.cfg.heads; ++h) {
      write_sparse_adam(w, opt->keys1[h]);
      write_sparse_adam(w, opt->keys2[h]);
    }
    write_sparse_adam(w, opt->values);
  }
  w.done(path);
}

void save_checkpoint(const ExperimentSpec& spec, const WideMlpBaseline& model,
                     const MlpOptimizers* opt, const std::filesystem::path& path) {
  Writer w(path);
  write_header(w, spec);
  write_linear(w, model.embed);
  write_linear(w, model.w1);
  write_linear(w, model.w2);
  write_linear(w, model.head);
  w.u32(opt ? 1 : 0);
  if (opt) {
    write_dense_adam(w, opt->embed_w, model.embed.w.data.size());
    write_dense_adam(w, opt->embed_b, model.embed.b.size());
    write_dense_adam(w, opt->w1_w, model.w1.w.data.size());
    write_dense_adam(w, opt->w1_b, model.w1.b.size());
    write_dense_adam(w, opt->w2_w, model.w2.w.data.size());
    write_dense_adam(w, opt->w2_b, model.w2.b.size());
    write_dense_adam(w, opt->head_w, model.head.w.data.size());
    write_dense_adam(w, opt->head_b, model.head.b.size());
  }
  w.done(path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  LoadedCheckpoint loaded;
  loaded.spec = read_header(r);
  const ExperimentSpec& spec = loaded.spec;

  if (spec.model == ModelKind::Memory) {
    auto model = std::make_shared<ToyMemoryModel>();
    model->cfg = spec.resolved_memory();
    read_linear(r, model->embed, spec.dataset_dim, spec.embed_dim, "embed");
    read_memory_segment(r, *model);
    read_linear(r, model->head, model->cfg.d_v, spec.classes, "head");
    const std::uint32_t has_opt = r.u32("optimizer flag");
    if (has_opt) {
      auto opt = std::make_shared<MemoryModelOptimizers>(MemoryModelOptimizers::init(spec));
      read_dense_adam(r, opt->embed_w, model->embed.w.data.size(), "opt embed_w");
      read_dense_adam(r, opt->embed_b, model->embed.b.size(), "opt embed_b");
      read_dense_adam(r, opt->proj_w, model->qnet.proj.w.data.size(), "opt proj_w");
      read_dense_adam(r, opt->proj_b, model->qnet.proj.b.size(), "opt proj_b");
      read_dense_adam(r, opt->bn_gamma, model->qnet.bn.gamma.size(), "opt bn_gamma");
      read_dense_adam(r, opt->bn_beta, model->qnet.bn.beta.size(), "opt bn_beta");
      read_dense_adam(r, opt->head_w, model->head.w.data.size(), "opt head_w");
      read_dense_adam(r, opt->head_b, model->head.b.size(), "opt head_b");
      for (std::size_t h = 0; h < model->cfg.heads; ++h) {
        read_sparse_adam(r, opt->keys1[h], "opt keys1");
        read_sparse_adam(r, opt->keys2[h], "opt keys2");
      }
      read_sparse_adam(r, opt->values, "opt values");
      loaded.memory_opt = std::move(opt);
    }
    loaded.memory_model = std::move(model);
  } else {
    auto model = std::make_shared<WideMlpBaseline>();
    read_linear(r, model->embed, spec.dataset_dim, spec.embed_dim, "embed");
    read_linear(r, model->w1, spec.embed_dim, spec.mlp_width, "w1");
    read_linear(r, model->w2, spec.mlp_width, spec.embed_dim, "w2");
    read_linear(r, model->head, spec.embed_dim, spec.classes, "head");
    const std::uint32_t has_opt = r.u32("optimizer flag");
    if (has_opt) {
      auto opt = std::make_shared<MlpOptimizers>(MlpOptimizers::init(spec));
      read_dense_adam(r, opt->embed_w, model->embed.w.data.size(), "opt embed_w");
      read_dense_adam(r, opt->embed_b, model->embed.b.size(), "opt embed_b");
      read_dense_adam(r, opt->w1_w, model->w1.w.data.size(), "opt w1_w");
      read_dense_adam(r, opt->w1_b, model->w1.b.size(), "opt w1_b");
      read_dense_adam(r, opt->w2_w, model->w2.w.data.size(), "opt w2_w");
      read_dense_adam(r, opt->w2_b, model->w2.b.size(), "opt w2_b");
      read_dense_adam(r, opt->head_w, model->head.w.data.size(), "opt head_w");
      read_dense_adam(r, opt->head_b, model->head.b.size(), "opt head_b");
      loaded.mlp_opt = std::move(opt);
    }
    loaded.mlp_model = std::move(model);
  }

  r.expect_eof();
  return loaded;
}

}  // namespace pkm::experiments
