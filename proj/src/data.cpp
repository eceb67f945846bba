#include "pkm/data.hpp"

#include <cstring>
#include <fstream>
#include <unordered_set>

#include "pkm/errors.hpp"
#include "pkm/rng.hpp"

namespace pkm::data {

namespace {

std::uint64_t row_hash(std::span<const double> row) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : row) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = (h ^ bits) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RandomLabelDataset generate(std::size_t n, std::size_t dim, std::size_t classes,
                            std::uint64_t seed) {
  if (n < 1 || classes < 1) throw ConfigError("dataset: n and classes must be >= 1");
  RandomLabelDataset ds;
  ds.n = n;
  ds.dim = dim;
  ds.classes = classes;
  ds.seed = seed;
  ds.points = DenseMatrix(n, dim);
  ds.labels.resize(n);

  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.points.row(i);
    for (double& v : row) v = rng.uniform01();
    ds.labels[i] = static_cast<std::uint32_t>(rng.below(classes));
  }

  std::unordered_set<std::uint64_t> seen;
  seen.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!seen.insert(row_hash(ds.points.row(i))).second) ++ds.duplicate_points;
  return ds;
}

namespace {

constexpr char kMagic[4] = {'P', 'K', 'M', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError(std::string("dataset load: truncated reading ") + what);
  return v;
}

}  // namespace

void dump(const RandomLabelDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("dataset dump: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(ds.n));
  write_pod(out, static_cast<std::uint32_t>(ds.dim));
  write_pod(out, static_cast<std::uint32_t>(ds.classes));
  write_pod(out, ds.seed);
  for (double v : ds.points.data) write_pod(out, static_cast<float>(v));
  for (std::uint32_t l : ds.labels) write_pod(out, static_cast<std::uint16_t>(l));
  if (!out) throw IoError("dataset dump: write failed for " + path.string());
}

RandomLabelDataset load_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dataset load: cannot open " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("dataset load: bad magic at offset 0");
  if (read_pod<std::uint32_t>(in, "version") != kVersion)
    throw IoError("dataset load: unsupported version");

  RandomLabelDataset ds;
  ds.n = read_pod<std::uint64_t>(in, "n");
  ds.dim = read_pod<std::uint32_t>(in, "dim");
  ds.classes = read_pod<std::uint32_t>(in, "classes");
  ds.seed = read_pod<std::uint64_t>(in, "seed");
  ds.points = DenseMatrix(ds.n, ds.dim);
  for (double& v : ds.points.data) v = read_pod<float>(in, "points");
  ds.labels.resize(ds.n);
  for (std::uint32_t& l : ds.labels) l = read_pod<std::uint16_t>(in, "labels");
  return ds;
}

}  // namespace pkm::data
