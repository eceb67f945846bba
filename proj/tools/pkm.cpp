#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pkm/config.hpp"
#include "pkm/errors.hpp"
#include "pkm/experiments.hpp"
#include "pkm/oracle.hpp"

namespace {

using nlohmann::json;

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir) {
  pkm::experiments::ExperimentSpec spec;
  try {
    spec = pkm::config::load_spec_file(config_path);
    if (seed) spec.seed = *seed;
    spec.validate();
  } catch (const pkm::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  try {
    pkm::experiments::train(spec, std::filesystem::path(out_dir));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  return 0;
}

struct BenchSize {
  std::size_t n1, n2;
};

// "4096" (perfect square) or "64x128"
BenchSize parse_size(const std::string& token) {
  const auto x = token.find('x');
  if (x != std::string::npos) {
    const std::size_t n1 = std::stoull(token.substr(0, x));
    const std::size_t n2 = std::stoull(token.substr(x + 1));
    if (n1 == 0 || n2 == 0) throw pkm::ConfigError("bench: sizes must be positive");
    return {n1, n2};
  }
  const std::size_t total = std::stoull(token);
  const auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(total))));
  if (root * root != total)
    throw pkm::ConfigError("bench: size " + token + " is not a perfect square; use n1xn2");
  return {root, root};
}

int cmd_bench_topk(const std::string& sizes_csv, std::size_t k, std::size_t repeats,
                   std::uint64_t seed) {
  std::vector<BenchSize> sizes;
  std::stringstream ss(sizes_csv);
  for (std::string token; std::getline(ss, token, ',');)
    if (!token.empty()) sizes.push_back(parse_size(token));
  if (sizes.empty()) throw pkm::ConfigError("bench: no sizes given");

  pkm::Rng rng(seed);
  std::cout << "n1,n2,K,k,two_stage_ops,naive_ops,two_stage_ns_per_query,naive_ns_per_query\n";
  for (const BenchSize& size : sizes) {
    if (k > size.n1 || k > size.n2) throw pkm::ConfigError("bench: k exceeds a half-key count");
    const std::size_t half_dim = 16;
    pkm::DenseMatrix k1(size.n1, half_dim), k2(size.n2, half_dim);
    for (double& v : k1.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : k2.data) v = rng.uniform(-1.0, 1.0);
    std::vector<std::vector<double>> queries(repeats, std::vector<double>(2 * half_dim));
    for (auto& q : queries)
      for (double& v : q) v = rng.uniform(-1.0, 1.0);

    pkm::metrics::OpCounters counters;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& q : queries) {
      const std::span<const double> q1(q.data(), half_dim), q2(q.data() + half_dim, half_dim);
      const auto t1 = pkm::memory::half_topk(q1, k1, k, pkm::memory::Distance::Dot, 1.0, &counters);
      const auto t2 = pkm::memory::half_topk(q2, k2, k, pkm::memory::Distance::Dot, 1.0, &counters);
      const auto combined = pkm::memory::combine_topk(t1, t2, k, size.n2, &counters);
      (void)combined;
    }
    const auto t1 = std::chrono::steady_clock::now();
    for (const auto& q : queries) {
      const std::span<const double> q1(q.data(), half_dim), q2(q.data() + half_dim, half_dim);
      const auto top = pkm::oracle::naive_topk(q1, q2, k1, k2, k, pkm::memory::Distance::Dot, 1.0);
      (void)top;
    }
    const auto t2 = std::chrono::steady_clock::now();

    const double two_stage_ns =
        std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(repeats);
    const double naive_ns =
        std::chrono::duration<double, std::nano>(t2 - t1).count() / static_cast<double>(repeats);
    const std::uint64_t two_stage_ops = counters.key_score_evals / repeats;
    const std::uint64_t naive_ops = size.n1 * size.n2;
    std::cout << size.n1 << "," << size.n2 << "," << size.n1 * size.n2 << "," << k << ","
              << two_stage_ops << "," << naive_ops << "," << two_stage_ns << "," << naive_ns
              << "\n";
  }
  return 0;
}

json dump_matrix(const pkm::DenseMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (double v : m.row(r)) row.push_back(v);
    rows.push_back(row);
  }
  return rows;
}

int cmd_oracle_check(std::size_t trials, std::uint64_t seed, const std::string& repro_path) {
  pkm::Rng rng(seed);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n1 = 4 + rng.below(61);
    const std::size_t n2 = 4 + rng.below(61);
    const std::size_t k = 1 + rng.below(std::min({n1, n2, std::size_t{16}}));
    const std::size_t half_dim = 2 + rng.below(7);
    const bool cosine = rng.below(2) == 1;
    const double alpha = cosine ? rng.uniform(0.0, 1.0) : 1.0;
    const auto dist = cosine ? pkm::memory::Distance::Cosine : pkm::memory::Distance::Dot;

    pkm::DenseMatrix k1(n1, half_dim), k2(n2, half_dim);
    for (double& v : k1.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : k2.data) v = rng.uniform(-1.0, 1.0);
    std::vector<double> q(2 * half_dim);
    for (double& v : q) v = rng.uniform(-1.0, 1.0);
    const std::span<const double> q1(q.data(), half_dim), q2(q.data() + half_dim, half_dim);

    const auto t1 = pkm::memory::half_topk(q1, k1, k, dist, alpha);
    const auto t2 = pkm::memory::half_topk(q2, k2, k, dist, alpha);
    const auto got = pkm::memory::combine_topk(t1, t2, k, n2);
    const auto want = pkm::oracle::naive_topk(q1, q2, k1, k2, k, dist, alpha);

    bool match = got.size() == want.size();
    for (std::size_t j = 0; match && j < got.size(); ++j)
      match = got[j].index == want[j].index && got[j].score == want[j].score;
    if (match) continue;

    json repro;
    repro["trial"] = trial;
    repro["config"] = {{"n1", n1},       {"n2", n2},
                       {"k", k},         {"half_dim", half_dim},
                       {"distance", cosine ? "cosine" : "dot"},
                       {"alpha", alpha}};
    repro["query"] = q;
    repro["k1"] = dump_matrix(k1);
    repro["k2"] = dump_matrix(k2);
    json got_j = json::array(), want_j = json::array();
    for (const auto& s : got) got_j.push_back({{"index", s.index}, {"score", s.score}});
    for (const auto& s : want) want_j.push_back({{"index", s.index}, {"score", s.score}});
    repro["two_stage"] = got_j;
    repro["naive"] = want_j;
    std::ofstream out(repro_path);
    out << repro.dump(2) << "\n";
    std::cerr << "oracle divergence at trial " << trial << "; reproduction written to "
              << repro_path << "\n";
    return 1;
  }
  std::cout << trials << " trials, no divergence\n";
  return 0;
}

int cmd_export(const std::string& run_dir, const std::string& format) {
  const std::filesystem::path dir(run_dir);
  const std::filesystem::path metrics = dir / "metrics.jsonl";
  std::ifstream in(metrics);
  if (!in) throw pkm::ConfigError("export: cannot open " + metrics.string());

  std::vector<json> records;
  std::size_t skipped = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      json rec = json::parse(line);
      if (rec.value("type", "") == "epoch") records.push_back(std::move(rec));
    } catch (const json::exception&) {
      ++skipped;
    }
  }
  if (skipped > 0)
    std::cerr << "export: skipped " << skipped << " corrupted metrics line(s)\n";

  const std::vector<std::string> scalar_keys = {"epoch", "step",      "loss",     "top1",
                                                "top5",  "util_flat", "kl",       "score_ops",
                                                "replaced_keys"};
  if (format == "csv") {
    std::ofstream out(dir / "metrics.csv");
    if (!out) throw pkm::IoError("export: cannot write metrics.csv");
    out << "split";
    for (const auto& key : scalar_keys) out << "," << key;
    out << "\n";
    for (const json& rec : records) {
      out << rec.value("split", "train");
      for (const auto& key : scalar_keys) {
        out << ",";
        if (rec.contains(key)) out << rec[key].dump();
      }
      out << "\n";
    }
    std::cout << "wrote " << (dir / "metrics.csv").string() << " (" << records.size()
              << " rows)\n";
  } else if (format == "plotdata") {
    for (const auto& key : scalar_keys) {
      if (key == "epoch") continue;
      std::ofstream out(dir / (key + ".xy"));
      for (const json& rec : records)
        if (rec.contains(key))
          out << rec["epoch"].get<std::size_t>() << " " << rec[key].dump() << "\n";
    }
    std::cout << "wrote per-metric .xy series into " << dir.string() << "\n";
  } else {
    throw pkm::ConfigError("export: format must be csv or plotdata");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"product-key memory experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed_override;
  auto* train = app.add_subcommand("train", "run an experiment from a config file");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  std::uint64_t seed_value = 0;
  auto* seed_opt = train->add_option("--seed", seed_value, "override the config seed");
  train->add_option("--out", out_dir, "output directory")->required();

  std::string sizes = "1024,4096,16384";
  std::size_t bench_k = 10, repeats = 100;
  std::uint64_t bench_seed = 1;
  auto* bench = app.add_subcommand("bench-topk", "count and time two-stage vs naive selection");
  bench->add_option("--sizes", sizes, "comma list of |K| (perfect squares) or n1xn2 pairs");
  bench->add_option("--k", bench_k, "top-k parameter");
  bench->add_option("--repeats", repeats, "queries per size");
  bench->add_option("--seed", bench_seed, "rng seed");

  std::size_t trials = 500;
  std::uint64_t oracle_seed = 42;
  std::string repro_path = "oracle_repro.json";
  auto* oracle = app.add_subcommand("oracle-check", "two-stage vs brute-force selection sweep");
  oracle->add_option("--trials", trials, "number of random configurations");
  oracle->add_option("--seed", oracle_seed, "rng seed");
  oracle->add_option("--repro", repro_path, "where to write a divergence reproduction");

  std::string run_dir, format = "csv";
  auto* exp = app.add_subcommand("export", "convert a run's metrics.jsonl");
  exp->add_option("--run", run_dir, "run directory containing metrics.jsonl")->required();
  exp->add_option("--format", format, "csv or plotdata");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(config_path, seed_opt->count() ? std::optional(seed_value) : std::nullopt,
                       out_dir);
    if (bench->parsed()) return cmd_bench_topk(sizes, bench_k, repeats, bench_seed);
    if (oracle->parsed()) return cmd_oracle_check(trials, oracle_seed, repro_path);
    if (exp->parsed()) return cmd_export(run_dir, format);
  } catch (const pkm::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  return 0;
}
