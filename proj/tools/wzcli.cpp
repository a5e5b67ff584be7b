// Command-line front end: simulation campaigns over seeds, graph
// enumeration/inspection, the consistency-suite runner, and scaling
// benchmarks. Emits a metrics CSV and optional per-run manifests.

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "wz/pipeline.hpp"
#include "wz/sources.hpp"
#include "wz/verify.hpp"

using namespace wz;

namespace {

Variant parse_variant(const std::string& name) {
  if (name == "fixed-small") return Variant::fixed_small;
  if (name == "fixed-structured") return Variant::fixed_structured;
  if (name == "variable-small") return Variant::variable_small;
  if (name == "lossless-huffman") return Variant::lossless_huffman;
  if (name == "variable-lc-graph") return Variant::variable_lc_graph;
  if (name == "quantizer") return Variant::quantizer;
  throw CLI::ValidationError("--variant", "unknown variant: " + name);
}

ChannelModel parse_channel(const std::string& spec, int alphabet) {
  if (spec == "identity") return ChannelModel::identity(alphabet);
  if (spec == "uniform") return ChannelModel::uniform(alphabet);
  if (spec == "none") return ChannelModel::no_side_info(alphabet);
  if (spec.rfind("bsc:", 0) == 0) {
    const double eps = std::stod(spec.substr(4));
    return alphabet == 2 ? ChannelModel::bsc(eps) : ChannelModel::symmetric(alphabet, eps);
  }
  if (spec.rfind("sym:", 0) == 0)
    return ChannelModel::symmetric(alphabet, std::stod(spec.substr(4)));
  if (spec.rfind("file:", 0) == 0) {
    std::ifstream in(spec.substr(5));
    if (!in) throw CLI::ValidationError("--channel", "cannot open " + spec.substr(5));
    auto channel = ChannelModel::load(in);
    if (channel.size() != alphabet)
      throw CLI::ValidationError("--channel", "matrix size does not match --alphabet");
    return channel;
  }
  throw CLI::ValidationError("--channel", "unknown channel spec: " + spec);
}

DistortionMeasure parse_rho(const std::string& spec, int alphabet) {
  if (spec == "hamming") return DistortionMeasure::hamming(alphabet);
  if (spec == "squared") return DistortionMeasure::squared_on_grid(alphabet);
  if (spec.rfind("file:", 0) == 0) {
    std::ifstream in(spec.substr(5));
    if (!in) throw CLI::ValidationError("--rho", "cannot open " + spec.substr(5));
    return DistortionMeasure::load(in);
  }
  throw CLI::ValidationError("--rho", "unknown distortion spec: " + spec);
}

std::string format_g(double v, int precision = 17) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

struct SimulateArgs {
  std::string variant = "fixed-structured";
  int alphabet = 4;
  int M = 2;
  int lambda = 0;
  double delta = 0.0;
  long long n = 10000;
  std::string channel = "identity";
  std::string rho;
  std::string source = "uniform";
  int seeds = 1;
  std::uint64_t seed_base = 1;
  bool oracle = false;
  std::string out = "metrics.csv";
  std::string manifest_dir;
  int block_length = 0;
  double eta = 0.0;
  int jobs = 1;
};

SessionConfig build_config(const SimulateArgs& a) {
  const Variant variant = parse_variant(a.variant);
  const bool quantizer = variant == Variant::quantizer;
  const std::string channel_spec =
      quantizer && a.channel == "identity" ? std::string("none") : a.channel;
  const std::string rho_spec =
      a.rho.empty() ? (quantizer ? std::string("squared") : std::string("hamming")) : a.rho;

  SessionConfig cfg(variant, a.n, parse_channel(channel_spec, a.alphabet),
                    parse_rho(rho_spec, a.alphabet));
  cfg.delta = a.delta;
  cfg.num_cells = a.M;
  cfg.lambda = a.lambda;
  if (a.block_length > 0) cfg.block_length = a.block_length;
  if (a.eta > 0.0) cfg.eta = a.eta;
  cfg.compute_oracle = a.oracle;

  switch (variant) {
    case Variant::fixed_small: {
      // the explicit family: every canonical partition into M cells; count
      // first, since the partition numbers explode with the alphabet
      std::vector<double> stirling(a.M + 1, 0.0);
      stirling[0] = 1.0;
      for (int i = 1; i <= a.alphabet; ++i) {
        for (int j = std::min(i, a.M); j >= 1; --j)
          stirling[j] = stirling[j] * j + stirling[j - 1];
        stirling[0] = 0.0;
      }
      if (stirling[a.M] > 100000.0)
        throw CLI::ValidationError(
            "--variant", "fixed-small family too large; use fixed-structured instead");
      cfg.encoders = all_partitions(a.alphabet, a.M);
      break;
    }
    case Variant::variable_small: {
      // interval partitions crossed with every complete length set
      const int max_len = a.lambda >= 2 ? detail::log2_exact(a.lambda) : a.M - 1;
      for (const auto& enc : all_interval_encoders(a.alphabet, a.M))
        for (const auto& lengths : all_length_sets(a.M, max_len))
          cfg.vr_encoders.emplace_back(enc, lengths);
      if (cfg.vr_encoders.empty())
        throw CLI::ValidationError("--M", "no complete length sets for this M");
      break;
    }
    case Variant::lossless_huffman: {
      cfg.num_cells = a.M > 0 ? a.M : a.alphabet;
      if (cfg.num_cells != a.alphabet)
        throw CLI::ValidationError("--M", "lossless coding requires M equal to the alphabet");
      if (cfg.lambda < 2) {
        // default resolution: the useful maximum 2^(M-1), capped by the
        // horizon and by a practical graph-size limit
        const int by_horizon = a.n >= 2 ? static_cast<int>(std::floor(std::log2(
                                              static_cast<double>(a.n))))
                                        : 1;
        cfg.lambda = 1 << std::max(1, std::min({cfg.num_cells - 1, by_horizon, 8}));
      }
      break;
    }
    case Variant::variable_lc_graph:
    case Variant::quantizer:
      if (cfg.lambda < 2) cfg.lambda = 1 << std::min(a.M - 1, 8);
      break;
    case Variant::fixed_structured:
      break;
  }
  return cfg;
}

int cmd_simulate(const SimulateArgs& a) {
  const auto source_spec = SourceSpec::parse(a.source);
  const SessionConfig base = build_config(a);

  struct Row {
    std::uint64_t seed = 0;
    RunMetrics metrics;
  };
  std::vector<Row> rows(a.seeds);

  const auto run_one = [&](int i) {
    const std::uint64_t seed = a.seed_base + static_cast<std::uint64_t>(i);
    SessionConfig cfg = base;
    cfg.seed = seed;
    const auto x = generate_source(source_spec, a.alphabet, a.n, Rng(seed).stream("source"));
    auto out = run_session(x, cfg);
    if (!a.manifest_dir.empty()) {
      std::filesystem::create_directories(a.manifest_dir);
      std::ofstream mf(std::filesystem::path(a.manifest_dir) /
                       ("manifest_seed" + std::to_string(seed) + ".txt"));
      write_manifest(mf, cfg, out.metrics);
    }
    rows[i] = Row{seed, std::move(out.metrics)};
  };

  if (a.jobs <= 1) {
    for (int i = 0; i < a.seeds; ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < a.jobs; ++t)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < a.seeds; i = next.fetch_add(1)) run_one(i);
      });
    for (auto& th : pool) th.join();
  }

  std::ofstream csv(a.out);
  if (!csv) {
    std::cerr << "cannot open output file " << a.out << "\n";
    return 1;
  }
  csv << "seed,n,variant,distortion,bits,lc,oracle,regret,bound,runtime_ms\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    csv << row.seed << ',' << a.n << ',' << a.variant << ','
        << format_g(m.expected_distortion) << ',' << format_g(m.total_bits) << ','
        << format_g(m.scheme_cost) << ',';
    if (!std::isnan(m.oracle_cost))
      csv << format_g(m.oracle_cost) << ',' << format_g(m.normalized_regret);
    else
      csv << ',';
    csv << ',' << format_g(m.bound) << ',' << format_g(m.runtime_ms, 6) << "\n";
  }
  std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";
  return 0;
}

struct EnumerateArgs {
  bool intervals = false, huffman = false, lc = false;
  int alphabet = 4;
  int M = 2;
  int lambda = 4;
  std::uint64_t max_list = 200;
  bool do_export = false;
};

int cmd_enumerate(const EnumerateArgs& a) {
  LayeredDag graph;
  if (a.intervals)
    graph = build_interval_graph(a.alphabet, a.M);
  else if (a.huffman)
    graph = build_huffman_graph(a.M, a.lambda);
  else if (a.lc)
    graph = build_lc_graph(a.alphabet, a.M, a.lambda);
  else {
    std::cerr << "pick one of --intervals, --huffman, --lc\n";
    return 1;
  }
  const std::uint64_t paths = graph.count_paths();
  std::cout << "vertices " << graph.vertices.size() << " edges " << graph.edges.size()
            << " paths " << paths << "\n";
  if (paths > 0 && paths <= a.max_list) {
    for (const auto& path : graph.enumerate_paths()) {
      if (a.intervals || a.lc) {
        std::cout << "cuts";
        for (int c : graph.cuts_of_path(path)) std::cout << ' ' << c;
      }
      if (a.huffman || a.lc) {
        std::cout << (a.lc ? " | lengths" : "lengths");
        for (int l : graph.lengths_of_path(path)) std::cout << ' ' << l;
      }
      std::cout << "\n";
    }
  } else if (paths > a.max_list) {
    std::cout << "(count-only mode: above --max-list)\n";
  }
  if (a.do_export) export_dag(std::cout, graph);
  return 0;
}

struct VerifyArgs {
  std::vector<std::string> suites;
  std::uint64_t paths_max = 200;
  int draws = 100000;
  std::uint64_t seed = 1;
  std::string inject_fault;
};

int cmd_verify(const VerifyArgs& a) {
  VerifyOptions opt;
  opt.seed = a.seed;
  opt.draws = a.draws;
  opt.paths_max = a.paths_max;
  opt.suites = a.suites;
  if (!a.inject_fault.empty()) {
    if (a.inject_fault != "lambda-update") {
      std::cerr << "unknown fault: " << a.inject_fault << "\n";
      return 2;
    }
    opt.inject_lambda_fault = true;
  }
  const auto results = run_verify_suites(opt);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " - " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    for (const auto& r : results)
      if (!r.pass) std::cerr << "violated: " << r.name << "\n";
    return 1;
  }
  return 0;
}

struct BenchArgs {
  std::string variant = "fixed-structured";
  int alphabet = 8;
  int M = 3;
  int lambda = 4;
  double delta = 0.5;
  std::string n_grid = "10000:1000000";
  std::string channel = "uniform";
  std::uint64_t seed = 1;
  double max_ratio = 2.5;
};

int cmd_bench(const BenchArgs& a) {
  if (a.n_grid == "0") {
    std::cout << "nothing to benchmark\n";
    return 0;
  }
  long long lo = 0, hi = 0;
  const auto colon = a.n_grid.find(':');
  if (colon == std::string::npos) {
    lo = hi = std::stoll(a.n_grid);
  } else {
    lo = std::stoll(a.n_grid.substr(0, colon));
    hi = std::stoll(a.n_grid.substr(colon + 1));
  }
  if (lo <= 0 || hi < lo) {
    std::cerr << "bad --n-grid\n";
    return 2;
  }

  SimulateArgs sim;
  sim.variant = a.variant;
  sim.alphabet = a.alphabet;
  sim.M = a.M;
  sim.lambda = a.lambda;
  sim.delta = a.delta;
  sim.channel = a.channel;

  std::cout << "n,runtime_ms,ratio\n";
  double prev = 0.0;
  bool ok = true;
  for (long long n = lo; n <= hi; n *= 2) {
    sim.n = n;
    SessionConfig cfg = build_config(sim);
    cfg.seed = a.seed;
    const auto x = generate_source(SourceSpec{}, a.alphabet, n, Rng(a.seed).stream("source"));
    // best of two runs: single-run wall times are too noisy for a ratio test
    double ms = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 2; ++rep)
      ms = std::min(ms, run_session(x, cfg).metrics.runtime_ms);
    const double ratio = prev > 0.0 ? ms / prev : 0.0;
    std::cout << n << ',' << format_g(ms, 6) << ','
              << (prev > 0.0 ? format_g(ratio, 4) : "-") << "\n";
    if (prev > 0.0 && ratio > a.max_ratio) ok = false;
    prev = ms;
  }
  if (!ok) {
    std::cerr << "scaling exceeded the per-doubling budget of " << a.max_ratio << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online side-information source coding schemes"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run sessions across seeds, write CSV");
  simulate->add_option("--variant", sim.variant,
                       "fixed-small | fixed-structured | variable-small | lossless-huffman | "
                       "variable-lc-graph | quantizer");
  simulate->add_option("--alphabet", sim.alphabet, "source alphabet size")->required();
  simulate->add_option("--M", sim.M, "number of encoder cells / codewords");
  simulate->add_option("--lambda", sim.lambda, "probability-axis resolution (power of two)");
  simulate->add_option("--delta", sim.delta, "length multiplier in the Lagrangian cost");
  simulate->add_option("--n", sim.n, "sequence length")->required();
  simulate->add_option("--channel", sim.channel,
                       "identity | bsc:<eps> | sym:<eps> | uniform | none | file:<path>");
  simulate->add_option("--rho", sim.rho, "hamming | squared | file:<path>");
  simulate->add_option("--source", sim.source,
                       "uniform | iid:p,.. | markov:r;r | switching:len;p,..;q,.. | file:<path>");
  simulate->add_option("--seeds", sim.seeds, "number of seeds to run");
  simulate->add_option("--seed-base", sim.seed_base, "first seed value");
  simulate->add_flag("--oracle", sim.oracle, "also compute the hindsight oracle and regret");
  simulate->add_option("--out", sim.out, "metrics CSV path");
  simulate->add_option("--manifest-dir", sim.manifest_dir, "write per-run manifests here");
  simulate->add_option("--block-length", sim.block_length, "override the tuned block length");
  simulate->add_option("--eta", sim.eta, "override the tuned learning rate");
  simulate->add_option("--jobs", sim.jobs, "parallel sessions (rows stay in seed order)");

  EnumerateArgs en;
  auto* enumerate = app.add_subcommand("enumerate", "inspect an encoder graph");
  enumerate->add_flag("--intervals", en.intervals, "interval-partition graph");
  enumerate->add_flag("--huffman", en.huffman, "length-set graph");
  enumerate->add_flag("--lc", en.lc, "combined cut/length graph");
  enumerate->add_option("--alphabet", en.alphabet, "source alphabet size");
  enumerate->add_option("--M", en.M, "number of cells / codewords");
  enumerate->add_option("--lambda", en.lambda, "probability-axis resolution");
  enumerate->add_option("--max-list", en.max_list, "list paths only up to this count");
  enumerate->add_flag("--export", en.do_export, "dump vertices and edges");

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "run the consistency suites");
  verify->add_option("--suite", ver.suites,
                     "factored-weights | sampling-law | path-products | wpa | general-distortion");
  verify->add_option("--paths-max", ver.paths_max, "graph catalog cutoff");
  verify->add_option("--draws", ver.draws, "draws per empirical check");
  verify->add_option("--seed", ver.seed, "suite seed");
  verify->add_option("--inject-fault", ver.inject_fault,
                     "test hook: lambda-update corrupts one weight update");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "wall-time scaling across horizons");
  bench_cmd->add_option("--variant", bench.variant, "session variant");
  bench_cmd->add_option("--alphabet", bench.alphabet, "source alphabet size");
  bench_cmd->add_option("--M", bench.M, "number of cells");
  bench_cmd->add_option("--lambda", bench.lambda, "probability-axis resolution");
  bench_cmd->add_option("--delta", bench.delta, "length multiplier");
  bench_cmd->add_option("--n-grid", bench.n_grid, "start:end, doubling (0 = nothing)");
  bench_cmd->add_option("--channel", bench.channel, "channel spec");
  bench_cmd->add_option("--seed", bench.seed, "seed");
  bench_cmd->add_option("--max-ratio", bench.max_ratio, "per-doubling budget");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (enumerate->parsed()) return cmd_enumerate(en);
    if (verify->parsed()) return cmd_verify(ver);
    if (bench_cmd->parsed()) return cmd_bench(bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
