#pragma once

// Self-contained consistency suites: each one checks an algebraic identity
// of the weighting machinery against an independent brute-force computation,
// or a sampling law against its exact distribution. The CLI exposes them as
// `verify`; the test suites reuse them directly.

#include <map>

#include "wz/dag.hpp"
#include "wz/pipeline.hpp"
#include "wz/stats.hpp"

namespace wz {

struct SuiteResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int draws = 100000;            // sample size for empirical sampling checks
  std::uint64_t paths_max = 200; // graph catalog cutoff
  std::vector<std::string> suites;  // empty = run all
  bool inject_lambda_fault = false; // corrupt one weight update on purpose
};

namespace detail {

inline ChannelModel verify_random_channel(int n, Rng& rng) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (auto& row : m) {
    double sum = 0.0;
    for (auto& v : row) {
      v = rng.uniform() + 0.05;
      sum += v;
    }
    for (auto& v : row) v /= sum;
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < row.size(); ++j) acc += row[j];
    row.back() = 1.0 - acc;
  }
  return ChannelModel(std::move(m));
}

inline WeightState verify_random_state(const ChannelModel& channel, double eta, Rng& rng,
                                       int max_count = 20) {
  std::vector<long long> counts(channel.size());
  for (auto& c : counts) c = static_cast<long long>(rng.uniform() * (max_count + 1));
  return WeightState::from_counts(channel, eta, counts);
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

}  // namespace detail

// Factored encoder weights against direct sums over every admissible decoder.
inline SuiteResult verify_factored_weights(const VerifyOptions& opt) {
  SuiteResult result{"factored-weights", true, ""};
  Rng rng(opt.seed);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform() * 2);
    const auto channel = detail::verify_random_channel(n, rng);
    const double eta = 0.05 + rng.uniform();
    auto state = detail::verify_random_state(channel, eta, rng);
    if (opt.inject_lambda_fault && trial == 41)
      state.perturb_log_lambda(0, 0, eta);  // simulates one doubled update
    for (const auto& enc : all_partitions(n, 2)) {
      const double fast = encoder_weight_F(enc, state).log_value;
      std::vector<double> logs;
      // brute force recomputes per-pair weights from the counts alone, so a
      // corrupted incremental state cannot hide
      const auto fresh = WeightState::from_counts(
          channel, eta, std::vector<long long>(state.counts().begin(), state.counts().end()));
      for (const auto& dec : all_decoders(enc))
        logs.push_back(expert_log_weight(enc, dec, fresh).log_value);
      const double brute = log_sum_exp(std::span<const double>(logs));
      worst = std::max(worst, std::abs(fast - brute) / std::max(1.0, std::abs(brute)));
    }
  }
  result.pass = worst <= 1e-9;
  result.detail = "max relative log error " + detail::format_double(worst);
  return result;
}

// Two-step sampling (encoder, then decoder cells) against the joint
// exponential-weights law: the exact identity on several random instances,
// plus a goodness-of-fit run on the last one.
inline SuiteResult verify_sampling_law(const VerifyOptions& opt) {
  SuiteResult result{"sampling-law", true, ""};
  Rng rng(opt.seed + 1);
  const int n = 4;
  const auto encoders = all_partitions(n, 2);

  double max_abs = 0.0;
  std::vector<double> direct_logs;
  std::vector<double> log_f(encoders.size());
  ChannelModel channel = ChannelModel::uniform(n);
  WeightState state(channel, 0.0);
  for (int instance = 0; instance < 5; ++instance) {
    channel = detail::verify_random_channel(n, rng);
    state = detail::verify_random_state(channel, 0.1 + 0.2 * instance, rng, 12);

    for (std::size_t i = 0; i < encoders.size(); ++i)
      log_f[i] = encoder_weight_F(encoders[i], state).log_value;
    const double log_total = log_sum_exp(std::span<const double>(log_f));

    direct_logs.clear();
    std::vector<double> twostep_logs;
    for (std::size_t i = 0; i < encoders.size(); ++i) {
      const auto cells = encoders[i].cells();
      for (const auto& dec : all_decoders(encoders[i])) {
        direct_logs.push_back(expert_log_weight(encoders[i], dec, state).log_value);
        double cond = 0.0;
        for (int z = 0; z < encoders[i].num_cells; ++z)
          for (Symbol y = 0; y < n; ++y) {
            std::vector<double> members;
            for (Symbol x : cells[z]) members.push_back(state.log_lambda(x, y));
            cond += state.log_lambda(dec.at(z, y), y) -
                    log_sum_exp(std::span<const double>(members));
          }
        twostep_logs.push_back(log_f[i] - log_total + cond);
      }
    }
    const double direct_total = log_sum_exp(std::span<const double>(direct_logs));
    for (std::size_t j = 0; j < direct_logs.size(); ++j) {
      direct_logs[j] -= direct_total;  // normalized for the empirical pass below
      max_abs = std::max(max_abs,
                         std::abs(std::exp(direct_logs[j]) - std::exp(twostep_logs[j])));
    }
  }

  // empirical pass on the last instance, with one independent re-sample on a
  // sub-threshold p (a correct law occasionally draws a tail sample; a wrong
  // one fails every re-sample)
  std::vector<double> probs;
  for (double lw : direct_logs) probs.push_back(std::exp(lw));
  std::vector<std::size_t> offsets(encoders.size() + 1, 0);
  for (std::size_t i = 0; i < encoders.size(); ++i)
    offsets[i + 1] = offsets[i] + count_decoders(encoders[i]);
  std::vector<LogWeight> weights(encoders.size());
  for (std::size_t i = 0; i < encoders.size(); ++i) weights[i] = LogWeight{log_f[i]};
  double p_value = 0.0;
  for (int attempt = 0; attempt < 2 && p_value <= 0.01; ++attempt) {
    std::vector<long long> observed(direct_logs.size(), 0);
    for (int d = 0; d < opt.draws; ++d) {
      const int ei = sample_encoder_direct(weights, rng);
      const auto table = sample_decoder(encoders[ei], state, rng);
      const auto cells = encoders[ei].cells();
      std::size_t decoder_index = 0;
      for (int z = 0; z < encoders[ei].num_cells; ++z)
        for (Symbol y = 0; y < n; ++y) {
          const auto& members = cells[z];
          std::size_t rank = 0;
          while (members[rank] != table.at(z, y)) ++rank;
          decoder_index = decoder_index * members.size() + rank;
        }
      ++observed[offsets[ei] + decoder_index];
    }
    p_value = chi_square_gof(probs, observed).p_value;
  }
  result.pass = max_abs <= 1e-12 && p_value > 0.01;
  result.detail = "max probability error " + detail::format_double(max_abs) +
                  ", goodness-of-fit p " + detail::format_double(p_value) +
                  " (one re-sample allowed)";
  return result;
}

// Path products against the factored encoder weights, on both the interval
// graph and the combined-cost graph.
inline SuiteResult verify_path_products(const VerifyOptions& opt) {
  SuiteResult result{"path-products", true, ""};
  Rng rng(opt.seed + 2);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto channel = detail::verify_random_channel(5, rng);
    const double eta = 0.05 + rng.uniform();
    const auto state = detail::verify_random_state(channel, eta, rng, 15);

    const auto ig = build_interval_graph(5, 3);
    std::vector<double> wi(ig.edges.size());
    refresh_interval_weights(ig, state, wi);
    for (const auto& path : ig.enumerate_paths()) {
      const auto enc = encoder_from_cuts(5, ig.cuts_of_path(path));
      const double expect = encoder_weight_F(enc, state).log_value;
      worst = std::max(worst, std::abs(path_log_weight(path, wi) - expect) /
                                  std::max(1.0, std::abs(expect)));
    }

    const double delta = rng.uniform();
    const auto lg = build_lc_graph(5, 3, 4);
    std::vector<double> wl(lg.edges.size());
    refresh_lc_weights(lg, state, delta, wl);
    for (const auto& path : lg.enumerate_paths()) {
      const auto enc = encoder_from_cuts(5, lg.cuts_of_path(path));
      const double expect =
          encoder_weight_F_LC(enc, lg.lengths_of_path(path), state, delta).log_value;
      worst = std::max(worst, std::abs(path_log_weight(path, wl) - expect) /
                                  std::max(1.0, std::abs(expect)));
    }
  }
  result.pass = worst <= 1e-9;
  result.detail = "max relative log error " + detail::format_double(worst);
  return result;
}

// Backward weight pushing and sequential sampling on every catalog graph
// with at most paths_max paths.
inline SuiteResult verify_wpa(const VerifyOptions& opt) {
  SuiteResult result{"wpa", true, ""};
  Rng rng(opt.seed + 3);
  double worst_root = 0.0;
  double min_p = 1.0;

  std::vector<LayeredDag> catalog;
  for (int nx = 2; nx <= 8; ++nx)
    for (int M = 2; M <= nx; ++M) {
      auto g = build_interval_graph(nx, M);
      if (g.count_paths() > 0 && g.count_paths() <= opt.paths_max)
        catalog.push_back(std::move(g));
    }
  for (int M = 2; M <= 5; ++M)
    for (int lambda = 2; lambda <= 16 && detail::log2_exact(lambda) <= M; lambda *= 2) {
      auto g = build_huffman_graph(M, lambda);
      if (g.count_paths() > 0 && g.count_paths() <= opt.paths_max)
        catalog.push_back(std::move(g));
    }
  for (const auto& [nx, M, lambda] :
       std::vector<std::tuple<int, int, int>>{{4, 2, 2}, {5, 3, 4}, {6, 3, 4}, {4, 3, 4}}) {
    auto g = build_lc_graph(nx, M, lambda);
    if (g.count_paths() > 0 && g.count_paths() <= opt.paths_max)
      catalog.push_back(std::move(g));
  }

  for (const auto& g : catalog) {
    std::vector<double> w(g.edges.size());
    for (auto& v : w) v = 4.0 * rng.uniform() - 2.0;
    const auto values = wpa_backward(g, w);
    std::vector<double> logs;
    const auto paths = g.enumerate_paths();
    for (const auto& p : paths) logs.push_back(path_log_weight(p, w));
    const double enumerated = log_sum_exp(std::span<const double>(logs));
    worst_root = std::max(worst_root, std::abs(values.log_g[g.source] - enumerated) /
                                          std::max(1.0, std::abs(enumerated)));

    // transition laws stay normalized at every vertex
    for (std::size_t v = 0; v < g.vertices.size(); ++v) {
      if (static_cast<int>(v) == g.sink) continue;
      std::vector<double> steps;
      for (int e : g.out_edges[v]) steps.push_back(w[e] + values.log_g[g.edges[e].to]);
      const double total = log_sum_exp(std::span<const double>(steps));
      worst_root = std::max(worst_root, std::abs(total - values.log_g[v]));
    }

    std::vector<double> probs(paths.size());
    std::map<std::vector<int>, std::size_t> order;
    for (std::size_t p = 0; p < paths.size(); ++p) {
      probs[p] = std::exp(logs[p] - values.log_g[g.source]);
      order[paths[p]] = p;
    }
    // One independent re-sample on a sub-threshold p: dozens of graphs at a
    // 0.01 level make a single false rejection likely, while a genuinely
    // wrong sampler fails any re-sample outright.
    double p_value = 0.0;
    for (int attempt = 0; attempt < 2 && p_value <= 0.01; ++attempt) {
      std::vector<long long> observed(paths.size(), 0);
      for (int d = 0; d < opt.draws; ++d) ++observed[order.at(sample_path(g, values, w, rng))];
      p_value = chi_square_gof(probs, observed).p_value;
    }
    min_p = std::min(min_p, p_value);
  }
  result.pass = worst_root <= 1e-9 && min_p > 0.01;
  result.detail = std::to_string(catalog.size()) + " graphs, max root error " +
                  detail::format_double(worst_root) + ", min goodness-of-fit p " +
                  detail::format_double(min_p) + " (one re-sample allowed per graph)";
  return result;
}

// Generalized per-choice weights: table products against the exponential of
// the exact cumulative cost, for arbitrary bounded zero-diagonal distortion
// tables as well as the one-or-nothing case. The latter also checks the
// matched-mass reduction.
inline SuiteResult verify_general_distortion(const VerifyOptions& opt) {
  SuiteResult result{"general-distortion", true, ""};
  Rng rng(opt.seed + 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform() * 2);
    const auto channel = detail::verify_random_channel(n, rng);
    const double eta = 0.05 + rng.uniform();
    const auto state = detail::verify_random_state(channel, eta, rng);
    const bool hamming_case = trial % 2 == 0;
    DistortionMeasure rho = DistortionMeasure::hamming(n);
    if (!hamming_case) {
      // random bounded table, zero on the diagonal, deliberately asymmetric
      std::vector<std::vector<double>> table(n, std::vector<double>(n, 0.0));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) table[i][j] = rng.uniform();
      rho = DistortionMeasure(std::move(table), 1.0);
    }
    for (const auto& enc : all_partitions(n, 2)) {
      for (const auto& dec : all_decoders(enc)) {
        double log_product = 0.0;
        for (int z = 0; z < enc.num_cells; ++z)
          for (Symbol y = 0; y < n; ++y)
            log_product += generalized_lambda(dec.at(z, y), y, enc, state, rho).log_value;
        const double cost =
            cumulative_distortion_from_counts(enc, dec, state.counts(), channel, rho);
        const double expect = -eta * cost;
        worst = std::max(worst, std::abs(log_product - expect) / std::max(1.0, std::abs(expect)));
        if (hamming_case) {
          // matched-mass reduction
          const double mass = eta * static_cast<double>(state.time());
          worst = std::max(worst, std::abs(log_product + mass -
                                           expert_log_weight(enc, dec, state).log_value) /
                                      std::max(1.0, mass));
        }
      }
    }
  }
  result.pass = worst <= 1e-9;
  result.detail = "max relative error " + detail::format_double(worst) +
                  " over one-or-nothing and random bounded tables";
  return result;
}

inline std::vector<SuiteResult> run_verify_suites(const VerifyOptions& opt) {
  const auto wanted = [&](const std::string& name) {
    if (opt.suites.empty()) return true;
    return std::find(opt.suites.begin(), opt.suites.end(), name) != opt.suites.end();
  };
  std::vector<SuiteResult> results;
  if (wanted("factored-weights")) results.push_back(verify_factored_weights(opt));
  if (wanted("sampling-law")) results.push_back(verify_sampling_law(opt));
  if (wanted("path-products")) results.push_back(verify_path_products(opt));
  if (wanted("wpa")) results.push_back(verify_wpa(opt));
  if (wanted("general-distortion")) results.push_back(verify_general_distortion(opt));
  if (results.empty()) throw std::invalid_argument("no such verification suite");
  return results;
}

}  // namespace wz
