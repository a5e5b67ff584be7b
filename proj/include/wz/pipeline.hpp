#pragma once

// End-to-end block-protocol sessions for every scheme variant, matching
// standalone decoders, the brute-force hindsight oracle, and the regret /
// bound evaluators. An encoder session consumes the source sequence and
// produces the wire (channel symbols or a bitstream) together with the
// reconstructions the decoder will emit; the decode_* functions rebuild
// those reconstructions from the wire alone.

#include <chrono>
#include <optional>

#include "wz/dag.hpp"
#include "wz/experts.hpp"
#include "wz/huffman.hpp"
#include "wz/weighting.hpp"

namespace wz {

enum class Variant {
  fixed_small,
  fixed_structured,
  variable_small,
  lossless_huffman,
  variable_lc_graph,
  quantizer,
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::fixed_small: return "fixed-small";
    case Variant::fixed_structured: return "fixed-structured";
    case Variant::variable_small: return "variable-small";
    case Variant::lossless_huffman: return "lossless-huffman";
    case Variant::variable_lc_graph: return "variable-lc-graph";
    case Variant::quantizer: return "quantizer";
  }
  return "?";
}

struct SessionConfig {
  Variant variant;
  long long n = 0;
  ChannelModel channel;
  DistortionMeasure rho;
  std::uint64_t seed = 1;
  double delta = 0.0;

  // expert-set specification, by variant:
  std::vector<PartitionEncoder> encoders;  // fixed-small
  std::vector<std::pair<PartitionEncoder, LengthSet>> vr_encoders;  // variable-small
  int num_cells = 0;  // M for graph-backed variants (and alphabet size when lossless)
  int lambda = 0;     // probability-axis resolution for length-set graphs

  std::optional<int> block_length;  // override the tuned l
  std::optional<double> eta;        // override the tuned eta
  bool compute_oracle = false;

  SessionConfig(Variant v, long long horizon, ChannelModel ch, DistortionMeasure r)
      : variant(v), n(horizon), channel(std::move(ch)), rho(std::move(r)) {}
};

struct RunMetrics {
  SchemeParams params;
  double log2_num_experts = 0.0;
  double expected_distortion = 0.0;  // charged, expectation form
  double realized_distortion = 0.0;  // from the sampled side information
  double total_bits = 0.0;           // encoded bits including headers (variable rate)
  long long channel_symbols = 0;     // channel uses including headers (fixed rate)
  double scheme_cost = 0.0;          // distortion or Lagrangian cost, charged form
  long long header_symbols = 0;
  long long header_bits = 0;
  std::vector<std::string> block_experts;
  std::vector<double> block_costs;
  double oracle_cost = std::numeric_limits<double>::quiet_NaN();
  double normalized_regret = std::numeric_limits<double>::quiet_NaN();
  double bound = std::numeric_limits<double>::quiet_NaN();
  double runtime_ms = 0.0;
};

struct SessionOutput {
  RunMetrics metrics;
  std::vector<Symbol> reconstructions;
  std::vector<Symbol> side_info;   // realized decoder observations
  std::vector<int> wire_symbols;   // fixed-rate channel sequence
  BitStream wire_bits;             // variable-rate channel sequence
};

// --------------------------------------------------------------------------
// Regret bounds.

inline double fixed_rate_regret_bound(double B, double R, double log2_num_experts, double n) {
  return 3.0 * B * std::pow(log2_num_experts, 2.0 / 3.0) /
         (std::cbrt(2.0 * R) * std::cbrt(n));
}

inline double variable_rate_regret_bound(double B, double max_symbol_cost, double log2_num_experts,
                             double n) {
  return std::cbrt(B) * std::pow(2.0 * max_symbol_cost * log2_num_experts, 2.0 / 3.0) /
         std::cbrt(n);
}

inline double lossless_regret_bound(double M, double log2_num_codes, double n, double l) {
  return M * std::sqrt(log2_num_codes / 2.0) * std::sqrt(l / n);
}

// The worked compression example: horizon 1e10, 256-symbol alphabet, block
// length log2(n), code set bounded by (log2 n)^M. Base-2 logarithms
// throughout; see README for the convention note.
inline double compression_example_value() {
  const double n = 1e10;
  const double M = 256.0;
  const double l = std::log2(n);
  const double log2_codes = M * std::log2(std::log2(n));
  return lossless_regret_bound(M, log2_codes, n, l);
}

inline double normalized_regret(double scheme_cost, double oracle_cost, long long n) {
  return (scheme_cost - oracle_cost) / static_cast<double>(n);
}

// --------------------------------------------------------------------------
// Header arithmetic. The expert index is an exact integer under a canonical
// enumeration agreed at configuration time; fixed-rate headers spell it in
// base-M channel symbols, variable-rate headers in bits.

inline int header_symbols_needed(BigIndex num_experts, int M) {
  int h = 0;
  BigIndex reach = 1;
  while (reach < num_experts) {
    reach = checked_mul(reach, static_cast<BigIndex>(M));
    ++h;
  }
  return h;
}

inline int header_bits_needed(BigIndex num_experts) {
  int b = 0;
  BigIndex reach = 1;
  while (reach < num_experts) {
    reach = checked_mul(reach, static_cast<BigIndex>(2));
    ++b;
  }
  return b;
}

inline double log2_big(BigIndex v) {
  return static_cast<double>(std::log2(static_cast<long double>(v)));
}

namespace detail {

inline void append_big(BitStream& stream, BigIndex value, int bits) {
  for (int i = bits - 1; i >= 0; --i)
    stream.append_bit(static_cast<int>((value >> i) & 1));
}

inline BigIndex read_big(BitReader& reader, int bits) {
  BigIndex v = 0;
  for (int i = 0; i < bits; ++i) v = (v << 1) | static_cast<BigIndex>(reader.read_bit());
  return v;
}

// Tuned parameters with per-config overrides. Overriding the block length
// re-tunes the learning rate from the overridden value; both sides of a
// session derive parameters through these helpers so they cannot drift.
inline SchemeParams tuned_fixed_rate(double log2_experts, const SessionConfig& cfg, double R,
                                     double B) {
  const long long n = std::max(cfg.n, 1LL);
  SchemeParams p = fixed_rate_params(log2_experts, n, R, B);
  if (cfg.block_length) {
    p.block_length = std::max(1, static_cast<int>(std::min<long long>(*cfg.block_length, n)));
    p.block_length_raw = p.block_length;
    p.num_blocks = (n + p.block_length - 1) / p.block_length;
    p.eta = log2_experts > 0.0
                ? std::sqrt(8.0 * log2_experts /
                            (p.block_length * B * B * static_cast<double>(n)))
                : 0.0;
  }
  if (cfg.eta) p.eta = *cfg.eta;
  return p;
}

inline SchemeParams tuned_variable_rate(double log2_experts, const SessionConfig& cfg, double B,
                                        int M) {
  const long long n = std::max(cfg.n, 1LL);
  SchemeParams p = variable_rate_params(log2_experts, n, B, cfg.delta, M);
  if (cfg.block_length) {
    p.block_length = std::max(1, static_cast<int>(std::min<long long>(*cfg.block_length, n)));
    p.block_length_raw = p.block_length;
    p.num_blocks = (n + p.block_length - 1) / p.block_length;
    const double bt = p.max_symbol_cost;
    p.eta = log2_experts > 0.0
                ? std::sqrt(8.0 * log2_experts /
                            (p.block_length * bt * bt * static_cast<double>(n)))
                : 0.0;
  }
  if (cfg.eta) p.eta = *cfg.eta;
  return p;
}

// Mixed-radix decoder index in the all_decoders order: row-major (cell, side
// symbol) digits, each digit the rank of the reconstruction in its cell.
inline BigIndex decoder_index_of(const PartitionEncoder& enc, const DecoderTable& dec) {
  const auto cells = enc.cells();
  BigIndex index = 0;
  for (int z = 0; z < enc.num_cells; ++z)
    for (Symbol y = 0; y < dec.num_outputs; ++y) {
      const auto& members = cells[z];
      std::size_t rank = 0;
      while (members[rank] != dec.at(z, y)) ++rank;
      index = checked_add(checked_mul(index, static_cast<BigIndex>(members.size())),
                          static_cast<BigIndex>(rank));
    }
  return index;
}

inline DecoderTable decoder_from_index(const PartitionEncoder& enc, int num_outputs,
                                       BigIndex index) {
  const auto cells = enc.cells();
  DecoderTable dec(enc.num_cells, num_outputs);
  for (int z = enc.num_cells - 1; z >= 0; --z)
    for (Symbol y = num_outputs - 1; y >= 0; --y) {
      const auto& members = cells[z];
      dec.at(z, y) = members[static_cast<std::size_t>(index % members.size())];
      index /= members.size();
    }
  return dec;
}

inline void emit_base_m(std::vector<int>& wire, BigIndex index, int M, int digits) {
  std::vector<int> tmp(digits, 0);
  for (int i = digits - 1; i >= 0; --i) {
    tmp[i] = static_cast<int>(index % static_cast<BigIndex>(M));
    index /= static_cast<BigIndex>(M);
  }
  wire.insert(wire.end(), tmp.begin(), tmp.end());
}

inline BigIndex parse_base_m(std::span<const int> digits, int M) {
  BigIndex index = 0;
  for (int d : digits)
    index = checked_add(checked_mul(index, static_cast<BigIndex>(M)),
                        static_cast<BigIndex>(d));
  return index;
}

inline std::vector<double> per_symbol_expected_distortion(const PartitionEncoder& enc,
                                                          const DecoderTable& dec,
                                                          const ChannelModel& channel,
                                                          const DistortionMeasure& rho) {
  std::vector<double> out(enc.alphabet_size());
  for (Symbol x = 0; x < enc.alphabet_size(); ++x)
    out[x] = expected_symbol_distortion(
        x, [&](Symbol y) { return dec.at(enc(x), y); }, channel, rho);
  return out;
}

inline std::vector<Symbol> draw_side_info(std::span<const Symbol> x, const ChannelModel& channel,
                                          Rng& stream) {
  std::vector<Symbol> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sample_side_info(x[i], channel, stream);
  return y;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

}  // namespace detail

// --------------------------------------------------------------------------
// Hindsight oracle. The expert minimum decomposes: given the encoder, the
// optimal admissible decoder picks each (cell, side symbol) reconstruction
// independently; encoders are then enumerated explicitly.

struct HindsightResult {
  double cost = 0.0;
  std::string expert_text;
};

inline std::pair<DecoderTable, double> optimal_decoder(const PartitionEncoder& enc,
                                                       std::span<const long long> counts,
                                                       const ChannelModel& channel,
                                                       const DistortionMeasure& rho) {
  const int ny = channel.num_outputs();
  const auto cells = enc.cells();
  DecoderTable dec(enc.num_cells, ny);
  double total = 0.0;
  for (int z = 0; z < enc.num_cells; ++z)
    for (Symbol y = 0; y < ny; ++y) {
      double best = std::numeric_limits<double>::infinity();
      Symbol best_x = cells[z].front();
      for (Symbol candidate : cells[z]) {
        double term = 0.0;
        for (Symbol x : cells[z])
          term += static_cast<double>(counts[x]) * channel(x, y) * rho(x, candidate);
        if (term < best - 1e-15) {
          best = term;
          best_x = candidate;
        }
      }
      dec.at(z, y) = best_x;
      total += best;
    }
  return {std::move(dec), total};
}

inline constexpr std::uint64_t kOracleEncoderGuard = 2'000'000;

inline double interval_encoder_count_approx(int alphabet_size, int M) {
  // C(|X|-1, M-1) via log-gamma, good enough for guarding enumeration
  return std::exp(std::lgamma(alphabet_size) - std::lgamma(M) -
                  std::lgamma(alphabet_size - M + 1));
}

inline void require_enumerable_intervals(int alphabet_size, int M) {
  if (interval_encoder_count_approx(alphabet_size, M) >
      static_cast<double>(kOracleEncoderGuard))
    throw std::invalid_argument(
        "interval encoder family too large for the hindsight oracle; the decoder minimum is "
        "factored but cut sequences must still be enumerated");
}

inline HindsightResult best_fixed_rate_expert(std::span<const Symbol> x,
                                              std::span<const PartitionEncoder> encoders,
                                              const ChannelModel& channel,
                                              const DistortionMeasure& rho) {
  if (encoders.empty()) throw std::invalid_argument("empty expert set");
  if (encoders.size() > kOracleEncoderGuard)
    throw std::invalid_argument(
        "expert set too large for the hindsight oracle; the decoder minimum is factored but "
        "encoders must still be enumerated");
  std::vector<long long> counts(channel.size(), 0);
  for (Symbol s : x) ++counts[s];
  HindsightResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& enc : encoders) {
    auto [dec, cost] = optimal_decoder(enc, counts, channel, rho);
    if (cost < best.cost - 1e-15) {
      best.cost = cost;
      best.expert_text = expert_to_text(enc, dec);
    }
  }
  return best;
}

inline HindsightResult best_variable_rate_expert(
    std::span<const Symbol> x, std::span<const std::pair<PartitionEncoder, LengthSet>> experts,
    const ChannelModel& channel, const DistortionMeasure& rho, double delta) {
  if (experts.empty()) throw std::invalid_argument("empty expert set");
  if (experts.size() > kOracleEncoderGuard)
    throw std::invalid_argument(
        "expert set too large for the hindsight oracle; the decoder minimum is factored but "
        "encoders must still be enumerated");
  std::vector<long long> counts(channel.size(), 0);
  for (Symbol s : x) ++counts[s];
  HindsightResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& [enc, lengths] : experts) {
    auto [dec, distortion] = optimal_decoder(enc, counts, channel, rho);
    double bits = 0.0;
    for (Symbol s = 0; s < channel.size(); ++s)
      bits += static_cast<double>(counts[s]) * lengths[enc(s)];
    const double cost = distortion + delta * bits;
    if (cost < best.cost - 1e-15) {
      best.cost = cost;
      best.expert_text = expert_to_text(enc, dec, lengths);
    }
  }
  return best;
}

inline HindsightResult best_lossless_code(std::span<const Symbol> x, int M, int lambda) {
  const auto graph = build_huffman_graph(M, lambda);
  std::vector<long long> counts(M, 0);
  for (Symbol s : x) ++counts[s];
  HindsightResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& path : graph.enumerate_paths()) {
    const auto lengths = graph.lengths_of_path(path);
    double bits = 0.0;
    for (int j = 0; j < M; ++j) bits += static_cast<double>(counts[j]) * lengths[j];
    if (bits < best.cost - 1e-15) {
      best.cost = bits;
      std::ostringstream text;
      for (int j = 0; j < M; ++j) text << (j ? " " : "") << lengths[j];
      best.expert_text = text.str();
    }
  }
  return best;
}

// --------------------------------------------------------------------------
// Session internals shared by the fixed-rate variants.

namespace detail {

struct FixedRateAccounting {
  double charged = 0.0;
  double realized = 0.0;
};

// Header slots reconstruct as symbol 0 and their distortion is charged.
inline void account_header_symbol(Symbol x, const DistortionMeasure& rho,
                                  std::vector<Symbol>& recon, FixedRateAccounting& acc) {
  recon.push_back(0);
  acc.charged += rho(x, 0);
  acc.realized += rho(x, 0);
}

}  // namespace detail

// Fixed-rate session over an explicit encoder list. Protocol per block:
// update weights with the previous block, sample the expert in two steps,
// spell its index into the first header symbols, then transmit cell indices.
inline SessionOutput run_fixed_rate_session(std::span<const Symbol> x, const SessionConfig& cfg);

// Structured fixed-rate session: the encoder is drawn by weight-pushed path
// sampling on the interval graph instead of direct enumeration.
inline SessionOutput run_structured_session(std::span<const Symbol> x, const SessionConfig& cfg);

namespace detail {

// Everything shared between the explicit-list and graph-backed fixed-rate
// sessions; the two differ only in how the per-block encoder is drawn and in
// how the expert set is enumerated for headers.
class FixedRateEngine {
 public:
  FixedRateEngine(const SessionConfig& cfg, bool structured) : cfg_(cfg), structured_(structured) {
    const int nx = cfg.channel.size();
    if (structured_) {
      if (cfg.num_cells < 2) throw std::invalid_argument("structured variant needs M >= 2");
      graph_ = build_interval_graph(nx, cfg.num_cells);
      indexer_ = PathIndexer::build(graph_, cfg.channel.num_outputs());
      total_experts_ = indexer_.total;
      M_ = cfg.num_cells;
      edge_weights_.resize(graph_.edges.size());
    } else {
      if (cfg.encoders.empty()) throw std::invalid_argument("fixed-small needs encoders");
      M_ = cfg.encoders.front().num_cells;
      for (const auto& e : cfg.encoders) {
        if (e.alphabet_size() != nx) throw std::invalid_argument("encoder alphabet mismatch");
        if (e.num_cells != M_) throw std::invalid_argument("encoders must share one rate");
        if (!e.is_canonical()) throw std::invalid_argument("encoders must be canonical");
      }
      offsets_.assign(cfg.encoders.size() + 1, 0);
      for (std::size_t i = 0; i < cfg.encoders.size(); ++i)
        offsets_[i + 1] = checked_add(
            offsets_[i],
            static_cast<BigIndex>(count_decoders(cfg.encoders[i], cfg.channel.num_outputs())));
      total_experts_ = offsets_.back();
    }
  }

  int num_cells() const { return M_; }
  BigIndex total_experts() const { return total_experts_; }
  double log2_experts() const { return log2_big(total_experts_); }
  double rate_bits() const { return std::log2(static_cast<double>(M_)); }

  // One expert draw; returns (encoder, decoder, canonical index).
  std::tuple<PartitionEncoder, DecoderTable, BigIndex> sample(const WeightState& state,
                                                              Rng& rng) {
    if (structured_) {
      refresh_interval_weights(graph_, state, edge_weights_);
      const auto values = wpa_backward(graph_, edge_weights_);
      const auto path = sample_path(graph_, values, edge_weights_, rng);
      auto enc = encoder_from_cuts(cfg_.channel.size(), graph_.cuts_of_path(path));
      auto dec = sample_decoder(enc, state, rng);
      const BigIndex index =
          checked_add(indexer_.offset_of_path(graph_, path), decoder_index_of(enc, dec));
      return {std::move(enc), std::move(dec), index};
    }
    std::vector<LogWeight> weights(cfg_.encoders.size());
    for (std::size_t i = 0; i < cfg_.encoders.size(); ++i)
      weights[i] = encoder_weight_F(cfg_.encoders[i], state);
    const int pick = sample_encoder_direct(weights, rng);
    auto dec = sample_decoder(cfg_.encoders[pick], state, rng);
    const BigIndex index = checked_add(offsets_[pick],
                                       decoder_index_of(cfg_.encoders[pick], dec));
    return {cfg_.encoders[pick], std::move(dec), index};
  }

  // Expert lookup from a header index (decoder side).
  std::pair<PartitionEncoder, DecoderTable> expert_of(BigIndex index) const {
    if (index >= total_experts_) throw std::out_of_range("expert index out of range");
    if (structured_) {
      BigIndex decoder_index = 0;
      const auto path = indexer_.path_of_index(graph_, index, decoder_index);
      auto enc = encoder_from_cuts(cfg_.channel.size(), graph_.cuts_of_path(path));
      auto dec = decoder_from_index(enc, cfg_.channel.num_outputs(), decoder_index);
      return {std::move(enc), std::move(dec)};
    }
    std::size_t i = 0;
    while (index >= offsets_[i + 1]) ++i;
    auto enc = cfg_.encoders[i];
    auto dec = decoder_from_index(enc, cfg_.channel.num_outputs(), index - offsets_[i]);
    return {std::move(enc), std::move(dec)};
  }

 private:
  const SessionConfig& cfg_;
  bool structured_;
  int M_ = 0;
  BigIndex total_experts_ = 0;
  // structured state
  LayeredDag graph_;
  PathIndexer indexer_;
  std::vector<double> edge_weights_;
  // explicit-list state
  std::vector<BigIndex> offsets_;
};

inline SessionOutput run_fixed_rate_common(std::span<const Symbol> x, const SessionConfig& cfg,
                                           bool structured) {
  if (static_cast<long long>(x.size()) != cfg.n)
    throw std::invalid_argument("source length differs from configured horizon");
  Stopwatch clock;
  FixedRateEngine engine(cfg, structured);
  const double B = cfg.rho.bound();
  const double R = engine.rate_bits();

  const SchemeParams params = tuned_fixed_rate(engine.log2_experts(), cfg, R, B);
  const int header_len = header_symbols_needed(engine.total_experts(), engine.num_cells());
  if (cfg.n > 0 && header_len >= params.block_length && engine.total_experts() > 1)
    throw std::invalid_argument("header does not fit inside one block");

  Rng master(cfg.seed);
  Rng scheme_rng = master.stream("scheme");
  Rng channel_rng = master.stream("channel");

  SessionOutput out;
  out.side_info = draw_side_info(x, cfg.channel, channel_rng);
  out.reconstructions.reserve(x.size());
  out.wire_symbols.reserve(x.size());

  WeightState state(cfg.channel, params.eta);
  RunMetrics& m = out.metrics;

  long long start = 0;
  while (start < cfg.n) {
    const long long len = std::min<long long>(params.block_length, cfg.n - start);
    if (start > 0) state.update(x.subspan(start - params.block_length, params.block_length));

    FixedRateAccounting acc;
    double block_cost = 0.0;
    if (len <= header_len) {
      // no payload would remain: skip the expert, pad the wire
      for (long long i = start; i < start + len; ++i) {
        out.wire_symbols.push_back(0);
        account_header_symbol(x[i], cfg.rho, out.reconstructions, acc);
      }
      m.block_experts.emplace_back();
    } else {
      auto [enc, dec, index] = engine.sample(state, scheme_rng);
      emit_base_m(out.wire_symbols, index, engine.num_cells(), header_len);
      m.header_symbols += header_len;
      for (long long i = start; i < start + header_len; ++i)
        account_header_symbol(x[i], cfg.rho, out.reconstructions, acc);
      const auto expected = per_symbol_expected_distortion(enc, dec, cfg.channel, cfg.rho);
      for (long long i = start + header_len; i < start + len; ++i) {
        const int z = enc(x[i]);
        out.wire_symbols.push_back(z);
        const Symbol xhat = dec.at(z, out.side_info[i]);
        out.reconstructions.push_back(xhat);
        acc.charged += expected[x[i]];
        acc.realized += cfg.rho(x[i], xhat);
      }
      m.block_experts.push_back(expert_to_text(enc, dec));
    }
    block_cost = acc.charged;
    m.block_costs.push_back(block_cost);
    m.expected_distortion += acc.charged;
    m.realized_distortion += acc.realized;
    start += len;
  }

  m.params = params;
  m.log2_num_experts = engine.log2_experts();
  m.channel_symbols = cfg.n;
  m.scheme_cost = m.expected_distortion;
  m.bound = fixed_rate_regret_bound(B, R, engine.log2_experts(), static_cast<double>(cfg.n));
  if (cfg.compute_oracle) {
    if (structured) require_enumerable_intervals(cfg.channel.size(), cfg.num_cells);
    const auto encoders = structured
                              ? all_interval_encoders(cfg.channel.size(), cfg.num_cells)
                              : cfg.encoders;
    const auto oracle = best_fixed_rate_expert(x, encoders, cfg.channel, cfg.rho);
    m.oracle_cost = oracle.cost;
    m.normalized_regret = normalized_regret(m.scheme_cost, oracle.cost, cfg.n);
  }
  m.runtime_ms = clock.elapsed_ms();
  return out;
}

}  // namespace detail

inline SessionOutput run_fixed_rate_session(std::span<const Symbol> x, const SessionConfig& cfg) {
  if (cfg.variant != Variant::fixed_small)
    throw std::invalid_argument("config variant mismatch");
  return detail::run_fixed_rate_common(x, cfg, false);
}

inline SessionOutput run_structured_session(std::span<const Symbol> x, const SessionConfig& cfg) {
  if (cfg.variant != Variant::fixed_structured)
    throw std::invalid_argument("config variant mismatch");
  return detail::run_fixed_rate_common(x, cfg, true);
}

// Standalone fixed-rate decoder: rebuilds the reconstruction sequence from
// the wire, the observed side information and the shared configuration.
inline std::vector<Symbol> decode_fixed_rate_wire(std::span<const int> wire,
                                                  std::span<const Symbol> side_info,
                                                  const SessionConfig& cfg) {
  const bool structured = cfg.variant == Variant::fixed_structured;
  detail::FixedRateEngine engine(cfg, structured);
  const SchemeParams params =
      detail::tuned_fixed_rate(engine.log2_experts(), cfg, engine.rate_bits(), cfg.rho.bound());
  const int header_len = header_symbols_needed(engine.total_experts(), engine.num_cells());

  std::vector<Symbol> recon;
  recon.reserve(wire.size());
  long long start = 0;
  while (start < cfg.n) {
    const long long len = std::min<long long>(params.block_length, cfg.n - start);
    if (len <= header_len) {
      for (long long i = 0; i < len; ++i) recon.push_back(0);
      start += len;
      continue;
    }
    const BigIndex index = detail::parse_base_m(
        wire.subspan(start, header_len), engine.num_cells());
    const auto [enc, dec] = engine.expert_of(index);
    (void)enc;
    for (long long i = start; i < start + header_len; ++i) recon.push_back(0);
    for (long long i = start + header_len; i < start + len; ++i)
      recon.push_back(dec.at(wire[i], side_info[i]));
    start += len;
  }
  return recon;
}

// --------------------------------------------------------------------------
// Variable-rate sessions (explicit sets, the product graph, and quantizers).

namespace detail {

class VariableRateEngine {
 public:
  VariableRateEngine(const SessionConfig& cfg, bool graph_backed, bool generalized)
      : cfg_(cfg), graph_backed_(graph_backed), generalized_(generalized) {
    const int nx = cfg.channel.size();
    if (graph_backed_) {
      if (cfg.num_cells < 2) throw std::invalid_argument("graph variant needs M >= 2");
      if (cfg.lambda < 2) throw std::invalid_argument("graph variant needs lambda");
      graph_ = build_lc_graph(nx, cfg.num_cells, cfg.lambda);
      if (graph_.count_paths() == 0)
        throw std::invalid_argument("no complete length sets for these parameters");
      indexer_ = PathIndexer::build(graph_, cfg.channel.num_outputs());
      total_experts_ = indexer_.total;
      M_ = cfg.num_cells;
      edge_weights_.resize(graph_.edges.size());
    } else {
      if (cfg.vr_encoders.empty()) throw std::invalid_argument("variable-small needs encoders");
      M_ = cfg.vr_encoders.front().first.num_cells;
      for (const auto& [enc, lengths] : cfg.vr_encoders) {
        if (enc.alphabet_size() != nx) throw std::invalid_argument("encoder alphabet mismatch");
        if (enc.num_cells != M_) throw std::invalid_argument("encoders must share one M");
        if (static_cast<int>(lengths.size()) != M_)
          throw std::invalid_argument("length set size must equal M");
        if (!kraft_equality(lengths))
          throw std::invalid_argument("length sets must be complete (Kraft equality)");
      }
      offsets_.assign(cfg.vr_encoders.size() + 1, 0);
      for (std::size_t i = 0; i < cfg.vr_encoders.size(); ++i)
        offsets_[i + 1] = checked_add(offsets_[i],
                                      static_cast<BigIndex>(count_decoders(
                                          cfg.vr_encoders[i].first, cfg.channel.num_outputs())));
      total_experts_ = offsets_.back();
      log_gamma_.assign(cfg.vr_encoders.size(), 0.0);
    }
  }

  int num_cells() const { return M_; }
  BigIndex total_experts() const { return total_experts_; }
  double log2_experts() const { return log2_big(total_experts_); }

  // Explicit sets keep the length penalty incrementally, one update per block.
  void absorb_block(std::span<const Symbol> block, double eta) {
    if (graph_backed_) return;
    std::vector<long long> counts(cfg_.channel.size(), 0);
    for (Symbol s : block) ++counts[s];
    for (std::size_t i = 0; i < cfg_.vr_encoders.size(); ++i) {
      const auto& [enc, lengths] = cfg_.vr_encoders[i];
      double bits = 0.0;
      for (Symbol s = 0; s < cfg_.channel.size(); ++s)
        bits += static_cast<double>(counts[s]) * lengths[enc(s)];
      log_gamma_[i] -= eta * cfg_.delta * bits;
    }
  }

  std::span<const double> log_length_penalties() const { return log_gamma_; }

  std::tuple<PartitionEncoder, LengthSet, DecoderTable, BigIndex> sample(
      const WeightState& state, Rng& rng) {
    if (graph_backed_) {
      if (generalized_)
        refresh_lc_weights_general(graph_, state, cfg_.rho, cfg_.delta, edge_weights_);
      else
        refresh_lc_weights(graph_, state, cfg_.delta, edge_weights_);
      const auto values = wpa_backward(graph_, edge_weights_);
      const auto path = sample_path(graph_, values, edge_weights_, rng);
      auto enc = encoder_from_cuts(cfg_.channel.size(), graph_.cuts_of_path(path));
      auto lengths = graph_.lengths_of_path(path);
      auto dec = generalized_ ? sample_decoder_general(enc, state, cfg_.rho, rng)
                              : sample_decoder(enc, state, rng);
      const BigIndex index =
          checked_add(indexer_.offset_of_path(graph_, path), decoder_index_of(enc, dec));
      return {std::move(enc), std::move(lengths), std::move(dec), index};
    }
    std::vector<double> logs(cfg_.vr_encoders.size());
    for (std::size_t i = 0; i < cfg_.vr_encoders.size(); ++i)
      logs[i] =
          encoder_weight_F(cfg_.vr_encoders[i].first, state).log_value + log_gamma_[i];
    const int pick = sample_index_from_log_weights(logs, rng);
    const auto& [enc, lengths] = cfg_.vr_encoders[pick];
    auto dec = sample_decoder(enc, state, rng);
    const BigIndex index = checked_add(offsets_[pick], decoder_index_of(enc, dec));
    return {enc, lengths, std::move(dec), index};
  }

  std::tuple<PartitionEncoder, LengthSet, DecoderTable> expert_of(BigIndex index) const {
    if (index >= total_experts_) throw std::out_of_range("expert index out of range");
    if (graph_backed_) {
      BigIndex decoder_index = 0;
      const auto path = indexer_.path_of_index(graph_, index, decoder_index);
      auto enc = encoder_from_cuts(cfg_.channel.size(), graph_.cuts_of_path(path));
      auto dec = decoder_from_index(enc, cfg_.channel.num_outputs(), decoder_index);
      return {std::move(enc), graph_.lengths_of_path(path), std::move(dec)};
    }
    std::size_t i = 0;
    while (index >= offsets_[i + 1]) ++i;
    auto dec = decoder_from_index(cfg_.vr_encoders[i].first, cfg_.channel.num_outputs(),
                                  index - offsets_[i]);
    return {cfg_.vr_encoders[i].first, cfg_.vr_encoders[i].second, std::move(dec)};
  }

  std::vector<std::pair<PartitionEncoder, LengthSet>> enumerate_for_oracle() const {
    if (!graph_backed_) return cfg_.vr_encoders;
    std::vector<std::pair<PartitionEncoder, LengthSet>> out;
    for (const auto& path : graph_.enumerate_paths())
      out.emplace_back(encoder_from_cuts(cfg_.channel.size(), graph_.cuts_of_path(path)),
                       graph_.lengths_of_path(path));
    return out;
  }

 private:
  const SessionConfig& cfg_;
  bool graph_backed_;
  bool generalized_;
  int M_ = 0;
  BigIndex total_experts_ = 0;
  LayeredDag graph_;
  PathIndexer indexer_;
  std::vector<double> edge_weights_;
  std::vector<BigIndex> offsets_;
  std::vector<double> log_gamma_;
};

inline SessionOutput run_variable_rate_common(std::span<const Symbol> x,
                                              const SessionConfig& cfg, bool graph_backed,
                                              bool generalized) {
  if (static_cast<long long>(x.size()) != cfg.n)
    throw std::invalid_argument("source length differs from configured horizon");
  if (generalized && !cfg.rho.is_symmetric_difference())
    throw std::invalid_argument("quantizer variant needs a |x - xhat| distortion");
  Stopwatch clock;
  VariableRateEngine engine(cfg, graph_backed, generalized);
  const double B = cfg.rho.bound();

  const SchemeParams params =
      tuned_variable_rate(engine.log2_experts(), cfg, B, engine.num_cells());
  const int header_len = header_bits_needed(engine.total_experts());
  if (cfg.n > 0 && header_len >= params.block_length && engine.total_experts() > 1)
    throw std::invalid_argument("header does not fit inside one block");

  Rng master(cfg.seed);
  Rng scheme_rng = master.stream("scheme");
  Rng channel_rng = master.stream("channel");

  SessionOutput out;
  out.side_info = detail::draw_side_info(x, cfg.channel, channel_rng);
  out.reconstructions.reserve(x.size());

  WeightState state(cfg.channel, params.eta);
  RunMetrics& m = out.metrics;

  long long start = 0;
  while (start < cfg.n) {
    const long long len = std::min<long long>(params.block_length, cfg.n - start);
    if (start > 0) {
      const auto prev = x.subspan(start - params.block_length, params.block_length);
      state.update(prev);
      engine.absorb_block(prev, params.eta);
    }

    double charged = 0.0, realized = 0.0, block_bits = 0.0;
    const long long lost = std::min<long long>(header_len, len);
    if (len <= header_len) {
      // no payload would remain: skip the header entirely, reconstruct zeros
      for (long long i = start; i < start + len; ++i) {
        out.reconstructions.push_back(0);
        charged += B;
        realized += cfg.rho(x[i], 0);
      }
      m.block_experts.emplace_back();
    } else {
      auto [enc, lengths, dec, index] = engine.sample(state, scheme_rng);
      append_big(out.wire_bits, index, header_len);
      m.header_bits += header_len;
      block_bits += header_len;
      // header transmission loses the first reconstructions of the block;
      // they are charged at the distortion bound
      for (long long i = start; i < start + lost; ++i) {
        out.reconstructions.push_back(0);
        charged += B;
        realized += cfg.rho(x[i], 0);
      }
      const auto book = Codebook::canonical(lengths);
      const auto expected = per_symbol_expected_distortion(enc, dec, cfg.channel, cfg.rho);
      for (long long i = start + lost; i < start + len; ++i) {
        const int z = enc(x[i]);
        append_codeword(out.wire_bits, book, z);
        block_bits += lengths[z];
        const Symbol xhat = dec.at(z, out.side_info[i]);
        out.reconstructions.push_back(xhat);
        charged += expected[x[i]];
        realized += cfg.rho(x[i], xhat);
      }
      m.block_experts.push_back(expert_to_text(enc, dec, lengths));
    }
    m.block_costs.push_back(charged + cfg.delta * block_bits);
    m.expected_distortion += charged;
    m.realized_distortion += realized;
    m.total_bits += block_bits;
    start += len;
  }

  m.params = params;
  m.log2_num_experts = engine.log2_experts();
  m.scheme_cost = m.expected_distortion + cfg.delta * m.total_bits;
  m.bound = variable_rate_regret_bound(B, params.max_symbol_cost, engine.log2_experts(),
                           static_cast<double>(cfg.n));
  if (cfg.compute_oracle) {
    const auto experts = engine.enumerate_for_oracle();
    const auto oracle = best_variable_rate_expert(x, experts, cfg.channel, cfg.rho, cfg.delta);
    m.oracle_cost = oracle.cost;
    m.normalized_regret = normalized_regret(m.scheme_cost, oracle.cost, cfg.n);
  }
  m.runtime_ms = clock.elapsed_ms();
  return out;
}

}  // namespace detail

inline SessionOutput run_variable_rate_session(std::span<const Symbol> x,
                                               const SessionConfig& cfg) {
  if (cfg.variant != Variant::variable_small)
    throw std::invalid_argument("config variant mismatch");
  return detail::run_variable_rate_common(x, cfg, false, false);
}

inline SessionOutput run_lc_graph_session(std::span<const Symbol> x, const SessionConfig& cfg) {
  if (cfg.variant != Variant::variable_lc_graph)
    throw std::invalid_argument("config variant mismatch");
  return detail::run_variable_rate_common(x, cfg, true, false);
}

// Quantizer sessions run the product-graph scheme with the generalized
// per-choice weights and a single-output channel (no side information).
inline SessionOutput run_quantizer_session(std::span<const Symbol> x, const SessionConfig& cfg) {
  if (cfg.variant != Variant::quantizer)
    throw std::invalid_argument("config variant mismatch");
  if (cfg.channel.num_outputs() != 1)
    throw std::invalid_argument("quantizer variant expects a single-output channel");
  return detail::run_variable_rate_common(x, cfg, true, true);
}

inline std::vector<Symbol> decode_variable_rate_wire(const BitStream& bits,
                                                     std::span<const Symbol> side_info,
                                                     const SessionConfig& cfg) {
  const bool graph_backed =
      cfg.variant == Variant::variable_lc_graph || cfg.variant == Variant::quantizer;
  const bool generalized = cfg.variant == Variant::quantizer;
  detail::VariableRateEngine engine(cfg, graph_backed, generalized);
  const SchemeParams params =
      detail::tuned_variable_rate(engine.log2_experts(), cfg, cfg.rho.bound(),
                                  engine.num_cells());
  const int header_len = header_bits_needed(engine.total_experts());

  BitReader reader(bits);
  std::vector<Symbol> recon;
  recon.reserve(side_info.size());
  long long start = 0;
  while (start < cfg.n) {
    const long long len = std::min<long long>(params.block_length, cfg.n - start);
    if (len <= header_len) {
      for (long long i = 0; i < len; ++i) recon.push_back(0);
      start += len;
      continue;
    }
    const BigIndex index = detail::read_big(reader, header_len);
    const auto [enc, lengths, dec] = engine.expert_of(index);
    (void)enc;
    const auto book = Codebook::canonical(lengths);
    const long long lost = std::min<long long>(header_len, len);
    for (long long i = 0; i < lost; ++i) recon.push_back(0);
    for (long long i = start + lost; i < start + len; ++i) {
      const int z = decode_symbol(reader, book);
      recon.push_back(dec.at(z, side_info[i]));
    }
    start += len;
  }
  return recon;
}

// --------------------------------------------------------------------------
// Lossless sessions. The alphabet maps one-to-one onto codewords, so nothing
// is lost and no header is needed: encoder and decoder replay the same
// seeded draws and agree on every per-block code.

namespace detail {

struct LosslessSetup {
  LayeredDag graph;
  std::uint64_t num_codes = 0;
  double log2_codes = 0.0;
  SchemeParams params;
};

// A free block-length choice trades convergence against per-block work; the
// default follows the horizon logarithmically. The learning rate is tuned
// with the maximum codeword length as the per-symbol cost cap. Encoder and
// decoder both derive their state through here.
inline LosslessSetup lossless_setup(const SessionConfig& cfg) {
  LosslessSetup setup;
  const int M = cfg.num_cells > 0 ? cfg.num_cells : cfg.channel.size();
  if (cfg.lambda < 2) throw std::invalid_argument("lossless variant needs lambda");
  setup.graph = build_huffman_graph(M, cfg.lambda);
  setup.num_codes = setup.graph.count_paths();
  if (setup.num_codes == 0)
    throw std::invalid_argument("no complete length sets for these parameters");
  setup.log2_codes = std::log2(static_cast<double>(setup.num_codes));
  const double max_len = log2_exact(cfg.lambda);

  SchemeParams& p = setup.params;
  p.horizon = cfg.n;
  p.delta = 1.0;
  p.distortion_bound = max_len;
  p.max_symbol_cost = max_len;
  p.block_length = cfg.block_length
                       ? *cfg.block_length
                       : std::max(1, static_cast<int>(std::llround(std::log2(
                             std::max(2.0, static_cast<double>(cfg.n))))));
  p.block_length = static_cast<int>(std::min<long long>(p.block_length, std::max(cfg.n, 1LL)));
  p.block_length_raw = p.block_length;
  p.num_blocks = cfg.n > 0 ? (cfg.n + p.block_length - 1) / p.block_length : 0;
  p.eta = cfg.eta ? *cfg.eta
                  : (setup.num_codes > 1 && cfg.n > 0
                         ? std::sqrt(8.0 * setup.log2_codes /
                                     (p.block_length * max_len * max_len *
                                      static_cast<double>(cfg.n)))
                         : 0.0);
  return setup;
}

}  // namespace detail

inline SessionOutput run_lossless_session(std::span<const Symbol> x, const SessionConfig& cfg) {
  if (cfg.variant != Variant::lossless_huffman)
    throw std::invalid_argument("config variant mismatch");
  if (static_cast<long long>(x.size()) != cfg.n)
    throw std::invalid_argument("source length differs from configured horizon");
  detail::Stopwatch clock;
  const int M = cfg.num_cells > 0 ? cfg.num_cells : cfg.channel.size();
  const auto setup = detail::lossless_setup(cfg);
  const SchemeParams& params = setup.params;
  const LayeredDag& graph = setup.graph;

  Rng scheme_rng = Rng(cfg.seed).stream("scheme");
  SessionOutput out;
  out.reconstructions.reserve(x.size());
  RunMetrics& m = out.metrics;
  m.params = params;
  m.log2_num_experts = setup.log2_codes;

  std::vector<long long> counts(M, 0);
  std::vector<double> edge_weights(graph.edges.size());
  long long start = 0;
  while (start < cfg.n) {
    const long long len = std::min<long long>(params.block_length, cfg.n - start);
    if (start > 0)
      for (long long i = start - params.block_length; i < start; ++i) ++counts[x[i]];
    refresh_huffman_weights(graph, counts, params.eta, edge_weights);
    const auto values = wpa_backward(graph, edge_weights);
    const auto path = sample_path(graph, values, edge_weights, scheme_rng);
    const auto lengths = graph.lengths_of_path(path);
    const auto book = Codebook::canonical(lengths);
    double block_bits = 0.0;
    for (long long i = start; i < start + len; ++i) {
      append_codeword(out.wire_bits, book, x[i]);
      block_bits += lengths[x[i]];
      out.reconstructions.push_back(x[i]);
    }
    {
      std::ostringstream text;
      for (int j = 0; j < M; ++j) text << (j ? " " : "") << lengths[j];
      m.block_experts.push_back(text.str());
    }
    m.block_costs.push_back(block_bits);
    m.total_bits += block_bits;
    start += len;
  }

  m.scheme_cost = m.total_bits;
  m.bound = lossless_regret_bound(M, setup.log2_codes, static_cast<double>(std::max(cfg.n, 1LL)),
                             params.block_length);
  if (cfg.compute_oracle) {
    const auto oracle = best_lossless_code(x, M, cfg.lambda);
    m.oracle_cost = oracle.cost;
    m.normalized_regret = normalized_regret(m.scheme_cost, oracle.cost, cfg.n);
  }
  m.runtime_ms = clock.elapsed_ms();
  return out;
}

// Lossless decoder: replays the shared randomization from the seed and its
// own copy of the decoded history, so the per-block code needs no header.
inline std::vector<Symbol> decode_lossless_wire(const BitStream& bits, const SessionConfig& cfg) {
  const int M = cfg.num_cells > 0 ? cfg.num_cells : cfg.channel.size();
  const auto setup = detail::lossless_setup(cfg);

  Rng scheme_rng = Rng(cfg.seed).stream("scheme");
  BitReader reader(bits);
  std::vector<Symbol> decoded;
  decoded.reserve(cfg.n);
  std::vector<long long> counts(M, 0);
  std::vector<double> edge_weights(setup.graph.edges.size());
  const int l = setup.params.block_length;
  long long start = 0;
  while (start < cfg.n) {
    const long long len = std::min<long long>(l, cfg.n - start);
    if (start > 0)
      for (long long i = start - l; i < start; ++i) ++counts[decoded[i]];
    refresh_huffman_weights(setup.graph, counts, setup.params.eta, edge_weights);
    const auto values = wpa_backward(setup.graph, edge_weights);
    const auto path = sample_path(setup.graph, values, edge_weights, scheme_rng);
    const auto book = Codebook::canonical(setup.graph.lengths_of_path(path));
    for (long long i = 0; i < len; ++i) decoded.push_back(decode_symbol(reader, book));
    start += len;
  }
  return decoded;
}

// --------------------------------------------------------------------------
// Dispatchers.

inline SessionOutput run_session(std::span<const Symbol> x, const SessionConfig& cfg) {
  switch (cfg.variant) {
    case Variant::fixed_small: return run_fixed_rate_session(x, cfg);
    case Variant::fixed_structured: return run_structured_session(x, cfg);
    case Variant::variable_small: return run_variable_rate_session(x, cfg);
    case Variant::lossless_huffman: return run_lossless_session(x, cfg);
    case Variant::variable_lc_graph: return run_lc_graph_session(x, cfg);
    case Variant::quantizer: return run_quantizer_session(x, cfg);
  }
  throw std::logic_error("unknown variant");
}

inline HindsightResult best_expert_in_hindsight(std::span<const Symbol> x,
                                                const SessionConfig& cfg) {
  switch (cfg.variant) {
    case Variant::fixed_small:
      return best_fixed_rate_expert(x, cfg.encoders, cfg.channel, cfg.rho);
    case Variant::fixed_structured: {
      require_enumerable_intervals(cfg.channel.size(), cfg.num_cells);
      const auto encoders = all_interval_encoders(cfg.channel.size(), cfg.num_cells);
      return best_fixed_rate_expert(x, encoders, cfg.channel, cfg.rho);
    }
    case Variant::variable_small:
      return best_variable_rate_expert(x, cfg.vr_encoders, cfg.channel, cfg.rho, cfg.delta);
    case Variant::lossless_huffman:
      return best_lossless_code(x, cfg.num_cells > 0 ? cfg.num_cells : cfg.channel.size(),
                                cfg.lambda);
    case Variant::variable_lc_graph:
    case Variant::quantizer: {
      detail::VariableRateEngine engine(cfg, true, cfg.variant == Variant::quantizer);
      return best_variable_rate_expert(x, engine.enumerate_for_oracle(), cfg.channel, cfg.rho,
                                       cfg.delta);
    }
  }
  throw std::logic_error("unknown variant");
}

// Run manifest: configuration echo, tuned parameters, then one line per
// block with its charged cost and chosen expert.
inline void write_manifest(std::ostream& out, const SessionConfig& cfg, const RunMetrics& m) {
  out << "variant " << variant_name(cfg.variant) << "\n";
  out << "n " << cfg.n << " seed " << cfg.seed << " delta " << cfg.delta << "\n";
  out << "alphabet " << cfg.channel.size() << " outputs " << cfg.channel.num_outputs() << "\n";
  out << "l " << m.params.block_length << " eta " << m.params.eta << " K "
      << m.params.num_blocks << " max_symbol_cost " << m.params.max_symbol_cost << "\n";
  out << "log2_experts " << m.log2_num_experts << "\n";
  out << "scheme_cost " << m.scheme_cost << " expected_distortion " << m.expected_distortion
      << " realized_distortion " << m.realized_distortion << " bits " << m.total_bits << "\n";
  if (!std::isnan(m.oracle_cost))
    out << "oracle " << m.oracle_cost << " regret " << m.normalized_regret << "\n";
  out << "bound " << m.bound << "\n";
  for (std::size_t k = 0; k < m.block_costs.size(); ++k) {
    out << "block " << k << " cost " << m.block_costs[k] << " expert ";
    if (m.block_experts[k].empty()) {
      out << "-\n";
    } else {
      std::string flat = m.block_experts[k];
      for (auto& c : flat)
        if (c == '\n') c = ';';
      out << flat << "\n";
    }
  }
}

}  // namespace wz
