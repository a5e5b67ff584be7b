#pragma once

// Exponential-weights machinery: tuned block length and learning rate,
// the running per-(symbol, side symbol) weight state, factored encoder
// weights, and the two-step expert sampler (encoder first, then the decoder
// cell by cell).

#include "wz/core.hpp"
#include "wz/experts.hpp"

namespace wz {

struct SchemeParams {
  long long horizon = 0;        // n
  int block_length = 1;         // l, rounded
  double block_length_raw = 0;  // l before rounding (exposed for diagnostics)
  long long num_blocks = 0;     // ceil(n / l)
  double eta = 0.0;
  double rate_bits = 0.0;       // R = log2 M, fixed-rate sessions
  double delta = 0.0;           // length multiplier, variable-rate sessions
  double distortion_bound = 1.0;  // B
  double max_symbol_cost = 1.0;   // B + delta*(M-1) for variable-rate
};

namespace detail {

inline int round_clamp_block_length(double raw, long long n) {
  long long l = std::llround(raw);
  if (l < 1) l = 1;
  if (l > n) l = n;
  return static_cast<int>(l);
}

}  // namespace detail

// Tuned (l, eta) for fixed-rate sessions. All set-size logarithms are base 2;
// eta is computed from the rounded block length.
inline SchemeParams fixed_rate_params(double log2_num_experts, long long n, double R, double B) {
  if (n < 1 || R <= 0.0 || B <= 0.0 || log2_num_experts < 0.0)
    throw std::invalid_argument("degenerate fixed-rate parameters");
  SchemeParams p;
  p.horizon = n;
  p.rate_bits = R;
  p.distortion_bound = B;
  p.max_symbol_cost = B;
  p.block_length_raw = 2.0 * std::cbrt(log2_num_experts * static_cast<double>(n) / (R * R));
  p.block_length = detail::round_clamp_block_length(p.block_length_raw, n);
  p.num_blocks = (n + p.block_length - 1) / p.block_length;
  p.eta = log2_num_experts > 0.0
              ? std::sqrt(8.0 * log2_num_experts / (p.block_length * B * B * static_cast<double>(n)))
              : 0.0;
  return p;
}

inline SchemeParams fixed_rate_params(std::uint64_t num_experts, long long n, double R, double B) {
  if (num_experts < 1) throw std::invalid_argument("empty expert set");
  return fixed_rate_params(std::log2(static_cast<double>(num_experts)), n, R, B);
}

// Tuned (l, eta) for variable-rate sessions; the per-symbol cost cap grows to
// B + delta*(M-1) because a codeword can cost up to M-1 bits.
inline SchemeParams variable_rate_params(double log2_num_experts, long long n, double B,
                                         double delta, int M) {
  if (n < 1 || B <= 0.0 || delta < 0.0 || M < 2 || log2_num_experts < 0.0)
    throw std::invalid_argument("degenerate variable-rate parameters");
  SchemeParams p;
  p.horizon = n;
  p.delta = delta;
  p.distortion_bound = B;
  p.max_symbol_cost = B + delta * (M - 1);
  const double bt = p.max_symbol_cost;
  p.block_length_raw =
      2.0 * std::cbrt(log2_num_experts * static_cast<double>(n) * B * B / (bt * bt));
  p.block_length = detail::round_clamp_block_length(p.block_length_raw, n);
  p.num_blocks = (n + p.block_length - 1) / p.block_length;
  p.eta = log2_num_experts > 0.0
              ? std::sqrt(8.0 * log2_num_experts / (p.block_length * bt * bt * static_cast<double>(n)))
              : 0.0;
  return p;
}

inline SchemeParams variable_rate_params(std::uint64_t num_experts, long long n, double B,
                                         double delta, int M) {
  if (num_experts < 1) throw std::invalid_argument("empty expert set");
  return variable_rate_params(std::log2(static_cast<double>(num_experts)), n, B, delta, M);
}

// --------------------------------------------------------------------------
// Running weight state. log_lambda(x, y) = eta * n_t(x) * P(y|x) is kept
// incrementally and stays recomputable from the counts alone; all weights
// start at one (log 0) before any data.

class WeightState {
 public:
  WeightState(const ChannelModel& channel, double eta)
      : channel_(&channel), eta_(eta), counts_(channel.size(), 0),
        log_lambda_(static_cast<std::size_t>(channel.size()) * channel.num_outputs(), 0.0),
        t_(0) {}

  void update(std::span<const Symbol> block) {
    const int ny = channel_->num_outputs();
    for (Symbol x : block) {
      ++counts_[x];
      for (Symbol y = 0; y < ny; ++y) log_lambda_[x * ny + y] += eta_ * (*channel_)(x, y);
    }
    t_ += static_cast<long long>(block.size());
  }

  static WeightState from_counts(const ChannelModel& channel, double eta,
                                 std::span<const long long> counts) {
    WeightState s(channel, eta);
    const int ny = channel.num_outputs();
    for (Symbol x = 0; x < channel.size(); ++x) {
      s.counts_[x] = counts[x];
      for (Symbol y = 0; y < ny; ++y)
        s.log_lambda_[x * ny + y] = eta * static_cast<double>(counts[x]) * channel(x, y);
    }
    s.t_ = std::accumulate(counts.begin(), counts.end(), 0LL);
    return s;
  }

  long long count(Symbol x) const { return counts_[x]; }
  std::span<const long long> counts() const { return counts_; }
  long long time() const { return t_; }
  double eta() const { return eta_; }
  const ChannelModel& channel() const { return *channel_; }
  int alphabet_size() const { return channel_->size(); }
  int num_outputs() const { return channel_->num_outputs(); }

  double log_lambda(Symbol x, Symbol y) const {
    return log_lambda_[x * channel_->num_outputs() + y];
  }

  // Verification hook: corrupt one stored weight so consistency suites can
  // prove they catch a broken update. Never used by the schemes themselves.
  void perturb_log_lambda(Symbol x, Symbol y, double amount) {
    log_lambda_[x * channel_->num_outputs() + y] += amount;
  }

 private:
  const ChannelModel* channel_;
  double eta_;
  std::vector<long long> counts_;
  std::vector<double> log_lambda_;
  long long t_;
};

// Total weight of all experts sharing one encoder: the per-(cell, side
// symbol) sums factor into a product, so the sum over the (huge) decoder set
// costs O(M |X| |Y|) instead of enumerating it.
inline LogWeight encoder_weight_F(const PartitionEncoder& enc, const WeightState& state) {
  const int ny = state.num_outputs();
  const auto cells = enc.cells();
  double log_f = 0.0;
  std::vector<double> member_logs;
  for (int z = 0; z < enc.num_cells; ++z) {
    for (Symbol y = 0; y < ny; ++y) {
      member_logs.clear();
      for (Symbol x : cells[z]) member_logs.push_back(state.log_lambda(x, y));
      log_f += log_sum_exp(std::span<const double>(member_logs));
    }
  }
  return LogWeight{log_f};
}

// Length penalty factor for a variable-rate encoder: exp(-eta*delta*total
// encoded length of the data seen so far).
inline LogWeight gamma_weight(const PartitionEncoder& enc, std::span<const int> lengths,
                              const WeightState& state, double delta) {
  double acc = 0.0;
  for (Symbol x = 0; x < enc.alphabet_size(); ++x)
    acc += static_cast<double>(state.count(x)) * lengths[enc(x)];
  return LogWeight{-state.eta() * delta * acc};
}

inline LogWeight encoder_weight_F_LC(const PartitionEncoder& enc, std::span<const int> lengths,
                                     const WeightState& state, double delta) {
  return encoder_weight_F(enc, state) * gamma_weight(enc, lengths, state, delta);
}

// First sampling step: pick an encoder index proportional to its weight.
inline int sample_encoder_direct(std::span<const LogWeight> weights, Rng& rng) {
  std::vector<double> logs(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) logs[i] = weights[i].log_value;
  return sample_index_from_log_weights(logs, rng);
}

// Second sampling step: fill the decoder table cell by cell, row-major in
// (cell, side symbol), one uniform draw per cell even when the choice is
// forced. The joint law over the full table is the exponential-weights
// conditional given the encoder.
inline DecoderTable sample_decoder(const PartitionEncoder& enc, const WeightState& state,
                                   Rng& rng) {
  const int ny = state.num_outputs();
  const auto cells = enc.cells();
  DecoderTable table(enc.num_cells, ny);
  std::vector<double> member_logs;
  for (int z = 0; z < enc.num_cells; ++z) {
    for (Symbol y = 0; y < ny; ++y) {
      member_logs.clear();
      for (Symbol x : cells[z]) member_logs.push_back(state.log_lambda(x, y));
      table.at(z, y) = cells[z][sample_index_from_log_weights(member_logs, rng)];
    }
  }
  return table;
}

// --------------------------------------------------------------------------
// General bounded distortion. The per-choice weight of reconstructing x on
// side symbol y inside its cell carries the cost of every other cell member.

inline LogWeight generalized_lambda(Symbol x, Symbol y, const PartitionEncoder& enc,
                                    const WeightState& state, const DistortionMeasure& rho) {
  const auto& channel = state.channel();
  double acc = 0.0;
  for (Symbol other = 0; other < enc.alphabet_size(); ++other) {
    if (other == x || enc(other) != enc(x)) continue;
    acc += static_cast<double>(state.count(other)) * channel(other, y) * rho(other, x);
  }
  return LogWeight{-state.eta() * acc};
}

inline LogWeight encoder_weight_F_general(const PartitionEncoder& enc, const WeightState& state,
                                          const DistortionMeasure& rho) {
  const int ny = state.num_outputs();
  const auto cells = enc.cells();
  double log_f = 0.0;
  std::vector<double> member_logs;
  for (int z = 0; z < enc.num_cells; ++z) {
    for (Symbol y = 0; y < ny; ++y) {
      member_logs.clear();
      for (Symbol x : cells[z])
        member_logs.push_back(generalized_lambda(x, y, enc, state, rho).log_value);
      log_f += log_sum_exp(std::span<const double>(member_logs));
    }
  }
  return LogWeight{log_f};
}

inline DecoderTable sample_decoder_general(const PartitionEncoder& enc, const WeightState& state,
                                           const DistortionMeasure& rho, Rng& rng) {
  const int ny = state.num_outputs();
  const auto cells = enc.cells();
  DecoderTable table(enc.num_cells, ny);
  std::vector<double> member_logs;
  for (int z = 0; z < enc.num_cells; ++z) {
    for (Symbol y = 0; y < ny; ++y) {
      member_logs.clear();
      for (Symbol x : cells[z])
        member_logs.push_back(generalized_lambda(x, y, enc, state, rho).log_value);
      table.at(z, y) = cells[z][sample_index_from_log_weights(member_logs, rng)];
    }
  }
  return table;
}

// Log-weight of a specific expert, exp(eta * sum of matched-mass terms), used
// by the direct (enumerated) form of the exponential-weights law.
inline LogWeight expert_log_weight(const PartitionEncoder& enc, const DecoderTable& dec,
                                   const WeightState& state) {
  const int ny = state.num_outputs();
  double acc = 0.0;
  for (int z = 0; z < enc.num_cells; ++z)
    for (Symbol y = 0; y < ny; ++y) acc += state.log_lambda(dec.at(z, y), y);
  return LogWeight{acc};
}

}  // namespace wz
