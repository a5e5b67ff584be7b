#pragma once

// Shared primitives for the online side-information coding schemes:
// finite alphabets, the decoder-side memoryless channel, bounded distortion
// tables, log-domain weight arithmetic, and reproducible randomness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wz {

using Symbol = int;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Ordered finite alphabet; symbols are 0..size-1. The 1-based position of a
// symbol on the input axis is x+1.
struct Alphabet {
  int size = 0;

  explicit Alphabet(int n) : size(n) {
    if (n < 2) throw std::invalid_argument("alphabet size must be >= 2");
  }
  bool contains(Symbol x) const { return x >= 0 && x < size; }
  void require(Symbol x) const {
    if (!contains(x)) throw std::out_of_range("symbol out of alphabet range");
  }
  int numeral(Symbol x) const { return x + 1; }
};

// A nonnegative weight carried as its natural logarithm; -inf encodes zero.
// Weights multiply by adding logs; sums go through log_sum_exp.
struct LogWeight {
  double log_value = 0.0;

  static LogWeight one() { return LogWeight{0.0}; }
  static LogWeight zero() { return LogWeight{kNegInf}; }
  bool is_zero() const { return log_value == kNegInf; }

  friend LogWeight operator*(LogWeight a, LogWeight b) {
    return LogWeight{a.log_value + b.log_value};
  }
  LogWeight& operator*=(LogWeight other) {
    log_value += other.log_value;
    return *this;
  }
};

// log(exp(a) + exp(b)) with max-subtraction.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp of empty sequence");
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

inline LogWeight log_sum_exp(std::span<const LogWeight> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp of empty sequence");
  double m = kNegInf;
  for (LogWeight v : values) m = std::max(m, v.log_value);
  if (m == kNegInf) return LogWeight::zero();
  double s = 0.0;
  for (LogWeight v : values) s += std::exp(v.log_value - m);
  return LogWeight{m + std::log(s)};
}

// --------------------------------------------------------------------------
// Randomness. One master seed per session; independent named sub-streams so
// that source, channel and scheme draws never perturb each other. Uniform
// doubles are produced from raw engine words, keeping runs bit-identical
// across platforms.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  // Independent stream derived from the master seed and a stream name.
  Rng stream(std::string_view name) const {
    return Rng(detail::splitmix64(seed_ ^ detail::fnv1a(name)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Draw an index with probability proportional to exp(logw[i]) using a single
// uniform; a draw landing exactly on a cumulative boundary resolves toward
// the lower index, and zero-weight entries are never returned.
inline int sample_index_from_log_weights(std::span<const double> logw, Rng& rng) {
  if (logw.empty()) throw std::invalid_argument("sampling from empty weight list");
  double m = kNegInf;
  for (double v : logw) m = std::max(m, v);
  if (m == kNegInf) throw std::invalid_argument("all sampling weights are zero");
  double total = 0.0;
  for (double v : logw) total += std::exp(v - m);
  const double target = rng.uniform() * total;
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    const double p = std::exp(logw[i] - m);
    if (p <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += p;
    if (target <= cum) return last_positive;
  }
  return last_positive;
}

inline int sample_index_from_probs(std::span<const double> probs, Rng& rng) {
  const double target = rng.uniform();
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (target <= cum) return last_positive;
  }
  return last_positive >= 0 ? last_positive : static_cast<int>(probs.size()) - 1;
}

// --------------------------------------------------------------------------
// Plain-text matrix format: first line is the row count, then one
// whitespace-separated row per line.

inline std::vector<std::vector<double>> load_matrix(std::istream& in) {
  int n = 0;
  if (!(in >> n) || n <= 0) throw std::runtime_error("matrix file: bad size line");
  std::vector<std::vector<double>> rows(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!(in >> rows[i][j])) throw std::runtime_error("matrix file: truncated row");
  return rows;
}

inline void save_matrix(std::ostream& out, const std::vector<std::vector<double>>& rows) {
  out << rows.size() << "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? " " : "") << r[j];
    out << "\n";
  }
}

// --------------------------------------------------------------------------
// Side-information channel: row x holds the conditional distribution of the
// decoder's observation given source symbol x. Square for the standard
// setting; a single-column instance models the no-side-information case.

class ChannelModel {
 public:
  ChannelModel(std::vector<std::vector<double>> rows, int num_outputs)
      : matrix_(std::move(rows)), outputs_(num_outputs) {
    validate();
  }
  explicit ChannelModel(std::vector<std::vector<double>> rows)
      : matrix_(std::move(rows)),
        outputs_(matrix_.empty() ? 0 : static_cast<int>(matrix_[0].size())) {
    validate();
  }

  static ChannelModel identity(int n) {
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) m[i][i] = 1.0;
    return ChannelModel(std::move(m), n);
  }

  // Binary symmetric channel with crossover eps.
  static ChannelModel bsc(double eps) {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("bsc crossover outside [0,1]");
    return ChannelModel({{1.0 - eps, eps}, {eps, 1.0 - eps}}, 2);
  }

  // Symmetric channel over n symbols: crossover mass eps spread evenly over
  // the other symbols. Coincides with bsc for n = 2.
  static ChannelModel symmetric(int n, double eps) {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("crossover outside [0,1]");
    std::vector<std::vector<double>> m(n, std::vector<double>(n, eps / (n - 1)));
    for (int i = 0; i < n; ++i) m[i][i] = 1.0 - eps;
    return ChannelModel(std::move(m), n);
  }

  static ChannelModel uniform(int n) {
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0 / n));
    return ChannelModel(std::move(m), n);
  }

  // Degenerate channel: the decoder observes a constant symbol, i.e. no
  // usable side information.
  static ChannelModel no_side_info(int n) {
    std::vector<std::vector<double>> m(n, std::vector<double>(1, 1.0));
    return ChannelModel(std::move(m), 1);
  }

  static ChannelModel load(std::istream& in) { return ChannelModel(load_matrix(in)); }

  int size() const { return static_cast<int>(matrix_.size()); }
  int num_outputs() const { return outputs_; }
  double operator()(Symbol x, Symbol y) const { return matrix_[x][y]; }
  const std::vector<double>& row(Symbol x) const { return matrix_[x]; }

 private:
  void validate() const {
    if (matrix_.empty()) throw std::invalid_argument("channel matrix is empty");
    for (const auto& r : matrix_) {
      if (static_cast<int>(r.size()) != outputs_)
        throw std::invalid_argument("channel matrix row width mismatch");
      double sum = 0.0;
      for (double p : r) {
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("channel entry outside [0,1]");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("channel matrix row does not sum to 1");
    }
  }

  std::vector<std::vector<double>> matrix_;
  int outputs_;
};

// Bounded per-pair distortion table.
class DistortionMeasure {
 public:
  DistortionMeasure(std::vector<std::vector<double>> table, double bound)
      : table_(std::move(table)), bound_(bound) {
    for (const auto& r : table_) {
      if (r.size() != table_.size()) throw std::invalid_argument("distortion table not square");
      for (double v : r)
        if (v < 0.0 || v > bound_ + 1e-15)
          throw std::invalid_argument("distortion entry outside [0, bound]");
    }
  }

  static DistortionMeasure hamming(int n) {
    std::vector<std::vector<double>> t(n, std::vector<double>(n, 1.0));
    for (int i = 0; i < n; ++i) t[i][i] = 0.0;
    return DistortionMeasure(std::move(t), 1.0);
  }

  // Squared difference on the unit grid {0, 1/(n-1), ..., 1}.
  static DistortionMeasure squared_on_grid(int n) {
    std::vector<std::vector<double>> t(n, std::vector<double>(n, 0.0));
    const double step = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double d = (i - j) * step;
        t[i][j] = d * d;
      }
    return DistortionMeasure(std::move(t), 1.0);
  }

  static DistortionMeasure load(std::istream& in) {
    auto t = load_matrix(in);
    double b = 0.0;
    for (const auto& r : t)
      for (double v : r) b = std::max(b, v);
    return DistortionMeasure(std::move(t), b);
  }

  int size() const { return static_cast<int>(table_.size()); }
  double bound() const { return bound_; }
  double operator()(Symbol x, Symbol xhat) const { return table_[x][xhat]; }

  // True when the table depends only on |x - xhat| (quantizer setting).
  bool is_symmetric_difference() const {
    const int n = size();
    for (int d = 0; d < n; ++d) {
      const double ref = table_[0][d];
      for (int x = 0; x < n; ++x) {
        if (x + d < n && std::abs(table_[x][x + d] - ref) > 1e-12) return false;
        if (x - d >= 0 && std::abs(table_[x][x - d] - ref) > 1e-12) return false;
      }
    }
    return true;
  }

 private:
  std::vector<std::vector<double>> table_;
  double bound_;
};

inline double hamming(const Alphabet& alphabet, Symbol x, Symbol xhat) {
  alphabet.require(x);
  alphabet.require(xhat);
  return x == xhat ? 0.0 : 1.0;
}

// Expected distortion of one source symbol under a fixed reconstruction rule,
// averaging over the channel output.
template <typename ReconstructFn>
double expected_symbol_distortion(Symbol x, ReconstructFn&& reconstruct,
                                  const ChannelModel& channel, const DistortionMeasure& rho) {
  double acc = 0.0;
  for (Symbol y = 0; y < channel.num_outputs(); ++y) {
    const double p = channel(x, y);
    if (p > 0.0) acc += p * rho(x, reconstruct(y));
  }
  return acc;
}

inline Symbol sample_side_info(Symbol x, const ChannelModel& channel, Rng& rng) {
  return sample_index_from_probs(channel.row(x), rng);
}

}  // namespace wz
