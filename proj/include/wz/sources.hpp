#pragma once

// Test-signal generators for simulation campaigns: i.i.d. draws, first-order
// Markov chains, piecewise-switching mixtures (the natural stress test for a
// best-expert-in-hindsight comparison), and symbol files.

#include <fstream>

#include "wz/core.hpp"

namespace wz {

struct SourceSpec {
  enum class Kind { uniform, iid, markov, switching, file };
  Kind kind = Kind::uniform;
  std::vector<double> probs;                    // iid
  std::vector<std::vector<double>> transition;  // markov rows
  long long segment_length = 0;                 // switching
  std::vector<std::vector<double>> segments;    // switching distributions
  std::string path;                             // file

  // Formats: "uniform" | "iid:p1,p2,..." | "markov:r1;r2;..." (rows of
  // comma-separated probabilities) | "switching:len;p1,..;q1,.." | "file:path"
  static SourceSpec parse(const std::string& text);
};

namespace detail {

inline std::vector<double> parse_prob_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stod(token));
  }
  if (out.empty()) throw std::invalid_argument("empty probability list");
  return out;
}

inline void require_distribution(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument("negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("probabilities must sum to 1");
}

}  // namespace detail

inline SourceSpec SourceSpec::parse(const std::string& text) {
  SourceSpec spec;
  if (text.empty() || text == "uniform") return spec;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "iid") {
    spec.kind = Kind::iid;
    spec.probs = detail::parse_prob_list(rest);
    detail::require_distribution(spec.probs);
  } else if (head == "markov") {
    spec.kind = Kind::markov;
    std::istringstream in(rest);
    std::string row;
    while (std::getline(in, row, ';')) {
      spec.transition.push_back(detail::parse_prob_list(row));
      detail::require_distribution(spec.transition.back());
    }
    if (spec.transition.empty()) throw std::invalid_argument("markov: no rows");
    for (const auto& r : spec.transition)
      if (r.size() != spec.transition.size())
        throw std::invalid_argument("markov: matrix must be square");
  } else if (head == "switching") {
    spec.kind = Kind::switching;
    std::istringstream in(rest);
    std::string part;
    if (!std::getline(in, part, ';')) throw std::invalid_argument("switching: missing length");
    spec.segment_length = std::stoll(part);
    if (spec.segment_length < 1) throw std::invalid_argument("switching: length must be >= 1");
    while (std::getline(in, part, ';')) {
      spec.segments.push_back(detail::parse_prob_list(part));
      detail::require_distribution(spec.segments.back());
    }
    if (spec.segments.empty()) throw std::invalid_argument("switching: no distributions");
  } else if (head == "file") {
    spec.kind = Kind::file;
    spec.path = rest;
    if (spec.path.empty()) throw std::invalid_argument("file: missing path");
  } else {
    throw std::invalid_argument("unknown source spec: " + text);
  }
  return spec;
}

inline std::vector<Symbol> generate_source(const SourceSpec& spec, int alphabet, long long n,
                                           Rng rng) {
  std::vector<Symbol> x;
  x.reserve(n);
  switch (spec.kind) {
    case SourceSpec::Kind::uniform: {
      for (long long i = 0; i < n; ++i)
        x.push_back(static_cast<Symbol>(rng.uniform() * alphabet));
      break;
    }
    case SourceSpec::Kind::iid: {
      if (static_cast<int>(spec.probs.size()) != alphabet)
        throw std::invalid_argument("iid source: distribution size mismatch");
      for (long long i = 0; i < n; ++i) x.push_back(sample_index_from_probs(spec.probs, rng));
      break;
    }
    case SourceSpec::Kind::markov: {
      if (static_cast<int>(spec.transition.size()) != alphabet)
        throw std::invalid_argument("markov source: matrix size mismatch");
      Symbol state = static_cast<Symbol>(rng.uniform() * alphabet);
      for (long long i = 0; i < n; ++i) {
        x.push_back(state);
        state = sample_index_from_probs(spec.transition[state], rng);
      }
      break;
    }
    case SourceSpec::Kind::switching: {
      for (const auto& seg : spec.segments)
        if (static_cast<int>(seg.size()) != alphabet)
          throw std::invalid_argument("switching source: distribution size mismatch");
      for (long long i = 0; i < n; ++i) {
        const std::size_t seg =
            static_cast<std::size_t>(i / spec.segment_length) % spec.segments.size();
        x.push_back(sample_index_from_probs(spec.segments[seg], rng));
      }
      break;
    }
    case SourceSpec::Kind::file: {
      std::ifstream in(spec.path);
      if (!in) throw std::runtime_error("cannot open source file: " + spec.path);
      Symbol s;
      while (static_cast<long long>(x.size()) < n && in >> s) {
        if (s < 0 || s >= alphabet)
          throw std::runtime_error("source file symbol out of range");
        x.push_back(s);
      }
      if (static_cast<long long>(x.size()) < n)
        throw std::runtime_error("source file shorter than the requested horizon");
      break;
    }
  }
  return x;
}

}  // namespace wz
