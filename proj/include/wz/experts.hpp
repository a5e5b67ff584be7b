#pragma once

// Scalar source codes: canonical alphabet partitions (the encoders), the
// admissible decoder tables paired with them, and exact cost evaluators used
// both online and by the hindsight oracle.

#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>

#include "wz/core.hpp"

namespace wz {

// Partition of the alphabet into exactly M nonempty cells, stored in
// canonical form: cell indices appear in order of first occurrence as symbols
// are scanned in alphabet order, so relabelings of the same partition
// collapse to one object.
struct PartitionEncoder {
  std::vector<int> cell_of;  // symbol -> cell index in 0..M-1
  int num_cells = 0;

  int alphabet_size() const { return static_cast<int>(cell_of.size()); }
  int operator()(Symbol x) const { return cell_of[x]; }

  // Cell membership lists; within a cell, symbols ascend.
  std::vector<std::vector<Symbol>> cells() const {
    std::vector<std::vector<Symbol>> out(num_cells);
    for (Symbol x = 0; x < alphabet_size(); ++x) out[cell_of[x]].push_back(x);
    return out;
  }

  std::vector<int> cell_sizes() const {
    std::vector<int> out(num_cells, 0);
    for (int c : cell_of) ++out[c];
    return out;
  }

  bool is_canonical() const {
    int next = 0;
    for (int c : cell_of) {
      if (c > next) return false;
      if (c == next) ++next;
    }
    return next == num_cells;
  }

  friend bool operator==(const PartitionEncoder& a, const PartitionEncoder& b) {
    return a.cell_of == b.cell_of;
  }
};

// Relabel an arbitrary total assignment into first-occurrence order. Unused
// intermediate labels are compacted.
inline PartitionEncoder canonicalize(std::span<const int> assignment) {
  if (assignment.empty()) throw std::invalid_argument("empty cell assignment");
  std::vector<int> relabel;
  PartitionEncoder enc;
  enc.cell_of.reserve(assignment.size());
  for (int raw : assignment) {
    int found = -1;
    for (std::size_t i = 0; i < relabel.size(); ++i)
      if (relabel[i] == raw) {
        found = static_cast<int>(i);
        break;
      }
    if (found < 0) {
      found = static_cast<int>(relabel.size());
      relabel.push_back(raw);
    }
    enc.cell_of.push_back(found);
  }
  enc.num_cells = static_cast<int>(relabel.size());
  return enc;
}

// Interval partition from strictly increasing cut positions in 1..|X|-1:
// cell i holds the symbols whose 1-based position lies in (cut[i-1], cut[i]].
inline PartitionEncoder encoder_from_cuts(int alphabet_size, std::span<const int> cuts) {
  PartitionEncoder enc;
  enc.num_cells = static_cast<int>(cuts.size()) + 1;
  enc.cell_of.assign(alphabet_size, 0);
  int prev = 0;
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    const int c = cuts[i];
    if (c <= prev || c >= alphabet_size)
      throw std::invalid_argument("cut positions must be strictly increasing within 1..|X|-1");
    prev = c;
  }
  int cell = 0;
  std::size_t next_cut = 0;
  for (Symbol x = 0; x < alphabet_size; ++x) {
    while (next_cut < cuts.size() && x + 1 > cuts[next_cut]) {
      ++cell;
      ++next_cut;
    }
    enc.cell_of[x] = cell;
  }
  return enc;
}

// Inverse of encoder_from_cuts when the partition is an interval partition.
inline std::optional<std::vector<int>> cuts_of(const PartitionEncoder& enc) {
  std::vector<int> cuts;
  for (Symbol x = 1; x < enc.alphabet_size(); ++x) {
    if (enc.cell_of[x] == enc.cell_of[x - 1] + 1)
      cuts.push_back(x);
    else if (enc.cell_of[x] != enc.cell_of[x - 1])
      return std::nullopt;
  }
  if (static_cast<int>(cuts.size()) != enc.num_cells - 1) return std::nullopt;
  return cuts;
}

// Symmetric 0/1 relation matrix describing which symbols share a cell.
using PartitionMatrix = std::vector<std::vector<int>>;

// Checks the five defining properties: binary entries, unit diagonal,
// symmetry, transitivity, and consistency (related + unrelated => unrelated).
inline bool validate_partition_matrix(const PartitionMatrix& pm) {
  const std::size_t n = pm.size();
  if (n == 0) throw std::invalid_argument("empty partition matrix");
  for (const auto& row : pm)
    if (row.size() != n) throw std::invalid_argument("partition matrix not square");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (pm[i][j] != 0 && pm[i][j] != 1) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (pm[i][i] != 1) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (pm[i][j] != pm[j][i]) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        if (pm[i][j] == 1 && pm[i][k] == 1 && pm[j][k] != 1) return false;
        if (pm[i][j] == 1 && pm[i][k] == 0 && pm[j][k] != 0) return false;
      }
  return true;
}

inline PartitionMatrix partition_matrix_of(const PartitionEncoder& enc) {
  const int n = enc.alphabet_size();
  PartitionMatrix pm(n, std::vector<int>(n, 0));
  for (Symbol i = 0; i < n; ++i)
    for (Symbol j = 0; j < n; ++j) pm[i][j] = enc.cell_of[i] == enc.cell_of[j] ? 1 : 0;
  return pm;
}

inline PartitionEncoder encoder_from_partition_matrix(const PartitionMatrix& pm) {
  if (!validate_partition_matrix(pm)) throw std::invalid_argument("invalid partition matrix");
  std::vector<int> assignment(pm.size());
  for (std::size_t i = 0; i < pm.size(); ++i) {
    std::size_t j = 0;
    while (pm[i][j] == 0) ++j;  // first related symbol labels the cell
    assignment[i] = static_cast<int>(j);
  }
  return canonicalize(assignment);
}

// Number of admissible decoder tables for an encoder over num_outputs side
// symbols: the product of cell sizes, once per output symbol. Throws on
// 64-bit overflow.
inline std::uint64_t count_decoders(const PartitionEncoder& enc, int num_outputs) {
  std::uint64_t per_output = 1;
  for (int s : enc.cell_sizes()) {
    if (__builtin_mul_overflow(per_output, static_cast<std::uint64_t>(s), &per_output))
      throw std::overflow_error("decoder count overflows 64 bits");
  }
  std::uint64_t total = 1;
  for (int y = 0; y < num_outputs; ++y) {
    if (__builtin_mul_overflow(total, per_output, &total))
      throw std::overflow_error("decoder count overflows 64 bits");
  }
  return total;
}

inline std::uint64_t count_decoders(const PartitionEncoder& enc) {
  return count_decoders(enc, enc.alphabet_size());
}

// Reconstruction table: rows are transmitted cell indices, columns side
// symbols. Admissible tables only pick reconstructions from the transmitted
// cell.
struct DecoderTable {
  int num_cells = 0;
  int num_outputs = 0;
  std::vector<Symbol> entries;  // row-major (cell, side symbol)

  DecoderTable() = default;
  DecoderTable(int cells, int outputs)
      : num_cells(cells), num_outputs(outputs),
        entries(static_cast<std::size_t>(cells) * outputs, 0) {}

  Symbol& at(int cell, Symbol y) { return entries[static_cast<std::size_t>(cell) * num_outputs + y]; }
  Symbol at(int cell, Symbol y) const {
    return entries[static_cast<std::size_t>(cell) * num_outputs + y];
  }

  friend bool operator==(const DecoderTable& a, const DecoderTable& b) {
    return a.num_cells == b.num_cells && a.num_outputs == b.num_outputs && a.entries == b.entries;
  }
};

inline bool is_admissible(const DecoderTable& dec, const PartitionEncoder& enc) {
  if (dec.num_cells != enc.num_cells) return false;
  for (int z = 0; z < dec.num_cells; ++z)
    for (Symbol y = 0; y < dec.num_outputs; ++y) {
      const Symbol xhat = dec.at(z, y);
      if (xhat < 0 || xhat >= enc.alphabet_size() || enc.cell_of[xhat] != z) return false;
    }
  return true;
}

struct FixedRateExpert {
  PartitionEncoder encoder;
  DecoderTable decoder;
};

struct VariableRateExpert {
  PartitionEncoder encoder;
  std::vector<int> lengths;  // codeword length in bits per cell
  DecoderTable decoder;
};

// Cumulative expected distortion of a fixed code over a source sequence,
// summed per symbol.
inline double cumulative_distortion(const PartitionEncoder& enc, const DecoderTable& dec,
                                    std::span<const Symbol> x, const ChannelModel& channel,
                                    const DistortionMeasure& rho) {
  double acc = 0.0;
  for (Symbol xi : x) {
    const int z = enc(xi);
    acc += expected_symbol_distortion(
        xi, [&](Symbol y) { return dec.at(z, y); }, channel, rho);
  }
  return acc;
}

inline double cumulative_distortion(const FixedRateExpert& expert, std::span<const Symbol> x,
                                    const ChannelModel& channel, const DistortionMeasure& rho) {
  return cumulative_distortion(expert.encoder, expert.decoder, x, channel, rho);
}

// Same quantity from occurrence counts instead of the raw sequence.
inline double cumulative_distortion_from_counts(const PartitionEncoder& enc,
                                                const DecoderTable& dec,
                                                std::span<const long long> counts,
                                                const ChannelModel& channel,
                                                const DistortionMeasure& rho) {
  double acc = 0.0;
  for (Symbol x = 0; x < channel.size(); ++x) {
    if (counts[x] == 0) continue;
    const int z = enc(x);
    for (Symbol y = 0; y < channel.num_outputs(); ++y)
      acc += static_cast<double>(counts[x]) * channel(x, y) * rho(x, dec.at(z, y));
  }
  return acc;
}

inline double code_length_total(const PartitionEncoder& enc, std::span<const int> lengths,
                                std::span<const Symbol> x) {
  double bits = 0.0;
  for (Symbol xi : x) bits += lengths[enc(xi)];
  return bits;
}

// Distortion plus delta times encoded length.
inline double lagrangian_cost(const VariableRateExpert& expert, std::span<const Symbol> x,
                              const ChannelModel& channel, const DistortionMeasure& rho,
                              double delta) {
  return cumulative_distortion(expert.encoder, expert.decoder, x, channel, rho) +
         delta * code_length_total(expert.encoder, expert.lengths, x);
}

// --------------------------------------------------------------------------
// Enumeration helpers (desk-scale sets; used by oracles and tests).

namespace detail {

inline void all_partitions_rec(int alphabet_size, int M, Symbol x, std::vector<int>& assignment,
                               int used, std::vector<PartitionEncoder>& out) {
  if (x == alphabet_size) {
    if (used == M) {
      PartitionEncoder enc;
      enc.cell_of = assignment;
      enc.num_cells = M;
      out.push_back(std::move(enc));
    }
    return;
  }
  // Assigning in first-occurrence order keeps every emitted partition
  // canonical and emits each exactly once.
  const int limit = std::min(used, M - 1);
  for (int c = 0; c <= limit; ++c) {
    assignment[x] = c;
    all_partitions_rec(alphabet_size, M, x + 1, assignment, std::max(used, c + 1), out);
  }
}

}  // namespace detail

// All canonical partitions into exactly M cells.
inline std::vector<PartitionEncoder> all_partitions(int alphabet_size, int M) {
  if (M < 1 || M > alphabet_size) throw std::invalid_argument("cell count out of range");
  std::vector<int> assignment(alphabet_size, 0);
  std::vector<PartitionEncoder> out;
  detail::all_partitions_rec(alphabet_size, M, 0, assignment, 0, out);
  return out;
}

// All interval partitions (one per strictly increasing cut sequence), in
// lexicographic cut order. The family has C(|X|-1, M-1) members: M-1 cut
// positions drawn from {1..|X|-1}. A C(|X|, M-1) count is sometimes quoted
// for this construction; it would admit a cut at position |X|, which leaves
// the last cell empty, so the smaller binomial is the exact cardinality.
inline std::vector<PartitionEncoder> all_interval_encoders(int alphabet_size, int M) {
  if (M < 1 || M > alphabet_size) throw std::invalid_argument("cell count out of range");
  std::vector<PartitionEncoder> out;
  std::vector<int> cuts(M - 1);
  // iterate combinations of M-1 cut positions from 1..|X|-1
  for (int i = 0; i < M - 1; ++i) cuts[i] = i + 1;
  if (M == 1) {
    out.push_back(encoder_from_cuts(alphabet_size, {}));
    return out;
  }
  while (true) {
    out.push_back(encoder_from_cuts(alphabet_size, cuts));
    int i = M - 2;
    while (i >= 0 && cuts[i] == alphabet_size - 1 - (M - 2 - i)) --i;
    if (i < 0) break;
    ++cuts[i];
    for (int j = i + 1; j < M - 1; ++j) cuts[j] = cuts[j - 1] + 1;
  }
  return out;
}

// Every admissible decoder table for an encoder; guarded against blowup.
inline std::vector<DecoderTable> all_decoders(const PartitionEncoder& enc, int num_outputs,
                                              std::uint64_t guard = 2'000'000) {
  const std::uint64_t total = count_decoders(enc, num_outputs);
  if (total > guard) throw std::invalid_argument("decoder set too large to enumerate");
  const auto cells = enc.cells();
  std::vector<DecoderTable> out;
  out.reserve(total);
  DecoderTable current(enc.num_cells, num_outputs);
  // mixed-radix counter over (cell, output) positions
  const int positions = enc.num_cells * num_outputs;
  std::vector<int> digit(positions, 0);
  while (true) {
    for (int z = 0; z < enc.num_cells; ++z)
      for (Symbol y = 0; y < num_outputs; ++y)
        current.at(z, y) = cells[z][digit[z * num_outputs + y]];
    out.push_back(current);
    int p = positions - 1;
    while (p >= 0) {
      const int cell = p / num_outputs;
      if (++digit[p] < static_cast<int>(cells[cell].size())) break;
      digit[p] = 0;
      --p;
    }
    if (p < 0) break;
  }
  return out;
}

inline std::vector<DecoderTable> all_decoders(const PartitionEncoder& enc) {
  return all_decoders(enc, enc.alphabet_size());
}

// --------------------------------------------------------------------------
// Plain-text expert serialization: line 1 the cell assignment, line 2 the
// length set or "-", one decoder row per cell after that.

inline std::string expert_to_text(const PartitionEncoder& enc, const DecoderTable& dec,
                                  std::span<const int> lengths = {}) {
  std::ostringstream out;
  for (int i = 0; i < enc.alphabet_size(); ++i) out << (i ? " " : "") << enc.cell_of[i];
  out << "\n";
  if (lengths.empty()) {
    out << "-\n";
  } else {
    for (std::size_t i = 0; i < lengths.size(); ++i) out << (i ? " " : "") << lengths[i];
    out << "\n";
  }
  for (int z = 0; z < dec.num_cells; ++z) {
    for (Symbol y = 0; y < dec.num_outputs; ++y) out << (y ? " " : "") << dec.at(z, y);
    out << "\n";
  }
  return out.str();
}

inline VariableRateExpert expert_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("expert text: missing assignment line");
  std::vector<int> assignment;
  {
    std::istringstream ls(line);
    int v;
    while (ls >> v) assignment.push_back(v);
  }
  VariableRateExpert expert;
  expert.encoder = canonicalize(assignment);
  if (!std::getline(in, line)) throw std::runtime_error("expert text: missing length line");
  if (line != "-") {
    std::istringstream ls(line);
    int v;
    while (ls >> v) expert.lengths.push_back(v);
  }
  expert.decoder = DecoderTable(expert.encoder.num_cells, 0);
  std::vector<Symbol> entries;
  int rows = 0;
  while (std::getline(in, line) && !line.empty()) {
    std::istringstream ls(line);
    Symbol v;
    int width = 0;
    while (ls >> v) {
      entries.push_back(v);
      ++width;
    }
    if (expert.decoder.num_outputs == 0) expert.decoder.num_outputs = width;
    if (width != expert.decoder.num_outputs)
      throw std::runtime_error("expert text: ragged decoder rows");
    ++rows;
  }
  if (rows != expert.encoder.num_cells) throw std::runtime_error("expert text: wrong row count");
  expert.decoder.entries = std::move(entries);
  return expert;
}

}  // namespace wz
