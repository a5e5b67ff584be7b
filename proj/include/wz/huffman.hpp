#pragma once

// Prefix-code machinery for the variable-rate schemes: length sets with
// exact Kraft arithmetic, canonical codebooks, bit-exact stream coding, and
// the bitstream container format.

#include <cstdint>
#include <cstring>

#include "wz/core.hpp"

namespace wz {

// Ordered codeword lengths in bits, one per cell index.
using LengthSet = std::vector<int>;

inline double kraft_sum(const LengthSet& lengths) {
  if (lengths.empty()) throw std::invalid_argument("empty length set");
  int max_len = 0;
  for (int l : lengths) {
    if (l < 1 || l > 62) throw std::invalid_argument("codeword length outside 1..62");
    max_len = std::max(max_len, l);
  }
  // exact: sum of 2^(max-l) over the common denominator 2^max
  std::uint64_t numerator = 0;
  const std::uint64_t denominator = 1ULL << max_len;
  for (int l : lengths) numerator += 1ULL << (max_len - l);
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

// Exact test for kraft_sum == 1 (complete codes).
inline bool kraft_equality(const LengthSet& lengths) {
  int max_len = 0;
  for (int l : lengths) {
    if (l < 1 || l > 62) return false;
    max_len = std::max(max_len, l);
  }
  std::uint64_t numerator = 0;
  for (int l : lengths) numerator += 1ULL << (max_len - l);
  return numerator == (1ULL << max_len);
}

struct Codeword {
  std::uint32_t value = 0;  // MSB-first: bit i of the word is (value >> (length-1-i)) & 1
  int length = 0;
};

struct DecodeError : std::runtime_error {
  std::uint64_t bit_position;
  explicit DecodeError(std::uint64_t pos)
      : std::runtime_error("bitstream truncated or not a codeword at bit " + std::to_string(pos)),
        bit_position(pos) {}
};

// Canonical prefix codebook for a length set: codewords are assigned in
// increasing numeric order when sorted by (length, index), so the book is a
// deterministic function of the lengths alone.
struct Codebook {
  std::vector<Codeword> words;  // word i encodes cell index i

  static Codebook canonical(const LengthSet& lengths) {
    if (kraft_sum(lengths) > 1.0)
      throw std::invalid_argument("length set violates prefix-code feasibility");
    const int m = static_cast<int>(lengths.size());
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return lengths[a] != lengths[b] ? lengths[a] < lengths[b] : a < b;
    });
    Codebook book;
    book.words.resize(m);
    std::uint32_t code = 0;
    int prev_len = 0;
    for (int idx : order) {
      const int len = lengths[idx];
      code <<= (len - prev_len);
      book.words[idx] = Codeword{code, len};
      ++code;
      prev_len = len;
    }
    return book;
  }

  int size() const { return static_cast<int>(words.size()); }
};

inline bool is_prefix_free(const Codebook& book) {
  for (int i = 0; i < book.size(); ++i)
    for (int j = 0; j < book.size(); ++j) {
      if (i == j) continue;
      const auto& a = book.words[i];
      const auto& b = book.words[j];
      if (a.length <= b.length && (b.value >> (b.length - a.length)) == a.value) return false;
    }
  return true;
}

// Packed bit sequence, MSB-first within each byte.
struct BitStream {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bit_count = 0;

  void append_bit(int bit) {
    const int offset = static_cast<int>(bit_count & 7);
    if (offset == 0) bytes.push_back(0);
    if (bit) bytes.back() |= static_cast<std::uint8_t>(0x80u >> offset);
    ++bit_count;
  }

  void append_word(std::uint64_t value, int length) {
    for (int i = length - 1; i >= 0; --i) append_bit(static_cast<int>((value >> i) & 1));
  }

  int bit(std::uint64_t pos) const {
    return (bytes[pos >> 3] >> (7 - (pos & 7))) & 1;
  }
};

class BitReader {
 public:
  explicit BitReader(const BitStream& stream) : stream_(stream) {}

  bool exhausted() const { return pos_ >= stream_.bit_count; }
  std::uint64_t position() const { return pos_; }

  int read_bit() {
    if (pos_ >= stream_.bit_count) throw DecodeError(pos_);
    return stream_.bit(pos_++);
  }

  std::uint64_t read_word(int length) {
    std::uint64_t v = 0;
    for (int i = 0; i < length; ++i) v = (v << 1) | static_cast<std::uint64_t>(read_bit());
    return v;
  }

 private:
  const BitStream& stream_;
  std::uint64_t pos_ = 0;
};

inline void append_codeword(BitStream& stream, const Codebook& book, int index) {
  const auto& w = book.words[index];
  stream.append_word(w.value, w.length);
}

inline BitStream encode_stream(std::span<const int> cell_indices, const Codebook& book) {
  BitStream out;
  for (int z : cell_indices) {
    if (z < 0 || z >= book.size()) throw std::out_of_range("cell index outside codebook");
    append_codeword(out, book, z);
  }
  return out;
}

// Instantaneous decode of one codeword; throws DecodeError with the bit
// position on truncation or an impossible prefix.
inline int decode_symbol(BitReader& reader, const Codebook& book) {
  const std::uint64_t start = reader.position();
  std::uint32_t acc = 0;
  int len = 0;
  while (len < 32) {
    if (reader.exhausted()) throw DecodeError(start);
    acc = (acc << 1) | static_cast<std::uint32_t>(reader.read_bit());
    ++len;
    for (int i = 0; i < book.size(); ++i)
      if (book.words[i].length == len && book.words[i].value == acc) return i;
  }
  throw DecodeError(start);
}

inline std::vector<int> decode_stream(const BitStream& stream, const Codebook& book) {
  BitReader reader(stream);
  std::vector<int> out;
  while (!reader.exhausted()) out.push_back(decode_symbol(reader, book));
  return out;
}

// Container file: magic "WZVR", bit count as 8-byte little-endian, packed bits.
inline void write_bitstream(std::ostream& out, const BitStream& stream) {
  out.write("WZVR", 4);
  std::uint64_t count = stream.bit_count;
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((count >> (8 * i)) & 0xff);
  out.write(buf, 8);
  out.write(reinterpret_cast<const char*>(stream.bytes.data()),
            static_cast<std::streamsize>(stream.bytes.size()));
}

inline BitStream read_bitstream(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "WZVR", 4) != 0)
    throw std::runtime_error("bitstream file: bad magic");
  char buf[8];
  in.read(buf, 8);
  if (in.gcount() != 8) throw std::runtime_error("bitstream file: truncated header");
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i)
    count |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  BitStream stream;
  stream.bit_count = count;
  stream.bytes.resize((count + 7) / 8);
  in.read(reinterpret_cast<char*>(stream.bytes.data()),
          static_cast<std::streamsize>(stream.bytes.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != stream.bytes.size())
    throw std::runtime_error("bitstream file: truncated payload");
  return stream;
}

// All complete length sets (Kraft sum exactly 1) with entries in 1..max_len,
// in lexicographic order.
inline std::vector<LengthSet> all_length_sets(int M, int max_len) {
  std::vector<LengthSet> out;
  LengthSet current(M);
  // depth-first over the lengths with an exact fractional budget
  const std::uint64_t denom = 1ULL << max_len;
  auto rec = [&](auto&& self, int i, std::uint64_t used) -> void {
    if (i == M) {
      if (used == denom) out.push_back(current);
      return;
    }
    for (int l = 1; l <= max_len; ++l) {
      const std::uint64_t share = denom >> l;
      if (used + share > denom) continue;
      current[i] = l;
      self(self, i + 1, used + share);
    }
  };
  rec(rec, 0, 0);
  return out;
}

}  // namespace wz
