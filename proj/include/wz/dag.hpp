#pragma once

// Layered acyclic graphs whose source-to-sink paths enumerate structured
// encoder sets: interval partitions of the alphabet, complete prefix-code
// length sets on the dyadic probability axis, and their product. Backward
// weight pushing gives every vertex the total weight of its suffix paths,
// which turns exact path sampling into a sequence of local choices.

#include <cstdint>

#include "wz/core.hpp"
#include "wz/huffman.hpp"
#include "wz/weighting.hpp"

namespace wz {

struct DagVertex {
  int level = 0;  // 0 = source layer, num_levels = sink layer
  int z = 0;      // position on the input-alphabet axis (0..|X|)
  int qnum = 0;   // numerator of the probability-axis position over lambda
};

struct DagEdge {
  int from = 0, to = 0;
  int z = 0, zhat = 0;          // alphabet segment (z, zhat]; zhat == z when unused
  int qnum = 0, qhat_num = 0;   // probability step (qnum, qhat_num] / lambda
  int length_bits = 0;          // log2 of the inverse probability step; 0 when unused
  int level = 0;                // level of the target vertex (1-based decision index)
};

struct LayeredDag {
  int num_levels = 0;  // M decisions per path
  int alphabet = 0;    // |X|, or 0 for probability-only graphs
  int lambda = 0;      // probability-axis denominator, or 0 for alphabet-only graphs
  std::vector<DagVertex> vertices;
  std::vector<DagEdge> edges;
  std::vector<std::vector<int>> out_edges;  // per vertex, in canonical label order
  int source = 0, sink = 0;

  int segment_width(int edge_id) const {
    return edges[edge_id].zhat - edges[edge_id].z;
  }

  std::uint64_t count_paths() const {
    std::vector<std::uint64_t> suffix(vertices.size(), 0);
    suffix[sink] = 1;
    for (int v = static_cast<int>(vertices.size()) - 1; v >= 0; --v) {
      if (v == sink) continue;
      std::uint64_t acc = 0;
      for (int e : out_edges[v]) acc += suffix[edges[e].to];
      suffix[v] = acc;
    }
    return suffix[source];
  }

  // All source-to-sink paths as edge-id sequences; guarded against blowup.
  std::vector<std::vector<int>> enumerate_paths(std::uint64_t guard = 1'000'000) const {
    if (count_paths() > guard) throw std::invalid_argument("too many paths to enumerate");
    std::vector<std::vector<int>> out;
    std::vector<int> current;
    auto rec = [&](auto&& self, int v) -> void {
      if (v == sink) {
        out.push_back(current);
        return;
      }
      for (int e : out_edges[v]) {
        current.push_back(e);
        self(self, edges[e].to);
        current.pop_back();
      }
    };
    rec(rec, source);
    return out;
  }

  // Cut positions of a path on the alphabet axis (intermediate vertices).
  std::vector<int> cuts_of_path(std::span<const int> path) const {
    std::vector<int> cuts;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) cuts.push_back(edges[path[i]].zhat);
    return cuts;
  }

  // Codeword lengths of a path on the probability axis, one per level.
  LengthSet lengths_of_path(std::span<const int> path) const {
    LengthSet lengths;
    for (int e : path) lengths.push_back(edges[e].length_bits);
    return lengths;
  }
};

namespace detail {

// Drop every vertex and edge that does not lie on a complete source-to-sink
// path, then reindex. Keeps per-vertex edge order stable.
inline void clean_dag(LayeredDag& dag) {
  const int n = static_cast<int>(dag.vertices.size());
  std::vector<char> fwd(n, 0), bwd(n, 0);
  fwd[dag.source] = 1;
  for (int v = 0; v < n; ++v) {
    if (!fwd[v]) continue;
    for (int e : dag.out_edges[v]) fwd[dag.edges[e].to] = 1;
  }
  bwd[dag.sink] = 1;
  for (int v = n - 1; v >= 0; --v) {
    for (int e : dag.out_edges[v])
      if (bwd[dag.edges[e].to]) bwd[v] = 1;
  }
  std::vector<int> vertex_map(n, -1);
  LayeredDag cleaned;
  cleaned.num_levels = dag.num_levels;
  cleaned.alphabet = dag.alphabet;
  cleaned.lambda = dag.lambda;
  for (int v = 0; v < n; ++v) {
    if (!(fwd[v] && bwd[v])) continue;
    vertex_map[v] = static_cast<int>(cleaned.vertices.size());
    cleaned.vertices.push_back(dag.vertices[v]);
  }
  cleaned.out_edges.resize(cleaned.vertices.size());
  for (int v = 0; v < n; ++v) {
    if (vertex_map[v] < 0) continue;
    for (int e : dag.out_edges[v]) {
      const DagEdge& edge = dag.edges[e];
      if (vertex_map[edge.to] < 0) continue;
      DagEdge copy = edge;
      copy.from = vertex_map[v];
      copy.to = vertex_map[edge.to];
      cleaned.out_edges[copy.from].push_back(static_cast<int>(cleaned.edges.size()));
      cleaned.edges.push_back(copy);
    }
  }
  if (vertex_map[dag.source] < 0 || vertex_map[dag.sink] < 0) {
    // no complete path exists; keep bare endpoints so the graph reports an
    // empty path set instead of becoming malformed
    cleaned.vertices = {dag.vertices[dag.source], dag.vertices[dag.sink]};
    cleaned.edges.clear();
    cleaned.out_edges.assign(2, {});
    cleaned.source = 0;
    cleaned.sink = 1;
    dag = std::move(cleaned);
    return;
  }
  cleaned.source = vertex_map[dag.source];
  cleaned.sink = vertex_map[dag.sink];
  dag = std::move(cleaned);
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline int log2_exact(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

}  // namespace detail

// Paths correspond one-to-one with strictly increasing cut sequences, i.e.
// with interval partitions of the alphabet into num_cells segments.
inline LayeredDag build_interval_graph(int alphabet_size, int num_cells) {
  if (num_cells < 2 || num_cells > alphabet_size)
    throw std::invalid_argument("cell count must lie in 2..|X|");
  LayeredDag dag;
  dag.num_levels = num_cells;
  dag.alphabet = alphabet_size;
  auto add_vertex = [&](int level, int z) {
    dag.vertices.push_back(DagVertex{level, z, 0});
    return static_cast<int>(dag.vertices.size()) - 1;
  };
  std::vector<std::vector<int>> layer(num_cells + 1);
  dag.source = add_vertex(0, 0);
  layer[0] = {dag.source};
  for (int j = 1; j < num_cells; ++j)
    for (int z = 1; z < alphabet_size; ++z) layer[j].push_back(add_vertex(j, z));
  dag.sink = add_vertex(num_cells, alphabet_size);
  layer[num_cells] = {dag.sink};
  dag.out_edges.resize(dag.vertices.size());
  for (int j = 1; j <= num_cells; ++j)
    for (int from : layer[j - 1])
      for (int to : layer[j]) {
        if (dag.vertices[to].z <= dag.vertices[from].z) continue;
        DagEdge e;
        e.from = from;
        e.to = to;
        e.z = dag.vertices[from].z;
        e.zhat = dag.vertices[to].z;
        e.level = j;
        dag.out_edges[from].push_back(static_cast<int>(dag.edges.size()));
        dag.edges.push_back(e);
      }
  detail::clean_dag(dag);
  return dag;
}

// Paths correspond one-to-one with complete length sets: every step advances
// the probability axis by a dyadic amount, and the sink is reached only when
// the steps sum to exactly one.
inline LayeredDag build_huffman_graph(int num_words, int lambda) {
  if (num_words < 2) throw std::invalid_argument("need at least two codewords");
  if (!detail::is_power_of_two(lambda) || lambda < 2 ||
      detail::log2_exact(lambda) > num_words)
    throw std::invalid_argument("lambda must be 2^l with 1 <= l <= codeword count");
  LayeredDag dag;
  dag.num_levels = num_words;
  dag.lambda = lambda;
  const int depth = detail::log2_exact(lambda);
  auto add_vertex = [&](int level, int qnum) {
    dag.vertices.push_back(DagVertex{level, 0, qnum});
    return static_cast<int>(dag.vertices.size()) - 1;
  };
  std::vector<std::vector<int>> layer(num_words + 1);
  dag.source = add_vertex(0, 0);
  layer[0] = {dag.source};
  for (int j = 1; j < num_words; ++j)
    for (int q = 1; q < lambda; ++q) layer[j].push_back(add_vertex(j, q));
  dag.sink = add_vertex(num_words, lambda);
  layer[num_words] = {dag.sink};
  dag.out_edges.resize(dag.vertices.size());
  for (int j = 1; j <= num_words; ++j)
    for (int from : layer[j - 1])
      for (int to : layer[j]) {
        const int width = dag.vertices[to].qnum - dag.vertices[from].qnum;
        if (width <= 0 || !detail::is_power_of_two(width)) continue;
        const int bits = depth - detail::log2_exact(width);
        if (bits < 1) continue;  // probability steps stay at most 1/2
        DagEdge e;
        e.from = from;
        e.to = to;
        e.qnum = dag.vertices[from].qnum;
        e.qhat_num = dag.vertices[to].qnum;
        e.length_bits = bits;
        e.level = j;
        dag.out_edges[from].push_back(static_cast<int>(dag.edges.size()));
        dag.edges.push_back(e);
      }
  detail::clean_dag(dag);
  return dag;
}

// Product construction: each path picks a cut sequence and a complete length
// set simultaneously, one (segment, probability step) pair per level.
inline LayeredDag build_lc_graph(int alphabet_size, int num_cells, int lambda) {
  if (num_cells < 2 || num_cells > alphabet_size)
    throw std::invalid_argument("cell count must lie in 2..|X|");
  if (!detail::is_power_of_two(lambda) || lambda < 2 ||
      detail::log2_exact(lambda) > num_cells)
    throw std::invalid_argument("lambda must be 2^l with 1 <= l <= cell count");
  LayeredDag dag;
  dag.num_levels = num_cells;
  dag.alphabet = alphabet_size;
  dag.lambda = lambda;
  const int depth = detail::log2_exact(lambda);
  auto add_vertex = [&](int level, int z, int qnum) {
    dag.vertices.push_back(DagVertex{level, z, qnum});
    return static_cast<int>(dag.vertices.size()) - 1;
  };
  std::vector<std::vector<int>> layer(num_cells + 1);
  dag.source = add_vertex(0, 0, 0);
  layer[0] = {dag.source};
  for (int j = 1; j < num_cells; ++j)
    for (int z = 1; z < alphabet_size; ++z)
      for (int q = 1; q < lambda; ++q) layer[j].push_back(add_vertex(j, z, q));
  dag.sink = add_vertex(num_cells, alphabet_size, lambda);
  layer[num_cells] = {dag.sink};
  dag.out_edges.resize(dag.vertices.size());
  for (int j = 1; j <= num_cells; ++j)
    for (int from : layer[j - 1])
      for (int to : layer[j]) {
        if (dag.vertices[to].z <= dag.vertices[from].z) continue;
        const int width = dag.vertices[to].qnum - dag.vertices[from].qnum;
        if (width <= 0 || !detail::is_power_of_two(width)) continue;
        const int bits = depth - detail::log2_exact(width);
        if (bits < 1) continue;
        DagEdge e;
        e.from = from;
        e.to = to;
        e.z = dag.vertices[from].z;
        e.zhat = dag.vertices[to].z;
        e.qnum = dag.vertices[from].qnum;
        e.qhat_num = dag.vertices[to].qnum;
        e.length_bits = bits;
        e.level = j;
        dag.out_edges[from].push_back(static_cast<int>(dag.edges.size()));
        dag.edges.push_back(e);
      }
  detail::clean_dag(dag);
  return dag;
}

// --------------------------------------------------------------------------
// Backward weight pushing and sequential path sampling. Edge weights live in
// a session-owned buffer parallel to dag.edges; the topology is shared.

struct WpaValues {
  std::vector<double> log_g;  // per vertex: log total weight of suffix paths
};

inline WpaValues wpa_backward(const LayeredDag& dag, std::span<const double> edge_log_weights) {
  WpaValues values;
  values.log_g.assign(dag.vertices.size(), kNegInf);
  values.log_g[dag.sink] = 0.0;
  std::vector<double> terms;
  // vertices were created in increasing level order, so a reverse sweep
  // touches each edge exactly once
  for (int v = static_cast<int>(dag.vertices.size()) - 1; v >= 0; --v) {
    if (v == dag.sink) continue;
    terms.clear();
    for (int e : dag.out_edges[v])
      terms.push_back(edge_log_weights[e] + values.log_g[dag.edges[e].to]);
    if (terms.empty()) throw std::logic_error("non-sink vertex without outgoing edges");
    values.log_g[v] = log_sum_exp(std::span<const double>(terms));
  }
  return values;
}

inline double path_log_weight(std::span<const int> path, std::span<const double> edge_log_weights) {
  double acc = 0.0;
  for (int e : path) acc += edge_log_weights[e];
  return acc;
}

// Draw a source-to-sink path with probability proportional to its weight
// product: at each vertex the next edge is drawn with probability
// weight(edge) * G(target) / G(vertex). Consumes exactly one uniform per
// level, even when only one edge leaves the vertex.
inline std::vector<int> sample_path(const LayeredDag& dag, const WpaValues& values,
                                    std::span<const double> edge_log_weights, Rng& rng) {
  std::vector<int> path;
  path.reserve(dag.num_levels);
  int v = dag.source;
  std::vector<double> logs;
  while (v != dag.sink) {
    logs.clear();
    for (int e : dag.out_edges[v])
      logs.push_back(edge_log_weights[e] + values.log_g[dag.edges[e].to]);
    const int pick = sample_index_from_log_weights(logs, rng);
    const int edge_id = dag.out_edges[v][pick];
    path.push_back(edge_id);
    v = dag.edges[edge_id].to;
  }
  return path;
}

// --------------------------------------------------------------------------
// Edge weights. Refreshed per block from the weight state; individual-edge
// forms are exposed for direct evaluation.

inline double interval_edge_log_weight(int z, int zhat, const WeightState& state) {
  if (z >= zhat) throw std::invalid_argument("segment must be nonempty");
  const int ny = state.num_outputs();
  double acc = 0.0;
  std::vector<double> member_logs;
  for (Symbol y = 0; y < ny; ++y) {
    member_logs.clear();
    for (Symbol x = z; x < zhat; ++x) member_logs.push_back(state.log_lambda(x, y));
    acc += log_sum_exp(std::span<const double>(member_logs));
  }
  return acc;
}

inline double huffman_edge_log_weight(long long symbol_count, int length_bits, double eta) {
  return -eta * static_cast<double>(symbol_count) * length_bits;
}

inline double lc_edge_log_weight(int z, int zhat, int length_bits, const WeightState& state,
                                 double delta) {
  long long freq = 0;
  for (Symbol x = z; x < zhat; ++x) freq += state.count(x);
  return interval_edge_log_weight(z, zhat, state) +
         huffman_edge_log_weight(freq, length_bits, state.eta() * delta);
}

namespace detail {

// All-segments weight table: table[z][zhat] = sum over side symbols of the
// log-sum of member weights in (z, zhat]. Incremental accumulation keeps the
// whole table at O(|X|^2 |Y|).
inline std::vector<std::vector<double>> segment_weight_table(const WeightState& state) {
  const int n = state.alphabet_size();
  const int ny = state.num_outputs();
  std::vector<std::vector<double>> table(n + 1, std::vector<double>(n + 1, 0.0));
  std::vector<double> acc(ny);
  for (int z = 0; z < n; ++z) {
    std::fill(acc.begin(), acc.end(), kNegInf);
    for (int zhat = z + 1; zhat <= n; ++zhat) {
      const Symbol x = zhat - 1;
      double total = 0.0;
      for (Symbol y = 0; y < ny; ++y) {
        acc[y] = log_add(acc[y], state.log_lambda(x, y));
        total += acc[y];
      }
      table[z][zhat] = total;
    }
  }
  return table;
}

// Generalized-distortion variant: member weights depend on the segment they
// sit in, so the table costs an extra alphabet factor.
inline std::vector<std::vector<double>> segment_weight_table_general(
    const WeightState& state, const DistortionMeasure& rho) {
  const int n = state.alphabet_size();
  const int ny = state.num_outputs();
  const auto& channel = state.channel();
  std::vector<std::vector<double>> table(n + 1, std::vector<double>(n + 1, 0.0));
  std::vector<double> member_logs;
  for (int z = 0; z < n; ++z)
    for (int zhat = z + 1; zhat <= n; ++zhat) {
      double total = 0.0;
      for (Symbol y = 0; y < ny; ++y) {
        member_logs.clear();
        for (Symbol x = z; x < zhat; ++x) {
          double cost = 0.0;
          for (Symbol other = z; other < zhat; ++other) {
            if (other == x) continue;
            cost += static_cast<double>(state.count(other)) * channel(other, y) * rho(other, x);
          }
          member_logs.push_back(-state.eta() * cost);
        }
        total += log_sum_exp(std::span<const double>(member_logs));
      }
      table[z][zhat] = total;
    }
  return table;
}

}  // namespace detail

inline void refresh_interval_weights(const LayeredDag& dag, const WeightState& state,
                                     std::span<double> out) {
  const auto table = detail::segment_weight_table(state);
  for (std::size_t e = 0; e < dag.edges.size(); ++e)
    out[e] = table[dag.edges[e].z][dag.edges[e].zhat];
}

inline void refresh_huffman_weights(const LayeredDag& dag, std::span<const long long> counts,
                                    double eta, std::span<double> out) {
  for (std::size_t e = 0; e < dag.edges.size(); ++e) {
    const DagEdge& edge = dag.edges[e];
    out[e] = huffman_edge_log_weight(counts[edge.level - 1], edge.length_bits, eta);
  }
}

inline void refresh_lc_weights(const LayeredDag& dag, const WeightState& state, double delta,
                               std::span<double> out) {
  const auto table = detail::segment_weight_table(state);
  const int n = state.alphabet_size();
  std::vector<long long> prefix(n + 1, 0);
  for (int x = 0; x < n; ++x) prefix[x + 1] = prefix[x] + state.count(x);
  for (std::size_t e = 0; e < dag.edges.size(); ++e) {
    const DagEdge& edge = dag.edges[e];
    const long long freq = prefix[edge.zhat] - prefix[edge.z];
    out[e] = table[edge.z][edge.zhat] - state.eta() * delta * freq * edge.length_bits;
  }
}

inline void refresh_lc_weights_general(const LayeredDag& dag, const WeightState& state,
                                       const DistortionMeasure& rho, double delta,
                                       std::span<double> out) {
  const auto table = detail::segment_weight_table_general(state, rho);
  const int n = state.alphabet_size();
  std::vector<long long> prefix(n + 1, 0);
  for (int x = 0; x < n; ++x) prefix[x + 1] = prefix[x] + state.count(x);
  for (std::size_t e = 0; e < dag.edges.size(); ++e) {
    const DagEdge& edge = dag.edges[e];
    const long long freq = prefix[edge.zhat] - prefix[edge.z];
    out[e] = table[edge.z][edge.zhat] - state.eta() * delta * freq * edge.length_bits;
  }
}

// --------------------------------------------------------------------------
// Exact integer indexing of (path, decoder) pairs in canonical order:
// paths ordered by successive edge choices, decoders by mixed radix within a
// path. Used to agree on header payloads without materializing the set.

using BigIndex = unsigned __int128;

inline BigIndex checked_mul(BigIndex a, BigIndex b) {
  if (a != 0 && b > static_cast<BigIndex>(-1) / a)
    throw std::overflow_error("expert set too large to index exactly");
  return a * b;
}

inline BigIndex checked_add(BigIndex a, BigIndex b) {
  const BigIndex r = a + b;
  if (r < a) throw std::overflow_error("expert set too large to index exactly");
  return r;
}

inline BigIndex ipow_big(BigIndex base, int exp) {
  BigIndex r = 1;
  for (int i = 0; i < exp; ++i) r = checked_mul(r, base);
  return r;
}

inline std::string big_index_to_string(BigIndex v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

struct PathIndexer {
  std::vector<BigIndex> edge_factor;  // decoder multiplicity contributed by each edge
  std::vector<BigIndex> suffix;       // per vertex: expert count over suffix paths
  BigIndex total = 0;                 // expert count over the whole graph

  // num_outputs = side-information alphabet size; an edge covering a width-w
  // alphabet segment multiplies the decoder count by w per output symbol.
  // Probability-only graphs carry factor one per edge.
  static PathIndexer build(const LayeredDag& dag, int num_outputs) {
    PathIndexer idx;
    idx.edge_factor.resize(dag.edges.size());
    for (std::size_t e = 0; e < dag.edges.size(); ++e) {
      const int width = dag.edges[e].zhat - dag.edges[e].z;
      idx.edge_factor[e] = width > 0 ? ipow_big(static_cast<BigIndex>(width), num_outputs)
                                     : static_cast<BigIndex>(1);
    }
    idx.suffix.assign(dag.vertices.size(), 0);
    idx.suffix[dag.sink] = 1;
    for (int v = static_cast<int>(dag.vertices.size()) - 1; v >= 0; --v) {
      if (v == dag.sink) continue;
      BigIndex acc = 0;
      for (int e : dag.out_edges[v])
        acc = checked_add(acc, checked_mul(idx.edge_factor[e], idx.suffix[dag.edges[e].to]));
      idx.suffix[v] = acc;
    }
    idx.total = idx.suffix[dag.source];
    return idx;
  }

  // First expert index owned by this path; the path's decoders occupy a
  // contiguous block of size prod(edge factors).
  BigIndex offset_of_path(const LayeredDag& dag, std::span<const int> path) const {
    BigIndex offset = 0;
    BigIndex prefix = 1;
    int v = dag.source;
    for (int chosen : path) {
      for (int e : dag.out_edges[v]) {
        if (e == chosen) break;
        offset = checked_add(offset,
                             checked_mul(prefix, checked_mul(edge_factor[e], suffix[dag.edges[e].to])));
      }
      prefix = checked_mul(prefix, edge_factor[chosen]);
      v = dag.edges[chosen].to;
    }
    return offset;
  }

  BigIndex decoder_count_of_path(std::span<const int> path) const {
    BigIndex prefix = 1;
    for (int e : path) prefix = checked_mul(prefix, edge_factor[e]);
    return prefix;
  }

  // Inverse: recover the path from an expert index; the leftover value is
  // the decoder's mixed-radix index within the path.
  std::vector<int> path_of_index(const LayeredDag& dag, BigIndex index,
                                 BigIndex& decoder_index) const {
    if (index >= total) throw std::out_of_range("expert index out of range");
    std::vector<int> path;
    BigIndex prefix = 1;
    int v = dag.source;
    while (v != dag.sink) {
      bool advanced = false;
      for (int e : dag.out_edges[v]) {
        const BigIndex block =
            checked_mul(prefix, checked_mul(edge_factor[e], suffix[dag.edges[e].to]));
        if (index < block) {
          path.push_back(e);
          prefix = checked_mul(prefix, edge_factor[e]);
          v = dag.edges[e].to;
          advanced = true;
          break;
        }
        index -= block;
      }
      if (!advanced) throw std::logic_error("index walk fell off the graph");
    }
    decoder_index = index;
    return path;
  }
};

// Line-oriented debug dump of a graph and, optionally, current edge weights.
inline void export_dag(std::ostream& out, const LayeredDag& dag,
                       std::span<const double> edge_log_weights = {}) {
  out << "levels " << dag.num_levels << " vertices " << dag.vertices.size() << " edges "
      << dag.edges.size() << "\n";
  for (std::size_t v = 0; v < dag.vertices.size(); ++v) {
    const auto& vert = dag.vertices[v];
    out << "v " << v << " level " << vert.level << " z " << vert.z << " q " << vert.qnum << "\n";
  }
  for (std::size_t e = 0; e < dag.edges.size(); ++e) {
    const auto& edge = dag.edges[e];
    out << "e " << e << " " << edge.from << " -> " << edge.to << " seg (" << edge.z << ","
        << edge.zhat << "] step (" << edge.qnum << "," << edge.qhat_num << "] len "
        << edge.length_bits;
    if (!edge_log_weights.empty()) out << " logw " << edge_log_weights[e];
    out << "\n";
  }
}

}  // namespace wz
