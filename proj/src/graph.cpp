#include "gravity/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace gravity {

Graph::Graph(std::size_t n_vertices, Tensor features)
    : adjacency_(n_vertices), features_(std::move(features)) {
  if (features_.rows() != n_vertices) {
    throw ValidationError(fmt::format("feature row count {} does not match vertex count {}",
                                      features_.rows(), n_vertices));
  }
  if (!features_.all_finite()) throw ValidationError("feature matrix has non-finite entries");
}

void Graph::add_edge(std::size_t u, std::size_t v, double weight) {
  const std::size_t n = size();
  if (u >= n || v >= n) {
    throw ValidationError(fmt::format("edge ({}, {}) references a vertex outside 0..{}", u, v,
                                      n == 0 ? 0 : n - 1));
  }
  if (u == v) throw ValidationError(fmt::format("self-loop on vertex {}", u));
  if (!std::isfinite(weight) || !(weight > 0.0)) {
    throw ValidationError(fmt::format("edge ({}, {}) has invalid weight {}", u, v, weight));
  }
  auto insert = [](std::vector<Neighbor>& list, std::size_t to, double w) {
    auto it = std::lower_bound(list.begin(), list.end(), to,
                               [](const Neighbor& nb, std::size_t x) { return nb.vertex < x; });
    if (it != list.end() && it->vertex == to) {
      if (it->weight != w) {
        throw ValidationError(fmt::format("asymmetric duplicate weight for edge to {}: {} vs {}",
                                          to, it->weight, w));
      }
      throw ValidationError(fmt::format("duplicate edge to {}", to));
    }
    list.insert(it, Neighbor{to, w});
  };
  try {
    insert(adjacency_[u], v, weight);
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("edge ({}, {}): {}", u, v, e.what()));
  }
  insert(adjacency_[v], u, weight);
  ++edge_count_;
}

void Graph::set_labels(std::vector<int> labels, int n_classes) {
  if (labels.size() != size()) throw ValidationError("label vector length does not match N");
  if (n_classes < 2) throw ValidationError("labelled graphs need K >= 2");
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] != kUnlabeled && (labels[v] < 0 || labels[v] >= n_classes)) {
      throw ValidationError(
          fmt::format("label {} of vertex {} is outside 0..{}", labels[v], v, n_classes - 1));
    }
  }
  labels_ = std::move(labels);
  n_classes_ = n_classes;
}

bool Graph::has_edge(std::size_t u, std::size_t v) const {
  const auto& list = adjacency_.at(u);
  return std::binary_search(list.begin(), list.end(), Neighbor{v, 0.0},
                            [](const Neighbor& a, const Neighbor& b) { return a.vertex < b.vertex; });
}

double Graph::edge_weight(std::size_t u, std::size_t v) const {
  for (const auto& nb : adjacency_.at(u))
    if (nb.vertex == v) return nb.weight;
  throw ValidationError(fmt::format("no edge ({}, {})", u, v));
}

void Graph::validate() const {
  if (features_.rows() != size()) throw ValidationError("feature rows do not match N");
  if (!features_.all_finite()) throw ValidationError("feature matrix has non-finite entries");
  for (std::size_t u = 0; u < size(); ++u) {
    const auto& list = adjacency_[u];
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto& nb = list[k];
      if (nb.vertex == u) throw ValidationError(fmt::format("self-loop on vertex {}", u));
      if (k > 0 && list[k - 1].vertex >= nb.vertex)
        throw ValidationError("adjacency list not strictly sorted");
      if (!std::isfinite(nb.weight) || !(nb.weight > 0.0))
        throw ValidationError("non-positive edge weight");
      if (!has_edge(nb.vertex, u) || edge_weight(nb.vertex, u) != nb.weight)
        throw ValidationError(fmt::format("asymmetric adjacency between {} and {}", u, nb.vertex));
    }
  }
  for (int l : labels_)
    if (l != kUnlabeled && (l < 0 || l >= n_classes_)) throw ValidationError("label out of range");
}

Graph Graph::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != size()) throw ValidationError("permutation length does not match N");
  Tensor feats(size(), feature_dim());
  for (std::size_t v = 0; v < size(); ++v) {
    auto src = features_.row(v);
    std::copy(src.begin(), src.end(), feats.row(perm[v]).begin());
  }
  Graph out(size(), std::move(feats));
  for (std::size_t u = 0; u < size(); ++u)
    for (const auto& nb : adjacency_[u])
      if (u < nb.vertex) out.add_edge(perm[u], perm[nb.vertex], nb.weight);
  if (has_labels()) {
    std::vector<int> labels(size());
    for (std::size_t v = 0; v < size(); ++v) labels[perm[v]] = labels_[v];
    out.set_labels(std::move(labels), n_classes_);
  }
  return out;
}

Graph Graph::rescaled(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ValidationError("rescale factor must be > 0");
  Graph out = *this;
  for (auto& list : out.adjacency_)
    for (auto& nb : list) nb.weight *= factor;
  return out;
}

double weighted_degree(const Graph& g, std::size_t v) {
  if (v >= g.size()) {
    throw ValidationError(fmt::format("vertex {} out of range (N = {})", v, g.size()));
  }
  std::vector<double> terms;
  terms.reserve(g.neighbors(v).size());
  for (const auto& nb : g.neighbors(v)) terms.push_back(nb.weight);
  return order_invariant_sum(terms);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << content;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string_view> split(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find_first_of(seps, pos);
    const auto end = next == std::string_view::npos ? s.size() : next;
    out.push_back(trim(s.substr(pos, end - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

struct LineError {
  const std::filesystem::path& path;
  std::size_t line;
  [[noreturn]] void operator()(std::string_view what) const {
    throw ValidationError(fmt::format("{}:{}: {}", path.string(), line, what));
  }
};

template <typename Fn>
void for_each_line(const std::string& text, Fn fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    fn(line_no, std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
  }
}

}  // namespace

Graph load_graph(const GraphFiles& files) {
  // features first: they fix N
  const std::string feature_text = read_file(files.features);
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  for_each_line(feature_text, [&](std::size_t line_no, std::string_view raw) {
    const auto line = trim(raw);
    if (line.empty()) return;
    LineError fail{files.features, line_no};
    const auto fields = split(line, ",");
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) {
      fail(fmt::format("expected {} columns, found {}", cols, fields.size()));
    }
    for (auto f : fields) {
      double v = 0.0;
      if (!parse_number(f, v) || !std::isfinite(v)) fail(fmt::format("malformed value '{}'", f));
      values.push_back(v);
    }
    ++rows;
  });
  if (rows == 0) throw ValidationError("feature file is empty: " + files.features.string());

  Graph g(rows, Tensor(rows, cols, std::move(values)));

  const std::string edge_text = read_file(files.edges);
  for_each_line(edge_text, [&](std::size_t line_no, std::string_view raw) {
    auto line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    LineError fail{files.edges, line_no};
    std::vector<std::string_view> fields;
    for (auto f : split(line, "\t "))
      if (!f.empty()) fields.push_back(f);
    if (fields.size() != 3) fail("expected 'src<TAB>dst<TAB>weight'");
    std::size_t u = 0, v = 0;
    double w = 0.0;
    if (!parse_number(fields[0], u) || !parse_number(fields[1], v) || !parse_number(fields[2], w)) {
      fail("malformed edge line");
    }
    if (u >= rows || v >= rows) {
      fail(fmt::format("vertex index {} has no feature row (feature row count {} != N)",
                       std::max(u, v), rows));
    }
    try {
      g.add_edge(u, v, w);
    } catch (const ValidationError& e) {
      fail(e.what());
    }
  });

  if (files.labels) {
    const std::string label_text = read_file(*files.labels);
    int k = 0;
    bool header = false;
    std::vector<int> labels(rows, kUnlabeled);
    for_each_line(label_text, [&](std::size_t line_no, std::string_view raw) {
      const auto line = trim(raw);
      if (line.empty()) return;
      LineError fail{*files.labels, line_no};
      if (!header) {
        if (!line.starts_with("K=") || !parse_number(trim(line.substr(2)), k) || k < 2) {
          fail("first line must be K=<int> with K >= 2");
        }
        header = true;
        return;
      }
      const auto fields = split(line, ",");
      std::size_t v = 0;
      int l = 0;
      if (fields.size() != 2 || !parse_number(fields[0], v) || !parse_number(fields[1], l)) {
        fail("expected 'vertex,label'");
      }
      if (v >= rows) fail(fmt::format("vertex {} out of range", v));
      if (l < 0 || l >= k) fail(fmt::format("label {} >= declared K={}", l, k));
      if (labels[v] != kUnlabeled) fail(fmt::format("vertex {} labelled twice", v));
      labels[v] = l;
    });
    if (!header) throw ValidationError("label file has no K= header: " + files.labels->string());
    g.set_labels(std::move(labels), k);
  }
  g.validate();
  return g;
}

std::string format_edges(const Graph& g) {
  std::string out;
  for (std::size_t u = 0; u < g.size(); ++u)
    for (const auto& nb : g.neighbors(u))
      if (u < nb.vertex) out += fmt::format("{}\t{}\t{:.17g}\n", u, nb.vertex, nb.weight);
  return out;
}

std::string format_features(const Graph& g) {
  std::string out;
  const auto& x = g.features();
  for (std::size_t v = 0; v < x.rows(); ++v) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (c > 0) out += ',';
      out += fmt::format("{:.17g}", x(v, c));
    }
    out += '\n';
  }
  return out;
}

std::string format_labels(const Graph& g) {
  if (!g.has_labels()) return {};
  std::string out = fmt::format("K={}\n", g.n_classes());
  for (std::size_t v = 0; v < g.size(); ++v)
    if (g.label(v) != kUnlabeled) out += fmt::format("{},{}\n", v, g.label(v));
  return out;
}

void save_graph(const Graph& g, const GraphFiles& files) {
  write_file(files.edges, format_edges(g));
  write_file(files.features, format_features(g));
  if (files.labels) {
    if (!g.has_labels()) throw ValidationError("graph has no labels to save");
    write_file(*files.labels, format_labels(g));
  }
}

std::string graph_fingerprint(const Graph& g) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;
    h *= 1099511628211ULL;
  };
  mix(format_edges(g));
  mix(format_features(g));
  mix(format_labels(g));
  return fmt::format("{:016x}", h);
}

Graph generate_sbm(const SbmConfig& cfg) {
  if (cfg.blocks < 2) throw ValidationError("SBM needs at least 2 blocks");
  if (cfg.per_block < 1) throw ValidationError("SBM needs per_block >= 1");
  if (!(cfg.p_in >= 0.0 && cfg.p_in <= 1.0) || !(cfg.p_out >= 0.0 && cfg.p_out <= 1.0)) {
    throw ValidationError("SBM probabilities must lie in [0,1]");
  }
  if (cfg.feature_dim < 1) throw ValidationError("SBM feature_dim must be >= 1");

  const std::size_t k = static_cast<std::size_t>(cfg.blocks);
  const std::size_t n = k * cfg.per_block;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v / cfg.per_block);

  Tensor feats(n, cfg.feature_dim);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
      const bool own = c % k == static_cast<std::size_t>(labels[v]);
      feats(v, c) = noise(rng) + (own ? cfg.feature_shift : 0.0);
    }

  Graph g(n, std::move(feats));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? cfg.p_in : cfg.p_out;
      if (coin(rng) < p) g.add_edge(u, v, 1.0);
    }
  g.set_labels(std::move(labels), cfg.blocks);
  return g;
}

}  // namespace gravity
