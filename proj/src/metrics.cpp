#include "x3d/metrics.hpp"

#include "x3d/error.hpp"

#include <cmath>
#include <queue>

namespace x3d::metrics {

namespace {

using Adjacency = std::vector<std::vector<std::pair<Index, double>>>;

Adjacency knn_graph(const Coords& coords, Index graph_k) {
  const Index n = coords.rows();
  if (graph_k < 1) throw ConfigError("geodesic: graph_k must be >= 1");
  const Index k = std::min(graph_k + 1, n);
  PointCloud cloud(coords);
  const auto nbr = knn_query(cloud, iota_indices(n), k);
  Adjacency adj(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index taken = 0;
    for (Index j = 0; j < k && taken < graph_k; ++j) {
      const Index p = nbr.neighbor(i, j);
      if (p == i) continue;
      const double w = std::sqrt(squared_distance(coords, i, p));
      adj[i].emplace_back(p, w);
      adj[p].emplace_back(i, w);
      ++taken;
    }
  }
  return adj;
}

Vector dijkstra(const Adjacency& adj, Index source) {
  Vector dist = Vector::Constant(static_cast<Index>(adj.size()), kUnreachable);
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : adj[u]) {
      const double nd = d + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        heap.emplace(nd, v);
      }
    }
  }
  return dist;
}

Index count_components(const Adjacency& adj) {
  std::vector<char> seen(adj.size(), 0);
  Index comps = 0;
  std::vector<Index> stack;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    if (seen[s]) continue;
    ++comps;
    stack.push_back(static_cast<Index>(s));
    seen[s] = 1;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (const auto& e : adj[u])
        if (!seen[e.first]) {
          seen[e.first] = 1;
          stack.push_back(e.first);
        }
    }
  }
  return comps;
}

}  // namespace

GeodesicResult geodesic_from_sources(const Coords& coords, Index graph_k, std::span<const Index> sources) {
  if (coords.rows() < 1) throw SizeError("geodesic: empty cloud");
  const Adjacency adj = knn_graph(coords, graph_k);
  GeodesicResult out;
  out.distances.resize(static_cast<Index>(sources.size()), coords.rows());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s] < 0 || sources[s] >= coords.rows()) throw SizeError("geodesic: source out of range");
    out.distances.row(static_cast<Index>(s)) = dijkstra(adj, sources[s]).transpose();
  }
  out.components = count_components(adj);
  return out;
}

GeodesicResult geodesic_matrix(const Coords& coords, Index graph_k) {
  if (graph_k < 2) throw ConfigError("geodesic_matrix: graph_k must be >= 2");
  const auto all = iota_indices(coords.rows());
  return geodesic_from_sources(coords, graph_k, all);
}

std::string_view to_string(GapMode mode) { return mode == GapMode::Euclidean ? "euclidean" : "geodesic"; }

GapMode parse_gap_mode(std::string_view name) {
  if (name == "euclidean") return GapMode::Euclidean;
  if (name == "geodesic") return GapMode::Geodesic;
  throw ConfigError("unknown gap mode '" + std::string(name) + "'");
}

GapValue gap_metric(const Coords& coords, const NeighborhoodIndex& nbr, const Matrix& embeddings, GapMode mode,
                    Index graph_k) {
  if (embeddings.rows() != coords.rows()) throw ShapeError("gap_metric: one embedding row per point");
  nbr.validate(coords.rows());
  Matrix geo;
  if (mode == GapMode::Geodesic) geo = geodesic_from_sources(coords, graph_k, nbr.centers).distances;

  GapValue out;
  out.per_region.assign(static_cast<std::size_t>(nbr.regions()), std::nan(""));
  double total = 0.0;
  for (Index i = 0; i < nbr.regions(); ++i) {
    const Index c = nbr.centers[i];
    const Index n = nbr.valid(i);
    Vector a(n), b(n);
    for (Index j = 0; j < n; ++j) {
      const Index p = nbr.neighbor(i, j);
      a[j] = mode == GapMode::Euclidean ? std::sqrt(squared_distance(coords, c, p)) : geo(i, p);
      b[j] = (embeddings.row(p) - embeddings.row(c)).norm();
    }
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0) || !std::isfinite(na)) {
      ++out.skipped;
      continue;
    }
    const double v = (a / na - b / nb).norm();
    out.per_region[i] = v;
    total += v;
    ++out.evaluated;
  }
  out.mean = out.evaluated > 0 ? total / static_cast<double>(out.evaluated) : 0.0;
  return out;
}

double GapReport::mean_over_layers() const {
  if (layers.empty()) return 0.0;
  double s = 0.0;
  for (const auto& l : layers) s += l.mean;
  return s / static_cast<double>(layers.size());
}

std::string_view to_string(CostMethod method) {
  switch (method) {
    case CostMethod::X3d: return "x3d";
    case CostMethod::SharedMlp: return "shared_mlp";
    case CostMethod::RsConv: return "rsconv";
    case CostMethod::KpConv: return "kpconv";
    case CostMethod::VectorAttention: return "vector_attention";
    case CostMethod::ScalarAttention: return "scalar_attention";
  }
  return "?";
}

CostMethod parse_cost_method(std::string_view name) {
  if (name == "x3d" || name == "structure_kernel") return CostMethod::X3d;
  if (name == "shared_mlp") return CostMethod::SharedMlp;
  if (name == "rsconv") return CostMethod::RsConv;
  if (name == "kpconv") return CostMethod::KpConv;
  if (name == "vector_attention") return CostMethod::VectorAttention;
  if (name == "scalar_attention") return CostMethod::ScalarAttention;
  throw ConfigError("unknown cost method '" + std::string(name) + "'");
}

layer::X3dConfig cost_x3d_config(Index channels, Index k, const CostDims& dims) {
  const Index cin = dims.in_channels > 0 ? dims.in_channels : channels;
  auto cfg = layer::X3dConfig::standard(cin, channels, dims.struct_dim, dims.hidden, dims.es_kind, k,
                                        dims.normalize);
  cfg.implicit_structure = dims.implicit_structure;
  if (dims.implicit_structure)
    cfg.es_mlp = nn::LayerSpec::chain({3, dims.hidden, dims.struct_dim}, dims.normalize);
  cfg.denoise = dims.denoise;
  cfg.ncp = dims.ncp;
  cfg.aggregation = dims.mean_aggregation ? layer::Aggregation::Mean : layer::Aggregation::Max;
  return cfg;
}

ihsm::IhsmConfig cost_ihsm_config(CostMethod method, Index channels, const CostDims& dims) {
  ihsm::IhsmConfig cfg;
  switch (method) {
    case CostMethod::SharedMlp: cfg.kind = ihsm::BlockKind::SharedMlp; break;
    case CostMethod::RsConv: cfg.kind = ihsm::BlockKind::RsConv; break;
    case CostMethod::KpConv: cfg.kind = ihsm::BlockKind::KpConv; break;
    case CostMethod::VectorAttention: cfg.kind = ihsm::BlockKind::VectorAttention; break;
    case CostMethod::ScalarAttention: cfg.kind = ihsm::BlockKind::ScalarAttention; break;
    case CostMethod::X3d: throw ConfigError("cost_ihsm_config: x3d is not an implicit-structure block");
  }
  cfg.relation = dims.relation;
  cfg.in_channels = dims.in_channels > 0 ? dims.in_channels : channels;
  cfg.channels = channels;
  cfg.hidden = dims.hidden;
  cfg.normalize = dims.normalize;
  cfg.kernel_points = dims.kernel_points;
  return cfg;
}

namespace {

/// FLOPs per input row of an MLP: matmul, bias, optional standardize, relu.
double mlp_row_cost(const nn::LayerSpec& spec) {
  double f = 0.0;
  for (const auto& l : spec.layers) {
    const double in = static_cast<double>(l.in), out = static_cast<double>(l.out);
    f += 2.0 * in * out + out;
    if (l.normalize) f += 5.0 * out;
    if (l.activation == nn::Activation::Relu) f += out;
  }
  return f;
}

}  // namespace

CostEstimate flops_estimate(CostMethod method, Index points, Index channels, Index k, const CostDims& dims) {
  if (points < 1 || channels < 1 || k < 1) throw ConfigError("flops_estimate: N, C and K must be >= 1");
  CostEstimate est;
  est.method = method;
  est.points = points;
  est.channels = channels;
  est.k = k;
  const double N = static_cast<double>(points);
  const double M = static_cast<double>(dims.regions > 0 ? dims.regions : points);
  const double K = static_cast<double>(k);
  const double C = static_cast<double>(channels);
  const double R = M * K;  // neighbor rows

  double per_point = 0.0, per_region = 0.0, per_row = 0.0;  // per_row: per neighbor row
  if (method == CostMethod::X3d) {
    const auto cfg = cost_x3d_config(channels, k, dims);
    const double ds = static_cast<double>(dims.struct_dim);
    if (cfg.implicit_structure) {
      per_row += mlp_row_cost(cfg.es_mlp) + ds;  // slot MLP + segment max
    } else {
      per_region += es::descriptor_flops(cfg.es_kind, 1, k) + mlp_row_cost(cfg.es_mlp);
    }
    if (cfg.denoise) {
      // embedding, dot with F, softmax, weighting, segment sum, residual add
      per_row += mlp_row_cost(cfg.point_mlp) + 2.0 * ds + 4.0 + ds + ds;
      per_region += ds;
    }
    per_region += mlp_row_cost(cfg.kernel_mlp);
    per_point += mlp_row_cost(cfg.feature_mlp);
    per_row += 6.0 * C + C;  // kernel matvec + add
    per_row += C;            // pooling
    if (cfg.aggregation == layer::Aggregation::Mean) per_region += C;
    if (cfg.ncp) {
      per_row += C;
      per_region += C + mlp_row_cost(cfg.fuse_mlp);
    }
  } else {
    const auto cfg = cost_ihsm_config(method, channels, dims);
    const double cin = static_cast<double>(cfg.in_channels);
    using nn::LayerSpec;
    auto chain_cost = [&](std::vector<Index> widths, bool norm) {
      return mlp_row_cost(LayerSpec::chain(std::move(widths), norm));
    };
    const Index di = ihsm::relation_dim(cfg.relation);
    switch (method) {
      case CostMethod::SharedMlp:
        per_point += chain_cost({cfg.in_channels, cfg.hidden, channels}, cfg.normalize);
        per_row += chain_cost({di, cfg.hidden, channels}, cfg.normalize) + C + C;  // rel MLP, add, max
        break;
      case CostMethod::RsConv:
        per_point += chain_cost({cfg.in_channels, channels}, false);
        per_row += chain_cost({di, cfg.hidden, channels}, cfg.normalize) + C +
                   chain_cost({channels, cfg.hidden, channels}, cfg.normalize) + C;
        break;
      case CostMethod::KpConv: {
        const double r = static_cast<double>(cfg.kernel_points);
        per_row += 2.0 * cin * r * C + 2.0 * r * C + C;
        break;
      }
      case CostMethod::VectorAttention:
        per_row += cin;  // f_i - f_ij
        per_row += chain_cost({3, cfg.hidden, channels}, cfg.normalize);
        per_row += chain_cost({cfg.in_channels, cfg.hidden, channels}, cfg.normalize) + C;  // logits
        per_row += 4.0 * C;                                                                 // softmax
        per_point += chain_cost({cfg.in_channels, channels}, false);
        per_row += C + C + C;  // value + pos, weighting, segment sum
        break;
      case CostMethod::ScalarAttention:
        per_point += 3.0 * chain_cost({cfg.in_channels, channels}, false);
        per_row += 2.0 * C + 1.0 + 4.0 + C + C;  // dot, temperature, softmax, weighting, sum
        break;
      case CostMethod::X3d: break;
    }
  }
  est.per_point = per_point * N;
  est.per_region = per_region * M;
  est.per_neighbor = per_row * R;
  est.flops = est.per_point + est.per_region + est.per_neighbor;
  return est;
}

}  // namespace x3d::metrics
