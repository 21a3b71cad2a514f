#pragma once

#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "opdist/core.hpp"
#include "opdist/spectra.hpp"

namespace opdist {

// Combinatorial graph with edge lengths.  Edges are oriented intervals
// [0, ell_e]; end 0 is the initial vertex, end 1 the terminal one.  Loops
// (both ends at the same vertex) are allowed and count twice in the degree.
struct MetricGraph {
  struct Edge {
    Index src = 0;
    Index dst = 0;
    double length = 0.0;
  };

  std::vector<std::string> vertex_ids;  // display names, also used by the file format
  std::vector<Edge> edges;

  MetricGraph() = default;

  MetricGraph(std::vector<std::string> ids, std::vector<Edge> es)
      : vertex_ids(std::move(ids)), edges(std::move(es)) {
    validate();
  }

  static MetricGraph from_counts(Index num_vertices, std::vector<Edge> es) {
    std::vector<std::string> ids(static_cast<std::size_t>(num_vertices));
    for (Index v = 0; v < num_vertices; ++v) ids[static_cast<std::size_t>(v)] = "v" + std::to_string(v);
    return MetricGraph(std::move(ids), std::move(es));
  }

  Index num_vertices() const { return static_cast<Index>(vertex_ids.size()); }
  Index num_edges() const { return static_cast<Index>(edges.size()); }

  void validate() const {
    const Index nv = num_vertices();
    if (nv == 0) throw std::invalid_argument("MetricGraph: no vertices");
    std::vector<int> deg(static_cast<std::size_t>(nv), 0);
    for (const Edge& e : edges) {
      if (e.src < 0 || e.src >= nv || e.dst < 0 || e.dst >= nv)
        throw std::invalid_argument("MetricGraph: edge endpoint out of range");
      if (!(e.length > 0.0) || !std::isfinite(e.length))
        throw std::invalid_argument("MetricGraph: edge length must be positive and finite");
      ++deg[static_cast<std::size_t>(e.src)];
      ++deg[static_cast<std::size_t>(e.dst)];
    }
    for (Index v = 0; v < nv; ++v)
      if (deg[static_cast<std::size_t>(v)] == 0)
        throw std::invalid_argument("MetricGraph: isolated vertex " +
                                    vertex_ids[static_cast<std::size_t>(v)]);
  }

  double ell0() const {
    double l0 = std::numeric_limits<double>::infinity();
    for (const Edge& e : edges) l0 = std::min(l0, e.length);
    return l0;
  }

  int degree(Index v) const {
    int d = 0;
    for (const Edge& e : edges) {
      if (e.src == v) ++d;
      if (e.dst == v) ++d;
    }
    return d;
  }

  // Edge-end incidences of v, ordered by (edge index, end).  This order
  // fixes the coordinate layout of the vertex-wise direction space and the
  // arm assignment of the fattened vertex blocks.
  std::vector<std::pair<Index, int>> incidences(Index v) const {
    std::vector<std::pair<Index, int>> inc;
    for (Index e = 0; e < num_edges(); ++e) {
      if (edges[static_cast<std::size_t>(e)].src == v) inc.emplace_back(e, 0);
      if (edges[static_cast<std::size_t>(e)].dst == v) inc.emplace_back(e, 1);
    }
    return inc;
  }

  bool connected() const {
    const Index nv = num_vertices();
    std::vector<char> seen(static_cast<std::size_t>(nv), 0);
    std::queue<Index> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      Index v = q.front();
      q.pop();
      for (const Edge& e : edges) {
        Index other = -1;
        if (e.src == v) other = e.dst;
        else if (e.dst == v) other = e.src;
        else continue;
        if (!seen[static_cast<std::size_t>(other)]) {
          seen[static_cast<std::size_t>(other)] = 1;
          q.push(other);
        }
      }
    }
    for (char s : seen)
      if (!s) return false;
    return true;
  }
};

// Coordinate layout of the direction space: one slot per edge-end incidence,
// grouped by vertex in incidence order.  Carries unit weights.
struct DirectionLayout {
  std::vector<Index> offset;  // per vertex, into the flat coordinate vector
  Index total = 0;

  explicit DirectionLayout(const MetricGraph& g) {
    offset.resize(static_cast<std::size_t>(g.num_vertices()));
    Index acc = 0;
    for (Index v = 0; v < g.num_vertices(); ++v) {
      offset[static_cast<std::size_t>(v)] = acc;
      acc += g.degree(v);
    }
    total = acc;
  }
};

// Mass-lumped piecewise-linear discretization of the Kirchhoff Laplacian.
// One DOF per vertex (shared by all incident edges, imposing continuity)
// plus per-edge interior nodes; the derivative-sum vertex condition is the
// natural condition of the weak form and needs no explicit stencil.
struct GraphModel {
  MetricGraph graph;
  double h = 0.0;               // requested step
  std::vector<double> h_e;      // realized per-edge steps
  std::vector<Index> cells;     // per-edge interval counts
  std::vector<Index> interior_base;
  Index dim = 0;
  SparseMatrix stiffness;
  Vector weights;

  Index vertex_dof(Index v) const { return v; }

  // Node i along edge e, i in [0, cells[e]]; the ends resolve to the shared
  // vertex DOFs.
  Index node_dof(Index e, Index i) const {
    const auto& ed = graph.edges[static_cast<std::size_t>(e)];
    if (i == 0) return ed.src;
    if (i == cells[static_cast<std::size_t>(e)]) return ed.dst;
    return interior_base[static_cast<std::size_t>(e)] + (i - 1);
  }

  // One-sided second-order derivative toward the vertex at the given edge
  // end: the signed quantity whose sum over incidences vanishes in the
  // Kirchhoff condition.
  double end_derivative(const Vector& f, Index e, int end) const {
    const Index n = cells[static_cast<std::size_t>(e)];
    const double he = h_e[static_cast<std::size_t>(e)];
    auto at = [&](Index i) { return f[node_dof(e, i)]; };
    if (end == 0) return (3.0 * at(0) - 4.0 * at(1) + at(2)) / (2.0 * he);
    return (3.0 * at(n) - 4.0 * at(n - 1) + at(n - 2)) / (2.0 * he);
  }
};

inline GraphModel assemble_graph_laplacian(const MetricGraph& graph, double h) {
  graph.validate();
  if (!graph.connected()) throw std::invalid_argument("assemble_graph_laplacian: graph must be connected");
  const double l0 = graph.ell0();
  if (!(h > 0.0) || h > l0 / 4.0 + 1e-15)
    throw std::invalid_argument("assemble_graph_laplacian: need 0 < h <= ell0/4");

  GraphModel m;
  m.graph = graph;
  m.h = h;
  const Index ne = graph.num_edges();
  m.h_e.resize(static_cast<std::size_t>(ne));
  m.cells.resize(static_cast<std::size_t>(ne));
  m.interior_base.resize(static_cast<std::size_t>(ne));

  Index dim = graph.num_vertices();
  for (Index e = 0; e < ne; ++e) {
    const double len = graph.edges[static_cast<std::size_t>(e)].length;
    const Index n = static_cast<Index>(std::llround(len / h));
    m.cells[static_cast<std::size_t>(e)] = n;
    m.h_e[static_cast<std::size_t>(e)] = len / static_cast<double>(n);
    m.interior_base[static_cast<std::size_t>(e)] = dim;
    dim += n - 1;
  }
  m.dim = dim;

  std::vector<Triplet> trips;
  m.weights = Vector::Zero(dim);
  for (Index e = 0; e < ne; ++e) {
    const Index n = m.cells[static_cast<std::size_t>(e)];
    const double he = m.h_e[static_cast<std::size_t>(e)];
    const double c = 1.0 / he;
    for (Index i = 0; i < n; ++i) {
      const Index a = m.node_dof(e, i);
      const Index b = m.node_dof(e, i + 1);
      trips.emplace_back(a, a, c);
      trips.emplace_back(b, b, c);
      trips.emplace_back(a, b, -c);
      trips.emplace_back(b, a, -c);
      m.weights[a] += he / 2.0;
      m.weights[b] += he / 2.0;
    }
  }
  m.stiffness.resize(dim, dim);
  m.stiffness.setFromTriplets(trips.begin(), trips.end());
  return m;
}

inline Vector graph_spectrum(const GraphModel& model, int k, const SpectraOptions& opts = {}) {
  if (k < 1 || k > model.dim / 2)
    throw std::invalid_argument("graph_spectrum: need 1 <= k <= dim/2");
  return smallest_eigenvalues(model.stiffness, model.weights, k, opts);
}

}  // namespace opdist
