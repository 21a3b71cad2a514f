#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "opdist/core.hpp"
#include "opdist/linop.hpp"
#include "opdist/metric_graph.hpp"
#include "opdist/op_norm.hpp"
#include "opdist/resolvent.hpp"
#include "opdist/spectra.hpp"

namespace opdist {

// 2-D discretization of the eps-fattened graph: a width-eps rectangle per
// edge, glued at every vertex of degree >= 2 to a plus-shaped block with arm
// width eps and one arm per incident edge end (degree <= 4).  Degree-1 edge
// ends stay plain Neumann tube ends.  Five-point Neumann stencil; diagonal
// trapezoid mass.
//
// Mass on a gluing cross-section is carried entirely by the tube side: the
// adjacent block cells redirect their face-corner shares one layer inward.
// That makes the transverse-constant extension an exact isometry (see
// build_identification) and preserves the total volume; the price is an O(h)
// quadrature shift confined to the interface layer.
struct FatGraphModel {
  enum class DofKind : unsigned char { TubeInterior, TubeFace, Block };

  struct Face {
    Index edge = 0;
    int end = 0;
    std::vector<Index> dofs;   // global ids, transverse order
    std::vector<Index> local;  // the same points as indices into Block::dofs
  };

  struct Block {
    Index vertex = 0;
    int deg = 0;
    std::vector<Index> dofs;  // global ids of every block grid point
    Vector mass;              // intrinsic block quadrature, no redistribution
    SparseMatrix stiffness;   // local operator, indexed like dofs
    std::vector<Face> faces;  // aligned with MetricGraph::incidences(vertex)
  };

  MetricGraph graph;
  double eps = 0.0;
  int n_t = 0;
  double t = 0.0;            // transverse step eps / (n_t - 1)
  std::vector<double> h_e;   // realized per-edge longitudinal steps
  std::vector<Index> cells;  // per-edge longitudinal cell counts
  std::vector<Index> tube_base;
  Index dim = 0;
  SparseMatrix stiffness;
  Vector weights;
  std::vector<DofKind> kind;
  std::vector<Block> blocks;
  std::vector<int> block_of_vertex;  // -1 when the vertex has no block

  Index tube_dof(Index e, Index i, Index j) const {
    return tube_base[static_cast<std::size_t>(e)] + i * n_t + j;
  }

  // Transverse quadrature of one cross-section; sums to eps.
  Vector face_quadrature() const {
    Vector w = Vector::Constant(n_t, t);
    w[0] = t / 2.0;
    w[n_t - 1] = t / 2.0;
    return w;
  }

  double total_volume() const { return weights.sum(); }
};

namespace detail {

// Plus-shaped index grid on [0, 3q]^2: unit-cell center square plus the
// first `deg` arms in the fixed slot order left, right, bottom, top.  The
// slot order, together with the incidence order of MetricGraph, fixes the
// (otherwise arbitrary) abstract gluing of tubes to block arms.
struct PlusGrid {
  int q = 0;
  int deg = 0;
  std::vector<Index> point;  // (3q+1)^2 linear grid, -1 outside the region
  Index n_points = 0;
  struct Cell {
    int x = 0;
    int y = 0;
    int slot = -1;  // -1 center, else arm slot
  };
  std::vector<Cell> cell_list;
  // Outer-face points per used slot, transverse order; empty when unused.
  std::array<std::vector<std::pair<int, int>>, 4> face_points;

  Index at(int x, int y) const { return point[static_cast<std::size_t>(x * (3 * q + 1) + y)]; }

  bool on_face(int slot, int x, int y) const {
    switch (slot) {
      case 0: return x == 0;
      case 1: return x == 3 * q;
      case 2: return y == 0;
      default: return y == 3 * q;
    }
  }

  std::pair<int, int> inward(int slot, int x, int y) const {
    switch (slot) {
      case 0: return {x + 1, y};
      case 1: return {x - 1, y};
      case 2: return {x, y + 1};
      default: return {x, y - 1};
    }
  }
};

inline PlusGrid make_plus_grid(int deg, int q) {
  if (deg < 2 || deg > 4) throw std::invalid_argument("make_plus_grid: degree must be in [2, 4]");
  if (q < 3) throw std::invalid_argument("make_plus_grid: need at least 3 cells across an arm");
  PlusGrid g;
  g.q = q;
  g.deg = deg;
  const int gn = 3 * q + 1;
  g.point.assign(static_cast<std::size_t>(gn) * gn, -1);

  auto mark = [&](int x0, int x1, int y0, int y1) {
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y) g.point[static_cast<std::size_t>(x * gn + y)] = -2;
  };
  struct Rect {
    int x0, x1, y0, y1;
  };
  const Rect arms[4] = {
      {0, q, q, 2 * q},          // left
      {2 * q, 3 * q, q, 2 * q},  // right
      {q, 2 * q, 0, q},          // bottom
      {q, 2 * q, 2 * q, 3 * q},  // top
  };
  mark(q, 2 * q, q, 2 * q);
  for (int s = 0; s < deg; ++s) mark(arms[s].x0, arms[s].x1, arms[s].y0, arms[s].y1);

  Index counter = 0;
  for (int x = 0; x < gn; ++x)
    for (int y = 0; y < gn; ++y) {
      auto& p = g.point[static_cast<std::size_t>(x * gn + y)];
      if (p == -2) p = counter++;
    }
  g.n_points = counter;

  auto add_cells = [&](int x0, int x1, int y0, int y1, int slot) {
    for (int x = x0; x < x1; ++x)
      for (int y = y0; y < y1; ++y) g.cell_list.push_back({x, y, slot});
  };
  add_cells(q, 2 * q, q, 2 * q, -1);
  for (int s = 0; s < deg; ++s)
    add_cells(arms[s].x0, arms[s].x1, arms[s].y0, arms[s].y1, s);

  for (int s = 0; s < deg; ++s) {
    for (int j = 0; j <= q; ++j) {
      switch (s) {
        case 0: g.face_points[0].emplace_back(0, q + j); break;
        case 1: g.face_points[1].emplace_back(3 * q, q + j); break;
        case 2: g.face_points[2].emplace_back(q + j, 0); break;
        default: g.face_points[3].emplace_back(q + j, 3 * q); break;
      }
    }
  }
  return g;
}

}  // namespace detail

// Standalone vertex block at unit scale with intrinsic quadrature, plus its
// first nonzero Neumann eigenvalue.  Cached per (degree, n_t): the value
// enters the min-max and averaging estimates and the sweep header.
struct ReferenceBlock {
  SparseMatrix stiffness;
  Vector mass;
  double lambda2 = 0.0;
  Index dim = 0;
};

inline const ReferenceBlock& reference_block(int deg, int n_t) {
  static std::map<std::pair<int, int>, ReferenceBlock> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const auto key = std::make_pair(deg, n_t);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (n_t < 4) throw std::invalid_argument("reference_block: need n_t >= 4");
  const int q = n_t - 1;
  detail::PlusGrid grid = detail::make_plus_grid(deg, q);

  const double step = 1.0 / q;
  ReferenceBlock rb;
  rb.dim = grid.n_points;
  rb.mass = Vector::Zero(grid.n_points);
  std::vector<Triplet> trips;
  for (const auto& c : grid.cell_list) {
    const Index p00 = grid.at(c.x, c.y);
    const Index p10 = grid.at(c.x + 1, c.y);
    const Index p01 = grid.at(c.x, c.y + 1);
    const Index p11 = grid.at(c.x + 1, c.y + 1);
    auto edge = [&](Index a, Index b) {
      trips.emplace_back(a, a, 0.5);
      trips.emplace_back(b, b, 0.5);
      trips.emplace_back(a, b, -0.5);
      trips.emplace_back(b, a, -0.5);
    };
    edge(p00, p10);
    edge(p01, p11);
    edge(p00, p01);
    edge(p10, p11);
    const double share = step * step / 4.0;
    rb.mass[p00] += share;
    rb.mass[p10] += share;
    rb.mass[p01] += share;
    rb.mass[p11] += share;
  }
  rb.stiffness.resize(grid.n_points, grid.n_points);
  rb.stiffness.setFromTriplets(trips.begin(), trips.end());
  rb.lambda2 = smallest_eigenvalues(rb.stiffness, rb.mass, 2)[1];
  if (!(rb.lambda2 > 1e-12))
    throw std::runtime_error("reference_block: second Neumann eigenvalue is not positive");
  return cache.emplace(key, std::move(rb)).first->second;
}

inline FatGraphModel assemble_manifold_laplacian(const MetricGraph& graph, double eps, int n_t) {
  graph.validate();
  if (!graph.connected())
    throw std::invalid_argument("assemble_manifold_laplacian: graph must be connected");
  for (Index v = 0; v < graph.num_vertices(); ++v)
    if (graph.degree(v) > 4)
      throw std::invalid_argument(
          "assemble_manifold_laplacian: plus-block geometry supports degree <= 4");
  const double l0 = graph.ell0();
  if (!(eps > 0.0) || eps > l0 / 4.0 + 1e-15)
    throw std::invalid_argument("assemble_manifold_laplacian: need 0 < eps <= ell0/4");
  if (n_t < 4) throw std::invalid_argument("assemble_manifold_laplacian: need n_t >= 4");

  FatGraphModel m;
  m.graph = graph;
  m.eps = eps;
  m.n_t = n_t;
  const int q = n_t - 1;
  m.t = eps / q;

  const Index ne = graph.num_edges();
  m.h_e.resize(static_cast<std::size_t>(ne));
  m.cells.resize(static_cast<std::size_t>(ne));
  m.tube_base.resize(static_cast<std::size_t>(ne));
  Index dim = 0;
  for (Index e = 0; e < ne; ++e) {
    const double len = graph.edges[static_cast<std::size_t>(e)].length;
    const Index nc = static_cast<Index>(std::llround(len / m.t));
    if (nc < 2)
      throw std::invalid_argument("assemble_manifold_laplacian: longitudinal grid degenerate");
    m.cells[static_cast<std::size_t>(e)] = nc;
    m.h_e[static_cast<std::size_t>(e)] = len / static_cast<double>(nc);
    m.tube_base[static_cast<std::size_t>(e)] = dim;
    dim += (nc + 1) * n_t;
  }

  // Vertex blocks: compute the point layout first (face points alias the
  // tube end columns, everything else gets fresh ids).
  struct PendingBlock {
    Index vertex = 0;
    detail::PlusGrid grid;
    std::vector<Index> global;  // per grid point id
  };
  std::vector<PendingBlock> pending;
  m.block_of_vertex.assign(static_cast<std::size_t>(graph.num_vertices()), -1);
  for (Index v = 0; v < graph.num_vertices(); ++v) {
    const int deg = graph.degree(v);
    if (deg < 2) continue;
    const auto inc = graph.incidences(v);
    PendingBlock pb;
    pb.vertex = v;
    pb.grid = detail::make_plus_grid(deg, q);
    pb.global.assign(static_cast<std::size_t>(pb.grid.n_points), -1);
    for (int s = 0; s < deg; ++s) {
      const auto [e, end] = inc[static_cast<std::size_t>(s)];
      const Index col = end == 0 ? 0 : m.cells[static_cast<std::size_t>(e)];
      for (int j = 0; j <= q; ++j) {
        const auto [x, y] = pb.grid.face_points[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)];
        pb.global[static_cast<std::size_t>(pb.grid.at(x, y))] = m.tube_dof(e, col, j);
      }
    }
    for (auto& g : pb.global)
      if (g < 0) g = dim++;
    m.block_of_vertex[static_cast<std::size_t>(v)] = static_cast<int>(pending.size());
    pending.push_back(std::move(pb));
  }
  m.dim = dim;

  m.weights = Vector::Zero(dim);
  m.kind.assign(static_cast<std::size_t>(dim), FatGraphModel::DofKind::TubeInterior);
  std::vector<Triplet> trips;

  // Tube cells, size h_e x t.
  for (Index e = 0; e < ne; ++e) {
    const Index nc = m.cells[static_cast<std::size_t>(e)];
    const double he = m.h_e[static_cast<std::size_t>(e)];
    const double cx = m.t / (2.0 * he);   // longitudinal conductance
    const double cy = he / (2.0 * m.t);   // transverse conductance
    const double share = he * m.t / 4.0;
    for (Index i = 0; i < nc; ++i) {
      for (int j = 0; j < q; ++j) {
        const Index d00 = m.tube_dof(e, i, j);
        const Index d10 = m.tube_dof(e, i + 1, j);
        const Index d01 = m.tube_dof(e, i, j + 1);
        const Index d11 = m.tube_dof(e, i + 1, j + 1);
        auto edge = [&](Index a, Index b, double c) {
          trips.emplace_back(a, a, c);
          trips.emplace_back(b, b, c);
          trips.emplace_back(a, b, -c);
          trips.emplace_back(b, a, -c);
        };
        edge(d00, d10, cx);
        edge(d01, d11, cx);
        edge(d00, d01, cy);
        edge(d10, d11, cy);
        m.weights[d00] += share;
        m.weights[d10] += share;
        m.weights[d01] += share;
        m.weights[d11] += share;
      }
    }
    for (int j = 0; j < n_t; ++j) {
      m.kind[static_cast<std::size_t>(m.tube_dof(e, 0, j))] = FatGraphModel::DofKind::TubeFace;
      m.kind[static_cast<std::size_t>(m.tube_dof(e, nc, j))] = FatGraphModel::DofKind::TubeFace;
    }
  }

  // Block cells, size t x t; conductance 1/2 per cell edge.  Face-corner
  // mass shares of glued arms go one layer inward (same transverse index).
  for (const auto& pb : pending) {
    const auto& grid = pb.grid;
    FatGraphModel::Block blk;
    blk.vertex = pb.vertex;
    blk.deg = grid.deg;
    blk.dofs.reserve(static_cast<std::size_t>(grid.n_points));
    for (Index p = 0; p < grid.n_points; ++p) {
      const Index g = pb.global[static_cast<std::size_t>(p)];
      blk.dofs.push_back(g);
      if (m.kind[static_cast<std::size_t>(g)] == FatGraphModel::DofKind::TubeInterior)
        m.kind[static_cast<std::size_t>(g)] = FatGraphModel::DofKind::Block;
    }
    blk.mass = Vector::Zero(grid.n_points);
    std::vector<Triplet> local_trips;
    const double share = m.t * m.t / 4.0;
    for (const auto& c : grid.cell_list) {
      const int xs[4] = {c.x, c.x + 1, c.x, c.x + 1};
      const int ys[4] = {c.y, c.y, c.y + 1, c.y + 1};
      Index lp[4];
      for (int r = 0; r < 4; ++r) lp[r] = grid.at(xs[r], ys[r]);
      auto edge = [&](int a, int b) {
        const Index ga = pb.global[static_cast<std::size_t>(lp[a])];
        const Index gb = pb.global[static_cast<std::size_t>(lp[b])];
        trips.emplace_back(ga, ga, 0.5);
        trips.emplace_back(gb, gb, 0.5);
        trips.emplace_back(ga, gb, -0.5);
        trips.emplace_back(gb, ga, -0.5);
        local_trips.emplace_back(lp[a], lp[a], 0.5);
        local_trips.emplace_back(lp[b], lp[b], 0.5);
        local_trips.emplace_back(lp[a], lp[b], -0.5);
        local_trips.emplace_back(lp[b], lp[a], -0.5);
      };
      edge(0, 1);
      edge(2, 3);
      edge(0, 2);
      edge(1, 3);
      for (int r = 0; r < 4; ++r) {
        blk.mass[lp[r]] += share;
        int tx = xs[r], ty = ys[r];
        if (c.slot >= 0 && grid.on_face(c.slot, tx, ty)) {
          const auto [ix, iy] = grid.inward(c.slot, tx, ty);
          tx = ix;
          ty = iy;
        }
        m.weights[pb.global[static_cast<std::size_t>(grid.at(tx, ty))]] += share;
      }
    }
    blk.stiffness.resize(grid.n_points, grid.n_points);
    blk.stiffness.setFromTriplets(local_trips.begin(), local_trips.end());

    const auto inc = graph.incidences(pb.vertex);
    for (int s = 0; s < grid.deg; ++s) {
      FatGraphModel::Face face;
      face.edge = inc[static_cast<std::size_t>(s)].first;
      face.end = inc[static_cast<std::size_t>(s)].second;
      for (const auto& [x, y] : grid.face_points[static_cast<std::size_t>(s)]) {
        const Index p = grid.at(x, y);
        face.local.push_back(p);
        face.dofs.push_back(pb.global[static_cast<std::size_t>(p)]);
      }
      blk.faces.push_back(std::move(face));
    }
    m.blocks.push_back(std::move(blk));
  }

  m.stiffness.resize(dim, dim);
  m.stiffness.setFromTriplets(trips.begin(), trips.end());
  check_positive_weights(m.weights);

  // Volume bookkeeping must be exact: tubes sum to len * eps, blocks to
  // (1 + deg) * eps^2 each.
  double expected = 0.0;
  for (Index e = 0; e < ne; ++e) expected += graph.edges[static_cast<std::size_t>(e)].length * eps;
  for (const auto& blk : m.blocks) expected += (1.0 + blk.deg) * eps * eps;
  if (std::abs(m.weights.sum() - expected) > 1e-9 * expected)
    throw std::logic_error("assemble_manifold_laplacian: volume bookkeeping failed");
  return m;
}

// Transverse-constant extension of graph functions into the tubes, scaled to
// be an exact isometry; zero on block-only DOFs.
struct FatIdentification {
  SparseMatrix j;  // fat dim x graph dim
  Vector w_graph, w_fat;
  double eps = 0.0;
};

inline FatIdentification build_identification(const GraphModel& gm, const FatGraphModel& fm) {
  const MetricGraph& a = gm.graph;
  const MetricGraph& b = fm.graph;
  if (a.num_vertices() != b.num_vertices() || a.num_edges() != b.num_edges())
    throw std::invalid_argument("build_identification: models built over different graphs");
  for (Index e = 0; e < a.num_edges(); ++e) {
    const auto& ea = a.edges[static_cast<std::size_t>(e)];
    const auto& eb = b.edges[static_cast<std::size_t>(e)];
    if (ea.src != eb.src || ea.dst != eb.dst || ea.length != eb.length)
      throw std::invalid_argument("build_identification: models built over different graphs");
    if (gm.cells[static_cast<std::size_t>(e)] != fm.cells[static_cast<std::size_t>(e)])
      throw std::invalid_argument(
          "build_identification: longitudinal grids do not match (rebuild the 1-D model with "
          "h = eps/(n_t - 1))");
  }

  const double val = 1.0 / std::sqrt(fm.eps);
  std::vector<Triplet> trips;
  for (Index e = 0; e < a.num_edges(); ++e) {
    const Index nc = fm.cells[static_cast<std::size_t>(e)];
    for (Index i = 0; i <= nc; ++i) {
      const Index col = gm.node_dof(e, i);
      for (int j = 0; j < fm.n_t; ++j) trips.emplace_back(fm.tube_dof(e, i, j), col, val);
    }
  }
  FatIdentification pair;
  pair.j.resize(fm.dim, gm.dim);
  pair.j.setFromTriplets(trips.begin(), trips.end());
  pair.w_graph = gm.weights;
  pair.w_fat = fm.weights;
  pair.eps = fm.eps;

  // The isometry J*J = I must hold exactly (one diagonal entry per graph
  // DOF; column supports are disjoint by construction).
  for (Index g = 0; g < gm.dim; ++g) {
    double acc = 0.0;
    for (SparseMatrix::InnerIterator it(pair.j, g); it; ++it)
      acc += fm.weights[it.row()] * val * val;
    if (std::abs(acc - gm.weights[g]) > 1e-10 * gm.weights[g])
      throw std::logic_error("build_identification: extension is not an exact isometry");
  }
  return pair;
}

inline LinOp graph_resolvent_linop(const GraphModel& gm, double cg_tol = 1e-10) {
  auto delta = std::make_shared<SparseMatrix>(
      gm.weights.cwiseInverse().asDiagonal() * gm.stiffness);
  auto w = std::make_shared<Vector>(gm.weights);
  LinOp op;
  op.rows = op.cols = gm.dim;
  op.w_in = op.w_out = gm.weights;
  double tol = cg_tol;
  auto f = [delta, w, tol](const Vector& x) { return resolvent_apply(*delta, *w, x, tol); };
  op.apply = f;
  op.apply_adjoint = f;
  return op;
}

inline LinOp fat_resolvent_linop(const FatGraphModel& fm, double cg_tol = 1e-10) {
  auto delta = std::make_shared<SparseMatrix>(
      fm.weights.cwiseInverse().asDiagonal() * fm.stiffness);
  auto w = std::make_shared<Vector>(fm.weights);
  LinOp op;
  op.rows = op.cols = fm.dim;
  op.w_in = op.w_out = fm.weights;
  double tol = cg_tol;
  auto f = [delta, w, tol](const Vector& x) { return resolvent_apply(*delta, *w, x, tol); };
  op.apply = f;
  op.apply_adjoint = f;
  return op;
}

inline LinOp identification_linop(const FatIdentification& pair) {
  return linop_sparse(pair.j, pair.w_graph, pair.w_fat);
}

struct FatNormOptions {
  std::uint64_t seed = 42;
  double tol = 1e-6;
  int max_iter = 500;
  double cg_tol = 1e-10;
};

namespace detail {

inline OpNormOptions norm_opts(const FatNormOptions& o, std::uint64_t stream) {
  OpNormOptions n;
  n.seed = seed_stream(o.seed, stream);
  n.tol = o.tol;
  n.max_iter = o.max_iter;
  return n;
}

}  // namespace detail

// |R_eps J - J R_0| in the weighted norms, fully matrix-free.
inline double defect_norm(const GraphModel& gm, const FatGraphModel& fm,
                          const FatIdentification& pair, const FatNormOptions& opts = {}) {
  LinOp r0 = graph_resolvent_linop(gm, opts.cg_tol);
  LinOp reps = fat_resolvent_linop(fm, opts.cg_tol);
  LinOp j = identification_linop(pair);
  try {
    return op_norm(subtract(compose(reps, j), compose(j, r0)), detail::norm_opts(opts, 101));
  } catch (const std::runtime_error& ex) {
    throw std::runtime_error("defect_norm(eps=" + std::to_string(fm.eps) + "): " + ex.what());
  }
}

// The four boundary operators of the resolvent-difference factorization,
// realized as maps into the vertex space (degree weights) and the
// direction space (unit weights).  Every operator carries its resolvent on
// the inside, so each apply costs one CG solve.
struct ABOperators {
  LinOp a_eps;  // fat -> directions
  // Vertex-integral operator in the reference normalization (face measure
  // divided by eps), which is the normalization that makes the resolvent
  // factorization exact.  The physical operator, whose norm decays like
  // eps^{3/2}, is eps times this one; reports quote the physical norm.
  LinOp b_eps;  // fat -> vertices
  LinOp a0;     // graph -> vertices
  LinOp b0;     // graph -> directions
};

inline ABOperators make_ab_operators(const GraphModel& gm, const FatGraphModel& fm,
                                     const FatIdentification& pair, double cg_tol = 1e-10) {
  const MetricGraph& graph = gm.graph;
  const DirectionLayout layout(graph);
  const Index nv = graph.num_vertices();

  Vector deg_w(nv);
  for (Index v = 0; v < nv; ++v) deg_w[v] = static_cast<double>(graph.degree(v));

  LinOp r0 = graph_resolvent_linop(gm, cg_tol);
  LinOp reps = fat_resolvent_linop(fm, cg_tol);

  // Derivatives toward each vertex, second-order one-sided stencils.
  std::vector<Triplet> tb0;
  for (Index v = 0; v < nv; ++v) {
    const auto inc = graph.incidences(v);
    for (std::size_t s = 0; s < inc.size(); ++s) {
      const auto [e, end] = inc[s];
      const Index row = layout.offset[static_cast<std::size_t>(v)] + static_cast<Index>(s);
      const double he = gm.h_e[static_cast<std::size_t>(e)];
      const Index n = gm.cells[static_cast<std::size_t>(e)];
      const Index i0 = end == 0 ? 0 : n;
      const Index step = end == 0 ? 1 : -1;
      tb0.emplace_back(row, gm.node_dof(e, i0), 3.0 / (2.0 * he));
      tb0.emplace_back(row, gm.node_dof(e, i0 + step), -4.0 / (2.0 * he));
      tb0.emplace_back(row, gm.node_dof(e, i0 + 2 * step), 1.0 / (2.0 * he));
    }
  }
  SparseMatrix sb0(layout.total, gm.dim);
  sb0.setFromTriplets(tb0.begin(), tb0.end());

  // Vertex values.
  std::vector<Triplet> ta0;
  for (Index v = 0; v < nv; ++v) ta0.emplace_back(v, gm.vertex_dof(v), 1.0);
  SparseMatrix sa0(nv, gm.dim);
  sa0.setFromTriplets(ta0.begin(), ta0.end());

  // Cross-section average minus block average, per incidence.
  const Vector wq = fm.face_quadrature();
  const double root_eps = std::sqrt(fm.eps);
  std::vector<Triplet> taeps;
  for (const auto& blk : fm.blocks) {
    const double bmsum = blk.mass.sum();
    const auto inc = graph.incidences(blk.vertex);
    for (std::size_t s = 0; s < inc.size(); ++s) {
      const Index row = layout.offset[static_cast<std::size_t>(blk.vertex)] + static_cast<Index>(s);
      std::unordered_map<Index, double> acc;
      const auto& face = blk.faces[s];
      for (int j = 0; j < fm.n_t; ++j) acc[face.dofs[static_cast<std::size_t>(j)]] += wq[j] / fm.eps;
      for (std::size_t z = 0; z < blk.dofs.size(); ++z)
        acc[blk.dofs[z]] -= blk.mass[static_cast<Index>(z)] / bmsum;
      for (const auto& [colv, coeff] : acc)
        if (coeff != 0.0) taeps.emplace_back(row, colv, root_eps * coeff);
    }
  }
  SparseMatrix saeps(layout.total, fm.dim);
  saeps.setFromTriplets(taeps.begin(), taeps.end());

  // Block integral of the Laplacian image.  Summing stiffness rows over the
  // interior block DOFs telescopes to the discrete flux through the faces,
  // which is the lumped-grid meaning of integrating the block Laplacian; the
  // eps^{-1/2} converts the physical face measure to the reference one.
  std::vector<Triplet> tbeps;
  for (const auto& blk : fm.blocks) {
    std::unordered_map<Index, double> acc;
    for (const Index gz : blk.dofs) {
      if (fm.kind[static_cast<std::size_t>(gz)] == FatGraphModel::DofKind::TubeFace) continue;
      for (SparseMatrix::InnerIterator it(fm.stiffness, gz); it; ++it)
        acc[it.row()] += it.value();  // symmetric matrix: column gz = row gz
    }
    const double scale = 1.0 / (root_eps * static_cast<double>(blk.deg));
    for (const auto& [colv, coeff] : acc)
      if (coeff != 0.0) tbeps.emplace_back(blk.vertex, colv, scale * coeff);
  }
  SparseMatrix sbeps(nv, fm.dim);
  sbeps.setFromTriplets(tbeps.begin(), tbeps.end());

  ABOperators ops;
  ops.b0 = compose(linop_sparse(sb0, gm.weights, Vector::Ones(layout.total)), r0);
  ops.a0 = compose(linop_sparse(sa0, gm.weights, deg_w), r0);
  ops.a_eps = compose(linop_sparse(saeps, fm.weights, Vector::Ones(layout.total)), reps);
  ops.b_eps = compose(linop_sparse(sbeps, fm.weights, deg_w), reps);
  return ops;
}

struct ABReport {
  double a_eps = 0.0;
  double b_eps = 0.0;
  double a0 = 0.0;
  double b0 = 0.0;
  // |(R_eps J - J R_0) - (-A_eps* B_0 + B_eps* A_0)| / |R_eps J - J R_0|;
  // the identity is exact only in the continuum, so this decays with the
  // grid, not to zero.
  double residual_rel = 0.0;
};

inline ABReport ab_operators(const GraphModel& gm, const FatGraphModel& fm,
                             const FatIdentification& pair, const FatNormOptions& opts = {},
                             bool with_residual = true) {
  ABOperators ops = make_ab_operators(gm, fm, pair, opts.cg_tol);
  ABReport rep;
  rep.a_eps = op_norm(ops.a_eps, detail::norm_opts(opts, 111));
  rep.b_eps = fm.eps * op_norm(ops.b_eps, detail::norm_opts(opts, 112));
  rep.a0 = op_norm(ops.a0, detail::norm_opts(opts, 113));
  rep.b0 = op_norm(ops.b0, detail::norm_opts(opts, 114));
  if (with_residual) {
    LinOp r0 = graph_resolvent_linop(gm, opts.cg_tol);
    LinOp reps = fat_resolvent_linop(fm, opts.cg_tol);
    LinOp j = identification_linop(pair);
    LinOp defect = subtract(compose(reps, j), compose(j, r0));
    LinOp factored = subtract(compose(adjoint(ops.b_eps), ops.a0),
                              compose(adjoint(ops.a_eps), ops.b0));
    const double dn = op_norm(defect, detail::norm_opts(opts, 115));
    const double rn = op_norm(subtract(defect, factored), detail::norm_opts(opts, 116));
    rep.residual_rel = dn > 0.0 ? rn / dn : 0.0;
  }
  return rep;
}

// |(I - J J*) R_eps|: how far resolvent images are from transverse-constant
// tube data.  The maximum over `samples` independently seeded power
// iterations is returned.
inline double que_2_defect(const FatGraphModel& fm, const FatIdentification& pair, int samples = 1,
                           const FatNormOptions& opts = {}) {
  if (samples < 1) throw std::invalid_argument("que_2_defect: need samples >= 1");
  LinOp reps = fat_resolvent_linop(fm, opts.cg_tol);
  LinOp j = identification_linop(pair);
  LinOp op = compose(identity_minus(compose(j, adjoint(j))), reps);
  double best = 0.0;
  for (int s = 0; s < samples; ++s)
    best = std::max(best, op_norm(op, detail::norm_opts(opts, 130 + static_cast<std::uint64_t>(s))));
  return best;
}

struct TraceReport {
  double constant = 0.0;  // coth(ell0 / 2)
  int trials = 0;
  int violations = 0;      // ratio above 1 + 1e-12
  double max_ratio = 0.0;  // over the random trials
  double extremal_ratio = 0.0;
};

// Endpoint-trace inequality |f(0)|^2 <= C(l) (|f|^2 + |f'|^2) on [0, l] with
// C(l) = coth(l/2), checked on random piecewise-linear functions plus the
// one-sided near-extremal family f(s) = cosh(l - s).
inline TraceReport trace_constant_check(double ell0, int trials, Index grid_points = 10001,
                                        std::uint64_t seed = 42) {
  if (!(ell0 > 0.0)) throw std::invalid_argument("trace_constant_check: ell0 must be positive");
  if (grid_points < 3 || trials < 1)
    throw std::invalid_argument("trace_constant_check: degenerate grid or trial count");
  TraceReport rep;
  rep.constant = std::cosh(ell0 / 2.0) / std::sinh(ell0 / 2.0);
  rep.trials = trials;
  const Index n = grid_points;
  const double h = ell0 / static_cast<double>(n - 1);

  auto ratio_of = [&](const Vector& f) {
    double l2 = 0.0, grad = 0.0;
    for (Index i = 0; i + 1 < n; ++i) {
      l2 += h * (f[i] * f[i] + f[i + 1] * f[i + 1]) / 2.0;
      const double d = f[i + 1] - f[i];
      grad += d * d / h;
    }
    const double rhs = rep.constant * (l2 + grad);
    return rhs > 0.0 ? f[0] * f[0] / rhs : 0.0;
  };

  auto rng = make_rng(seed_stream(seed, 7));
  for (int trial = 0; trial < trials; ++trial) {
    const double r = ratio_of(random_vector(n, rng));
    rep.max_ratio = std::max(rep.max_ratio, r);
    if (r > 1.0 + 1e-12) ++rep.violations;
  }
  Vector fe(n);
  for (Index i = 0; i < n; ++i) fe[i] = std::cosh(ell0 - static_cast<double>(i) * h);
  rep.extremal_ratio = ratio_of(fe);
  return rep;
}

struct MinmaxReport {
  double lambda2_ref = 0.0;         // min over block degrees present
  double poincare_max_ratio = 0.0;  // must stay <= 1 (spectral theorem)
  double eigenfunction_ratio = 1.0; // equality case, worst across degrees
  double avint_max_ratio = 0.0;     // averaging-estimate chain
  int trials = 0;
  int violations = 0;
};

// Poincare inequality |u - avg|^2 <= |grad u|^2 / lambda2 on the reference
// blocks, its equality case on the second Neumann eigenfunction, and the
// chained cross-section-average estimate with constant
// eps * C(ell0) (1/lambda2 + 1) on the assembled blocks.
inline MinmaxReport minmax_check(const FatGraphModel& fm, int trials = 100,
                                 std::uint64_t seed = 42) {
  if (fm.blocks.empty())
    throw std::invalid_argument("minmax_check: model has no vertex blocks");
  if (trials < 1) throw std::invalid_argument("minmax_check: need trials >= 1");

  std::vector<int> degs;
  for (const auto& blk : fm.blocks)
    if (std::find(degs.begin(), degs.end(), blk.deg) == degs.end()) degs.push_back(blk.deg);

  MinmaxReport rep;
  rep.trials = trials;
  rep.lambda2_ref = std::numeric_limits<double>::infinity();
  for (int d : degs) rep.lambda2_ref = std::min(rep.lambda2_ref, reference_block(d, fm.n_t).lambda2);

  auto rng = make_rng(seed_stream(seed, 8));
  for (int trial = 0; trial < trials; ++trial) {
    const ReferenceBlock& rb = reference_block(degs[static_cast<std::size_t>(trial) % degs.size()], fm.n_t);
    Vector u = random_vector(rb.dim, rng);
    const double mean = u.dot(rb.mass) / rb.mass.sum();
    const Vector c = (u.array() - mean).matrix();
    const double lhs = c.dot(rb.mass.asDiagonal() * c);
    const double rhs = u.dot(rb.stiffness * u) / rb.lambda2;
    const double r = rhs > 0.0 ? lhs / rhs : 0.0;
    rep.poincare_max_ratio = std::max(rep.poincare_max_ratio, r);
    if (r > 1.0 + 1e-9) ++rep.violations;
  }

  for (int d : degs) {
    const ReferenceBlock& rb = reference_block(d, fm.n_t);
    SmallestEigResult pairs = smallest_eigenpairs(rb.stiffness, rb.mass, 2);
    Vector u = pairs.vectors.col(1);
    const double mean = u.dot(rb.mass) / rb.mass.sum();
    const Vector c = (u.array() - mean).matrix();
    const double lhs = c.dot(rb.mass.asDiagonal() * c);
    const double rhs = u.dot(rb.stiffness * u) / rb.lambda2;
    const double r = lhs / rhs;
    if (std::abs(r - 1.0) > std::abs(rep.eigenfunction_ratio - 1.0)) rep.eigenfunction_ratio = r;
  }

  const double l0 = fm.graph.ell0();
  const double trace_c = std::cosh(l0 / 2.0) / std::sinh(l0 / 2.0);
  const Vector wq = fm.face_quadrature();
  for (int trial = 0; trial < trials; ++trial) {
    for (const auto& blk : fm.blocks) {
      const double lambda2 = reference_block(blk.deg, fm.n_t).lambda2;
      Vector u = random_vector(static_cast<Index>(blk.dofs.size()), rng);
      const double bavg = u.dot(blk.mass) / blk.mass.sum();
      double lhs = 0.0;
      for (const auto& face : blk.faces) {
        double favg = 0.0;
        for (int jj = 0; jj < fm.n_t; ++jj)
          favg += wq[jj] * u[face.local[static_cast<std::size_t>(jj)]];
        favg /= fm.eps;
        lhs += (favg - bavg) * (favg - bavg);
      }
      lhs *= fm.eps;
      const double energy = u.dot(blk.stiffness * u);
      const double rhs = fm.eps * trace_c * (1.0 / lambda2 + 1.0) * energy;
      const double r = rhs > 0.0 ? lhs / rhs : 0.0;
      rep.avint_max_ratio = std::max(rep.avint_max_ratio, r);
      if (r > 1.0 + 1e-9) ++rep.violations;
    }
  }
  return rep;
}

}  // namespace opdist
