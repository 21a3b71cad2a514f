#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "opdist/fat_graph.hpp"
#include "opdist/metric_graph.hpp"
#include "opdist/que.hpp"
#include "opdist/spectra.hpp"

namespace opdist {

struct SweepOptions {
  std::uint64_t seed = 42;
  double norm_tol = 1e-6;
  int max_iter = 500;
  double cg_tol = 1e-10;
};

struct SweepRow {
  double eps = 0.0;
  double defect_norm = 0.0;
  double a_eps = 0.0;
  double b_eps = 0.0;
  double a0 = 0.0;
  double b0 = 0.0;
  double delta = 0.0;
  std::vector<double> eig_gaps;  // |lambda_k(fat) - lambda_k(graph)|, k entries
  double h_long = 0.0;           // largest longitudinal step
  Index dim_eps = 0;
  bool failed = false;
  std::string error;
};

struct SweepResult {
  int k = 0;
  double ell0 = 0.0;
  double lambda2 = 0.0;  // min reference-block eigenvalue; +inf without blocks
  double c_vol = 0.0;    // max block volume per degree, at unit scale
  std::vector<SweepRow> rows;  // descending eps
  std::map<std::string, double> slopes;  // log-log fits; NaN = indeterminate
};

// Least-squares slope of log(value) against log(eps).  NaN when any value is
// at the noise floor (solver tolerances put that near 1e-8) or there are
// fewer than two usable points; exact-product configurations then report
// "indeterminate" instead of a slope fitted to noise.
inline double fit_loglog_slope(const std::vector<double>& eps, const std::vector<double>& value) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (eps.size() != value.size() || eps.size() < 2) return nan;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(value[i] > 1e-8) || !std::isfinite(value[i]) || !(eps[i] > 0.0)) return nan;
    const double x = std::log(eps[i]);
    const double y = std::log(value[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  if (std::abs(det) < 1e-12) return nan;
  return (n * sxy - sx * sy) / det;
}

inline SweepResult run_sweep(const MetricGraph& graph, std::vector<double> eps_list, int n_t,
                             int k, const SweepOptions& opts = {}) {
  if (eps_list.empty()) throw std::invalid_argument("run_sweep: empty eps list");
  if (k < 1) throw std::invalid_argument("run_sweep: need k >= 1");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<double>());

  SweepResult res;
  res.k = k;
  res.ell0 = graph.ell0();
  res.lambda2 = std::numeric_limits<double>::infinity();
  res.c_vol = 0.0;
  for (Index v = 0; v < graph.num_vertices(); ++v) {
    const int deg = graph.degree(v);
    if (deg < 2) continue;
    res.lambda2 = std::min(res.lambda2, reference_block(deg, n_t).lambda2);
    res.c_vol = std::max(res.c_vol, (1.0 + deg) / static_cast<double>(deg));
  }

  for (std::size_t idx = 0; idx < eps_list.size(); ++idx) {
    SweepRow row;
    row.eps = eps_list[idx];
    row.eig_gaps.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
    const std::uint64_t rs = seed_stream(opts.seed, 1000 + idx);
    try {
      const double h = row.eps / (n_t - 1);
      GraphModel gm = assemble_graph_laplacian(graph, h);
      FatGraphModel fm = assemble_manifold_laplacian(graph, row.eps, n_t);
      FatIdentification pair = build_identification(gm, fm);
      row.h_long = *std::max_element(fm.h_e.begin(), fm.h_e.end());
      row.dim_eps = fm.dim;

      FatNormOptions fo;
      fo.seed = rs;
      fo.tol = opts.norm_tol;
      fo.max_iter = opts.max_iter;
      fo.cg_tol = opts.cg_tol;

      LinOp r0 = graph_resolvent_linop(gm, opts.cg_tol);
      LinOp reps = fat_resolvent_linop(fm, opts.cg_tol);
      LinOp j = identification_linop(pair);
      LinOp jstar = adjoint(j);

      row.defect_norm =
          op_norm(subtract(compose(reps, j), compose(j, r0)), detail::norm_opts(fo, 1));
      const double norm_j = op_norm(j, detail::norm_opts(fo, 2));
      const double defect_source =
          op_norm(compose(identity_minus(compose(jstar, j)), r0), detail::norm_opts(fo, 3));
      const double defect_target =
          op_norm(compose(identity_minus(compose(j, jstar)), reps), detail::norm_opts(fo, 4));

      ABOperators ab = make_ab_operators(gm, fm, pair, opts.cg_tol);
      row.a_eps = op_norm(ab.a_eps, detail::norm_opts(fo, 5));
      // Physical normalization (see ABOperators::b_eps).
      row.b_eps = fm.eps * op_norm(ab.b_eps, detail::norm_opts(fo, 6));
      row.a0 = op_norm(ab.a0, detail::norm_opts(fo, 7));
      row.b0 = op_norm(ab.b0, detail::norm_opts(fo, 8));

      // J' = J*, so the J-norm doubles as the J'-norm and the J* - J'
      // discrepancy vanishes; the intertwiners are adjoints of each other.
      row.delta = QUEReport::combine(norm_j, norm_j, 0.0, defect_source, defect_target,
                                     row.defect_norm, row.defect_norm);

      SpectraOptions so;
      so.seed = seed_stream(rs, 9);
      Vector graph_eigs = graph_spectrum(gm, k, so);
      Vector fat_eigs = smallest_eigenvalues(fm.stiffness, fm.weights, k, so);
      for (int i = 0; i < k; ++i)
        row.eig_gaps[static_cast<std::size_t>(i)] = std::abs(fat_eigs[i] - graph_eigs[i]);
    } catch (const std::exception& ex) {
      row.failed = true;
      row.error = ex.what();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.defect_norm = row.a_eps = row.b_eps = row.a0 = row.b0 = row.delta = nan;
      row.h_long = nan;
      row.dim_eps = 0;
    }
    res.rows.push_back(std::move(row));
  }

  std::vector<double> eps_ok;
  auto collect = [&](auto getter) {
    std::vector<double> vals;
    for (const SweepRow& r : res.rows)
      if (!r.failed) vals.push_back(getter(r));
    return vals;
  };
  eps_ok = collect([](const SweepRow& r) { return r.eps; });
  res.slopes["defect_norm"] =
      fit_loglog_slope(eps_ok, collect([](const SweepRow& r) { return r.defect_norm; }));
  res.slopes["a_eps"] = fit_loglog_slope(eps_ok, collect([](const SweepRow& r) { return r.a_eps; }));
  res.slopes["b_eps"] = fit_loglog_slope(eps_ok, collect([](const SweepRow& r) { return r.b_eps; }));
  res.slopes["a0"] = fit_loglog_slope(eps_ok, collect([](const SweepRow& r) { return r.a0; }));
  res.slopes["b0"] = fit_loglog_slope(eps_ok, collect([](const SweepRow& r) { return r.b0; }));
  res.slopes["delta"] = fit_loglog_slope(eps_ok, collect([](const SweepRow& r) { return r.delta; }));
  for (int i = 0; i < k; ++i) {
    auto gap = collect([i](const SweepRow& r) { return r.eig_gaps[static_cast<std::size_t>(i)]; });
    res.slopes["eig_gap_" + std::to_string(i + 1)] = fit_loglog_slope(eps_ok, gap);
  }
  return res;
}

// CSV serialization: fixed header, one row per eps, full-precision scientific
// notation, written to a temporary file and renamed into place so failures
// cannot leave a partial file.
inline void write_sweep_csv(const SweepResult& res, const std::string& path) {
  const std::string tmp = path + ".tmp";
  std::FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw std::runtime_error("write_sweep_csv: cannot open " + tmp);

  std::fprintf(fp, "eps,defect_norm,a_eps,b_eps,a0,b0,delta");
  for (int i = 0; i < res.k; ++i) std::fprintf(fp, ",eig_gap_%d", i + 1);
  std::fprintf(fp, ",h_long,dim_eps\n");
  for (const SweepRow& r : res.rows) {
    std::fprintf(fp, "%.17e,%.17e,%.17e,%.17e,%.17e,%.17e,%.17e", r.eps, r.defect_norm, r.a_eps,
                 r.b_eps, r.a0, r.b0, r.delta);
    for (int i = 0; i < res.k; ++i)
      std::fprintf(fp, ",%.17e", r.eig_gaps[static_cast<std::size_t>(i)]);
    std::fprintf(fp, ",%.17e,%lld\n", r.h_long, static_cast<long long>(r.dim_eps));
  }
  if (std::fclose(fp) != 0) throw std::runtime_error("write_sweep_csv: close failed for " + tmp);
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("write_sweep_csv: rename to " + path + " failed");
}

}  // namespace opdist
