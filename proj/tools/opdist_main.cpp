// Command-line front end: distances between operator files, quasi-unitary
// certification, metric-graph spectra, and eps-sweeps over fat graphs.
//
// Exit codes: 0 success, 1 run-time failure (solver breakdown, failed sweep
// row), 2 file/flag parse error, 3 violated precondition or shape mismatch.

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "opdist/distances.hpp"
#include "opdist/fat_graph.hpp"
#include "opdist/io.hpp"
#include "opdist/que.hpp"
#include "opdist/sweep.hpp"

namespace {

using namespace opdist;

// Spectral fingerprint of an operator file: resolvent eigenvalues,
// non-increasing.  Laplacian files are mapped through mu = 1/(1 + lambda).
EigenSequence sequence_of(const OperatorFile& of) {
  if (of.kind == "laplacian") {
    Vector lam = sym_eigenvalues_desc(of.to_dense(), of.weights);
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    std::vector<double> mu(static_cast<std::size_t>(lam.size()));
    for (Index i = 0; i < lam.size(); ++i) {
      double l = lam[lam.size() - 1 - i];  // ascending traversal
      if (l < 0.0) {
        if (l < -1e-9 * scale)
          throw std::invalid_argument("laplacian file has negative eigenvalue " +
                                      std::to_string(l));
        l = 0.0;
      }
      mu[static_cast<std::size_t>(i)] = 1.0 / (1.0 + l);
    }
    return EigenSequence(std::move(mu));
  }
  return eig_sym(HermOperator(of.to_dense(), of.weights)).seq;
}

// Dense resolvent-normalized operator for d_uni.
HermOperator resolvent_operator(const OperatorFile& of) {
  if (of.kind == "laplacian") {
    auto calc = detail::laplacian_eig(of.to_dense(), of.weights);
    return HermOperator(calc.function_of_laplacian([](double l) { return 1.0 / (1.0 + l); }),
                        of.weights);
  }
  return HermOperator(of.to_dense(), of.weights, /*validate_spectrum=*/true);
}

// Matrix-free view of an operator file.  Resolvent files act directly;
// laplacian files act through conjugate-gradient resolvent application, so
// certification never densifies a large model.
LinOp operator_linop(const OperatorFile& of, double cg_tol) {
  if (of.kind == "laplacian") {
    auto act = std::make_shared<SparseMatrix>(of.to_sparse());
    auto w = std::make_shared<Vector>(of.weights);
    {  // self-adjointness of the action w.r.t. the weights: W*M symmetric
      SparseMatrix wm = w->asDiagonal() * (*act);
      SparseMatrix diff = SparseMatrix(wm.transpose()) - wm;
      double scale = 0.0;
      for (Index c = 0; c < wm.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(wm, c); it; ++it)
          scale = std::max(scale, std::abs(it.value()));
      double asym = 0.0;
      for (Index c = 0; c < diff.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(diff, c); it; ++it)
          asym = std::max(asym, std::abs(it.value()));
      if (asym > 1e-10 * std::max(scale, 1e-300))
        throw std::invalid_argument("laplacian file is not self-adjoint w.r.t. its weights");
    }
    LinOp op;
    op.rows = op.cols = of.dim;
    op.w_in = op.w_out = of.weights;
    op.apply = [act, w, cg_tol](const Vector& x) { return resolvent_apply(*act, *w, x, cg_tol); };
    op.apply_adjoint = op.apply;
    return op;
  }
  if (of.sparse) return linop_sparse(*of.sparse, of.weights, of.weights);
  return linop_dense(*of.dense, of.weights, of.weights);
}

int cmd_dist(const std::string& a_path, const std::string& b_path, const std::string& metric) {
  OperatorFile a = load_operator(a_path);
  OperatorFile b = load_operator(b_path);
  if (metric == "uni") {
    DUniResult r = d_uni_equal_dim(resolvent_operator(a), resolvent_operator(b));
    std::printf("%.17e\n", r.distance);
  } else if (metric == "spec") {
    DSpecResult r = d_spec(sequence_of(a), sequence_of(b));
    std::printf("%.17e index=%zu\n", r.distance, r.index);
  } else {
    std::printf("%.17e\n", d_hausdorff_spec(sequence_of(a), sequence_of(b)));
  }
  return 0;
}

int cmd_certify(const std::string& a_path, const std::string& b_path, const std::string& j_path,
                const std::string& jprime_path, bool symmetrize, const QUEOptions& qopts,
                double cg_tol) {
  OperatorFile a = load_operator(a_path);
  OperatorFile b = load_operator(b_path);
  MapFile jm = load_map(j_path);
  if (jm.cols != a.dim || jm.rows != b.dim)
    throw std::invalid_argument("certify: --j must map dim(--a) to dim(--b), got " +
                                std::to_string(jm.rows) + "x" + std::to_string(jm.cols));

  LinOp r = operator_linop(a, cg_tol);
  LinOp rt = operator_linop(b, cg_tol);
  LinOp j = linop_sparse(jm.to_sparse(), a.weights, b.weights);

  std::optional<LinOp> jp;
  if (!jprime_path.empty()) {
    MapFile jpm = load_map(jprime_path);
    if (jpm.rows != a.dim || jpm.cols != b.dim)
      throw std::invalid_argument("certify: --jprime must map dim(--b) to dim(--a)");
    jp = linop_sparse(jpm.to_sparse(), b.weights, a.weights);
  }

  QUEReport rep = que_certify(r, rt, j, jp ? &*jp : nullptr, qopts);
  nlohmann::json out = que_report_json(rep);
  if (symmetrize) {
    if (!(rep.delta <= 1.0))
      throw std::invalid_argument("certify: --symmetrize requires delta <= 1, measured " +
                                  std::to_string(rep.delta));
    // Recertify with J' := J*; the combined defect grows by at most a factor 3.
    QUEReport sym = jp ? que_certify(r, rt, j, nullptr, qopts) : rep;
    out["symmetrized"] = que_report_json(sym);
    out["three_delta_bound"] = 3.0 * rep.delta;
    out["three_delta_ok"] = sym.delta <= 3.0 * rep.delta + 1e-9;
  }
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_spectrum(const std::string& graph_path, double h, int k, std::uint64_t seed) {
  MetricGraph g = load_graph(graph_path);
  GraphModel model = assemble_graph_laplacian(g, h);
  SpectraOptions opts;
  opts.seed = seed;
  Vector vals = graph_spectrum(model, k, opts);
  for (Index i = 0; i < vals.size(); ++i) std::printf("%.17e\n", vals[i]);
  return 0;
}

int cmd_sweep(const std::string& graph_path, const std::vector<double>& eps, int nt, int k,
              const std::string& out_path, std::uint64_t seed, double tol) {
  MetricGraph g = load_graph(graph_path);
  SweepOptions opts;
  opts.seed = seed;
  opts.norm_tol = tol;
  SweepResult res = run_sweep(g, eps, nt, k, opts);
  write_sweep_csv(res, out_path);

  std::printf("ell0 %.17e\n", res.ell0);
  std::printf("lambda2 %.17e\n", res.lambda2);
  std::printf("c_vol %.17e\n", res.c_vol);
  std::vector<std::string> names = {"defect_norm", "a_eps", "b_eps", "a0", "b0", "delta"};
  for (int i = 1; i <= res.k; ++i) names.push_back("eig_gap_" + std::to_string(i));
  for (const std::string& name : names) {
    double s = res.slopes.at(name);
    if (std::isfinite(s)) std::printf("slope %s %.17e\n", name.c_str(), s);
    else std::printf("slope %s indeterminate\n", name.c_str());
  }

  int failures = 0;
  for (const SweepRow& row : res.rows) {
    if (!row.failed) continue;
    ++failures;
    std::fprintf(stderr, "row eps=%.17e failed: %s\n", row.eps, row.error.c_str());
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"operator distances between metric graphs and their fat neighborhoods"};
  app.require_subcommand(1);
  // Long-only help so the mesh-width option can use --h.
  app.set_help_flag("--help", "print this help message and exit");

  std::uint64_t seed = 42;
  double tol = 1e-6;

  auto* dist = app.add_subcommand("dist", "distance between two operator files");
  std::string dist_a, dist_b, metric;
  dist->add_option("--a", dist_a, "first operator file")->required();
  dist->add_option("--b", dist_b, "second operator file")->required();
  dist->add_option("--metric", metric, "spec | hausdorff | uni")
      ->required()
      ->check(CLI::IsMember({"spec", "hausdorff", "uni"}));

  auto* certify = app.add_subcommand("certify", "certify a quasi-unitary pair");
  std::string cert_a, cert_b, cert_j, cert_jp;
  bool symmetrize = false;
  certify->add_option("--a", cert_a, "source operator file")->required();
  certify->add_option("--b", cert_b, "target operator file")->required();
  certify->add_option("--j", cert_j, "identification map file, source -> target")->required();
  certify->add_option("--jprime", cert_jp, "reverse map file; default weighted adjoint of --j");
  certify->add_flag("--symmetrize", symmetrize, "recertify with J' = J* and report the 3-delta check");
  certify->add_option("--seed", seed, "randomized norm estimation seed (env OPDIST_SEED overrides)");
  certify->add_option("--tol", tol, "relative tolerance of iterative norm estimation");

  auto* spectrum = app.add_subcommand("spectrum", "lowest Kirchhoff eigenvalues of a metric graph");
  std::string spec_graph;
  double h = 0.0;
  int spec_k = 0;
  spectrum->add_option("--graph", spec_graph, "graph file")->required();
  spectrum->add_option("--h", h, "target mesh width, at most ell0/4")->required();
  spectrum->add_option("-k", spec_k, "number of eigenvalues")->required();
  spectrum->add_option("--seed", seed, "eigensolver start-block seed (env OPDIST_SEED overrides)");

  auto* sweep = app.add_subcommand("sweep", "eps-sweep of the fat-graph approximation");
  std::string sweep_graph, sweep_out;
  std::vector<double> eps_list;
  int nt = 0, sweep_k = 0;
  sweep->add_option("--graph", sweep_graph, "graph file")->required();
  sweep->add_option("--eps", eps_list, "comma-separated eps values")->required()->delimiter(',');
  sweep->add_option("--nt", nt, "transverse points per tube cross-section")->required();
  sweep->add_option("-k", sweep_k, "eigenvalue gaps to track")->required();
  sweep->add_option("--out", sweep_out, "CSV output path")->required();
  sweep->add_option("--seed", seed, "sweep seed (env OPDIST_SEED overrides)");
  sweep->add_option("--tol", tol, "relative tolerance of iterative norm estimation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (const char* env = std::getenv("OPDIST_SEED")) {
    try {
      seed = std::stoull(env);
    } catch (const std::exception&) {
      std::fprintf(stderr, "error: OPDIST_SEED must be a non-negative integer, got \"%s\"\n", env);
      return 2;
    }
  }

  QUEOptions qopts;
  qopts.seed = seed;
  qopts.tol = tol;

  try {
    if (*dist) return cmd_dist(dist_a, dist_b, metric);
    if (*certify) return cmd_certify(cert_a, cert_b, cert_j, cert_jp, symmetrize, qopts, 1e-10);
    if (*spectrum) return cmd_spectrum(spec_graph, h, spec_k, seed);
    if (*sweep) return cmd_sweep(sweep_graph, eps_list, nt, sweep_k, sweep_out, seed, tol);
  } catch (const opdist::ParseError& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  } catch (const std::invalid_argument& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 3;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
