#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "opdist/core.hpp"
#include "opdist/metric_graph.hpp"
#include "opdist/que.hpp"

namespace opdist {

// File-format violations.  The CLI maps this to its parse exit code,
// separate from semantic contract errors (std::invalid_argument).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operator file: dim, matrix (row-major array of dim^2 numbers or a triplet
// object {rows, cols, vals}), optional weights (default ones), kind
// ("resolvent" | "laplacian").  The matrix acts on coefficient vectors.
struct OperatorFile {
  Index dim = 0;
  std::optional<Matrix> dense;
  std::optional<SparseMatrix> sparse;
  Vector weights;
  std::string kind;

  Matrix to_dense() const { return dense ? *dense : Matrix(*sparse); }
  SparseMatrix to_sparse() const { return sparse ? *sparse : SparseMatrix(dense->sparseView()); }
};

// Linear-map file: rows, cols, matrix in the same two encodings.
struct MapFile {
  Index rows = 0;
  Index cols = 0;
  std::optional<Matrix> dense;
  std::optional<SparseMatrix> sparse;

  Matrix to_dense() const { return dense ? *dense : Matrix(*sparse); }
  SparseMatrix to_sparse() const { return sparse ? *sparse : SparseMatrix(dense->sparseView()); }
};

namespace detail {

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path + ": " + ex.what());
  }
}

inline SparseMatrix sparse_from_triplets_json(const nlohmann::json& jm, Index rows, Index cols,
                                              const std::string& path) {
  if (!jm.contains("rows") || !jm.contains("cols") || !jm.contains("vals"))
    throw ParseError(path + ": triplet matrix needs rows, cols, vals");
  const auto& jr = jm.at("rows");
  const auto& jc = jm.at("cols");
  const auto& jv = jm.at("vals");
  if (!jr.is_array() || !jc.is_array() || !jv.is_array() || jr.size() != jc.size() ||
      jr.size() != jv.size())
    throw ParseError(path + ": triplet arrays must be equal-length arrays");
  std::vector<Triplet> trips;
  trips.reserve(jr.size());
  for (std::size_t i = 0; i < jr.size(); ++i) {
    const Index r = jr[i].get<Index>();
    const Index c = jc[i].get<Index>();
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw ParseError(path + ": triplet index out of range");
    trips.emplace_back(r, c, jv[i].get<double>());
  }
  SparseMatrix m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

inline Matrix dense_from_array_json(const nlohmann::json& jm, Index rows, Index cols,
                                    const std::string& path) {
  if (jm.size() != static_cast<std::size_t>(rows * cols))
    throw ParseError(path + ": matrix array length must be rows*cols");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      m(r, c) = jm[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

}  // namespace detail

inline OperatorFile load_operator(const std::string& path) {
  const nlohmann::json j = detail::load_json(path);
  if (!j.is_object() || !j.contains("dim") || !j.contains("matrix") || !j.contains("kind"))
    throw ParseError(path + ": operator file needs dim, matrix, kind");
  OperatorFile of;
  try {
    of.dim = j.at("dim").get<Index>();
    if (of.dim <= 0) throw ParseError(path + ": dim must be positive");
    of.kind = j.at("kind").get<std::string>();
    if (of.kind != "resolvent" && of.kind != "laplacian")
      throw ParseError(path + ": kind must be \"resolvent\" or \"laplacian\"");
    const auto& jm = j.at("matrix");
    if (jm.is_array()) of.dense = detail::dense_from_array_json(jm, of.dim, of.dim, path);
    else if (jm.is_object()) of.sparse = detail::sparse_from_triplets_json(jm, of.dim, of.dim, path);
    else throw ParseError(path + ": matrix must be an array or a triplet object");
    if (j.contains("weights")) {
      const auto& jw = j.at("weights");
      if (!jw.is_array() || jw.size() != static_cast<std::size_t>(of.dim))
        throw ParseError(path + ": weights must be an array of length dim");
      of.weights.resize(of.dim);
      for (Index i = 0; i < of.dim; ++i) of.weights[i] = jw[static_cast<std::size_t>(i)].get<double>();
      if ((of.weights.array() <= 0.0).any())
        throw ParseError(path + ": weights must be strictly positive");
    } else {
      of.weights = Vector::Ones(of.dim);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path + ": " + ex.what());
  }
  return of;
}

inline MapFile load_map(const std::string& path) {
  const nlohmann::json j = detail::load_json(path);
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("matrix"))
    throw ParseError(path + ": map file needs rows, cols, matrix");
  MapFile mf;
  try {
    mf.rows = j.at("rows").get<Index>();
    mf.cols = j.at("cols").get<Index>();
    if (mf.rows <= 0 || mf.cols <= 0) throw ParseError(path + ": rows and cols must be positive");
    const auto& jm = j.at("matrix");
    if (jm.is_array()) mf.dense = detail::dense_from_array_json(jm, mf.rows, mf.cols, path);
    else if (jm.is_object())
      mf.sparse = detail::sparse_from_triplets_json(jm, mf.rows, mf.cols, path);
    else throw ParseError(path + ": matrix must be an array or a triplet object");
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path + ": " + ex.what());
  }
  return mf;
}

inline MetricGraph load_graph(const std::string& path) {
  const nlohmann::json j = detail::load_json(path);
  if (!j.is_object() || !j.contains("vertices") || !j.contains("edges"))
    throw ParseError(path + ": graph file needs vertices and edges");
  try {
    std::vector<std::string> ids = j.at("vertices").get<std::vector<std::string>>();
    std::map<std::string, Index> index;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!index.emplace(ids[i], static_cast<Index>(i)).second)
        throw ParseError(path + ": duplicate vertex id " + ids[i]);
    }
    std::vector<MetricGraph::Edge> edges;
    for (const auto& je : j.at("edges")) {
      MetricGraph::Edge e;
      const std::string from = je.at("from").get<std::string>();
      const std::string to = je.at("to").get<std::string>();
      auto itf = index.find(from);
      auto itt = index.find(to);
      if (itf == index.end() || itt == index.end())
        throw ParseError(path + ": edge references unknown vertex");
      e.src = itf->second;
      e.dst = itt->second;
      e.length = je.at("length").get<double>();
      edges.push_back(e);
    }
    return MetricGraph(std::move(ids), std::move(edges));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path + ": " + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw ParseError(path + ": " + ex.what());
  }
}

inline nlohmann::json que_report_json(const QUEReport& rep) {
  nlohmann::json j;
  j["norm_j"] = rep.norm_j;
  j["norm_jprime"] = rep.norm_jprime;
  j["norm_jstar_minus_jprime"] = rep.norm_jstar_minus_jprime;
  j["defect_source"] = rep.defect_source;
  j["defect_target"] = rep.defect_target;
  j["intertwine_fwd"] = rep.intertwine_fwd;
  j["intertwine_bwd"] = rep.intertwine_bwd;
  j["delta"] = rep.delta;
  return j;
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

inline void save_operator_sparse(const std::string& path, const SparseMatrix& op_action,
                                 const Vector& weights, const std::string& kind) {
  nlohmann::json j;
  j["dim"] = op_action.rows();
  j["kind"] = kind;
  nlohmann::json jm;
  std::vector<Index> rows, cols;
  std::vector<double> vals;
  for (Index c = 0; c < op_action.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(op_action, c); it; ++it) {
      rows.push_back(it.row());
      cols.push_back(it.col());
      vals.push_back(it.value());
    }
  jm["rows"] = rows;
  jm["cols"] = cols;
  jm["vals"] = vals;
  j["matrix"] = jm;
  j["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
  save_json(j, path);
}

inline void save_map_sparse(const std::string& path, const SparseMatrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  nlohmann::json jm;
  std::vector<Index> rows, cols;
  std::vector<double> vals;
  for (Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
      rows.push_back(it.row());
      cols.push_back(it.col());
      vals.push_back(it.value());
    }
  jm["rows"] = rows;
  jm["cols"] = cols;
  jm["vals"] = vals;
  j["matrix"] = jm;
  save_json(j, path);
}

}  // namespace opdist
