#pragma once

// A fitted surrogate: a sparse weighted sum of library terms together with the
// normalization it was trained under.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flm/assembly.hpp"
#include "flm/kernels.hpp"

namespace flm {

enum class Provenance { DataDriven, NnDriven };

inline std::string_view to_string(Provenance p) { return p == Provenance::DataDriven ? "data-driven" : "nn-driven"; }

struct WeightedTerm {
  TermSpec term;
  double coeff = 0.0;
};

struct FitMeta {
  std::string solver = "stlsq";
  double lambda = 0.0;
  std::string preset;
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t out_n = 0;
};

/// Requested output shape for a prediction.
struct OutputRequest {
  TaskKind task = TaskKind::ImageToScalar;
  std::size_t line_n = 0;
  std::optional<Grid2D> grid;

  static OutputRequest scalar() { return {TaskKind::ImageToScalar, 0, std::nullopt}; }
  static OutputRequest line(std::size_t n) { return {TaskKind::ImageToLine, n, std::nullopt}; }
  static OutputRequest image(Grid2D g) { return {TaskKind::ImageToImage, 0, g}; }
};

class FunctionalLinearModel {
 public:
  FunctionalLinearModel(TaskKind task, std::vector<WeightedTerm> terms, std::optional<NormStats> norm = std::nullopt,
                        Provenance provenance = Provenance::DataDriven, FitMeta meta = {})
      : task_(task), terms_(std::move(terms)), norm_(norm), provenance_(provenance), meta_(std::move(meta)) {
    int biases = 0;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const auto& wt = terms_[i];
      if (wt.term.task != task_) fail(ErrorKind::Data, "model term " + std::to_string(i) + " has a different task");
      if (wt.coeff == 0.0 || !std::isfinite(wt.coeff))
        fail(ErrorKind::Data, "model term " + std::to_string(i) + " has a zero or non-finite coefficient");
      wt.term.validate();
      biases += wt.term.is_bias;
      for (std::size_t k = 0; k < i; ++k)
        if (terms_[k].term.key() == wt.term.key())
          fail(ErrorKind::Data, "model term " + std::to_string(i) + " duplicates term " + std::to_string(k));
    }
    if (biases > 1) fail(ErrorKind::Data, "model has more than one bias term");
    std::stable_sort(terms_.begin(), terms_.end(), [](const WeightedTerm& a, const WeightedTerm& b) {
      if (std::abs(a.coeff) != std::abs(b.coeff)) return std::abs(a.coeff) > std::abs(b.coeff);
      return a.term.key() < b.term.key();
    });
  }

  /// Keeps the non-zero entries of a solved coefficient vector.
  static FunctionalLinearModel from_fit(std::span<const TermSpec> library, std::span<const double> W,
                                        std::optional<NormStats> norm, Provenance provenance, FitMeta meta) {
    if (library.empty()) fail(ErrorKind::Usage, "empty library");
    if (library.size() != W.size()) fail(ErrorKind::Data, "coefficient count does not match library");
    std::vector<WeightedTerm> terms;
    for (std::size_t j = 0; j < W.size(); ++j)
      if (W[j] != 0.0) terms.push_back({library[j], W[j]});
    return FunctionalLinearModel(library.front().task, std::move(terms), norm, provenance, std::move(meta));
  }

  TaskKind task() const { return task_; }
  /// Terms ordered by |coefficient| descending.
  const std::vector<WeightedTerm>& terms() const { return terms_; }
  const std::optional<NormStats>& norm() const { return norm_; }
  Provenance provenance() const { return provenance_; }
  const FitMeta& meta() const { return meta_; }

 private:
  TaskKind task_;
  std::vector<WeightedTerm> terms_;
  std::optional<NormStats> norm_;
  Provenance provenance_;
  FitMeta meta_;
};

/// Evaluates the model on f at the requested output points. Inputs are mapped
/// through the stored normalization and outputs mapped back.
inline Output predict(const FunctionalLinearModel& model, const Field2D& f, const OutputRequest& req) {
  if (req.task != model.task())
    fail(ErrorKind::Data, "model task " + std::string(to_string(model.task())) + " cannot produce " +
                              std::string(to_string(req.task)) + " output");
  const Grid2D out_grid = req.grid.value_or(f.grid());
  std::size_t out_n = 1;
  if (req.task == TaskKind::ImageToLine) {
    if (req.line_n == 0) fail(ErrorKind::Usage, "line prediction needs a positive output length");
    out_n = req.line_n;
  }
  const auto points = output_points(model.task(), out_grid, out_n);

  std::vector<double> values(points.size(), 0.0);
  if (!model.terms().empty()) {
    const Field2D input = model.norm() ? apply_input_normalization(f, *model.norm()) : f;
    std::vector<TermSpec> terms;
    for (const auto& wt : model.terms()) terms.push_back(wt.term);
    const Field2D* in[] = {&input};
    const DesignMatrix F = evaluate_features(in, terms, points);
    for (std::size_t p = 0; p < points.size(); ++p)
      for (std::size_t j = 0; j < terms.size(); ++j) values[p] += model.terms()[j].coeff * F(p, j);
  }
  if (model.norm())
    for (double& v : values) v = model.norm()->invert_output(v);
  return make_output(model.task(), std::move(values), out_grid);
}

/// Predictions for every input of a dataset, at the dataset's output shape.
inline std::vector<Output> predict_dataset(const FunctionalLinearModel& model, const Dataset& data,
                                           unsigned threads = 1) {
  const OutputRequest req{data.task(), data.task() == TaskKind::ImageToLine ? data.output_size() : 0,
                          data.task() == TaskKind::ImageToImage ? std::optional<Grid2D>(data.grid()) : std::nullopt};
  std::vector<std::optional<Output>> tmp(data.size());
  parallel_for(data.size(), threads, [&](std::size_t q) { tmp[q] = predict(model, data[q].input, req); });
  std::vector<Output> out;
  out.reserve(tmp.size());
  for (auto& o : tmp) out.push_back(std::move(*o));
  return out;
}

/// Drops terms with |coefficient| < tol; the bias term is kept.
inline FunctionalLinearModel prune(const FunctionalLinearModel& model, double tol) {
  if (!(tol > 0.0)) fail(ErrorKind::Usage, "prune tolerance must be positive");
  std::vector<WeightedTerm> kept;
  for (const auto& wt : model.terms())
    if (wt.term.is_bias || std::abs(wt.coeff) >= tol) kept.push_back(wt);
  return FunctionalLinearModel(model.task(), std::move(kept), model.norm(), model.provenance(), model.meta());
}

// ---------------------------------------------------------------------------
// Rendering and serialization

inline std::string format_coeff(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%#.6g", v);
  return buf;
}

/// One summand per line, largest |coefficient| first:
///   u = 2.00000 ∬ ζ f(ζ,η) dζdη
///     - 0.500000 ∬ ...
inline std::string render_equation(const FunctionalLinearModel& model) {
  if (model.terms().empty()) return "u = 0";
  std::string out;
  bool first = true;
  for (const auto& wt : model.terms()) {
    const double c = wt.coeff;
    std::string mag = format_coeff(std::abs(c));
    if (!wt.term.is_bias) mag += " " + render_term(wt.term);
    if (first) {
      out = "u = " + std::string(c < 0 ? "-" : "") + mag;
      first = false;
    } else {
      out += std::string("\n  ") + (c < 0 ? "- " : "+ ") + mag;
    }
  }
  return out;
}

inline std::string to_hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double from_hex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    fail(ErrorKind::Data, "schema violation: bad hex coefficient '" + s + "'");
  return v;
}

inline nlohmann::json norm_to_json(const NormStats& n) {
  nlohmann::json j = {{"input_min", n.input_min},
                      {"input_max", n.input_max},
                      {"output_min", n.output_min},
                      {"output_max", n.output_max}};
  if (n.input_shift != 0.0 || n.output_shift != 0.0) {
    j["input_shift"] = n.input_shift;
    j["output_shift"] = n.output_shift;
  }
  return j;
}

inline NormStats norm_from_json(const nlohmann::json& j) {
  NormStats n;
  n.input_min = j.at("input_min").get<double>();
  n.input_max = j.at("input_max").get<double>();
  n.output_min = j.at("output_min").get<double>();
  n.output_max = j.at("output_max").get<double>();
  n.input_shift = j.value("input_shift", 0.0);
  n.output_shift = j.value("output_shift", 0.0);
  if (!(n.input_max > n.input_min) || !(n.output_max > n.output_min))
    fail(ErrorKind::Data, "schema violation: degenerate normalization range");
  return n;
}

inline nlohmann::json term_to_json(const TermSpec& t) {
  nlohmann::json j = {{"family_index", t.family_index},
                      {"lifting", tag(t.lifting)},
                      {"kernel", tag(t.kernel)},
                      {"outer", tag(t.outer)},
                      {"beta", t.beta ? nlohmann::json(*t.beta) : nlohmann::json(nullptr)},
                      {"bias", t.is_bias}};
  if (t.kernel == KernelFamily::IndicatorDisk) j["indicator"] = tag(t.indicator);
  return j;
}

/// Parses a term and checks it against the candidate table of its task.
inline TermSpec term_from_json(TaskKind task, const nlohmann::json& j) {
  const int idx = j.at("family_index").get<int>();
  const bool bias = j.at("bias").get<bool>();
  TermSpec t;
  t.task = task;
  t.family_index = idx;
  t.lifting = parse_lifting(j.at("lifting").get<std::string>());
  t.kernel = parse_kernel(j.at("kernel").get<std::string>());
  t.outer = parse_outer(j.at("outer").get<std::string>());
  t.indicator = parse_indicator(j.value("indicator", std::string("local")));
  t.is_bias = bias;
  if (!j.at("beta").is_null()) t.beta = j.at("beta").get<double>();
  if (bias) {
    if (idx != bias_family_index(task)) fail(ErrorKind::Data, "schema violation: bias term has wrong family_index");
    return bias_term(task);
  }
  const TermSpec ref = make_term(task, idx, t.beta.value_or(1.0), t.indicator);
  if (ref.lifting != t.lifting || ref.kernel != t.kernel || ref.outer != t.outer)
    fail(ErrorKind::Data, "schema violation: term tags do not match family " + std::to_string(idx));
  t.validate();
  return t;
}

inline nlohmann::json model_to_json(const FunctionalLinearModel& m) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& wt : m.terms()) {
    nlohmann::json j = term_to_json(wt.term);
    j["coeff_hex"] = to_hex(wt.coeff);
    j["coeff"] = wt.coeff;
    j["rendered"] = render_term(wt.term);
    terms.push_back(std::move(j));
  }
  return {{"flm_version", 1},
          {"task", to_string(m.task())},
          {"grid", {{"nx", m.meta().nx}, {"ny", m.meta().ny}, {"out_n", m.meta().out_n}}},
          {"normalization", m.norm() ? norm_to_json(*m.norm()) : nlohmann::json(nullptr)},
          {"provenance", to_string(m.provenance())},
          {"solver",
           {{"name", m.meta().solver}, {"lambda", m.meta().lambda}, {"preset", m.meta().preset},
            {"row_order", kRowOrder}}},
          {"terms", std::move(terms)}};
}

inline FunctionalLinearModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("flm_version").get<int>();
    if (version != 1) fail(ErrorKind::Data, "model version " + std::to_string(version) + " unsupported");
    const std::string task_name = j.at("task").get<std::string>();
    if (task_name != "image_to_scalar" && task_name != "image_to_line" && task_name != "image_to_image")
      fail(ErrorKind::Data, "schema violation: unknown task '" + task_name + "'");
    const TaskKind task = parse_task(task_name);
    FitMeta meta;
    const auto& grid = j.at("grid");
    meta.nx = grid.at("nx").get<std::size_t>();
    meta.ny = grid.at("ny").get<std::size_t>();
    meta.out_n = grid.value("out_n", std::size_t{0});
    const auto& solver = j.at("solver");
    meta.solver = solver.value("name", std::string());
    meta.lambda = solver.value("lambda", 0.0);
    meta.preset = solver.value("preset", std::string());
    const std::string prov = j.at("provenance").get<std::string>();
    if (prov != "data-driven" && prov != "nn-driven")
      fail(ErrorKind::Data, "schema violation: unknown provenance '" + prov + "'");
    std::optional<NormStats> norm;
    if (!j.at("normalization").is_null()) norm = norm_from_json(j.at("normalization"));
    std::vector<WeightedTerm> terms;
    for (const auto& tj : j.at("terms"))
      terms.push_back({term_from_json(task, tj), from_hex(tj.at("coeff_hex").get<std::string>())});
    return FunctionalLinearModel(task, std::move(terms), norm,
                                 prov == "nn-driven" ? Provenance::NnDriven : Provenance::DataDriven, meta);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("schema violation: ") + e.what());
  }
}

inline void export_model(const FunctionalLinearModel& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Data, "cannot open '" + path + "' for writing");
  os << model_to_json(m).dump(2) << "\n";
  if (!os) fail(ErrorKind::Data, "write failed for '" + path + "'");
}

inline FunctionalLinearModel import_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Data, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, "'" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace flm
