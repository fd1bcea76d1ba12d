// flm: command-line front end for data generation, fitting, probing,
// prediction, evaluation and equation export.
//
// Every subcommand writes files and prints one JSON summary line on stdout.
// Exit codes: 0 success, 2 usage, 3 data/format, 4 numerical.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flm/flm.hpp"

using nlohmann::json;

namespace {

using namespace flm;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return kExitUsage;
    case ErrorKind::Data: return kExitData;
    case ErrorKind::Numerical: return kExitNumerical;
  }
  return kExitData;
}

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string config;
};

// ---------------------------------------------------------------------------
// Small file helpers

void require_out_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    fail(ErrorKind::Data, "output directory '" + parent.string() + "' does not exist");
}

void write_json(const std::string& path, const json& j) {
  require_out_dir(path);
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::Data, "cannot open '" + path + "' for writing");
  os << j.dump(2) << "\n";
  if (!os) fail(ErrorKind::Data, "write failed for '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  require_out_dir(path);
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::Data, "cannot open '" + path + "' for writing");
  os << text;
  if (!os) fail(ErrorKind::Data, "write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Data, "cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, "'" + path + "': " + e.what());
  }
}

/// Manifest next to a dataset, or null when there is none.
json read_manifest(const std::string& data_path) {
  const std::string m = io::manifest_path(data_path);
  if (!std::filesystem::exists(m)) return nullptr;
  return read_json(m);
}

/// Task code stored in an FLM1 header (3 marks a matrix dump).
std::uint32_t peek_task_code(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot open '" + path + "'");
  unsigned char h[12] = {};
  is.read(reinterpret_cast<char*>(h), sizeof h);
  if (is.gcount() < 12 || std::memcmp(h, "FLM1", 4) != 0)
    fail(ErrorKind::Data, "'" + path + "': bad magic, not an FLM1 file");
  return h[8] | (h[9] << 8) | (h[10] << 16) | (static_cast<std::uint32_t>(h[11]) << 24);
}

void write_dataset(const std::string& path, const Dataset& d, const json& manifest) {
  require_out_dir(path);
  io::write_fields(path, d);
  write_json(io::manifest_path(path), manifest);
}

ParamRanges parse_ranges(const std::vector<std::string>& specs) {
  ParamRanges out;
  for (const auto& s : specs) {
    const auto eq = s.find('='), colon = s.find(':');
    if (eq == std::string::npos || colon == std::string::npos || colon < eq)
      fail(ErrorKind::Usage, "range '" + s + "' is not NAME=LO:HI");
    ParamRange r{s.substr(0, eq), 0.0, 0.0};
    try {
      r.lo = std::stod(s.substr(eq + 1, colon - eq - 1));
      r.hi = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::Usage, "range '" + s + "' has non-numeric bounds");
    }
    if (r.hi < r.lo) fail(ErrorKind::Usage, "range '" + s + "' is inverted");
    out.push_back(r);
  }
  return out;
}

InputSampler make_sampler(const std::string& name, int max_modes, const std::vector<std::string>& ranges,
                          SplitTag tag) {
  if (name == "smooth") return SmoothSampler{max_modes, std::nullopt};
  const PermeabilityFamily fam = parse_family(name);
  ParamRanges r = ranges.empty() ? default_ranges(fam, tag) : parse_ranges(ranges);
  return DarcySampler{fam, std::move(r)};
}

std::string default_preset(TaskKind task) {
  switch (task) {
    case TaskKind::ImageToScalar: return "case1-mnist";
    case TaskKind::ImageToLine: return "case5-wss-line";
    case TaskKind::ImageToImage: return "case3-porous-image";
  }
  return "case1-mnist";
}

json weighted_terms_json(std::span<const TermSpec> terms, std::span<const double> coeffs) {
  json arr = json::array();
  for (std::size_t i = 0; i < terms.size(); ++i) {
    json t = term_to_json(terms[i]);
    t["coeff"] = coeffs[i];
    t["coeff_hex"] = to_hex(coeffs[i]);
    t["rendered"] = render_term(terms[i]);
    arr.push_back(std::move(t));
  }
  return arr;
}

/// Analytic predictor from either an exported model or a term list
///   {"task": "...", "terms": [{"family_index": 1, "beta": null, "coeff": 2.0}, ...]}
FunctionalLinearModel analytic_model_from_spec(const std::string& path) {
  const json j = read_json(path);
  if (j.contains("flm_version")) return model_from_json(j);
  try {
    const TaskKind task = parse_task(j.at("task").get<std::string>());
    std::vector<TermSpec> terms;
    std::vector<double> coeffs;
    for (const auto& t : j.at("terms")) {
      const int idx = t.at("family_index").get<int>();
      std::optional<double> beta;
      if (t.contains("beta") && !t["beta"].is_null()) beta = t["beta"].get<double>();
      const IndicatorMode ind = parse_indicator(t.value("indicator", std::string("local")));
      terms.push_back(make_term(task, idx, beta, ind));
      coeffs.push_back(t.contains("coeff_hex") ? from_hex(t["coeff_hex"].get<std::string>()) : t.at("coeff").get<double>());
    }
    return std::get<AnalyticEndpoint>(builtin_analytic_predictor(terms, coeffs)).model;
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, "'" + path + "': " + e.what());
  }
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenDataArgs {
  std::string family = "case3";
  std::string task = "image";
  std::string split = "train";
  std::size_t q = 60;
  std::size_t nx = 28, ny = 28;
  std::string out;
  std::vector<std::string> ranges;
  double mu = 10.0;
  double background_k = 10.0;
  std::string preset = "case1-mnist";
  std::vector<std::size_t> true_cols;
  std::vector<double> true_coeffs;
  int max_modes = 4;
  std::size_t line_n = 0;
};

json cmd_gen_data(const GenDataArgs& a, const Globals& g) {
  require_out_dir(a.out);
  const Grid2D grid(a.nx, a.ny);
  const SplitTag tag = parse_split(a.split);
  std::optional<Dataset> data;
  json manifest;

  if (a.family == "library") {
    LibrarySpec spec = library_preset(a.preset);
    const auto library = build_library(spec);
    if (a.true_cols.empty()) fail(ErrorKind::Usage, "--family library needs --true-cols");
    if (a.true_cols.size() != a.true_coeffs.size())
      fail(ErrorKind::Usage, "--true-cols and --true-coeffs differ in length");
    std::vector<TermSpec> terms;
    for (std::size_t c : a.true_cols) {
      if (c >= library.size())
        fail(ErrorKind::Usage, "column " + std::to_string(c) + " outside library of " + std::to_string(library.size()));
      terms.push_back(library[c]);
    }
    const InputSampler sampler = SmoothSampler{a.max_modes, std::nullopt};
    data = gen_from_library(terms, a.true_coeffs, sampler, a.q, g.seed, grid, a.line_n);
    manifest = {{"generator", "library"},
                {"preset", a.preset},
                {"columns", a.true_cols},
                {"terms", weighted_terms_json(terms, a.true_coeffs)},
                {"sampler", sampler_to_json(sampler)},
                {"split", to_string(tag)},
                {"seed", g.seed},
                {"count", a.q},
                {"task", to_string(data->task())},
                {"grid", {{"nx", a.nx}, {"ny", a.ny}}},
                {"provenance", "data-driven"}};
  } else {
    ParamSplit split;
    split.family = parse_family(a.family);
    split.ranges = parse_ranges(a.ranges);
    split.count = a.q;
    split.seed = g.seed;
    split.tag = tag;
    DarcyOptions opt;
    opt.mu = a.mu;
    opt.background_k = a.background_k;
    opt.threads = g.threads;
    auto gen = gen_darcy_dataset(split, parse_task(a.task), grid, opt);
    data = std::move(gen.data);
    manifest = std::move(gen.manifest);
  }
  write_dataset(a.out, *data, manifest);
  return {{"out", a.out},
          {"manifest", io::manifest_path(a.out)},
          {"count", data->size()},
          {"task", to_string(data->task())},
          {"split", to_string(tag)},
          {"seed", g.seed}};
}

struct FitArgs {
  std::string data, out, report;
  std::string preset;
  double beta_min = 0, beta_max = 0;
  int m_beta = 0;
  std::vector<int> families;
  bool square_term = false;
  std::string indicator;
  std::string solver = "stlsq";
  double lambda = 0.1;
  int max_sweeps = 20;
  double inner_ridge = 0.0;
  double ridge_lambda = 1e-9;
  double cg_tol = 1e-10;
  int cg_max_iter = 0;
  bool no_col_normalize = false;
  bool raw_threshold = false;
  std::string normalize = "auto";
  bool center = false;
  std::size_t memory_cap_mb = 8192;
  CLI::Option* beta_min_opt = nullptr;
  CLI::Option* beta_max_opt = nullptr;
  CLI::Option* m_beta_opt = nullptr;
  CLI::Option* indicator_opt = nullptr;
};

json cmd_fit(const FitArgs& a, const Globals& g) {
  require_out_dir(a.out);
  const Dataset data = io::read_fields(a.data);
  const json manifest = read_manifest(a.data);

  const std::string preset = a.preset.empty() ? default_preset(data.task()) : a.preset;
  LibrarySpec spec = library_preset(preset);
  if (a.beta_min_opt->count()) spec.beta_min = a.beta_min;
  if (a.beta_max_opt->count()) spec.beta_max = a.beta_max;
  if (a.m_beta_opt->count()) spec.m_beta = a.m_beta;
  if (!a.families.empty()) spec.families = a.families;
  if (a.square_term) spec.scalar_square_term = true;
  if (a.indicator_opt->count()) spec.indicator = parse_indicator(a.indicator);
  if (spec.task != data.task())
    fail(ErrorKind::Data, "library task " + std::string(to_string(spec.task)) + " does not match dataset task " +
                              std::string(to_string(data.task())));
  const auto library = build_library(spec);

  bool normalize = false;
  if (a.normalize == "on") normalize = true;
  else if (a.normalize == "auto") normalize = preset != "case1-mnist";
  else if (a.normalize != "off") fail(ErrorKind::Usage, "--normalize must be auto, on or off");
  std::optional<NormStats> norm;
  if (normalize) norm = fit_normalization(data, a.center);
  const Dataset train = norm ? apply_normalization(data, *norm) : data;

  const AssemblyOptions aopt{g.threads, a.memory_cap_mb << 20};
  const LinearSystem sys = assemble(train, library, aopt);

  FitResult fit;
  double lambda = 0.0;
  if (a.solver == "stlsq") {
    StlsqConfig cfg;
    cfg.threshold = a.lambda;
    cfg.max_sweeps = a.max_sweeps;
    cfg.inner_ridge = a.inner_ridge;
    cfg.normalize_columns = !a.no_col_normalize;
    cfg.raw_threshold = a.raw_threshold;
    fit = stlsq(sys.F, sys.U.values, cfg);
    lambda = a.lambda;
  } else if (a.solver == "ridge-cg") {
    RidgeCgConfig cfg;
    cfg.lambda = a.ridge_lambda;
    cfg.tol = a.cg_tol;
    cfg.max_iter = a.cg_max_iter;
    fit = ridge_normal_cg(sys.F, sys.U.values, cfg);
    lambda = a.ridge_lambda;
  } else if (a.solver == "ols") {
    fit.W = least_squares(sys.F, sys.U.values);
    fit.report.sweeps = 1;
    fit.report.active_count =
        static_cast<std::size_t>(std::count_if(fit.W.begin(), fit.W.end(), [](double w) { return w != 0.0; }));
    fit.report.train_residual_rms = detail::residual_rms(sys.F, sys.U.values, fit.W);
  } else {
    fail(ErrorKind::Usage, "unknown solver '" + a.solver + "' (stlsq, ridge-cg, ols)");
  }

  const bool nn = manifest.is_object() && manifest.value("provenance", std::string()) == "nn-driven";
  FitMeta meta{a.solver, lambda, preset, data.grid().nx(), data.grid().ny(),
               data.task() == TaskKind::ImageToLine ? data.output_size() : 0};
  const auto model = FunctionalLinearModel::from_fit(library, fit.W, norm,
                                                     nn ? Provenance::NnDriven : Provenance::DataDriven, meta);
  export_model(model, a.out);

  const auto preds = predict_dataset(model, data, g.threads);
  const auto truth = outputs_of(data);
  const MetricsReport train_metrics = summarize(preds, truth, "train");

  json rep = {{"seed", g.seed},
              {"data", a.data},
              {"preset", preset},
              {"library_size", library.size()},
              {"solver", a.solver},
              {"lambda", lambda},
              {"normalized", normalize},
              {"active_count", fit.report.active_count},
              {"sweeps", fit.report.sweeps},
              {"converged", fit.report.converged},
              {"bias_only_fallback", fit.report.bias_only_fallback},
              {"train_residual_rms", fit.report.train_residual_rms},
              {"column_condition_estimate", fit.report.column_condition_estimate},
              {"dropped_terms", fit.report.dropped_terms},
              {"zero_columns", fit.report.zero_columns},
              {"cg_iterations", fit.report.cg_iterations ? json(*fit.report.cg_iterations) : json(nullptr)},
              {"train_metrics", to_json(train_metrics)}};
  if (norm) rep["train_mae_normalized"] = train_metrics.mae() / (norm->output_max - norm->output_min);
  const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
  write_json(report_path, rep);

  json summary = {{"model", a.out},
                  {"report", report_path},
                  {"active_count", fit.report.active_count},
                  {"converged", fit.report.converged},
                  {"train_mae", train_metrics.mae()},
                  {"provenance", to_string(model.provenance())},
                  {"equation", render_equation(model)},
                  {"seed", g.seed}};
  if (fit.report.cg_iterations) summary["cg_iterations"] = *fit.report.cg_iterations;
  if (norm) summary["train_mae_normalized"] = rep["train_mae_normalized"];
  return summary;
}

struct ProbeArgs {
  std::string out;
  std::string endpoint = "analytic";
  std::string spec;
  std::string predictor;
  std::string workdir;
  double timeout = 30.0;
  std::string task = "scalar";
  std::size_t q = 50;
  std::size_t nx = 28, ny = 28;
  std::size_t line_n = 0;
  std::string sampler = "smooth";
  int max_modes = 4;
  std::vector<std::string> ranges;
};

json cmd_probe(const ProbeArgs& a, const Globals& g) {
  require_out_dir(a.out);
  ProbePlan plan;
  plan.Q = a.q;
  plan.seed = g.seed;
  plan.grid = Grid2D(a.nx, a.ny);
  plan.line_n = a.line_n;
  plan.sampler = make_sampler(a.sampler, a.max_modes, a.ranges, SplitTag::Train);

  PredictorEndpoint ep = ExternalEndpoint{};
  if (a.endpoint == "analytic") {
    if (a.spec.empty()) fail(ErrorKind::Usage, "analytic endpoint needs --spec");
    auto model = analytic_model_from_spec(a.spec);
    plan.task = model.task();
    ep = AnalyticEndpoint{std::move(model)};
  } else if (a.endpoint == "external") {
    const auto argv = split_words(a.predictor);
    if (argv.empty()) fail(ErrorKind::Usage, "external endpoint needs --predictor");
    plan.task = parse_task(a.task);
    ep = ExternalEndpoint{argv, a.workdir, a.timeout};
  } else {
    fail(ErrorKind::Usage, "unknown endpoint '" + a.endpoint + "' (analytic, external)");
  }

  const Dataset data = probe(ep, plan);
  json manifest = probe_manifest(ep, plan);
  manifest["split"] = "train";
  write_dataset(a.out, data, manifest);
  return {{"out", a.out},
          {"manifest", io::manifest_path(a.out)},
          {"count", data.size()},
          {"task", to_string(data.task())},
          {"provenance", "nn-driven"},
          {"seed", g.seed}};
}

struct PredictArgs {
  std::string model, data, out;
  std::size_t nx = 0, ny = 0, line_n = 0;
};

json cmd_predict(const PredictArgs& a, const Globals& g) {
  require_out_dir(a.out);
  const FunctionalLinearModel model = import_model(a.model);
  const Dataset data = io::read_fields(a.data);
  if ((a.nx == 0) != (a.ny == 0)) fail(ErrorKind::Usage, "--nx and --ny go together");

  OutputRequest req{model.task(), 0, std::nullopt};
  Grid2D out_grid = data.grid();
  if (model.task() == TaskKind::ImageToImage && a.nx) out_grid = Grid2D(a.nx, a.ny);
  if (model.task() == TaskKind::ImageToImage) req.grid = out_grid;
  if (model.task() == TaskKind::ImageToLine) {
    req.line_n = a.line_n;
    if (!req.line_n) req.line_n = data.task() == TaskKind::ImageToLine ? data.output_size() : 0;
    if (!req.line_n) req.line_n = model.meta().out_n ? model.meta().out_n : data.grid().nx();
  }

  std::vector<std::vector<double>> rows(data.size());
  parallel_for(data.size(), g.threads, [&](std::size_t q) {
    const Output o = predict(model, data[q].input, req);
    const auto v = output_values(o);
    rows[q].assign(v.begin(), v.end());
  });
  const std::size_t cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  io::write_matrix(a.out, rows.size(), cols, flat);

  json manifest = {{"kind", "predictions"},
                   {"task", to_string(model.task())},
                   {"count", rows.size()},
                   {"out_n", cols},
                   {"model", a.model},
                   {"data", a.data},
                   {"seed", g.seed}};
  if (model.task() == TaskKind::ImageToImage) manifest["grid"] = {{"nx", out_grid.nx()}, {"ny", out_grid.ny()}};
  write_json(io::manifest_path(a.out), manifest);
  json summary = {{"out", a.out}, {"count", rows.size()}, {"out_n", cols}, {"task", to_string(model.task())},
                  {"seed", g.seed}};
  if (manifest.contains("grid")) summary["grid"] = manifest["grid"];
  return summary;
}

struct EvalArgs {
  std::string truth, pred, model, split, out, csv, baseline_train;
};

json cmd_eval(const EvalArgs& a, const Globals& g) {
  if (a.pred.empty() == a.model.empty()) fail(ErrorKind::Usage, "eval needs exactly one of --pred or --model");
  if (!a.out.empty()) require_out_dir(a.out);
  if (!a.csv.empty()) require_out_dir(a.csv);
  const Dataset truth = io::read_fields(a.truth);
  const auto truth_out = outputs_of(truth);

  std::vector<Output> preds;
  if (!a.model.empty()) {
    const FunctionalLinearModel model = import_model(a.model);
    if (model.task() != truth.task())
      fail(ErrorKind::Data, "model task " + std::string(to_string(model.task())) + " does not match dataset task " +
                                std::string(to_string(truth.task())));
    preds = predict_dataset(model, truth, g.threads);
  } else if (peek_task_code(a.pred) == io::kMatrixTaskCode) {
    const auto m = io::read_matrix(a.pred);
    if (m.rows != truth.size() || m.cols != truth.output_size())
      fail(ErrorKind::Data, "predictions are " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                ", truth needs " + std::to_string(truth.size()) + "x" +
                                std::to_string(truth.output_size()));
    for (std::size_t r = 0; r < m.rows; ++r) {
      std::vector<double> v(m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                            m.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols));
      preds.push_back(make_output(truth.task(), std::move(v), truth.grid()));
    }
  } else {
    const Dataset p = io::read_fields(a.pred);
    if (p.task() != truth.task()) fail(ErrorKind::Data, "prediction and truth tasks differ");
    preds = outputs_of(p);
  }

  std::string split = a.split;
  if (split.empty()) {
    const json m = read_manifest(a.truth);
    split = m.is_object() ? m.value("split", std::string("train")) : "train";
  }
  const MetricsReport rep = summarize(preds, truth_out, split);
  json j = to_json(rep);
  j["seed"] = g.seed;
  j["truth"] = a.truth;

  if (!a.baseline_train.empty()) {
    // Constant predictor at the global mean of the training outputs.
    const Dataset train = io::read_fields(a.baseline_train);
    if (train.task() != truth.task()) fail(ErrorKind::Data, "baseline training set has a different task");
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : train.samples())
      for (double v : output_values(s.output)) {
        sum += v;
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    std::vector<Output> base;
    for (const auto& t : truth_out)
      base.push_back(make_output(truth.task(), std::vector<double>(output_values(t).size(), mean), truth.grid()));
    const MetricsReport b = summarize(base, truth_out, split);
    j["baseline"] = {{"kind", "constant-mean"}, {"value", mean}, {"mae", b.mae()}, {"max", b.max_ae()}};
  }

  if (!a.out.empty()) write_json(a.out, j);
  if (!a.csv.empty()) write_text(a.csv, to_csv(rep));
  return j;
}

struct ExportArgs {
  std::string model, out;
  double prune = 0.0;
};

json cmd_export(const ExportArgs& a, const Globals& g) {
  FunctionalLinearModel model = import_model(a.model);
  if (a.prune > 0.0) model = prune(model, a.prune);
  const std::string eq = render_equation(model);
  if (!a.out.empty()) write_text(a.out, eq + "\n");
  const auto lines = static_cast<std::size_t>(std::count(eq.begin(), eq.end(), '\n')) + 1;
  return {{"out", a.out.empty() ? json(nullptr) : json(a.out)},
          {"terms", model.terms().size()},
          {"lines", lines},
          {"equation", eq},
          {"provenance", to_string(model.provenance())},
          {"seed", g.seed}};
}

// ---------------------------------------------------------------------------
// Config files: a JSON object whose keys are long flag names. Top-level
// scalars apply to the chosen subcommand; an object keyed by a subcommand
// name applies only to that subcommand. Entries are spliced in before the
// command-line flags, and every scalar option keeps its last value, so the
// command line wins.

std::vector<std::string> config_args(const json& j, const std::string& sub, const std::set<std::string>& subs) {
  std::vector<std::string> out;
  auto emit = [&](const std::string& key, const json& v) {
    const std::string flag = "--" + key;
    if (v.is_boolean()) {
      if (v.get<bool>()) out.push_back(flag);
    } else if (v.is_array()) {
      for (const auto& e : v) {
        out.push_back(flag);
        out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      }
    } else if (v.is_string()) {
      out.push_back(flag);
      out.push_back(v.get<std::string>());
    } else if (v.is_number()) {
      out.push_back(flag);
      out.push_back(v.dump());
    } else {
      fail(ErrorKind::Usage, "config key '" + key + "' has an unsupported value");
    }
  };
  for (const auto& [k, v] : j.items()) {
    if (subs.count(k)) {
      if (k != sub) continue;
      if (!v.is_object()) fail(ErrorKind::Usage, "config section '" + k + "' must be an object");
      for (const auto& [k2, v2] : v.items()) emit(k2, v2);
    } else if (k != "config") {
      emit(k, v);
    }
  }
  return out;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args, const std::set<std::string>& subs) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  const json j = read_json(path);
  if (!j.is_object()) fail(ErrorKind::Usage, "config '" + path + "' must hold a JSON object");
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!subs.count(args[i])) continue;
    const auto extra = config_args(j, args[i], subs);
    std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(i + 1));
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(i + 1), args.end());
    return out;
  }
  return args;
}

void print_summary(const std::string& command, json body) {
  json out = {{"ok", true}, {"command", command}};
  for (auto& [k, v] : body.items()) out[k] = std::move(v);
  std::cout << out.dump() << std::endl;
}

void print_failure(const std::string& command, const std::string& message, int code) {
  std::cerr << "flm " << command << ": " << message << std::endl;
  const json out = {{"ok", false}, {"command", command}, {"error", message}, {"exit_code", code}};
  std::cout << out.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpretable functional linear surrogates"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--threads", g.threads, "Worker threads; results do not depend on it")->check(CLI::Range(1u, 1024u));
  app.add_option("--config", g.config, "JSON file supplying flags; the command line takes precedence");

  auto take_all = [](CLI::Option* o) { o->multi_option_policy(CLI::MultiOptionPolicy::TakeAll); };

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and its manifest");
  gen->add_option("--family", gd.family, "case2, case3, constant or library");
  gen->add_option("--task", gd.task, "scalar, line or image");
  gen->add_option("--split", gd.split, "train, validation or ood");
  gen->add_option("--q", gd.q, "Number of samples");
  gen->add_option("--nx", gd.nx);
  gen->add_option("--ny", gd.ny);
  gen->add_option("--out", gd.out, "Output FLM1 file")->required();
  take_all(gen->add_option("--range", gd.ranges, "Parameter range NAME=LO:HI (repeatable)"));
  gen->add_option("--mu", gd.mu, "Fluid viscosity");
  gen->add_option("--background-k", gd.background_k, "Permeability where the case-2 input is zero");
  gen->add_option("--preset", gd.preset, "Library preset for --family library");
  take_all(gen->add_option("--true-cols", gd.true_cols, "Library columns of the generating terms"));
  take_all(gen->add_option("--true-coeffs", gd.true_coeffs, "Coefficients of the generating terms"));
  gen->add_option("--max-modes", gd.max_modes, "Fourier modes per axis of smooth inputs");
  gen->add_option("--line-n", gd.line_n, "Output length for line tasks");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a sparse surrogate to a dataset");
  fit->add_option("--data", fa.data)->required();
  fit->add_option("--out", fa.out, "Model JSON")->required();
  fit->add_option("--report", fa.report, "Fit report JSON (default <out>.report.json)");
  fit->add_option("--preset", fa.preset, "Library preset (default by task)");
  fa.beta_min_opt = fit->add_option("--beta-min", fa.beta_min);
  fa.beta_max_opt = fit->add_option("--beta-max", fa.beta_max);
  fa.m_beta_opt = fit->add_option("--m-beta", fa.m_beta);
  take_all(fit->add_option("--families", fa.families, "Family indices to include"));
  fit->add_flag("--square-term", fa.square_term, "Include the squared Gaussian moment (scalar task)");
  fa.indicator_opt = fit->add_option("--indicator", fa.indicator, "local or as-printed");
  fit->add_option("--solver", fa.solver, "stlsq, ridge-cg or ols");
  fit->add_option("--lambda", fa.lambda, "STLSQ threshold");
  fit->add_option("--max-sweeps", fa.max_sweeps);
  fit->add_option("--inner-ridge", fa.inner_ridge);
  fit->add_option("--ridge-lambda", fa.ridge_lambda);
  fit->add_option("--cg-tol", fa.cg_tol);
  fit->add_option("--cg-max-iter", fa.cg_max_iter);
  fit->add_flag("--no-col-normalize", fa.no_col_normalize);
  fit->add_flag("--raw-threshold", fa.raw_threshold);
  fit->add_option("--normalize", fa.normalize, "auto, on or off");
  fit->add_flag("--center", fa.center, "Center normalized values on zero");
  fit->add_option("--memory-cap-mb", fa.memory_cap_mb);

  ProbeArgs pa;
  auto* prb = app.add_subcommand("probe", "Build a dataset by querying a predictor");
  prb->add_option("--out", pa.out)->required();
  prb->add_option("--endpoint", pa.endpoint, "analytic or external");
  prb->add_option("--spec", pa.spec, "Term list or model JSON for the analytic endpoint");
  prb->add_option("--predictor", pa.predictor, "Command line of the external predictor");
  prb->add_option("--workdir", pa.workdir);
  prb->add_option("--timeout", pa.timeout, "Seconds per request");
  prb->add_option("--task", pa.task, "Task served by the external predictor");
  prb->add_option("--q", pa.q);
  prb->add_option("--nx", pa.nx);
  prb->add_option("--ny", pa.ny);
  prb->add_option("--line-n", pa.line_n);
  prb->add_option("--sampler", pa.sampler, "smooth, case2, case3 or constant");
  prb->add_option("--max-modes", pa.max_modes);
  take_all(prb->add_option("--range", pa.ranges, "Parameter range NAME=LO:HI (repeatable)"));

  PredictArgs pr;
  auto* pred = app.add_subcommand("predict", "Evaluate a model on the inputs of a dataset");
  pred->add_option("--model", pr.model)->required();
  pred->add_option("--data", pr.data)->required();
  pred->add_option("--out", pr.out)->required();
  pred->add_option("--nx", pr.nx, "Output grid for image models");
  pred->add_option("--ny", pr.ny);
  pred->add_option("--line-n", pr.line_n);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Error report against a truth dataset");
  ev->add_option("--truth", ea.truth)->required();
  ev->add_option("--pred", ea.pred, "Predictions file or dataset");
  ev->add_option("--model", ea.model, "Recompute predictions from a model");
  ev->add_option("--split", ea.split, "Split tag (default from the truth manifest)");
  ev->add_option("--out", ea.out, "Report JSON");
  ev->add_option("--csv", ea.csv, "Flat split,metric,value table");
  ev->add_option("--baseline-train", ea.baseline_train, "Training set for the constant-mean baseline");

  ExportArgs xa;
  auto* exp = app.add_subcommand("export", "Render a model as an equation");
  exp->add_option("--model", xa.model)->required();
  exp->add_option("--out", xa.out, "Text file for the equation");
  exp->add_option("--prune", xa.prune, "Drop terms with |coefficient| below this");

  const std::set<std::string> subs = {"gen-data", "fit", "probe", "predict", "eval", "export"};
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string command = "flm";
  for (const auto& a : args)
    if (subs.count(a)) {
      command = a;
      break;
    }

  try {
    args = expand_config(args, subs);
  } catch (const Error& e) {
    print_failure(command, e.what(), exit_code(e.kind()));
    return exit_code(e.kind());
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_failure(command, e.what(), kExitUsage);
    return kExitUsage;
  }

  try {
    json body;
    if (*gen) body = cmd_gen_data(gd, g);
    else if (*fit) body = cmd_fit(fa, g);
    else if (*prb) body = cmd_probe(pa, g);
    else if (*pred) body = cmd_predict(pr, g);
    else if (*ev) body = cmd_eval(ea, g);
    else body = cmd_export(xa, g);
    print_summary(command, std::move(body));
    return 0;
  } catch (const Error& e) {
    print_failure(command, e.what(), exit_code(e.kind()));
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    print_failure(command, e.what(), kExitData);
    return kExitData;
  } catch (const std::exception& e) {
    print_failure(command, e.what(), kExitData);
    return kExitData;
  }
}
