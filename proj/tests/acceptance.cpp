// Acceptance harness: one [PASS]/[FAIL] line per headline criterion, with the
// measured quantities next to the bound they are held to. Exits non-zero when
// any criterion fails.

#include <sys/wait.h>

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "flm/flm.hpp"

#ifndef FLM_CLI_PATH
#error "FLM_CLI_PATH must name the flm executable"
#endif
#ifndef FLM_FAKE_PREDICTOR
#error "FLM_FAKE_PREDICTOR must name the fake predictor executable"
#endif

using namespace flm;

namespace {

int g_failures = 0;

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("error: ") + e.what();
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0) o.check(dt < budget_s, fmt("runtime %.2f s < %.0f s", dt, budget_s));
  std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

// ---------------------------------------------------------------------------
// Shared fixtures

constexpr double kPi = std::numbers::pi;

double smooth_input(double x, double y) { return 1.0 + 0.5 * std::sin(2.0 * kPi * x) * std::cos(kPi * y) + 0.3 * x * y; }

double brute_force(const std::function<double(double, double)>& integrand, int n) {
  double acc = 0.0;
  const double h = 1.0 / n;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) acc += integrand((i + 0.5) * h, (j + 0.5) * h);
  return acc * h * h;
}

// Planted operator in the MNIST-style scalar library: three terms and bias.
const std::vector<std::size_t> kTrueCols = {1, 7, 27, 57};
const std::vector<double> kTrueCoeffs = {2.0, 0.5, -1.25, 1.0};

std::vector<TermSpec> planted_terms(const std::vector<TermSpec>& library) {
  std::vector<TermSpec> t;
  for (std::size_t c : kTrueCols) t.push_back(library[c]);
  return t;
}

struct Recovery {
  bool support_exact = true;
  double max_coeff_err = 0.0;
  std::size_t active = 0;
};

Recovery check_recovery(const std::vector<double>& W) {
  Recovery r;
  std::map<std::size_t, double> truth;
  for (std::size_t i = 0; i < kTrueCols.size(); ++i) truth[kTrueCols[i]] = kTrueCoeffs[i];
  for (std::size_t j = 0; j < W.size(); ++j) {
    const bool planted = truth.count(j) > 0;
    if ((W[j] != 0.0) != planted) r.support_exact = false;
    r.active += W[j] != 0.0;
    r.max_coeff_err = std::max(r.max_coeff_err, std::abs(W[j] - (planted ? truth[j] : 0.0)));
  }
  return r;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

double cubic_at(const Field2D& f, double x, double y) {
  const Grid2D& g = f.grid();
  auto stencil = [](double t, std::size_t n, std::size_t idx[4], double w[4]) {
    const double u = t * static_cast<double>(n) - 0.5;
    long s = static_cast<long>(std::floor(u)) - 1;
    s = std::clamp<long>(s, 0, static_cast<long>(n) - 4);
    for (int a = 0; a < 4; ++a) {
      idx[a] = static_cast<std::size_t>(s + a);
      w[a] = 1.0;
      for (int b = 0; b < 4; ++b)
        if (b != a) w[a] *= (u - static_cast<double>(s + b)) / static_cast<double>(a - b);
    }
  };
  std::size_t ix[4], iy[4];
  double wx[4], wy[4];
  stencil(x, g.nx(), ix, wx);
  stencil(y, g.ny(), iy, wy);
  double v = 0.0;
  for (int b = 0; b < 4; ++b)
    for (int a = 0; a < 4; ++a) v += wx[a] * wy[b] * f(ix[a], iy[b]);
  return v;
}

/// Max difference between a coarse solution and the cubic interpolant of a finer one.
double max_gap(const Field2D& coarse, const Field2D& fine) {
  const Grid2D& g = coarse.grid();
  double e = 0.0;
  for (std::size_t j = 0; j < g.ny(); ++j)
    for (std::size_t i = 0; i < g.nx(); ++i) e = std::max(e, std::abs(coarse(i, j) - cubic_at(fine, g.x(i), g.y(j))));
  return e;
}

struct EndToEnd {
  Dataset train, ood;
  std::vector<Output> train_pred, ood_pred, ood_baseline;
};
std::optional<EndToEnd> g_e2e;

std::vector<Output> constant_prediction(const Dataset& train, const Dataset& target) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : train.samples())
    for (double v : output_values(s.output)) {
      sum += v;
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  std::vector<Output> out;
  for (std::size_t q = 0; q < target.size(); ++q)
    out.push_back(make_output(target.task(), std::vector<double>(target.output_size(), mean), target.grid()));
  return out;
}

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + FLM_CLI_PATH + "' " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  RunResult r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string dataset_bytes(const Dataset& d, const std::string& path) {
  io::write_fields(path, d);
  return slurp(path);
}

}  // namespace

int main() {
  const auto tmp = std::filesystem::temp_directory_path() / ("flm-acceptance-" + std::to_string(::getpid()));
  std::filesystem::create_directories(tmp);
  auto file = [&](const std::string& name) { return (tmp / name).string(); };

  criterion("library cardinality", 1.0, [] {
    Outcome o;
    const std::vector<std::pair<std::string, std::size_t>> expected = {
        {"case1-mnist", 58},        {"case2-porous-scalar", 128}, {"case3-porous-image", 2162},
        {"case4-superres", 128},    {"case5-wss-line", 2162},     {"case6-local", 362}};
    for (const auto& [name, p] : expected) {
      const std::size_t got = build_library(library_preset(name)).size();
      o.check(got == p, fmt("%s P=%zu (expect %zu)", name.c_str(), got, p));
    }
    return o;
  });

  criterion("quadrature", 10.0, [] {
    Outcome o;
    bool consts = true, linear = true;
    std::size_t grids = 0;
    for (std::size_t nx : {2, 7, 14, 28, 37, 56, 112})
      for (std::size_t ny : {3, 14, 23, 28, 56}) {
        const Grid2D g(nx, ny);
        const auto w = quadrature_weights(g);
        for (double c : {1.0, 3.5, 0.1, -2.75, 1e3}) consts = consts && integrate(Field2D(g, c), w) == c;
        linear = linear && integrate(Field2D::sample(g, [](double x, double) { return x; }), w) == 0.5;
        ++grids;
      }
    o.check(consts, fmt("f=c exact on %zu grids", grids));
    o.check(linear, fmt("f=x gives 0.5 exactly on %zu grids", grids));

    const Grid2D g(28, 28);
    const Field2D f = Field2D::sample(g, smooth_input);
    const auto w = quadrature_weights(g);
    double worst = 0.0;
    int cases = 0;
    for (double beta : {0.05, 0.1, 0.5, 2.0, 10.0}) {
      const double s = eval_term(make_term(TaskKind::ImageToScalar, 7, beta), f, w, 0.0, 0.0);
      const double so = brute_force([&](double z, double e) { return std::exp(-(z * z + e * e) / beta) * smooth_input(z, e); }, 512);
      worst = std::max(worst, std::abs(s - so));
      ++cases;
      for (auto [x, y] : {std::pair{0.3, 0.6}, {0.05, 0.95}, {0.5, 0.5}}) {
        const double v = eval_term(make_term(TaskKind::ImageToImage, 1, beta), f, w, x, y);
        const double vo = brute_force(
            [&](double z, double e) {
              return std::exp(-((x - z) * (x - z) + (y - e) * (y - e)) / beta) * smooth_input(z, e);
            },
            512);
        worst = std::max(worst, std::abs(v - vo));
        ++cases;
      }
    }
    o.check(worst <= 2e-2, fmt("Gaussian terms vs 512x512 oracle at 28x28: max err %.2e over %d cases (<= 2e-2)",
                               worst, cases));
    return o;
  });

  criterion("STLSQ exact recovery", 30.0, [] {
    Outcome o;
    const auto library = build_library(library_preset("case1-mnist"));
    const auto truth = planted_terms(library);
    double worst = 0.0;
    bool support = true, monotone = true;
    std::string counts;
    for (std::uint64_t seed : {1, 2, 3, 42, 1234}) {
      const Dataset d = gen_from_library(truth, kTrueCoeffs, SmoothSampler{}, 200, seed, Grid2D(28, 28));
      const auto sys = assemble(d, library);
      const Recovery r = check_recovery(stlsq(sys.F, sys.U.values, {.threshold = 0.1}).W);
      support = support && r.support_exact;
      worst = std::max(worst, r.max_coeff_err);
      std::size_t prev = SIZE_MAX;
      std::string row;
      for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
        const std::size_t a = stlsq(sys.F, sys.U.values, {.threshold = lambda}).report.active_count;
        monotone = monotone && a <= prev;
        prev = a;
        row += (row.empty() ? "" : ",") + std::to_string(a);
      }
      if (seed == 42) counts = row;
    }
    o.check(support, "support exact for seeds 1,2,3,42,1234 at lambda=0.1");
    o.check(worst <= 1e-8, fmt("max coeff err %.2e (<= 1e-8)", worst));
    o.check(monotone, "active_count non-increasing over lambda {0,0.01,0.1,1,10} (seed 42: " + counts + ")");
    return o;
  });

  criterion("solver equivalence", 10.0, [] {
    Outcome o;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> N(0.0, 1.0);
    DesignMatrix F;
    F.rows = 500;
    F.cols = 60;
    F.data.resize(F.rows * F.cols);
    for (double& v : F.data) v = N(rng);
    std::vector<double> U(F.rows);
    for (double& v : U) v = N(rng);

    const auto ls = least_squares(F, U);
    const auto st = stlsq(F, U, {.threshold = 0.0, .normalize_columns = false}).W;
    const double d1 = rel_diff(st, ls);
    o.check(d1 <= 1e-12, fmt("stlsq(lambda=0, raw columns) vs least_squares rel %.2e (<= 1e-12)", d1));

    for (double lambda : {1e-9, 1e-2, 10.0}) {
      const auto cg = ridge_normal_cg(F, U, {.lambda = lambda});
      const Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>> A(F.data.data(), 500, 60);
      const Eigen::Map<const Eigen::VectorXd> u(U.data(), 500);
      Eigen::MatrixXd G = A.transpose() * A;
      G.diagonal().array() += lambda;
      const Eigen::VectorXd x = G.ldlt().solve(A.transpose() * u);
      const double d2 = rel_diff(cg.W, std::vector<double>(x.data(), x.data() + x.size()));
      o.check(d2 <= 1e-8 && cg.report.converged,
              fmt("ridge CG lambda=%g vs dense normal equations rel %.2e (<= 1e-8)", lambda, d2));
    }
    return o;
  });

  criterion("Darcy oracle", 60.0, [] {
    Outcome o;
    double speed_err = 0.0, p_err = 0.0;
    for (std::size_t n : {14, 28, 56}) {
      const Grid2D g(n, n);
      const DarcySolution s = darcy_solve({Field2D(g, 1.0), 10.0});
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          speed_err = std::max(speed_err, std::abs(s.speed(i, j) - 0.1));
          p_err = std::max(p_err, std::abs(s.p(i, j) - (1.0 - g.x(i))));
        }
    }
    o.check(speed_err <= 1e-3, fmt("k=1,mu=10 speed err %.2e (<= 1e-3)", speed_err));
    o.check(p_err <= 1e-8, fmt("p=1-x err %.2e (<= 1e-8)", p_err));

    auto kfun = [](double x, double y) { return 1.0 + 0.5 * std::sin(kPi * x) * std::cos(kPi * y) + 0.3 * x * x; };
    double flux_err = 0.0;
    for (const Field2D& k : {gen_permeability_case3(0.7, 2.3, Grid2D(28, 28)), Field2D::sample(Grid2D(40, 24), kfun),
                             gen_permeability_case2(1.5, 0.05, 0.12, Grid2D(28, 28))}) {
      std::vector<double> kv(k.values().begin(), k.values().end());
      for (double& v : kv)
        if (v == 0.0) v = 10.0;
      const DarcySolution s = darcy_solve({Field2D(k.grid(), kv), 10.0});
      for (double f : s.cut_flux) flux_err = std::max(flux_err, std::abs(f - s.cut_flux.front()) / s.cut_flux.front());
    }
    o.check(flux_err <= 1e-8, fmt("flux conservation rel err %.2e (<= 1e-8)", flux_err));

    // Successive-grid differences shrink by 4x per halving at second order.
    auto solve = [&](std::size_t n) { return darcy_solve({Field2D::sample(Grid2D(n, n), kfun), 10.0}).p; };
    const Field2D p28 = solve(28), p56 = solve(56), p112 = solve(112);
    const double d1 = max_gap(p28, p56), d2 = max_gap(p56, p112);
    const double order = std::log2(d1 / d2);
    o.check(order >= 1.6 && order <= 2.4, fmt("refinement order %.3f from 28/56/112 (in [1.6, 2.4])", order));
    return o;
  });

  criterion("end-to-end porous surrogate", 300.0, [] {
    Outcome o;
    const Grid2D grid(14, 14);
    ParamSplit tr{PermeabilityFamily::Case3, {{"A", 0.0, 1.0}, {"B", 0.0, 4.0}}, 60, 1, SplitTag::Train, {}};
    ParamSplit od{PermeabilityFamily::Case3, {{"A", 1.0, 2.0}, {"B", 4.2, 6.0}}, 32, 2, SplitTag::Ood, tr.ranges};
    EndToEnd e{gen_darcy_dataset(tr, TaskKind::ImageToImage, grid).data,
               gen_darcy_dataset(od, TaskKind::ImageToImage, grid).data,
               {},
               {},
               {}};
    LibrarySpec spec = library_preset("case3-porous-image");
    spec.m_beta = 10;
    const auto library = build_library(spec);
    const NormStats norm = fit_normalization(e.train);
    const auto sys = assemble(apply_normalization(e.train, norm), library);
    const auto fit = stlsq(sys.F, sys.U.values);
    const auto model = FunctionalLinearModel::from_fit(library, fit.W, norm, Provenance::DataDriven, {});
    e.train_pred = predict_dataset(model, e.train);
    e.ood_pred = predict_dataset(model, e.ood);
    e.ood_baseline = constant_prediction(e.train, e.ood);

    const double train_mae = summarize(e.train_pred, outputs_of(e.train), "train").mae();
    const double train_norm = train_mae / (norm.output_max - norm.output_min);
    const double ood_mae = summarize(e.ood_pred, outputs_of(e.ood), "ood").mae();
    const double base_mae = summarize(e.ood_baseline, outputs_of(e.ood), "ood").mae();
    o.check(true, fmt("P=%zu, active=%zu", library.size(), fit.report.active_count));
    o.check(train_norm <= 0.05, fmt("normalized train MAE %.4f (<= 0.05)", train_norm));
    o.check(ood_mae < base_mae, fmt("OOD MAE %.3e < constant-mean baseline %.3e", ood_mae, base_mae));
    g_e2e = std::move(e);
    return o;
  });

  criterion("closed-loop probe", 30.0, [] {
    Outcome o;
    const auto library = build_library(library_preset("case1-mnist"));
    const auto ep = builtin_analytic_predictor(planted_terms(library), kTrueCoeffs);
    ProbePlan plan;
    plan.Q = 200;
    plan.seed = 42;
    const Dataset d = probe(ep, plan);
    const auto sys = assemble(d, library);
    const Recovery r = check_recovery(stlsq(sys.F, sys.U.values).W);
    o.check(r.support_exact, fmt("support exact (%zu active)", r.active));
    o.check(r.max_coeff_err <= 1e-8, fmt("max coeff err %.2e (<= 1e-8)", r.max_coeff_err));
    return o;
  });

  criterion("metrics identity", 0.0, [&] {
    Outcome o;
    struct Case {
      std::string name;
      std::vector<Output> pred, truth;
    };
    std::vector<Case> cases;
    if (g_e2e) {
      cases.push_back({"e2e train", g_e2e->train_pred, outputs_of(g_e2e->train)});
      cases.push_back({"e2e ood", g_e2e->ood_pred, outputs_of(g_e2e->ood)});
      cases.push_back({"e2e baseline", g_e2e->ood_baseline, outputs_of(g_e2e->ood)});
    }
    const Grid2D g(20, 16);
    const Dataset c2 = gen_darcy_dataset({PermeabilityFamily::Case2, {}, 12, 5, SplitTag::Train, {}}, TaskKind::ImageToImage, g).data;
    const Dataset c2o = gen_darcy_dataset({PermeabilityFamily::Case2, {}, 12, 6, SplitTag::Ood, {}}, TaskKind::ImageToImage, g).data;
    cases.push_back({"case2 ood baseline", constant_prediction(c2, c2o), outputs_of(c2o)});
    const Dataset ln = gen_darcy_dataset({PermeabilityFamily::Case3, {}, 10, 8, SplitTag::Train, {}}, TaskKind::ImageToLine, g).data;
    const Dataset lo = gen_darcy_dataset({PermeabilityFamily::Case3, {}, 10, 9, SplitTag::Ood, {}}, TaskKind::ImageToLine, g).data;
    cases.push_back({"case3 line baseline", constant_prediction(ln, lo), outputs_of(lo)});

    double worst_rel = 0.0;
    bool max_ok = true;
    for (const auto& c : cases) {
      const auto pw = pointwise_errors(c.pred, c.truth);
      const auto ib = image_based_errors(c.pred, c.truth);
      const double mae = summarize(c.pred, c.truth, "x").mae();
      double mean_ib = 0.0;
      for (double v : ib) mean_ib += v;
      mean_ib /= static_cast<double>(ib.size());
      worst_rel = std::max(worst_rel, std::abs(mae - mean_ib) / mae);
      max_ok = max_ok && *std::max_element(ib.begin(), ib.end()) <= *std::max_element(pw.begin(), pw.end());
    }
    o.check(worst_rel <= 1e-13,
            fmt("pointwise MAE vs mean image error: worst rel gap %.1e over %zu datasets (<= 1e-13, rounding only)",
                worst_rel, cases.size()));
    o.check(max_ok, "max(image_based) <= max(pointwise) on every dataset");
    return o;
  });

  criterion("determinism", 0.0, [&] {
    Outcome o;
    // Library level.
    const Grid2D g(16, 16);
    std::vector<std::string> gen_bytes;
    std::vector<std::vector<double>> F_data, preds;
    const auto library = [] {
      LibrarySpec s = library_preset("case3-porous-image");
      s.m_beta = 6;
      return build_library(s);
    }();
    for (unsigned th : {1u, 4u, 8u, 1u}) {
      DarcyOptions opt;
      opt.threads = th;
      const Dataset d = gen_darcy_dataset({PermeabilityFamily::Case3, {}, 8, 3, SplitTag::Train, {}},
                                          TaskKind::ImageToImage, g, opt)
                            .data;
      gen_bytes.push_back(dataset_bytes(d, file("det.flm")));
      const auto sys = assemble(d, library, {th, std::size_t{8} << 30});
      F_data.push_back(sys.F.data);
      const auto fit = stlsq(sys.F, sys.U.values);
      const auto model = FunctionalLinearModel::from_fit(library, fit.W, std::nullopt, Provenance::DataDriven, {});
      std::vector<double> flat;
      for (const auto& out : predict_dataset(model, d, th))
        for (double v : output_values(out)) flat.push_back(v);
      preds.push_back(flat);
    }
    bool lib_same = true;
    for (std::size_t i = 1; i < gen_bytes.size(); ++i)
      lib_same = lib_same && gen_bytes[i] == gen_bytes[0] && F_data[i] == F_data[0] && preds[i] == preds[0];
    o.check(lib_same, "gen/assemble/fit/predict bit-identical for threads 1,4,8 and rerun");

    // Every CLI command, run at each thread count and once more at 1.
    const std::string spec = file("spec.json");
    std::ofstream(spec) << R"({"task":"image_to_scalar","terms":[{"family_index":1,"beta":null,"coeff":2.0},)"
                           R"({"family_index":13,"beta":null,"coeff":1.0}]})";
    const std::string fake = std::string("'") + FLM_FAKE_PREDICTOR + " --a 0.5 --b 2'";
    std::vector<std::string> runs;
    bool all_ok = true;
    int run_id = 0;
    for (const char* th : {"1", "4", "8", "1"}) {
      const std::string d = file("cli" + std::to_string(run_id++));
      std::filesystem::create_directories(d);
      const std::string T = std::string(" --seed 5 --threads ") + th + " ";
      const std::vector<std::string> cmds = {
          T + "gen-data --family case3 --task image --q 8 --nx 12 --ny 12 --out " + d + "/img.flm",
          T + "gen-data --family case2 --task scalar --split ood --q 6 --nx 12 --ny 12 --out " + d + "/sc.flm",
          T + "gen-data --family library --true-cols 1 7 27 57 --true-coeffs 2 0.5 -1.25 1 --q 60 --out " + d +
              "/lib.flm",
          T + "probe --endpoint analytic --spec " + spec + " --q 20 --out " + d + "/pa.flm",
          T + "probe --endpoint external --predictor " + fake + " --q 5 --nx 10 --ny 10 --out " + d + "/pe.flm",
          T + "fit --data " + d + "/img.flm --m-beta 4 --out " + d + "/m_img.json",
          T + "fit --data " + d + "/lib.flm --out " + d + "/m_lib.json",
          T + "fit --data " + d + "/lib.flm --solver ridge-cg --out " + d + "/m_cg.json",
          T + "fit --data " + d + "/pa.flm --out " + d + "/m_pa.json",
          T + "predict --model " + d + "/m_img.json --data " + d + "/img.flm --nx 24 --ny 24 --out " + d + "/p.flm",
          T + "eval --truth " + d + "/img.flm --model " + d + "/m_img.json --out " + d + "/r.json --csv " + d + "/r.csv",
          T + "export --model " + d + "/m_lib.json --out " + d + "/eq.txt",
      };
      std::string blob;
      for (const auto& c : cmds) {
        const RunResult r = run_cli(c);
        all_ok = all_ok && r.code == 0;
        if (r.code != 0) std::fprintf(stderr, "command failed (%d): flm%s\n%s", r.code, c.c_str(), r.out.c_str());
        blob += r.out;
      }
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(d)) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) blob += f.filename().string() + "\n" + slurp(f.string());
      // Summaries name their own directory; compare with it masked.
      for (std::size_t pos; (pos = blob.find(d)) != std::string::npos;) blob.replace(pos, d.size(), "<dir>");
      runs.push_back(blob);
    }
    o.check(all_ok, "all 12 CLI commands succeed");
    bool cli_same = true;
    for (std::size_t i = 1; i < runs.size(); ++i) cli_same = cli_same && runs[i] == runs[0];
    o.check(cli_same, "CLI outputs and summaries bit-identical for --threads 1,4,8 and rerun");
    return o;
  });

  std::filesystem::remove_all(tmp);
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
