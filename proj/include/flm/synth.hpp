#pragma once

// Dataset generators: seeded smooth random fields, the porous-media
// permeability families, a cell-centered finite-volume Darcy solver used as
// ground truth, and exact-sparse datasets drawn from a term library.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "flm/fields.hpp"
#include "flm/model.hpp"
#include "flm/parallel.hpp"

namespace flm {

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw; identical
/// on every standard library.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Independent per-sample seed derived from a run seed (splitmix64 step).
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Smooth random fields

struct SmoothFieldCoeffs {
  struct Mode {
    int p, q;
    double c, phase_x, phase_y;
  };
  std::vector<Mode> modes;
  double abs_sum = 0.0;
};

inline SmoothFieldCoeffs smooth_field_coeffs(std::uint64_t seed, int max_modes) {
  if (max_modes < 0 || max_modes > 6) fail(ErrorKind::Usage, "max_modes must lie in [0, 6]");
  std::mt19937_64 rng(seed);
  SmoothFieldCoeffs out;
  for (int p = 0; p <= max_modes; ++p)
    for (int q = 0; q <= max_modes; ++q) {
      if (p == 0 && q == 0) continue;
      const double c = 2.0 * uniform01(rng) - 1.0;
      const double px = 2.0 * std::numbers::pi * uniform01(rng);
      const double py = 2.0 * std::numbers::pi * uniform01(rng);
      out.modes.push_back({p, q, c, px, py});
      out.abs_sum += std::abs(c);
    }
  return out;
}

/// offset + sum c_pq cos(pi p x + a_pq) cos(pi q y + b_pq) over modes
/// 0 <= p, q <= max_modes except (0,0). Without an explicit offset the
/// field is shifted by sum |c_pq|, which keeps every value non-negative.
inline Field2D random_smooth_field(std::uint64_t seed, const Grid2D& grid, int max_modes,
                                   std::optional<double> offset = std::nullopt) {
  const SmoothFieldCoeffs co = smooth_field_coeffs(seed, max_modes);
  const double shift = offset.value_or(co.abs_sum);
  return Field2D::sample(grid, [&](double x, double y) {
    double v = shift;
    for (const auto& m : co.modes)
      v += m.c * std::cos(std::numbers::pi * m.p * x + m.phase_x) * std::cos(std::numbers::pi * m.q * y + m.phase_y);
    return v;
  });
}

// ---------------------------------------------------------------------------
// Permeability families

/// 0.1 e^{A x} + 1 inside the disk of radius R centred at (0.5, Y), 0 outside.
inline Field2D gen_permeability_case2(double A, double Y, double R, const Grid2D& grid) {
  return Field2D::sample(grid, [&](double x, double y) {
    return std::hypot(x - 0.5, y - Y) <= R ? 0.1 * std::exp(A * x) + 1.0 : 0.0;
  });
}

/// exp(-4 A x) |sin(2 pi x) cos(2 pi B y)| + 1.
inline Field2D gen_permeability_case3(double A, double B, const Grid2D& grid) {
  return Field2D::sample(grid, [&](double x, double y) {
    return std::exp(-4.0 * A * x) * std::abs(std::sin(2.0 * std::numbers::pi * x) *
                                            std::cos(2.0 * std::numbers::pi * B * y)) +
           1.0;
  });
}

enum class PermeabilityFamily { Case2, Case3, Constant };

inline std::string_view to_string(PermeabilityFamily f) {
  switch (f) {
    case PermeabilityFamily::Case2: return "case2";
    case PermeabilityFamily::Case3: return "case3";
    case PermeabilityFamily::Constant: return "constant";
  }
  return "?";
}

inline PermeabilityFamily parse_family(std::string_view s) {
  if (s == "case2") return PermeabilityFamily::Case2;
  if (s == "case3") return PermeabilityFamily::Case3;
  if (s == "constant") return PermeabilityFamily::Constant;
  fail(ErrorKind::Usage, "unknown permeability family '" + std::string(s) + "'");
}

enum class SplitTag { Train, Validation, Ood };

inline std::string_view to_string(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Validation: return "validation";
    case SplitTag::Ood: return "ood";
  }
  return "?";
}

inline SplitTag parse_split(std::string_view s) {
  if (s == "train") return SplitTag::Train;
  if (s == "validation") return SplitTag::Validation;
  if (s == "ood") return SplitTag::Ood;
  fail(ErrorKind::Usage, "unknown split '" + std::string(s) + "'");
}

struct ParamRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

using ParamRanges = std::vector<ParamRange>;

inline std::vector<std::string> family_params(PermeabilityFamily f) {
  switch (f) {
    case PermeabilityFamily::Case2: return {"A", "Y", "R"};
    case PermeabilityFamily::Case3: return {"A", "B"};
    case PermeabilityFamily::Constant: return {"K"};
  }
  return {};
}

/// Parameter ranges of the reference experiments. Validation shares the
/// training ranges.
inline ParamRanges default_ranges(PermeabilityFamily f, SplitTag tag) {
  const bool ood = tag == SplitTag::Ood;
  switch (f) {
    case PermeabilityFamily::Case2:
      if (ood) return {{"A", 0.0, 2.0}, {"Y", 0.2, 0.3}, {"R", 0.1225, 0.2025}};
      return {{"A", 0.0, 2.0}, {"Y", -0.1, 0.15}, {"R", 0.09, 0.16}};
    case PermeabilityFamily::Case3:
      if (ood) return {{"A", 1.0, 2.0}, {"B", 4.2, 6.0}};
      return {{"A", 0.0, 1.0}, {"B", 0.0, 4.0}};
    case PermeabilityFamily::Constant:
      if (ood) return {{"K", 2.0, 3.0}};
      return {{"K", 1.0, 1.0}};
  }
  return {};
}

/// True when some parameter present in both lists has non-intersecting ranges.
inline bool ranges_disjoint(const ParamRanges& a, const ParamRanges& b) {
  for (const auto& ra : a)
    for (const auto& rb : b)
      if (ra.name == rb.name && (ra.hi < rb.lo || rb.hi < ra.lo)) return true;
  return false;
}

struct DarcySampler {
  PermeabilityFamily family = PermeabilityFamily::Case3;
  ParamRanges ranges;
};

struct SmoothSampler {
  int max_modes = 4;
  std::optional<double> offset;
};

using InputSampler = std::variant<DarcySampler, SmoothSampler>;

struct SampledInput {
  Field2D field;
  std::vector<std::pair<std::string, double>> params;
};

inline std::vector<std::pair<std::string, double>> draw_params(const ParamRanges& ranges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& r : ranges) {
    if (r.hi < r.lo) fail(ErrorKind::Usage, "range for " + r.name + " is inverted");
    out.emplace_back(r.name, r.lo + (r.hi - r.lo) * uniform01(rng));
  }
  return out;
}

inline double param(const std::vector<std::pair<std::string, double>>& ps, const std::string& name) {
  for (const auto& [k, v] : ps)
    if (k == name) return v;
  fail(ErrorKind::Usage, "missing parameter range for " + name);
}

inline Field2D permeability(PermeabilityFamily f, const std::vector<std::pair<std::string, double>>& ps,
                            const Grid2D& grid) {
  switch (f) {
    case PermeabilityFamily::Case2:
      return gen_permeability_case2(param(ps, "A"), param(ps, "Y"), param(ps, "R"), grid);
    case PermeabilityFamily::Case3: return gen_permeability_case3(param(ps, "A"), param(ps, "B"), grid);
    case PermeabilityFamily::Constant: return Field2D(grid, param(ps, "K"));
  }
  fail(ErrorKind::Usage, "bad family");
}

/// Input q of a seeded sampling run; depends only on (sampler, grid, seed, q).
inline SampledInput draw_input(const InputSampler& sampler, const Grid2D& grid, std::uint64_t seed, std::size_t q) {
  const std::uint64_t s = sample_seed(seed, q);
  if (const auto* d = std::get_if<DarcySampler>(&sampler)) {
    auto ps = draw_params(d->ranges, s);
    return {permeability(d->family, ps, grid), std::move(ps)};
  }
  const auto& sm = std::get<SmoothSampler>(sampler);
  return {random_smooth_field(s, grid, sm.max_modes, sm.offset), {}};
}

inline nlohmann::json sampler_to_json(const InputSampler& sampler) {
  if (const auto* d = std::get_if<DarcySampler>(&sampler)) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& pr : d->ranges) r[pr.name] = {pr.lo, pr.hi};
    return {{"kind", "permeability"}, {"family", to_string(d->family)}, {"ranges", r}};
  }
  const auto& sm = std::get<SmoothSampler>(sampler);
  return {{"kind", "smooth"},
          {"max_modes", sm.max_modes},
          {"offset", sm.offset ? nlohmann::json(*sm.offset) : nlohmann::json("auto")}};
}

// ---------------------------------------------------------------------------
// Darcy solver

struct DarcyProblem {
  Field2D k;
  double mu = 10.0;
  double tol = 1e-10;
  /// 0 selects 20 * cell count.
  int max_iter = 0;
};

struct DarcySolution {
  Field2D p;
  Field2D speed;
  double vmax = 0.0;
  double residual = 0.0;  // relative
  int iterations = 0;
  /// Total flux through each vertical face line x = i/nx, i = 0..nx.
  std::vector<double> cut_flux;
};

/// Solves div((k/mu) grad p) = 0 on the unit square with p = 1 at x = 0,
/// p = 0 at x = 1 and no flux through y = 0, 1. Cell-centered finite volumes
/// with harmonic-mean face transmissibilities; the SPD system is solved by
/// Jacobi-preconditioned CG. Speed is (k/mu)|grad p| at cell centres from
/// central differences, one-sided second order at the walls.
inline DarcySolution darcy_solve(const DarcyProblem& prob) {
  const Grid2D& g = prob.k.grid();
  const std::size_t nx = g.nx(), ny = g.ny(), n = g.size();
  if (nx < 8 || ny < 8) fail(ErrorKind::Usage, "Darcy grid must be at least 8x8");
  if (!(prob.mu > 0.0)) fail(ErrorKind::Usage, "viscosity must be positive");
  std::vector<double> mob(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double kc = prob.k.values()[c];
    if (!(kc > 0.0)) fail(ErrorKind::Numerical, "permeability must be positive, got " + std::to_string(kc) +
                                                    " at cell " + std::to_string(c));
    mob[c] = kc / prob.mu;
  }
  const double hx = 1.0 / static_cast<double>(nx), hy = 1.0 / static_cast<double>(ny);
  auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };

  // tx(i, j): face between columns i-1 and i, i = 0..nx; ty(i, j): face between rows j-1 and j.
  std::vector<double> tx((nx + 1) * ny, 0.0), ty(nx * (ny + 1), 0.0);
  auto TX = [&](std::size_t i, std::size_t j) -> double& { return tx[j * (nx + 1) + i]; };
  auto TY = [&](std::size_t i, std::size_t j) -> double& { return ty[j * nx + i]; };
  for (std::size_t j = 0; j < ny; ++j) {
    TX(0, j) = 2.0 * hy / hx * mob[g.index(0, j)];
    TX(nx, j) = 2.0 * hy / hx * mob[g.index(nx - 1, j)];
    for (std::size_t i = 1; i < nx; ++i) TX(i, j) = hy / hx * harm(mob[g.index(i - 1, j)], mob[g.index(i, j)]);
  }
  for (std::size_t j = 1; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) TY(i, j) = hx / hy * harm(mob[g.index(i, j - 1)], mob[g.index(i, j)]);

  std::vector<double> diag(n, 0.0), b(n, 0.0);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t c = g.index(i, j);
      diag[c] = TX(i, j) + TX(i + 1, j) + TY(i, j) + TY(i, j + 1);
    }
  for (std::size_t j = 0; j < ny; ++j) b[g.index(0, j)] = TX(0, j) * 1.0;

  auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t c = g.index(i, j);
        double s = diag[c] * v[c];
        if (i > 0) s -= TX(i, j) * v[c - 1];
        if (i + 1 < nx) s -= TX(i + 1, j) * v[c + 1];
        if (j > 0) s -= TY(i, j) * v[c - nx];
        if (j + 1 < ny) s -= TY(i, j + 1) * v[c + nx];
        out[c] = s;
      }
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * c[k];
    return s;
  };

  // Initial guess p = 1 - x.
  std::vector<double> p(n), r(n), z(n), d(n), q(n);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) p[g.index(i, j)] = 1.0 - g.x(i);
  apply(p, q);
  for (std::size_t c = 0; c < n; ++c) r[c] = b[c] - q[c];
  const double bnorm = std::sqrt(dot(b, b));
  const int max_iter = prob.max_iter > 0 ? prob.max_iter : static_cast<int>(20 * n);
  for (std::size_t c = 0; c < n; ++c) z[c] = r[c] / diag[c];
  d = z;
  double rz = dot(r, z);
  double res = std::sqrt(dot(r, r)) / bnorm;
  int it = 0;
  while (res > prob.tol && it < max_iter) {
    ++it;
    apply(d, q);
    const double alpha = rz / dot(d, q);
    for (std::size_t c = 0; c < n; ++c) {
      p[c] += alpha * d[c];
      r[c] -= alpha * q[c];
    }
    res = std::sqrt(dot(r, r)) / bnorm;
    for (std::size_t c = 0; c < n; ++c) z[c] = r[c] / diag[c];
    const double rz_next = dot(r, z);
    for (std::size_t c = 0; c < n; ++c) d[c] = z[c] + (rz_next / rz) * d[c];
    rz = rz_next;
  }
  if (res > prob.tol)
    fail(ErrorKind::Numerical, "Darcy CG did not converge: relative residual " + std::to_string(res) + " after " +
                                   std::to_string(it) + " iterations");

  auto P = [&](std::size_t i, std::size_t j) { return p[g.index(i, j)]; };
  auto ddx = [&](std::size_t i, std::size_t j) {
    if (i == 0) return (-3.0 * P(0, j) + 4.0 * P(1, j) - P(2, j)) / (2.0 * hx);
    if (i == nx - 1) return (3.0 * P(nx - 1, j) - 4.0 * P(nx - 2, j) + P(nx - 3, j)) / (2.0 * hx);
    return (P(i + 1, j) - P(i - 1, j)) / (2.0 * hx);
  };
  auto ddy = [&](std::size_t i, std::size_t j) {
    if (j == 0) return (-3.0 * P(i, 0) + 4.0 * P(i, 1) - P(i, 2)) / (2.0 * hy);
    if (j == ny - 1) return (3.0 * P(i, ny - 1) - 4.0 * P(i, ny - 2) + P(i, ny - 3)) / (2.0 * hy);
    return (P(i, j + 1) - P(i, j - 1)) / (2.0 * hy);
  };
  std::vector<double> speed(n);
  double vmax = 0.0;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t c = g.index(i, j);
      speed[c] = mob[c] * std::hypot(ddx(i, j), ddy(i, j));
      vmax = std::max(vmax, speed[c]);
    }

  std::vector<double> cut(nx + 1, 0.0);
  for (std::size_t i = 0; i <= nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const double left = i == 0 ? 1.0 : P(i - 1, j);
      const double right = i == nx ? 0.0 : P(i, j);
      cut[i] += TX(i, j) * (left - right);
    }

  return {Field2D(g, std::move(p)), Field2D(g, std::move(speed)), vmax, res, it, std::move(cut)};
}

// ---------------------------------------------------------------------------
// Dataset generation

struct ParamSplit {
  PermeabilityFamily family = PermeabilityFamily::Case3;
  ParamRanges ranges;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  SplitTag tag = SplitTag::Train;
  /// Ranges an OOD split must differ from; empty uses the family defaults.
  ParamRanges train_ranges;
};

struct DarcyOptions {
  double mu = 10.0;
  /// Permeability used by the solver where the case-2 input is zero.
  double background_k = 10.0;
  unsigned threads = 1;
};

struct GeneratedData {
  Dataset data;
  nlohmann::json manifest;
};

inline GeneratedData gen_darcy_dataset(const ParamSplit& split, TaskKind task, const Grid2D& grid,
                                       const DarcyOptions& opt = {}) {
  if (split.count == 0) fail(ErrorKind::Usage, "split needs at least one sample");
  const ParamRanges ranges = split.ranges.empty() ? default_ranges(split.family, split.tag) : split.ranges;
  if (split.tag == SplitTag::Ood) {
    const ParamRanges train =
        split.train_ranges.empty() ? default_ranges(split.family, SplitTag::Train) : split.train_ranges;
    if (!ranges_disjoint(ranges, train))
      fail(ErrorKind::Usage, "ood split shares every parameter range with the training split");
  }
  const InputSampler sampler = DarcySampler{split.family, ranges};

  struct Result {
    SampledInput in;
    Output out;
    double residual;
    int iterations;
  };
  std::vector<std::optional<Result>> results(split.count);
  parallel_for(split.count, opt.threads, [&](std::size_t q) {
    SampledInput in = draw_input(sampler, grid, split.seed, q);
    std::vector<double> ksolve(in.field.values().begin(), in.field.values().end());
    if (split.family == PermeabilityFamily::Case2)
      for (double& v : ksolve)
        if (v == 0.0) v = opt.background_k;
    const DarcySolution sol = darcy_solve({Field2D(grid, std::move(ksolve)), opt.mu});
    Output out = 0.0;
    switch (task) {
      case TaskKind::ImageToScalar: out = sol.vmax; break;
      case TaskKind::ImageToImage: out = sol.speed; break;
      case TaskKind::ImageToLine: {
        std::vector<double> row(sol.speed.values().begin(), sol.speed.values().begin() + grid.nx());
        out = Field1D(std::move(row));
        break;
      }
    }
    results[q] = Result{std::move(in), std::move(out), sol.residual, sol.iterations};
  });

  std::vector<Sample> samples;
  nlohmann::json records = nlohmann::json::array();
  for (auto& r : results) {
    nlohmann::json ps = nlohmann::json::object();
    for (const auto& [k, v] : r->in.params) ps[k] = v;
    records.push_back({{"params", ps}, {"solver_residual", r->residual}, {"cg_iterations", r->iterations}});
    samples.push_back({std::move(r->in.field), std::move(r->out)});
  }
  nlohmann::json manifest = {{"generator", "darcy"},
                             {"sampler", sampler_to_json(sampler)},
                             {"split", to_string(split.tag)},
                             {"seed", split.seed},
                             {"count", split.count},
                             {"task", to_string(task)},
                             {"grid", {{"nx", grid.nx()}, {"ny", grid.ny()}}},
                             {"mu", opt.mu},
                             {"provenance", "data-driven"},
                             {"samples", records}};
  if (split.family == PermeabilityFamily::Case2) manifest["background_k"] = opt.background_k;
  return {Dataset(task, std::move(samples)), std::move(manifest)};
}

/// Exact superposition of the given terms on sampled inputs; the target lies
/// in the span of the library by construction.
inline Dataset gen_from_library(std::span<const TermSpec> terms, std::span<const double> coeffs,
                                const InputSampler& sampler, std::size_t Q, std::uint64_t seed, const Grid2D& grid,
                                std::size_t line_n = 0) {
  if (terms.empty()) fail(ErrorKind::Usage, "no generator terms");
  if (terms.size() != coeffs.size()) fail(ErrorKind::Usage, "terms and coefficients differ in length");
  const TaskKind task = terms.front().task;
  std::vector<WeightedTerm> wts;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].task != task) fail(ErrorKind::Data, "generator terms mix tasks");
    if (coeffs[i] != 0.0) wts.push_back({terms[i], coeffs[i]});
  }
  const FunctionalLinearModel truth(task, std::move(wts));
  OutputRequest req{task, task == TaskKind::ImageToLine ? (line_n ? line_n : grid.nx()) : 0,
                    task == TaskKind::ImageToImage ? std::optional<Grid2D>(grid) : std::nullopt};
  std::vector<Sample> samples;
  for (std::size_t q = 0; q < Q; ++q) {
    Field2D f = draw_input(sampler, grid, seed, q).field;
    Output out = predict(truth, f, req);
    samples.push_back({std::move(f), std::move(out)});
  }
  return Dataset(task, std::move(samples));
}

}  // namespace flm
