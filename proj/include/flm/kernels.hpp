#pragma once

// Candidate integral-equation terms for every task shape, with their discrete
// evaluation.
//
// Every term has the form  g( sum_k w_k * psi(x - zeta_k, y - eta_k) * T(f_k) )
// where psi is a kernel, T a lifting of the input and g an outer nonlinearity.
// Scalar tasks evaluate kernels at the output point (0,0) and line tasks at
// (x,0), so one kernel table covers all three task shapes:
//
//   scalar: exp(-(zeta^2+eta^2)/b), exp(-zeta/b), exp(-eta/b)
//   line:   exp(-((x-zeta)^2+eta^2)/b), D_wss = sqrt((x-zeta)^2+eta^2), exp(-eta/b)
//   image:  exp(-((x-zeta)^2+(y-eta)^2)/b), D = sqrt(...), exp((y-eta)/b)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "flm/fields.hpp"

namespace flm {

enum class Lifting {
  Identity,
  CoordZeta,
  CoordEta,
  CoordZeta2,
  CoordEta2,
  CoordZetaEta,
  SquareF,
  TanhF,
  ExpF,
  ExpNegFOverBeta,
};

enum class KernelFamily { Unit, GaussianIso, ExpDistance, IndicatorDisk, SepExpX, SepExpY, DomainAverage };

enum class OuterNonlinearity { Identity, Square, Tanh, Exp };

/// Which side of the disk D = beta/2 the indicator kernels integrate over.
/// Local keeps the neighbourhood 2D/beta <= 1; AsPrinted keeps 2D/beta > 1.
enum class IndicatorMode { Local, AsPrinted };

// ---------------------------------------------------------------------------
// Tags

inline std::string_view tag(Lifting l) {
  switch (l) {
    case Lifting::Identity: return "identity";
    case Lifting::CoordZeta: return "coord_zeta";
    case Lifting::CoordEta: return "coord_eta";
    case Lifting::CoordZeta2: return "coord_zeta2";
    case Lifting::CoordEta2: return "coord_eta2";
    case Lifting::CoordZetaEta: return "coord_zeta_eta";
    case Lifting::SquareF: return "square_f";
    case Lifting::TanhF: return "tanh_f";
    case Lifting::ExpF: return "exp_f";
    case Lifting::ExpNegFOverBeta: return "exp_neg_f_over_beta";
  }
  return "?";
}

inline std::string_view tag(KernelFamily k) {
  switch (k) {
    case KernelFamily::Unit: return "unit";
    case KernelFamily::GaussianIso: return "gaussian_iso";
    case KernelFamily::ExpDistance: return "exp_distance";
    case KernelFamily::IndicatorDisk: return "indicator_disk";
    case KernelFamily::SepExpX: return "sep_exp_x";
    case KernelFamily::SepExpY: return "sep_exp_y";
    case KernelFamily::DomainAverage: return "domain_average";
  }
  return "?";
}

inline std::string_view tag(OuterNonlinearity g) {
  switch (g) {
    case OuterNonlinearity::Identity: return "identity";
    case OuterNonlinearity::Square: return "square";
    case OuterNonlinearity::Tanh: return "tanh";
    case OuterNonlinearity::Exp: return "exp";
  }
  return "?";
}

inline std::string_view tag(IndicatorMode m) { return m == IndicatorMode::Local ? "local" : "as-printed"; }

namespace detail {
template <class E, std::size_t N>
E parse_tag(std::string_view name, const E (&all)[N], const char* what) {
  for (E e : all)
    if (tag(e) == name) return e;
  fail(ErrorKind::Data, std::string("unknown ") + what + " tag '" + std::string(name) + "'");
}
}  // namespace detail

inline Lifting parse_lifting(std::string_view name) {
  static constexpr Lifting all[] = {Lifting::Identity,   Lifting::CoordZeta,    Lifting::CoordEta,
                                    Lifting::CoordZeta2, Lifting::CoordEta2,    Lifting::CoordZetaEta,
                                    Lifting::SquareF,    Lifting::TanhF,        Lifting::ExpF,
                                    Lifting::ExpNegFOverBeta};
  return detail::parse_tag(name, all, "lifting");
}

inline KernelFamily parse_kernel(std::string_view name) {
  static constexpr KernelFamily all[] = {KernelFamily::Unit,          KernelFamily::GaussianIso,
                                         KernelFamily::ExpDistance,   KernelFamily::IndicatorDisk,
                                         KernelFamily::SepExpX,       KernelFamily::SepExpY,
                                         KernelFamily::DomainAverage};
  return detail::parse_tag(name, all, "kernel");
}

inline OuterNonlinearity parse_outer(std::string_view name) {
  static constexpr OuterNonlinearity all[] = {OuterNonlinearity::Identity, OuterNonlinearity::Square,
                                              OuterNonlinearity::Tanh, OuterNonlinearity::Exp};
  return detail::parse_tag(name, all, "outer");
}

inline IndicatorMode parse_indicator(std::string_view name) {
  static constexpr IndicatorMode all[] = {IndicatorMode::Local, IndicatorMode::AsPrinted};
  return detail::parse_tag(name, all, "indicator");
}

inline bool kernel_needs_beta(KernelFamily k) {
  return k != KernelFamily::Unit && k != KernelFamily::DomainAverage;
}

inline bool lifting_needs_beta(Lifting l) { return l == Lifting::ExpNegFOverBeta; }

// ---------------------------------------------------------------------------
// Term and library descriptions

struct TermSpec {
  TaskKind task = TaskKind::ImageToScalar;
  int family_index = 0;
  Lifting lifting = Lifting::Identity;
  KernelFamily kernel = KernelFamily::Unit;
  OuterNonlinearity outer = OuterNonlinearity::Identity;
  std::optional<double> beta;
  bool is_bias = false;
  IndicatorMode indicator = IndicatorMode::Local;

  bool needs_beta() const { return !is_bias && (kernel_needs_beta(kernel) || lifting_needs_beta(lifting)); }

  /// (task, family_index, beta) identifies a term inside a library.
  auto key() const { return std::tuple(static_cast<int>(task), family_index, beta.value_or(-1.0)); }

  /// Linear in f: identity outer and a lifting that does not transform f.
  bool linear_in_f() const {
    if (is_bias || outer != OuterNonlinearity::Identity) return false;
    switch (lifting) {
      case Lifting::SquareF:
      case Lifting::TanhF:
      case Lifting::ExpF:
      case Lifting::ExpNegFOverBeta: return false;
      default: return true;
    }
  }

  void validate() const {
    if (is_bias) return;
    if (needs_beta() != beta.has_value())
      fail(ErrorKind::Data, "term family " + std::to_string(family_index) +
                                (beta ? " does not take a bandwidth" : " requires a bandwidth"));
    if (beta && !(*beta > 0.0))
      fail(ErrorKind::Data, "term family " + std::to_string(family_index) + " has non-positive bandwidth");
  }

  friend bool operator==(const TermSpec&, const TermSpec&) = default;
};

struct FamilyDef {
  Lifting lifting;
  KernelFamily kernel;
  OuterNonlinearity outer;
};

namespace detail {
using L = Lifting;
using K = KernelFamily;
using G = OuterNonlinearity;

// Reading order of the candidate table. The last scalar family is the squared
// Gaussian moment, only part of the default list when explicitly requested.
inline constexpr FamilyDef kScalarFamilies[] = {
    {L::Identity, K::Unit, G::Identity},         {L::CoordZeta, K::Unit, G::Identity},
    {L::CoordEta, K::Unit, G::Identity},         {L::CoordZeta2, K::Unit, G::Identity},
    {L::CoordEta2, K::Unit, G::Identity},        {L::CoordZetaEta, K::Unit, G::Identity},
    {L::SquareF, K::Unit, G::Identity},          {L::Identity, K::GaussianIso, G::Identity},
    {L::SquareF, K::GaussianIso, G::Identity},   {L::Identity, K::SepExpX, G::Identity},
    {L::Identity, K::SepExpY, G::Identity},      {L::ExpNegFOverBeta, K::Unit, G::Identity},
    {L::Identity, K::GaussianIso, G::Square},
};

// Shared by image->image and image->line; the line task evaluates at y = 0.
inline constexpr FamilyDef kFieldFamilies[] = {
    {L::Identity, K::DomainAverage, G::Identity}, {L::Identity, K::GaussianIso, G::Identity},
    {L::Identity, K::ExpDistance, G::Identity},   {L::Identity, K::IndicatorDisk, G::Identity},
    {L::SquareF, K::IndicatorDisk, G::Identity},  {L::Identity, K::IndicatorDisk, G::Exp},
    {L::ExpF, K::IndicatorDisk, G::Identity},     {L::Identity, K::SepExpX, G::Identity},
    {L::Identity, K::SepExpY, G::Identity},       {L::Identity, K::SepExpX, G::Tanh},
    {L::Identity, K::SepExpY, G::Tanh},           {L::TanhF, K::SepExpX, G::Identity},
    {L::TanhF, K::SepExpY, G::Identity},          {L::Identity, K::SepExpX, G::Square},
    {L::Identity, K::SepExpY, G::Square},         {L::SquareF, K::SepExpX, G::Identity},
    {L::SquareF, K::SepExpY, G::Identity},        {L::Identity, K::GaussianIso, G::Square},
    {L::Identity, K::GaussianIso, G::Tanh},
};
}  // namespace detail

inline std::span<const FamilyDef> families_for(TaskKind task) {
  if (task == TaskKind::ImageToScalar) return detail::kScalarFamilies;
  return detail::kFieldFamilies;
}

/// family_index assigned to the bias term: one past the last family.
inline int bias_family_index(TaskKind task) { return static_cast<int>(families_for(task).size()); }

inline TermSpec bias_term(TaskKind task) {
  TermSpec t;
  t.task = task;
  t.family_index = bias_family_index(task);
  t.is_bias = true;
  return t;
}

/// Builds the term for family `index` of `task` (with bandwidth if required).
inline TermSpec make_term(TaskKind task, int index, std::optional<double> beta = std::nullopt,
                          IndicatorMode indicator = IndicatorMode::Local) {
  if (index == bias_family_index(task)) return bias_term(task);
  const auto fams = families_for(task);
  if (index < 0 || index >= static_cast<int>(fams.size()))
    fail(ErrorKind::Data, "family index " + std::to_string(index) + " out of range for " +
                              std::string(to_string(task)));
  const FamilyDef& d = fams[static_cast<std::size_t>(index)];
  TermSpec t;
  t.task = task;
  t.family_index = index;
  t.lifting = d.lifting;
  t.kernel = d.kernel;
  t.outer = d.outer;
  t.indicator = indicator;
  if (t.needs_beta()) t.beta = beta;
  t.validate();
  return t;
}

struct LibrarySpec {
  TaskKind task = TaskKind::ImageToScalar;
  double beta_min = 0.1;
  double beta_max = 10.0;
  int m_beta = 10;
  /// Family indices to include; empty selects the default list for the task.
  std::vector<int> families;
  /// Adds the squared Gaussian moment to the default scalar list.
  bool scalar_square_term = false;
  IndicatorMode indicator = IndicatorMode::Local;
};

/// m uniformly spaced bandwidths including both endpoints; m = 1 gives the midpoint.
inline std::vector<double> bandwidth_grid(double beta_min, double beta_max, int m_beta) {
  if (!(beta_min > 0.0) || !(beta_min < beta_max) || m_beta < 1)
    fail(ErrorKind::Usage, "invalid bandwidth range [" + std::to_string(beta_min) + ", " +
                               std::to_string(beta_max) + "] with m=" + std::to_string(m_beta));
  if (m_beta == 1) return {0.5 * (beta_min + beta_max)};
  std::vector<double> out(static_cast<std::size_t>(m_beta));
  const double step = (beta_max - beta_min) / static_cast<double>(m_beta - 1);
  for (int j = 0; j < m_beta; ++j) out[static_cast<std::size_t>(j)] = beta_min + step * j;
  out.back() = beta_max;
  return out;
}

/// Term list: each bandwidth-free family once, each bandwidth family once per
/// grid value (family-major), then the bias term last.
inline std::vector<TermSpec> build_library(const LibrarySpec& spec) {
  std::vector<int> fams = spec.families;
  if (fams.empty()) {
    const int n = static_cast<int>(families_for(spec.task).size());
    for (int i = 0; i < n; ++i) fams.push_back(i);
    if (spec.task == TaskKind::ImageToScalar && !spec.scalar_square_term) fams.pop_back();
  }
  if (fams.empty()) fail(ErrorKind::Usage, "library family selection is empty");
  std::sort(fams.begin(), fams.end());
  fams.erase(std::unique(fams.begin(), fams.end()), fams.end());

  const auto betas = bandwidth_grid(spec.beta_min, spec.beta_max, spec.m_beta);
  std::vector<TermSpec> out;
  for (int idx : fams) {
    if (idx == bias_family_index(spec.task)) continue;
    TermSpec probe = make_term(spec.task, idx, 1.0, spec.indicator);
    if (!probe.needs_beta()) {
      out.push_back(make_term(spec.task, idx, std::nullopt, spec.indicator));
    } else {
      for (double b : betas) out.push_back(make_term(spec.task, idx, b, spec.indicator));
    }
  }
  out.push_back(bias_term(spec.task));
  return out;
}

struct LibraryPreset {
  std::string_view name;
  LibrarySpec spec;
};

inline std::span<const LibraryPreset> library_presets() {
  static const LibraryPreset presets[] = {
      {"case1-mnist", {TaskKind::ImageToScalar, 0.1, 10.0, 10, {}, false, IndicatorMode::Local}},
      {"case2-porous-scalar", {TaskKind::ImageToScalar, 0.1, 10.0, 20, {}, true, IndicatorMode::Local}},
      {"case3-porous-image", {TaskKind::ImageToImage, 0.2, 1.5, 120, {}, false, IndicatorMode::Local}},
      {"case4-superres", {TaskKind::ImageToImage, 0.2, 0.4, 7, {}, false, IndicatorMode::Local}},
      {"case5-wss-line", {TaskKind::ImageToLine, 0.1, 1.9, 120, {}, false, IndicatorMode::Local}},
      {"case6-local", {TaskKind::ImageToImage, 0.2, 1.5, 20, {}, false, IndicatorMode::Local}},
  };
  return presets;
}

inline LibrarySpec library_preset(std::string_view name) {
  for (const auto& p : library_presets())
    if (p.name == name) return p.spec;
  fail(ErrorKind::Usage, "unknown library preset '" + std::string(name) + "'");
}

/// Plug-in bandwidth n^-0.3 for Gaussian kernels on an n-point axis.
inline double plugin_bandwidth(int n) {
  if (n < 2) fail(ErrorKind::Usage, "plug-in bandwidth needs n >= 2, got " + std::to_string(n));
  return std::pow(static_cast<double>(n), -0.3);
}

// ---------------------------------------------------------------------------
// Evaluation

struct OutputPoint {
  double x = 0.0;
  double y = 0.0;
};

inline double kernel_value(KernelFamily k, double beta, IndicatorMode mode, double dx, double dy) {
  switch (k) {
    case KernelFamily::Unit:
    case KernelFamily::DomainAverage: return 1.0;
    case KernelFamily::GaussianIso: return std::exp(-(dx * dx + dy * dy) / beta);
    case KernelFamily::ExpDistance: return std::exp(-std::sqrt(dx * dx + dy * dy) / beta);
    case KernelFamily::IndicatorDisk: {
      const bool inside = 2.0 * std::sqrt(dx * dx + dy * dy) / beta <= 1.0;
      return (mode == IndicatorMode::Local) == inside ? 1.0 : 0.0;
    }
    case KernelFamily::SepExpX: return std::exp(dx / beta);
    case KernelFamily::SepExpY: return std::exp(dy / beta);
  }
  return 0.0;
}

inline double lift_value(Lifting l, double f, double zeta, double eta, double beta) {
  switch (l) {
    case Lifting::Identity: return f;
    case Lifting::CoordZeta: return zeta * f;
    case Lifting::CoordEta: return eta * f;
    case Lifting::CoordZeta2: return zeta * zeta * f;
    case Lifting::CoordEta2: return eta * eta * f;
    case Lifting::CoordZetaEta: return zeta * eta * f;
    case Lifting::SquareF: return f * f;
    case Lifting::TanhF: return std::tanh(f);
    case Lifting::ExpF: return std::exp(f);
    case Lifting::ExpNegFOverBeta: return std::exp(-f / beta);
  }
  return 0.0;
}

/// Output point at which a task evaluates its kernels.
inline OutputPoint task_point(TaskKind task, double x, double y) {
  switch (task) {
    case TaskKind::ImageToScalar: return {0.0, 0.0};
    case TaskKind::ImageToLine: return {x, 0.0};
    case TaskKind::ImageToImage: return {x, y};
  }
  return {};
}

namespace detail {

inline std::string describe(const TermSpec& t);

/// Kernel values at every input node for one output point.
inline void fill_kernel(const TermSpec& t, const Grid2D& g, OutputPoint p, std::vector<double>& psi) {
  psi.resize(g.size());
  const double beta = t.beta.value_or(1.0);
  for (std::size_t j = 0; j < g.ny(); ++j)
    for (std::size_t i = 0; i < g.nx(); ++i)
      psi[g.index(i, j)] = kernel_value(t.kernel, beta, t.indicator, p.x - g.x(i), p.y - g.y(j));
}

/// Lifted input T(f) at every node.
inline void fill_lifted(const TermSpec& t, const Field2D& f, std::vector<double>& out) {
  const Grid2D& g = f.grid();
  out.resize(g.size());
  const double beta = t.beta.value_or(1.0);
  for (std::size_t j = 0; j < g.ny(); ++j)
    for (std::size_t i = 0; i < g.nx(); ++i) {
      const std::size_t k = g.index(i, j);
      out[k] = lift_value(t.lifting, f.values()[k], g.x(i), g.y(j), beta);
    }
}

/// sum_k (w_k * psi_k) * lifted_k, with DomainAverage dividing by sum_k w_k.
inline double kernel_integral(KernelFamily k, std::span<const double> psi, std::span<const double> lifted,
                              std::span<const double> w) {
  double acc = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) acc += w[n] * psi[n] * lifted[n];
  if (k == KernelFamily::DomainAverage) {
    double area = 0.0;
    for (double v : w) area += v;
    acc /= area;
  }
  return acc;
}

inline double apply_outer(const TermSpec& t, double v) {
  switch (t.outer) {
    case OuterNonlinearity::Identity: return v;
    case OuterNonlinearity::Square: return v * v;
    case OuterNonlinearity::Tanh: return std::tanh(v);
    case OuterNonlinearity::Exp:
      if (std::abs(v) > 700.0)
        fail(ErrorKind::Numerical, "exponent " + std::to_string(v) + " overflows in term " + describe(t));
      return std::exp(v);
  }
  return v;
}

inline double checked(const TermSpec& t, double v) {
  if (!std::isfinite(v)) fail(ErrorKind::Numerical, "non-finite value in term " + describe(t));
  return v;
}

}  // namespace detail

/// Evaluates one term at an output point. Scalar tasks ignore (x, y); line
/// tasks ignore y.
inline double eval_term(const TermSpec& term, const Field2D& f, std::span<const double> w, double x = 0.0,
                        double y = 0.0) {
  if (w.size() != f.grid().size()) fail(ErrorKind::Data, "weights do not match field grid");
  if (term.is_bias) return 1.0;
  std::vector<double> psi, lifted;
  detail::fill_kernel(term, f.grid(), task_point(term.task, x, y), psi);
  detail::fill_lifted(term, f, lifted);
  return detail::checked(term, detail::apply_outer(term, detail::kernel_integral(term.kernel, psi, lifted, w)));
}

inline double eval_term_scalar(const TermSpec& term, const Field2D& f, std::span<const double> w) {
  if (term.task != TaskKind::ImageToScalar) fail(ErrorKind::Data, "eval_term_scalar on a non-scalar term");
  return eval_term(term, f, w);
}

inline double eval_term_line(const TermSpec& term, const Field2D& f, std::span<const double> w, double out_x) {
  if (term.task != TaskKind::ImageToLine) fail(ErrorKind::Data, "eval_term_line on a non-line term");
  return eval_term(term, f, w, out_x, 0.0);
}

inline double eval_term_image(const TermSpec& term, const Field2D& f, std::span<const double> w, double out_x,
                              double out_y) {
  if (term.task != TaskKind::ImageToImage) fail(ErrorKind::Data, "eval_term_image on a non-image term");
  return eval_term(term, f, w, out_x, out_y);
}

/// Evaluates a whole term list at many output points over many inputs,
/// sharing kernel tables between terms with the same (kernel, bandwidth).
/// Results are bit-identical to calling eval_term per entry.
class LibraryEvaluator {
 public:
  LibraryEvaluator(std::span<const TermSpec> terms, const Grid2D& grid)
      : terms_(terms.begin(), terms.end()), grid_(grid), weights_(quadrature_weights(grid)) {
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      const TermSpec& t = terms_[j];
      if (t.is_bias) {
        bias_.push_back(j);
        continue;
      }
      auto key = std::tuple(static_cast<int>(t.kernel), t.beta.value_or(-1.0), static_cast<int>(t.indicator));
      auto [it, fresh] = group_index_.try_emplace(key, groups_.size());
      if (fresh) groups_.push_back({j, {}});
      groups_[it->second].members.push_back(j);
    }
  }

  const std::vector<TermSpec>& terms() const { return terms_; }
  std::span<const double> weights() const { return weights_; }

  /// Evaluates all terms for each input at output point p and writes
  /// out[s * stride + j] for input s and term j.
  void evaluate(std::span<const Field2D* const> inputs, OutputPoint p, std::span<double> out,
                std::size_t stride) const {
    std::vector<double> psi, lifted;
    for (std::size_t j : bias_)
      for (std::size_t s = 0; s < inputs.size(); ++s) out[s * stride + j] = 1.0;
    for (const Group& grp : groups_) {
      detail::fill_kernel(terms_[grp.representative], grid_, p, psi);
      for (std::size_t s = 0; s < inputs.size(); ++s) {
        const Field2D& f = *inputs[s];
        Lifting last{};
        double last_beta = -1.0;
        bool have = false;
        for (std::size_t j : grp.members) {
          const TermSpec& t = terms_[j];
          if (!have || t.lifting != last || t.beta.value_or(-1.0) != last_beta) {
            detail::fill_lifted(t, f, lifted);
            last = t.lifting;
            last_beta = t.beta.value_or(-1.0);
            have = true;
          }
          const double v = detail::kernel_integral(t.kernel, psi, lifted, weights_);
          out[s * stride + j] = detail::checked(t, detail::apply_outer(t, v));
        }
      }
    }
  }

 private:
  struct Group {
    std::size_t representative;
    std::vector<std::size_t> members;
  };
  std::vector<TermSpec> terms_;
  Grid2D grid_;
  std::vector<double> weights_;
  std::vector<std::size_t> bias_;
  std::vector<Group> groups_;
  std::map<std::tuple<int, double, int>, std::size_t> group_index_;
};

// ---------------------------------------------------------------------------
// Rendering

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace detail {

inline std::string render_kernel(const TermSpec& t) {
  const std::string b = t.beta ? format_number(*t.beta) : "b";
  const bool image = t.task == TaskKind::ImageToImage;
  const bool line = t.task == TaskKind::ImageToLine;
  const std::string dx2 = (image || line) ? "(x-ζ)^2" : "ζ^2";
  const std::string dy2 = image ? "(y-η)^2" : "η^2";
  switch (t.kernel) {
    case KernelFamily::Unit:
    case KernelFamily::DomainAverage: return "";
    case KernelFamily::GaussianIso: return "exp(-(" + dx2 + "+" + dy2 + ")/" + b + ")";
    case KernelFamily::ExpDistance: return "exp(-sqrt(" + dx2 + "+" + dy2 + ")/" + b + ")";
    case KernelFamily::IndicatorDisk: {
      const std::string d = line ? "2D_wss/" : "2D/";
      return "I[" + d + b + (t.indicator == IndicatorMode::Local ? "<=1]" : ">1]");
    }
    case KernelFamily::SepExpX: return (image || line) ? "exp((x-ζ)/" + b + ")" : "exp(-ζ/" + b + ")";
    case KernelFamily::SepExpY: return image ? "exp((y-η)/" + b + ")" : "exp(-η/" + b + ")";
  }
  return "";
}

inline std::string render_lifting(const TermSpec& t) {
  const std::string f = "f(ζ,η)";
  switch (t.lifting) {
    case Lifting::Identity: return f;
    case Lifting::CoordZeta: return "ζ " + f;
    case Lifting::CoordEta: return "η " + f;
    case Lifting::CoordZeta2: return "ζ^2 " + f;
    case Lifting::CoordEta2: return "η^2 " + f;
    case Lifting::CoordZetaEta: return "ζη " + f;
    case Lifting::SquareF: return f + "^2";
    case Lifting::TanhF: return "tanh(" + f + ")";
    case Lifting::ExpF: return "exp(" + f + ")";
    case Lifting::ExpNegFOverBeta: return "exp(-" + f + "/" + (t.beta ? format_number(*t.beta) : "b") + ")";
  }
  return f;
}

inline std::string describe(const TermSpec& t) {
  std::string s = std::string(to_string(t.task)) + " family " + std::to_string(t.family_index);
  if (t.beta) s += " beta=" + format_number(*t.beta);
  return s;
}

}  // namespace detail

/// Human-readable integral expression, e.g.
/// "∬ exp(-((x-ζ)^2+(y-η)^2)/0.35) f(ζ,η) dζdη".
inline std::string render_term(const TermSpec& t) {
  if (t.is_bias) return "1";
  std::string body;
  if (t.kernel == KernelFamily::DomainAverage) {
    body = "∬ " + detail::render_lifting(t) + " dζdη / ∬ dζdη";
  } else {
    const std::string k = detail::render_kernel(t);
    body = "∬ " + (k.empty() ? "" : k + " ") + detail::render_lifting(t) + " dζdη";
  }
  switch (t.outer) {
    case OuterNonlinearity::Identity: return t.kernel == KernelFamily::DomainAverage ? "(" + body + ")" : body;
    case OuterNonlinearity::Square: return "(" + body + ")^2";
    case OuterNonlinearity::Tanh: return "tanh(" + body + ")";
    case OuterNonlinearity::Exp: return "exp(" + body + ")";
  }
  return body;
}

}  // namespace flm
