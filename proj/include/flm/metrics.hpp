#pragma once

// Error statistics: point-wise absolute errors pooled over every sample and
// collocation point, and image-based errors (per-sample spatial means).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flm/fields.hpp"

namespace flm {

namespace detail {
inline void require_matching(std::span<const Output> pred, std::span<const Output> truth) {
  if (pred.size() != truth.size())
    fail(ErrorKind::Data, "prediction count " + std::to_string(pred.size()) + " vs truth count " +
                              std::to_string(truth.size()));
  if (pred.empty()) fail(ErrorKind::Data, "no samples to compare");
  for (std::size_t q = 0; q < pred.size(); ++q)
    if (pred[q].index() != truth[q].index() || output_values(pred[q]).size() != output_values(truth[q]).size())
      fail(ErrorKind::Data, "shape mismatch at sample " + std::to_string(q));
}
}  // namespace detail

inline std::vector<Output> outputs_of(const Dataset& d) {
  std::vector<Output> out;
  out.reserve(d.size());
  for (const Sample& s : d.samples()) out.push_back(s.output);
  return out;
}

inline std::vector<double> pointwise_errors(std::span<const Output> pred, std::span<const Output> truth) {
  detail::require_matching(pred, truth);
  std::vector<double> e;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    const auto a = output_values(pred[q]), b = output_values(truth[q]);
    for (std::size_t k = 0; k < a.size(); ++k) e.push_back(std::abs(a[k] - b[k]));
  }
  return e;
}

/// Spatial mean of |pred - truth| per sample; field tasks only.
inline std::vector<double> image_based_errors(std::span<const Output> pred, std::span<const Output> truth) {
  detail::require_matching(pred, truth);
  if (std::holds_alternative<double>(truth.front()))
    fail(ErrorKind::Data, "image-based errors need field outputs, not scalars");
  std::vector<double> e;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    const auto a = output_values(pred[q]), b = output_values(truth[q]);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    e.push_back(s / static_cast<double>(a.size()));
  }
  return e;
}

/// Inclusive linear interpolation between order statistics: position
/// p/100 * (n-1) in the sorted sample.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) fail(ErrorKind::Data, "percentile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

struct BoxplotStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::size_t outliers = 0;
};

/// Quartiles with whiskers at the most extreme values within 1.5 IQR of the box.
inline BoxplotStats boxplot(const std::vector<double>& v) {
  BoxplotStats b;
  b.median = percentile(v, 50);
  b.q1 = percentile(v, 25);
  b.q3 = percentile(v, 75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q3;
  b.whisker_high = b.q1;
  for (double x : v) {
    if (x < lo_fence || x > hi_fence) {
      ++b.outliers;
      continue;
    }
    b.whisker_low = std::min(b.whisker_low, x);
    b.whisker_high = std::max(b.whisker_high, x);
  }
  return b;
}

struct ErrorSummary {
  double mae = 0.0;
  double max = 0.0;
  std::map<int, double> percentiles;  // 95, 97, 99
  BoxplotStats box;
};

inline ErrorSummary summarize_errors(const std::vector<double>& e) {
  if (e.empty()) fail(ErrorKind::Data, "no errors to summarize");
  ErrorSummary s;
  double sum = 0.0;
  for (double x : e) {
    sum += x;
    s.max = std::max(s.max, x);
  }
  s.mae = sum / static_cast<double>(e.size());
  for (int p : {95, 97, 99}) s.percentiles[p] = percentile(e, p);
  s.box = boxplot(e);
  return s;
}

struct MetricsReport {
  std::string split;
  std::size_t count = 0;  // samples
  ErrorSummary pointwise;
  std::optional<ErrorSummary> image_based;

  double mae() const { return pointwise.mae; }
  double max_ae() const { return pointwise.max; }
};

inline MetricsReport summarize(std::span<const Output> pred, std::span<const Output> truth, std::string split) {
  MetricsReport r;
  r.split = std::move(split);
  r.count = pred.size();
  r.pointwise = summarize_errors(pointwise_errors(pred, truth));
  if (!std::holds_alternative<double>(truth.front())) r.image_based = summarize_errors(image_based_errors(pred, truth));
  return r;
}

inline nlohmann::json to_json(const ErrorSummary& s) {
  nlohmann::json perc = nlohmann::json::object();
  for (const auto& [p, v] : s.percentiles) perc[std::to_string(p)] = v;
  return {{"mae", s.mae},
          {"max", s.max},
          {"percentiles", perc},
          {"boxplot",
           {{"median", s.box.median},
            {"q1", s.box.q1},
            {"q3", s.box.q3},
            {"whisker_low", s.box.whisker_low},
            {"whisker_high", s.box.whisker_high},
            {"outliers", s.box.outliers}}}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"split", r.split}, {"count", r.count}, {"pointwise", to_json(r.pointwise)}};
  j["image_based"] = r.image_based ? to_json(*r.image_based) : nlohmann::json(nullptr);
  return j;
}

/// Flat "split,metric,value" rows.
inline std::string to_csv(const MetricsReport& r) {
  std::string out = "split,metric,value\n";
  char buf[64];
  auto row = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += r.split + "," + name + "," + buf + "\n";
  };
  auto block = [&](const std::string& prefix, const ErrorSummary& s) {
    row(prefix + "mae", s.mae);
    row(prefix + "max", s.max);
    for (const auto& [p, v] : s.percentiles) row(prefix + "p" + std::to_string(p), v);
    row(prefix + "median", s.box.median);
    row(prefix + "q1", s.box.q1);
    row(prefix + "q3", s.box.q3);
  };
  block("", r.pointwise);
  if (r.image_based) block("image_", *r.image_based);
  return out;
}

}  // namespace flm
