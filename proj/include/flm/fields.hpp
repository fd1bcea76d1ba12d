#pragma once

// Discretized inputs and outputs on uniform cell-centered grids over the unit
// square / unit interval, plus the quadrature and normalization used on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flm/error.hpp"

namespace flm {

enum class TaskKind { ImageToScalar = 0, ImageToLine = 1, ImageToImage = 2 };

inline std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::ImageToScalar: return "image_to_scalar";
    case TaskKind::ImageToLine: return "image_to_line";
    case TaskKind::ImageToImage: return "image_to_image";
  }
  return "?";
}

inline TaskKind parse_task(std::string_view name) {
  if (name == "image_to_scalar" || name == "scalar") return TaskKind::ImageToScalar;
  if (name == "image_to_line" || name == "line") return TaskKind::ImageToLine;
  if (name == "image_to_image" || name == "image") return TaskKind::ImageToImage;
  fail(ErrorKind::Usage, "unknown task '" + std::string(name) + "'");
}

/// Cell-center node coordinate of index i on an n-point axis over [0,1].
inline double cell_center(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) + 0.5) / static_cast<double>(n);
}

class Grid2D {
 public:
  Grid2D(std::size_t nx, std::size_t ny) : nx_(nx), ny_(ny) {
    if (nx < 2 || ny < 2)
      fail(ErrorKind::Usage, "grid must be at least 2x2, got " + std::to_string(nx) + "x" +
                                 std::to_string(ny));
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }

  double x(std::size_t i) const { return cell_center(i, nx_); }
  double y(std::size_t j) const { return cell_center(j, ny_); }

  /// Row-major (y-major, x-minor) flat index.
  std::size_t index(std::size_t i, std::size_t j) const { return j * nx_ + i; }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::size_t nx_;
  std::size_t ny_;
};

namespace detail {
inline void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!std::isfinite(values[k]))
      fail(ErrorKind::Numerical,
           std::string(what) + " has non-finite value at index " + std::to_string(k));
}
}  // namespace detail

class Field2D {
 public:
  Field2D(Grid2D grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      fail(ErrorKind::Data, "field has " + std::to_string(values_.size()) +
                                " values, grid needs " + std::to_string(grid_.size()));
    detail::require_finite(values_, "field");
  }

  explicit Field2D(Grid2D grid, double fill = 0.0)
      : grid_(grid), values_(grid.size(), fill) {}

  /// Samples fn(x, y) at every cell center.
  template <class Fn>
  static Field2D sample(Grid2D grid, Fn&& fn) {
    std::vector<double> v(grid.size());
    for (std::size_t j = 0; j < grid.ny(); ++j)
      for (std::size_t i = 0; i < grid.nx(); ++i) v[grid.index(i, j)] = fn(grid.x(i), grid.y(j));
    return Field2D(grid, std::move(v));
  }

  const Grid2D& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[grid_.index(i, j)]; }

  friend bool operator==(const Field2D&, const Field2D&) = default;

 private:
  Grid2D grid_;
  std::vector<double> values_;
};

class Field1D {
 public:
  explicit Field1D(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) fail(ErrorKind::Data, "line field must have at least one value");
    detail::require_finite(values_, "line field");
  }

  std::size_t size() const { return values_.size(); }
  double x(std::size_t i) const { return cell_center(i, values_.size()); }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const Field1D&, const Field1D&) = default;

 private:
  std::vector<double> values_;
};

using Output = std::variant<double, Field1D, Field2D>;

inline std::span<const double> output_values(const Output& out) {
  if (const auto* s = std::get_if<double>(&out)) return {s, 1};
  if (const auto* l = std::get_if<Field1D>(&out)) return l->values();
  return std::get<Field2D>(out).values();
}

inline TaskKind output_task(const Output& out) {
  return static_cast<TaskKind>(out.index());
}

/// Builds the output variant for a task from flat values. Image outputs take
/// the shape of `grid`.
inline Output make_output(TaskKind task, std::vector<double> values, const Grid2D& grid) {
  switch (task) {
    case TaskKind::ImageToScalar:
      if (values.size() != 1)
        fail(ErrorKind::Data, "scalar output needs 1 value, got " + std::to_string(values.size()));
      detail::require_finite(values, "scalar output");
      return values[0];
    case TaskKind::ImageToLine:
      return Field1D(std::move(values));
    case TaskKind::ImageToImage:
      return Field2D(grid, std::move(values));
  }
  fail(ErrorKind::Data, "bad task");
}

struct Sample {
  Field2D input;
  Output output;
};

/// Min-max statistics of a training split. The optional shifts are the means
/// of the normalized training data and are zero unless centering is enabled.
struct NormStats {
  double input_min = 0.0;
  double input_max = 1.0;
  double output_min = 0.0;
  double output_max = 1.0;
  double input_shift = 0.0;
  double output_shift = 0.0;

  double apply_input(double v) const { return (v - input_min) / (input_max - input_min) - input_shift; }
  double apply_output(double v) const {
    return (v - output_min) / (output_max - output_min) - output_shift;
  }
  double invert_input(double v) const { return (v + input_shift) * (input_max - input_min) + input_min; }
  double invert_output(double v) const {
    return (v + output_shift) * (output_max - output_min) + output_min;
  }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

class Dataset {
 public:
  Dataset(TaskKind task, std::vector<Sample> samples, std::optional<NormStats> norm = std::nullopt)
      : task_(task), samples_(std::move(samples)), norm_(norm) {
    if (samples_.empty()) fail(ErrorKind::Data, "dataset must hold at least one sample");
    const Grid2D& g = samples_.front().input.grid();
    const std::size_t out_n = output_values(samples_.front().output).size();
    for (std::size_t q = 0; q < samples_.size(); ++q) {
      const Sample& s = samples_[q];
      if (!(s.input.grid() == g))
        fail(ErrorKind::Data, "sample " + std::to_string(q) + " input grid differs from sample 0");
      if (output_task(s.output) != task_)
        fail(ErrorKind::Data, "sample " + std::to_string(q) + " output does not match task " +
                                  std::string(to_string(task_)));
      if (output_values(s.output).size() != out_n)
        fail(ErrorKind::Data, "sample " + std::to_string(q) + " output length differs");
      if (task_ == TaskKind::ImageToImage && !(std::get<Field2D>(s.output).grid() == g))
        fail(ErrorKind::Data, "sample " + std::to_string(q) + " output grid differs from input grid");
    }
  }

  TaskKind task() const { return task_; }
  std::size_t size() const { return samples_.size(); }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t q) const { return samples_[q]; }
  const Grid2D& grid() const { return samples_.front().input.grid(); }
  /// Output length per sample: 1, n, or nx*ny.
  std::size_t output_size() const { return output_values(samples_.front().output).size(); }
  const std::optional<NormStats>& norm() const { return norm_; }

 private:
  TaskKind task_;
  std::vector<Sample> samples_;
  std::optional<NormStats> norm_;
};

// ---------------------------------------------------------------------------
// Quadrature

/// Uniform midpoint-rule weights, 1/(nx*ny) per cell.
inline std::vector<double> quadrature_weights(const Grid2D& grid) {
  return std::vector<double>(grid.size(), 1.0 / static_cast<double>(grid.size()));
}

inline double integrate(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size())
    fail(ErrorKind::Data, "integrate: " + std::to_string(values.size()) + " values vs " +
                              std::to_string(weights.size()) + " weights");
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  // The uniform rule divides by n: 1/n itself is usually not representable.
  const double uniform = 1.0 / static_cast<double>(n);
  if (std::all_of(weights.begin(), weights.end(), [&](double w) { return w == uniform; })) {
    double s = 0.0, c = 0.0;
    for (double v : values) {
      const double t = s + v;
      c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
      s = t;
    }
    // Divide the unevaluated pair s + c: q*n + r == s exactly.
    const double dn = static_cast<double>(n);
    const double q = s / dn;
    const double r = std::fma(-q, dn, s);
    return q + (r + c) / dn;
  }
  // Dot2: product errors recovered with fma, sum errors with TwoSum.
  double s = 0.0, c = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double p = values[k] * weights[k];
    const double pe = std::fma(values[k], weights[k], -p);
    const double t = s + p;
    const double z = t - s;
    c += (s - (t - z)) + (p - z) + pe;
    s = t;
  }
  return s + c;
}

inline double integrate(const Field2D& field, std::span<const double> weights) {
  return integrate(field.values(), weights);
}

// ---------------------------------------------------------------------------
// Normalization

/// Min-max statistics over every input and output value of the training data.
/// With `center`, the mean of the normalized values is also removed.
inline NormStats fit_normalization(const Dataset& train, bool center = false) {
  NormStats s{};
  s.input_min = s.output_min = INFINITY;
  s.input_max = s.output_max = -INFINITY;
  for (const Sample& smp : train.samples()) {
    for (double v : smp.input.values()) {
      s.input_min = std::min(s.input_min, v);
      s.input_max = std::max(s.input_max, v);
    }
    for (double v : output_values(smp.output)) {
      s.output_min = std::min(s.output_min, v);
      s.output_max = std::max(s.output_max, v);
    }
  }
  if (!(s.input_max > s.input_min))
    fail(ErrorKind::Data, "cannot normalize: input values are constant");
  if (!(s.output_max > s.output_min))
    fail(ErrorKind::Data, "cannot normalize: output values are constant");
  if (center) {
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (const Sample& smp : train.samples()) {
      for (double v : smp.input.values()) in_sum += s.apply_input(v), ++in_n;
      for (double v : output_values(smp.output)) out_sum += s.apply_output(v), ++out_n;
    }
    s.input_shift = in_sum / static_cast<double>(in_n);
    s.output_shift = out_sum / static_cast<double>(out_n);
  }
  return s;
}

inline Field2D apply_input_normalization(const Field2D& f, const NormStats& s) {
  std::vector<double> v(f.values().begin(), f.values().end());
  for (double& x : v) x = s.apply_input(x);
  return Field2D(f.grid(), std::move(v));
}

inline Output map_output(const Output& out, const Grid2D& grid, double (NormStats::*fn)(double) const,
                         const NormStats& s) {
  std::vector<double> v(output_values(out).begin(), output_values(out).end());
  for (double& x : v) x = (s.*fn)(x);
  const Grid2D g = std::holds_alternative<Field2D>(out) ? std::get<Field2D>(out).grid() : grid;
  return make_output(output_task(out), std::move(v), g);
}

inline Output apply_output_normalization(const Output& out, const Grid2D& grid, const NormStats& s) {
  return map_output(out, grid, &NormStats::apply_output, s);
}

inline Output invert_normalization(const Output& out, const Grid2D& grid, const NormStats& s) {
  return map_output(out, grid, &NormStats::invert_output, s);
}

/// Maps a dataset through stored statistics. Values outside the training
/// range are not clamped.
inline Dataset apply_normalization(const Dataset& data, const NormStats& s) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (const Sample& smp : data.samples())
    out.push_back({apply_input_normalization(smp.input, s),
                   apply_output_normalization(smp.output, smp.input.grid(), s)});
  return Dataset(data.task(), std::move(out), s);
}

/// Undoes apply_normalization on the outputs and inputs of a dataset.
inline Dataset invert_normalization(const Dataset& data, const NormStats& s) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (const Sample& smp : data.samples()) {
    std::vector<double> in(smp.input.values().begin(), smp.input.values().end());
    for (double& x : in) x = s.invert_input(x);
    out.push_back({Field2D(smp.input.grid(), std::move(in)),
                   invert_normalization(smp.output, smp.input.grid(), s)});
  }
  return Dataset(data.task(), std::move(out));
}

}  // namespace flm
