#pragma once

// Evaluation of a term library on a dataset: the linear system U = F W.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flm/fields.hpp"
#include "flm/kernels.hpp"
#include "flm/parallel.hpp"

namespace flm {

/// Row ordering written into exported models.
inline constexpr std::string_view kRowOrder =
    "sample-major; collocation row-major (y-major, x-minor) for images, ascending x for lines";

struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major
  std::optional<std::size_t> bias_column;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

struct TargetVector {
  std::vector<double> values;
};

struct LinearSystem {
  DesignMatrix F;
  TargetVector U;
};

struct ColumnScaling {
  std::vector<double> scales;
  std::vector<std::size_t> zero_columns;
};

struct AssemblyOptions {
  unsigned threads = 1;
  std::size_t memory_cap_bytes = std::size_t{8} << 30;
};

/// Output collocation points of a task in row order.
inline std::vector<OutputPoint> output_points(TaskKind task, const Grid2D& grid, std::size_t out_n) {
  std::vector<OutputPoint> pts;
  switch (task) {
    case TaskKind::ImageToScalar: pts.push_back({0.0, 0.0}); break;
    case TaskKind::ImageToLine:
      for (std::size_t i = 0; i < out_n; ++i) pts.push_back({cell_center(i, out_n), 0.0});
      break;
    case TaskKind::ImageToImage:
      for (std::size_t j = 0; j < grid.ny(); ++j)
        for (std::size_t i = 0; i < grid.nx(); ++i) pts.push_back({grid.x(i), grid.y(j)});
      break;
  }
  return pts;
}

/// Feature rows for a set of inputs at the given output points; row
/// s * points.size() + p holds every term evaluated on input s at point p.
inline DesignMatrix evaluate_features(std::span<const Field2D* const> inputs, std::span<const TermSpec> library,
                                      std::span<const OutputPoint> points, const AssemblyOptions& opt = {}) {
  if (inputs.empty()) fail(ErrorKind::Data, "no inputs to evaluate");
  if (library.empty()) fail(ErrorKind::Usage, "empty term library");
  DesignMatrix F;
  F.rows = inputs.size() * points.size();
  F.cols = library.size();
  const double bytes = static_cast<double>(F.rows) * static_cast<double>(F.cols) * 8.0;
  if (bytes > static_cast<double>(opt.memory_cap_bytes))
    fail(ErrorKind::Numerical, "design matrix " + std::to_string(F.rows) + "x" + std::to_string(F.cols) +
                                   " needs " + std::to_string(bytes / (1 << 20)) + " MiB, above the cap of " +
                                   std::to_string(opt.memory_cap_bytes >> 20) + " MiB");
  for (std::size_t j = 0; j < library.size(); ++j)
    if (library[j].is_bias) F.bias_column = j;
  F.data.assign(F.rows * F.cols, 0.0);

  const Grid2D& grid = inputs.front()->grid();
  for (const Field2D* f : inputs)
    if (!(f->grid() == grid)) fail(ErrorKind::Data, "inputs do not share one grid");
  const LibraryEvaluator eval(library, grid);
  const std::size_t npts = points.size();

  // One work item per output point when there are several, else per input.
  if (npts > 1) {
    parallel_for(npts, opt.threads, [&](std::size_t p) {
      eval.evaluate(inputs, points[p], std::span(F.data).subspan(p * F.cols), npts * F.cols);
    });
  } else {
    parallel_for(inputs.size(), opt.threads, [&](std::size_t s) {
      eval.evaluate(inputs.subspan(s, 1), points[0], std::span(F.data).subspan(s * F.cols), F.cols);
    });
  }
  return F;
}

inline LinearSystem assemble(const Dataset& data, std::span<const TermSpec> library,
                             const AssemblyOptions& opt = {}) {
  for (const TermSpec& t : library)
    if (t.task != data.task())
      fail(ErrorKind::Data, "library task " + std::string(to_string(t.task)) + " does not match dataset task " +
                                std::string(to_string(data.task())));
  std::vector<const Field2D*> inputs;
  for (const Sample& s : data.samples()) inputs.push_back(&s.input);
  const auto pts = output_points(data.task(), data.grid(), data.output_size());

  LinearSystem sys;
  try {
    sys.F = evaluate_features(inputs, library, pts, opt);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numerical) throw;
    // Locate the offending sample for the report.
    for (std::size_t q = 0; q < inputs.size(); ++q) {
      try {
        evaluate_features(std::span(inputs).subspan(q, 1), library, pts, {1, opt.memory_cap_bytes});
      } catch (const Error& inner) {
        fail(ErrorKind::Numerical, "sample " + std::to_string(q) + ": " + inner.what());
      }
    }
    throw;
  }
  sys.U.values.reserve(sys.F.rows);
  for (const Sample& s : data.samples())
    for (double v : output_values(s.output)) sys.U.values.push_back(v);
  return sys;
}

/// Scales every non-zero column to unit l2 norm. Zero columns keep scale 1
/// and are listed.
inline std::pair<DesignMatrix, ColumnScaling> column_normalize(const DesignMatrix& F) {
  ColumnScaling sc;
  sc.scales.assign(F.cols, 0.0);
  for (std::size_t r = 0; r < F.rows; ++r)
    for (std::size_t c = 0; c < F.cols; ++c) sc.scales[c] += F(r, c) * F(r, c);
  for (std::size_t c = 0; c < F.cols; ++c) {
    sc.scales[c] = std::sqrt(sc.scales[c]);
    if (sc.scales[c] == 0.0) {
      sc.scales[c] = 1.0;
      sc.zero_columns.push_back(c);
    }
  }
  DesignMatrix out = F;
  for (std::size_t r = 0; r < F.rows; ++r)
    for (std::size_t c = 0; c < F.cols; ++c) out(r, c) = F(r, c) / sc.scales[c];
  return {std::move(out), std::move(sc)};
}

}  // namespace flm
