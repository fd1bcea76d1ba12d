// Recovers a planted three-term operator (plus bias) of the MNIST-style scalar
// library from smooth random inputs by sequential thresholding.
//
//   demo_sparse_recovery [seed] [Q]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "flm/flm.hpp"

int main(int argc, char** argv) {
  using namespace flm;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 42;
  const std::size_t Q = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 200;

  try {
    const auto library = build_library(library_preset("case1-mnist"));
    const std::vector<std::size_t> cols = {1, 7, 27, library.size() - 1};
    const std::vector<double> coeffs = {2.0, 0.5, -1.25, 1.0};
    std::vector<TermSpec> truth;
    for (std::size_t c : cols) truth.push_back(library[c]);

    const Dataset data = gen_from_library(truth, coeffs, SmoothSampler{}, Q, seed, Grid2D(28, 28));
    const auto sys = assemble(data, library);
    std::printf("library: %zu terms, design matrix %zu x %zu\n\n", library.size(), sys.F.rows, sys.F.cols);

    std::printf("planted operator:\n%s\n\n",
                render_equation(FunctionalLinearModel(TaskKind::ImageToScalar,
                                                      {{truth[0], coeffs[0]}, {truth[1], coeffs[1]},
                                                       {truth[2], coeffs[2]}, {truth[3], coeffs[3]}}))
                    .c_str());

    std::printf("%8s  %6s  %12s\n", "lambda", "active", "residual");
    for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
      const auto fit = stlsq(sys.F, sys.U.values, {.threshold = lambda});
      std::printf("%8g  %6zu  %12.3e\n", lambda, fit.report.active_count, fit.report.train_residual_rms);
    }

    const auto fit = stlsq(sys.F, sys.U.values, {.threshold = 0.1});
    const auto model = FunctionalLinearModel::from_fit(library, fit.W, std::nullopt, Provenance::DataDriven, {});
    std::printf("\nrecovered at lambda = 0.1:\n%s\n", render_equation(model).c_str());
    double worst = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) worst = std::max(worst, std::abs(fit.W[cols[i]] - coeffs[i]));
    std::printf("\nlargest coefficient error: %.3e\n", worst);
  } catch (const Error& e) {
    std::fprintf(stderr, "demo failed: %s\n", e.what());
    return 1;
  }
  return 0;
}
