#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace flm;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(Rng, UniformAndSeedDerivation) {
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = uniform01(a);
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    EXPECT_EQ(x, uniform01(b));
  }
  std::set<std::uint64_t> seeds;
  for (std::uint64_t q = 0; q < 1000; ++q) seeds.insert(sample_seed(7, q));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_NE(sample_seed(7, 0), sample_seed(8, 0));
}

TEST(SmoothField, DeterministicPerSeed) {
  const Grid2D g(16, 12);
  EXPECT_EQ(random_smooth_field(3, g, 4), random_smooth_field(3, g, 4));
  EXPECT_NE(random_smooth_field(3, g, 4), random_smooth_field(4, g, 4));
}

TEST(SmoothField, ZeroModesIsTheOffset) {
  const Field2D f = random_smooth_field(3, Grid2D(8, 8), 0, 2.5);
  for (double v : f.values()) EXPECT_EQ(v, 2.5);
}

TEST(SmoothField, DefaultOffsetKeepsValuesNonNegative) {
  const Grid2D g(28, 28);
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (int modes : {1, 4, 6}) {
      const auto co = smooth_field_coeffs(seed, modes);
      for (const auto& m : co.modes) {
        EXPECT_GE(m.c, -1.0);
        EXPECT_LE(m.c, 1.0);
      }
      const Field2D f = random_smooth_field(seed, g, modes);
      EXPECT_GE(*std::min_element(f.values().begin(), f.values().end()), 0.0);
    }
  EXPECT_THROW(random_smooth_field(1, g, 7), Error);
}

TEST(Permeability, CaseTwoDisk) {
  const Grid2D g(56, 56);
  const Field2D k = gen_permeability_case2(0.0, 0.5, 0.2, g);
  for (std::size_t j = 0; j < 56; ++j)
    for (std::size_t i = 0; i < 56; ++i) {
      const bool inside = std::hypot(g.x(i) - 0.5, g.y(j) - 0.5) <= 0.2;
      EXPECT_DOUBLE_EQ(k(i, j), inside ? 1.1 : 0.0);
    }
  for (double v : gen_permeability_case2(1.0, 5.0, 0.15, g).values()) EXPECT_EQ(v, 0.0);
  const Field2D disk = gen_permeability_case2(1.3, 0.45, 0.15, g);
  const double frac = std::count_if(disk.values().begin(), disk.values().end(), [](double v) { return v > 0; }) / 3136.0;
  EXPECT_NEAR(frac, kPi * 0.15 * 0.15, 2.0 / 56);
}

TEST(Permeability, CaseThreeFormula) {
  const Grid2D g(28, 28);
  const Field2D k0 = gen_permeability_case3(0, 0, g);
  for (std::size_t j = 0; j < 28; ++j)
    for (std::size_t i = 0; i < 28; ++i) EXPECT_NEAR(k0(i, j), std::abs(std::sin(2 * kPi * g.x(i))) + 1, 1e-15);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Field2D k = gen_permeability_case3(4 * uniform01(rng) - 2, 8 * uniform01(rng), g);
    EXPECT_GE(*std::min_element(k.values().begin(), k.values().end()), 1.0);
  }
  // Max over the nodes for A = 0, B = 1, from the closed form evaluated at each node.
  double analytic = 0.0;
  for (int j = 0; j < 28; ++j)
    for (int i = 0; i < 28; ++i) {
      const double x = (i + 0.5) / 28, y = (j + 0.5) / 28;
      analytic = std::max(analytic, std::fabs(std::sin(2 * kPi * x) * std::cos(2 * kPi * y)) + 1);
    }
  const Field2D k1 = gen_permeability_case3(0, 1, g);
  EXPECT_NEAR(*std::max_element(k1.values().begin(), k1.values().end()), analytic, 1e-6);
}

TEST(Darcy, UniformPermeabilityGivesLinearPressure) {
  const Grid2D g(28, 28);
  const DarcySolution s = darcy_solve({Field2D(g, 1.0), 10.0});
  for (std::size_t j = 0; j < 28; ++j)
    for (std::size_t i = 0; i < 28; ++i) {
      EXPECT_NEAR(s.p(i, j), 1.0 - g.x(i), 1e-8);
      EXPECT_NEAR(s.speed(i, j), 0.1, 1e-3);
    }
  EXPECT_NEAR(s.vmax, 0.1, 1e-3);
  EXPECT_LE(s.residual, 1e-10);
}

TEST(Darcy, ConstantPermeabilityScaling) {
  const Grid2D g(20, 16);
  const DarcySolution one = darcy_solve({Field2D(g, 1.0), 10.0});
  const DarcySolution c = darcy_solve({Field2D(g, 3.7), 10.0});
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(c.p.values()[k], one.p.values()[k], 1e-8);
    EXPECT_NEAR(c.speed.values()[k], 3.7 * one.speed.values()[k], 1e-8);
  }
}

TEST(Darcy, LayeredFluxConservation) {
  const Grid2D g(32, 32);
  const Field2D k = Field2D::sample(g, [](double, double y) { return y < 0.5 ? 1.0 : 2.0; });
  const DarcySolution s = darcy_solve({k, 10.0});
  ASSERT_EQ(s.cut_flux.size(), 33u);
  const double inlet = s.cut_flux.front();
  EXPECT_GT(inlet, 0.0);
  EXPECT_NEAR(s.cut_flux.back(), inlet, 1e-8 * inlet);
  for (double f : s.cut_flux) EXPECT_NEAR(f, inlet, 1e-8 * inlet);
  // Layers in parallel: total flux is the mean mobility times the unit gradient.
  EXPECT_NEAR(inlet, 0.15, 1e-8);
}

TEST(Darcy, HeterogeneousFluxConservation) {
  const Grid2D g(28, 28);
  const DarcySolution s = darcy_solve({gen_permeability_case3(0.7, 2.3, g), 10.0});
  for (double f : s.cut_flux) EXPECT_NEAR(f, s.cut_flux.front(), 1e-8 * s.cut_flux.front());
}

namespace {

// Cubic Lagrange interpolation of a cell-centred field at (x, y), using the
// four nearest cells per axis (shifted inwards at the walls).
double interp_cubic(const Field2D& f, double x, double y) {
  const Grid2D& g = f.grid();
  auto stencil = [](double t, std::size_t n, std::size_t idx[4], double w[4]) {
    const double u = t * static_cast<double>(n) - 0.5;  // fractional cell index
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

}  // namespace

TEST(Darcy, RefinementConvergesAtSecondOrder) {
  auto kfun = [](double x, double y) { return 1.0 + 0.5 * std::sin(kPi * x) * std::cos(kPi * y) + 0.3 * x * x; };
  auto solve = [&](std::size_t n) { return darcy_solve({Field2D::sample(Grid2D(n, n), kfun), 10.0}).p; };
  const Field2D ref = solve(224);
  std::vector<double> errs;
  for (std::size_t n : {28, 56, 112}) {
    const Field2D p = solve(n);
    const Grid2D& g = p.grid();
    double e = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(p(i, j) - interp_cubic(ref, g.x(i), g.y(j))));
    errs.push_back(e);
  }
  EXPECT_GT(errs[0], errs[1]);
  EXPECT_GT(errs[1], errs[2]);
  const double o1 = std::log2(errs[0] / errs[1]), o2 = std::log2(errs[1] / errs[2]);
  EXPECT_GE(o1, 1.6);
  EXPECT_LE(o1, 2.6);
  EXPECT_GE(o2, 1.6);
  EXPECT_LE(o2, 2.6);
  RecordProperty("orders", std::to_string(o1) + " " + std::to_string(o2));
}

TEST(Darcy, InvalidProblems) {
  EXPECT_EQ(flm::testing::error_kind_of([] { darcy_solve({Field2D(Grid2D(8, 8), 0.0), 10.0}); }), ErrorKind::Numerical);
  EXPECT_THROW(darcy_solve({Field2D(Grid2D(7, 8), 1.0), 10.0}), Error);
  EXPECT_THROW(darcy_solve({Field2D(Grid2D(8, 8), 1.0), 0.0}), Error);
}

TEST(DarcyDataset, ConstantFamilyScalar) {
  ParamSplit split;
  split.family = PermeabilityFamily::Constant;
  split.count = 5;
  const auto gen = gen_darcy_dataset(split, TaskKind::ImageToScalar, Grid2D(16, 16));
  ASSERT_EQ(gen.data.size(), 5u);
  for (const auto& s : gen.data.samples()) EXPECT_NEAR(std::get<double>(s.output), 0.1, 1e-3);
  EXPECT_EQ(gen.manifest["split"], "train");
  EXPECT_EQ(gen.manifest["samples"].size(), 5u);
}

TEST(DarcyDataset, OodRangesMustBeDisjoint) {
  EXPECT_TRUE(ranges_disjoint(default_ranges(PermeabilityFamily::Case3, SplitTag::Ood),
                              default_ranges(PermeabilityFamily::Case3, SplitTag::Train)));
  EXPECT_TRUE(ranges_disjoint(default_ranges(PermeabilityFamily::Case2, SplitTag::Ood),
                              default_ranges(PermeabilityFamily::Case2, SplitTag::Train)));
  const auto ood = default_ranges(PermeabilityFamily::Case3, SplitTag::Ood);
  EXPECT_EQ(ood[0].lo, 1.0);
  EXPECT_EQ(ood[0].hi, 2.0);
  EXPECT_EQ(ood[1].lo, 4.2);
  EXPECT_EQ(ood[1].hi, 6.0);
  ParamSplit bad;
  bad.tag = SplitTag::Ood;
  bad.ranges = {{"A", 0.5, 1.5}, {"B", 3.0, 5.0}};
  EXPECT_EQ(flm::testing::error_kind_of([&] { gen_darcy_dataset(bad, TaskKind::ImageToScalar, Grid2D(8, 8)); }),
            ErrorKind::Usage);
}

TEST(DarcyDataset, DeterministicAndThreadIndependent) {
  ParamSplit split;
  split.count = 6;
  split.seed = 7;
  const Grid2D g(14, 14);
  const auto a = gen_darcy_dataset(split, TaskKind::ImageToImage, g);
  const auto b = gen_darcy_dataset(split, TaskKind::ImageToImage, g);
  DarcyOptions opt;
  opt.threads = 4;
  const auto c = gen_darcy_dataset(split, TaskKind::ImageToImage, g, opt);
  for (std::size_t q = 0; q < 6; ++q) {
    EXPECT_EQ(a.data[q].input, b.data[q].input);
    EXPECT_EQ(a.data[q].output, b.data[q].output);
    EXPECT_EQ(a.data[q].output, c.data[q].output);
  }
  EXPECT_EQ(a.manifest, c.manifest);
  split.seed = 8;
  EXPECT_NE(gen_darcy_dataset(split, TaskKind::ImageToImage, g).data[0].input, a.data[0].input);
}

TEST(DarcyDataset, TaskOutputsAreConsistent) {
  ParamSplit split;
  split.count = 2;
  split.seed = 3;
  const Grid2D g(12, 10);
  const auto img = gen_darcy_dataset(split, TaskKind::ImageToImage, g);
  const auto line = gen_darcy_dataset(split, TaskKind::ImageToLine, g);
  const auto sc = gen_darcy_dataset(split, TaskKind::ImageToScalar, g);
  for (std::size_t q = 0; q < 2; ++q) {
    const auto field = std::get<Field2D>(img.data[q].output);
    const auto row = std::get<Field1D>(line.data[q].output);
    ASSERT_EQ(row.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(row.values()[i], field(i, 0));
    EXPECT_EQ(std::get<double>(sc.data[q].output), *std::max_element(field.values().begin(), field.values().end()));
  }
}

TEST(DarcyDataset, CaseTwoUsesBackgroundPermeability) {
  ParamSplit split;
  split.family = PermeabilityFamily::Case2;
  split.count = 2;
  const auto gen = gen_darcy_dataset(split, TaskKind::ImageToScalar, Grid2D(16, 16));
  EXPECT_EQ(gen.manifest["background_k"], 10.0);
  for (const auto& s : gen.data.samples()) {
    EXPECT_TRUE(std::isfinite(std::get<double>(s.output)));
    EXPECT_EQ(*std::min_element(s.input.values().begin(), s.input.values().end()), 0.0);
  }
}

TEST(FromLibrary, BiasOnlyAndRealizable) {
  const Grid2D g(14, 14);
  const auto bias = bias_term(TaskKind::ImageToScalar);
  const std::vector<TermSpec> only_bias = {bias};
  const Dataset d = gen_from_library(only_bias, std::vector<double>{1.0}, SmoothSampler{}, 6, 1, g);
  for (const auto& s : d.samples()) EXPECT_EQ(std::get<double>(s.output), 1.0);

  LibrarySpec spec = library_preset("case6-local");
  spec.m_beta = 2;
  const auto lib = build_library(spec);
  const std::vector<TermSpec> terms = {lib[2], lib[9], lib.back()};
  const Dataset img = gen_from_library(terms, std::vector<double>{0.8, -0.3, 0.1}, SmoothSampler{}, 4, 2, g);
  const auto sys = assemble(img, lib);
  const auto W = least_squares(sys.F, sys.U.values);
  double ss = 0.0;
  for (std::size_t r = 0; r < sys.F.rows; ++r) {
    double p = 0.0;
    for (std::size_t c = 0; c < sys.F.cols; ++c) p += sys.F(r, c) * W[c];
    ss += (p - sys.U.values[r]) * (p - sys.U.values[r]);
  }
  EXPECT_LT(std::sqrt(ss / sys.F.rows), 1e-10);
}

TEST(FromLibrary, MixedTasksRejected) {
  const std::vector<TermSpec> terms = {make_term(TaskKind::ImageToScalar, 0), make_term(TaskKind::ImageToLine, 0)};
  EXPECT_THROW(gen_from_library(terms, std::vector<double>{1, 1}, SmoothSampler{}, 2, 1, Grid2D(4, 4)), Error);
}

TEST(FromLibrary, StlsqRecoversSparseScalarModel) {
  const auto lib = build_library(library_preset("case1-mnist"));
  const std::vector<TermSpec> truth = {lib[1], lib[27], lib.back()};
  const std::vector<double> coeffs = {2.0, 0.5, 1.0};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Dataset d = gen_from_library(truth, coeffs, SmoothSampler{}, 200, seed, Grid2D(28, 28));
    const auto sys = assemble(d, lib);
    const auto fit = stlsq(sys.F, sys.U.values);
    EXPECT_EQ(fit.report.active_count, 3u);
    EXPECT_NEAR(fit.W[1], 2.0, 1e-8);
    EXPECT_NEAR(fit.W[27], 0.5, 1e-8);
    EXPECT_NEAR(fit.W.back(), 1.0, 1e-8);
  }
}
