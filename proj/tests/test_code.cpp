#include "popcode/code.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "popcode/error.hpp"
#include "popcode/kernels.hpp"
#include "regression_constants.hpp"

using namespace popcode;

namespace {

std::shared_ptr<const NeuronGrid> paper_grid() {
  static const auto grid = std::make_shared<const NeuronGrid>(2562, 36);
  return grid;
}

// Direct evaluation of the tuning curve, one neuron at a time.
std::vector<double> loop_oracle(const AxisAngle& aa, const NeuronGrid& grid, double sigma) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double dt = std::acos(std::clamp(aa.axis.dot(grid.preferred_axis(i)), -1.0, 1.0));
    double dp = std::fabs(aa.angle - grid.preferred_angle(i));
    dp = std::min(dp, kTwoPi - dp);
    out[i] = std::exp(-(dt * dt + dp * dp) / (2 * sigma * sigma));
  }
  return out;
}

AxisAngle random_axis_angle(Rng& rng) {
  return AxisAngle(Vec3(rng.normal(), rng.normal(), rng.normal()), rng.uniform(0, kTwoPi));
}

}  // namespace

TEST(Encode, PeakAtPreferredNeuron) {
  const auto grid = std::make_shared<const NeuronGrid>(200, 12);
  const std::size_t i = 5 * 12 + 7;
  const auto code = encode_axis_angle(grid->preferred(i), grid);
  EXPECT_DOUBLE_EQ(code.activations[i], 1.0);
  EXPECT_EQ(*std::max_element(code.activations.begin(), code.activations.end()), 1.0);
}

TEST(Encode, OneSigmaAxisOffset) {
  const TuningConfig cfg;
  SphereLattice sphere;
  sphere.axes = {Vec3::UnitZ(), matrix_from_axis_angle(AxisAngle(Vec3::UnitX(), cfg.sigma)) * Vec3::UnitZ()};
  const auto grid = std::make_shared<const NeuronGrid>(sphere, angle_ring(4));
  const auto code = encode_axis_angle(AxisAngle(Vec3::UnitZ(), 0.0), grid, cfg);
  EXPECT_NEAR(code.activations[grid->index(1, 0)], std::exp(-0.5), 1e-12);
  EXPECT_NEAR(std::exp(-0.5), 0.6065, 1e-4);
}

TEST(Encode, MatchesLoopOracle) {
  const auto grid = std::make_shared<const NeuronGrid>(400, 18);
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const auto aa = random_axis_angle(rng);
    const TuningConfig cfg{rng.uniform(0.1, 0.6)};
    const auto code = encode_axis_angle(aa, grid, cfg);
    const auto oracle = loop_oracle(aa, *grid, cfg.sigma);
    double diff = 0.0;
    for (std::size_t i = 0; i < oracle.size(); ++i) diff = std::max(diff, std::fabs(code.activations[i] - oracle[i]));
    EXPECT_LT(diff, 1e-12);
    EXPECT_NEAR(std::accumulate(code.activations.begin(), code.activations.end(), 0.0),
                std::accumulate(oracle.begin(), oracle.end(), 0.0), 1e-9);
    // single peak: values in (0, 1], maximum at the nearest neuron
    for (double v : code.activations) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0 + 1e-12);
    }
    EXPECT_EQ(decode_index(code.activations), nearest_neuron(*grid, aa));
  }
}

TEST(Encode, SerialAndParallelKernelsAgree) {
  const auto grid = paper_grid();
  Rng rng(32);
  const auto aa = random_axis_angle(rng);
  const auto fast = encode_axis_angle(aa, grid);
  std::vector<double> ad(grid->axis_count()), bd(grid->angle_count()), ref(grid->size(), 0.0);
  for (std::size_t a = 0; a < ad.size(); ++a) {
    const double t = std::acos(std::clamp(aa.axis.dot(grid->sphere().axes[a]), -1.0, 1.0));
    ad[a] = t * t;
  }
  for (std::size_t b = 0; b < bd.size(); ++b) bd[b] = std::pow(circular_distance(aa.angle, grid->ring().angles[b]), 2);
  kernels::serial::accumulate_gaussian_grid(ad, bd, 1.0 / (2 * fast.sigma * fast.sigma), ref);
  EXPECT_EQ(ref, fast.activations);
}

TEST(Encode, EquivariantUnderRelabeling) {
  auto sphere = fibonacci_sphere(150);
  const auto ring = angle_ring(10);
  auto grid = std::make_shared<const NeuronGrid>(sphere, ring);
  std::vector<std::size_t> perm(sphere.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(33);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  SphereLattice shuffled;
  for (std::size_t p : perm) shuffled.axes.push_back(sphere.axes[p]);
  auto grid2 = std::make_shared<const NeuronGrid>(shuffled, ring);
  const auto aa = random_axis_angle(rng);
  const auto c1 = encode_axis_angle(aa, grid), c2 = encode_axis_angle(aa, grid2);
  for (std::size_t a = 0; a < perm.size(); ++a) {
    for (std::size_t b = 0; b < ring.size(); ++b) {
      ASSERT_EQ(c2.activations[grid2->index(a, b)], c1.activations[grid->index(perm[a], b)]);
    }
  }
}

TEST(TargetCode, IdentityHasTwoPeaksAtAngleZero) {
  // At angle 0 the double-cover twin is (-z, 2 pi) which wraps to ring
  // position 0 but sits on the opposite axis, so the two peaks are distinct.
  const auto grid = paper_grid();
  const auto code = target_code(RotationMatrix::identity(), SymmetrySpec::none(), grid);
  const std::size_t top = grid->sphere().nearest(Vec3::UnitZ());
  const std::size_t bottom = grid->sphere().nearest(-Vec3::UnitZ());
  const double top_v = code.activations[grid->index(top, 0)];
  const double bottom_v = code.activations[grid->index(bottom, 0)];
  EXPECT_GT(top_v, 0.99);
  EXPECT_LT(top_v, 1.0 + 1e-12);
  EXPECT_NEAR(top_v, bottom_v, 1e-12);
  const double mx = *std::max_element(code.activations.begin(), code.activations.end());
  EXPECT_NEAR(mx, top_v, 1e-12);
  EXPECT_EQ(count_sphere_peaks(max_over_angle(code), grid->sphere(), deg2rad(20)), 2u);
}

TEST(TargetCode, TwoFoldSymmetryHasFourPeaks) {
  const auto grid = paper_grid();
  const auto spec = SymmetrySpec::discrete(2, Vec3::UnitZ());
  const auto r = matrix_from_axis_angle(AxisAngle(Vec3(1, 0.2, 0.1), deg2rad(70)));
  const auto code = target_code(r, spec, grid);

  std::vector<AxisAngle> peaks;
  for (const auto& e : equivalent_rotations(r, spec)) {
    const auto aa = axis_angle_from_matrix(e);
    peaks.push_back(aa);
    AxisAngle twin;
    twin.axis = -aa.axis;
    twin.angle = wrap_two_pi(kTwoPi - aa.angle);
    peaks.push_back(twin);
  }
  ASSERT_EQ(peaks.size(), 4u);
  const double sigma = TuningConfig{}.sigma;
  for (const auto& p : peaks) {
    const std::size_t i = nearest_neuron(*grid, p);
    EXPECT_GT(code.activations[i], 0.9);
    EXPECT_EQ(nearest_neuron(*grid, p), i);
  }
  // every strongly active neuron lies within 2 sigma of one of the 4 peaks
  for (std::size_t i = 0; i < grid->size(); ++i) {
    if (code.activations[i] < 0.5) continue;
    double best = 1e9;
    for (const auto& p : peaks) {
      const double dt = std::acos(std::clamp(p.axis.dot(grid->preferred_axis(i)), -1.0, 1.0));
      const double dp = circular_distance(p.angle, grid->preferred_angle(i));
      best = std::min(best, std::sqrt(dt * dt + dp * dp));
    }
    ASSERT_LT(best, 2 * sigma) << i;
  }
  EXPECT_EQ(count_sphere_peaks(max_over_angle(code), grid->sphere(), deg2rad(20)), 4u);
}

TEST(TargetCode, RejectsContinuous) {
  EXPECT_THROW(target_code(RotationMatrix::identity(), SymmetrySpec::continuous(Vec3::UnitZ()), paper_grid()),
               ContinuousSymmetry);
}

TEST(TargetCode, InvariantToGroupOrder) {
  const auto grid = std::make_shared<const NeuronGrid>(500, 24);
  Rng rng(34);
  for (int t = 0; t < 20; ++t) {
    const auto r = RotationMatrix::random(rng);
    auto eq = equivalent_rotations(r, SymmetrySpec::discrete(4, Vec3(0, 1, 1)));
    const auto a = target_code(eq, grid);
    std::reverse(eq.begin(), eq.end());
    const auto b = target_code(eq, grid);
    for (std::size_t i = 0; i < a.activations.size(); ++i) ASSERT_NEAR(a.activations[i], b.activations[i], 1e-12);
  }
}

TEST(TargetCode, SymmetryEquivalentPosesShareTarget) {
  const auto grid = paper_grid();
  const auto spec = SymmetrySpec::discrete(2, Vec3::UnitZ());
  const auto flip = symmetry_group(spec)[1];
  Rng rng(35);
  for (int t = 0; t < 10; ++t) {
    const auto r = RotationMatrix::random(rng);
    const auto a = target_code(r, spec, grid), b = target_code(r * flip, spec, grid);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.activations.size(); ++i) diff = std::max(diff, std::fabs(a.activations[i] - b.activations[i]));
    EXPECT_LT(diff, 1e-9);
  }
}

TEST(Decode, LatticePointIsExact) {
  const auto grid = paper_grid();
  for (std::size_t i : {0u, 1234u, 50000u, 92231u}) {
    const auto code = encode_axis_angle(grid->preferred(i), grid);
    EXPECT_LT(geodesic_angle(decode(code), matrix_from_axis_angle(grid->preferred(i))), 1e-12);
  }
}

TEST(Decode, TieBreaksToLowestIndex) {
  const auto grid = std::make_shared<const NeuronGrid>(4, 4);
  PopulationCode code{grid, 0.3, std::vector<double>(16, 0.1)};
  code.activations[5] = 2.0;
  code.activations[9] = 2.0;
  EXPECT_EQ(decode_index(code.activations), 5u);
  EXPECT_LT(geodesic_angle(decode(code), matrix_from_axis_angle(grid->preferred(5))), 1e-15);
}

TEST(Decode, AllZeroIsAnError) {
  const auto grid = std::make_shared<const NeuronGrid>(4, 4);
  PopulationCode code{grid, 0.3, std::vector<double>(16, 0.0)};
  EXPECT_THROW(decode(code), AllZero);
}

TEST(Decode, QuantizationBound) {
  const auto grid = paper_grid();
  Rng rng(36);
  std::vector<double> errors;
  for (int t = 0; t < 1000; ++t) {
    const auto r = RotationMatrix::random(rng);
    errors.push_back(rad2deg(geodesic_angle(decode(target_code(r, SymmetrySpec::none(), grid)), r)));
  }
  std::sort(errors.begin(), errors.end());
  EXPECT_LE(errors.back(), regression::kDecodeQuantizationBoundDeg);
  EXPECT_LT(errors[errors.size() / 2], 5.0);
}

TEST(Decode, SymmetricTargetsDecodeToAnEquivalentPose) {
  const auto grid = paper_grid();
  const auto spec = SymmetrySpec::discrete(2, Vec3(1, 0, 1));
  Rng rng(37);
  for (int t = 0; t < 200; ++t) {
    const auto r = RotationMatrix::random(rng);
    const auto decoded = decode(target_code(r, spec, grid));
    double best = 1e9;
    for (const auto& e : equivalent_rotations(r, spec)) best = std::min(best, geodesic_angle(decoded, e));
    ASSERT_LE(rad2deg(best), regression::kDecodeQuantizationBoundDeg);
  }
}

TEST(Decode, ArgmaxKernelsAgree) {
  Rng rng(38);
  std::vector<double> v(92232);
  for (double& x : v) x = std::floor(rng.uniform(0, 50));  // many ties
  EXPECT_EQ(kernels::serial::argmax(v), kernels::parallel::argmax(v));
}

TEST(AxisOnly, SinglePeakAtLatticePoint) {
  const auto sphere = std::make_shared<const SphereLattice>(fibonacci_sphere(500));
  const auto code = encode_axis_only(sphere->axes[17], sphere, {}, false);
  EXPECT_DOUBLE_EQ(code.activations[17], 1.0);
  EXPECT_EQ(decode_index(code.activations), 17u);
}

TEST(AxisOnly, SignAmbiguousPeaksAtBothPoles) {
  const auto sphere = std::make_shared<const SphereLattice>(fibonacci_sphere(2562));
  const auto code = encode_axis_only(Vec3::UnitZ(), sphere);
  const std::size_t top = sphere->nearest(Vec3::UnitZ()), bottom = sphere->nearest(-Vec3::UnitZ());
  EXPECT_GT(code.activations[top], 0.99);
  EXPECT_GT(code.activations[bottom], 0.99);
  EXPECT_EQ(count_sphere_peaks(code.activations, *sphere, deg2rad(20)), 2u);
}

TEST(AxisOnly, MatchesLoopOracle) {
  const auto sphere = std::make_shared<const SphereLattice>(fibonacci_sphere(700));
  Rng rng(39);
  const double sigma = TuningConfig{}.sigma;
  for (int t = 0; t < 20; ++t) {
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    for (bool ambiguous : {false, true}) {
      const auto code = encode_axis_only(axis, sphere, {}, ambiguous);
      for (std::size_t a = 0; a < sphere->size(); ++a) {
        double expected = 0.0;
        for (const Vec3& s : ambiguous ? std::vector<Vec3>{axis, -axis} : std::vector<Vec3>{axis}) {
          const double d = std::acos(std::clamp(s.dot(sphere->axes[a]), -1.0, 1.0));
          expected += std::exp(-d * d / (2 * sigma * sigma));
        }
        ASSERT_NEAR(code.activations[a], expected, 1e-12);
      }
    }
  }
}

TEST(AxisOnly, DecodeIsSeededAndKeepsAxis) {
  const auto sphere = std::make_shared<const SphereLattice>(fibonacci_sphere(2562));
  const auto code = encode_axis_only(Vec3::UnitZ(), sphere, {}, false);
  const auto a = decode_axis_only(code, 42), b = decode_axis_only(code, 42);
  EXPECT_EQ(a.matrix(), b.matrix());
  const Vec3 axis = sphere->axes[decode_index(code.activations)];
  EXPECT_LT((a * axis - axis).norm(), 1e-12);
  // z maps to z up to the sphere quantization
  const double quant = std::acos(axis.dot(Vec3::UnitZ()));
  EXPECT_LE(std::acos(std::clamp((a * Vec3::UnitZ()).dot(Vec3::UnitZ()), -1.0, 1.0)), 2 * quant + 1e-12);
  EXPECT_NE(decode_axis_only(code, 43).matrix(), a.matrix());
}

TEST(RingCode, EncodeDecode) {
  const auto ring = angle_ring(36);
  const auto code = encode_angle(deg2rad(123), ring);
  EXPECT_NEAR(rad2deg(decode_angle(code, ring)), 120.0, 1e-12);
  EXPECT_NEAR(code[12], std::exp(-std::pow(deg2rad(3), 2) / (2 * std::pow(deg2rad(20), 2))), 1e-12);
  EXPECT_NEAR(rad2deg(decode_angle(encode_angle(deg2rad(356), ring), ring)), 0.0, 1e-12);
}

TEST(Serialization, CsvAndBinaryRoundTrip) {
  Rng rng(40);
  for (int t = 0; t < 5; ++t) {
    const CodeHeader h{static_cast<std::uint32_t>(rng.uniform_int(2, 40)), static_cast<std::uint32_t>(rng.uniform_int(0, 9)),
                       rng.uniform(0.1, 1.0)};
    std::vector<double> values(static_cast<std::size_t>(h.n) * std::max<std::uint32_t>(h.m, 1));
    for (double& v : values) v = rng.uniform(0, 2);
    std::stringstream csv, bin;
    write_code_csv(csv, h, values);
    write_code_binary(bin, h, values);
    for (const auto& back : {read_code_csv(csv), read_code_binary(bin)}) {
      EXPECT_EQ(back.header.n, h.n);
      EXPECT_EQ(back.header.m, h.m);
      EXPECT_EQ(back.header.sigma, h.sigma);
      EXPECT_EQ(back.activations, values);
    }
  }
}

TEST(Serialization, RejectsMalformedInput) {
  std::stringstream bad("n,m,sigma\n2,2,0.3\nindex,activation\n0,1\n");
  EXPECT_THROW(read_code_csv(bad), FormatError);
  std::stringstream bad_bin("NOTACODE");
  EXPECT_THROW(read_code_binary(bad_bin), FormatError);
}

TEST(Heatmap, PpmHeader) {
  const auto sphere = fibonacci_sphere(100);
  std::vector<double> values(100);
  std::iota(values.begin(), values.end(), 0.0);
  std::ostringstream os;
  write_sphere_heatmap_ppm(os, values, sphere, 40, 20);
  const std::string header = "P6\n40 20\n255\n";
  ASSERT_EQ(os.str().size(), header.size() + 40 * 20 * 3);
  EXPECT_EQ(os.str().substr(0, header.size()), header);
}
