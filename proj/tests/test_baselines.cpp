#include "popcode/baselines.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "popcode/error.hpp"

using namespace popcode;
using namespace popcode::baselines;

namespace {

RotationMatrix rot(const Vec3& axis, double angle) { return matrix_from_axis_angle(AxisAngle(axis, angle)); }

Quat quat_of(const RotationMatrix& r) { return quaternion_from_matrix(r).vector(); }

Quat random_unit_quat(Rng& rng) {
  Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized();
}

}  // namespace

TEST(SingleVariable, Targets) {
  const auto t = single_variable_target(RotationMatrix::identity(), SymmetrySpec::none());
  EXPECT_EQ(t, (std::vector<double>{1, 0, 0, 0, 1, 0}));
  const auto a = single_variable_target(RotationMatrix::identity(), SymmetrySpec::continuous(Vec3::UnitZ()));
  EXPECT_EQ(a, (std::vector<double>{0, 0, 1}));

  const auto r = rot(Vec3(1, 0, 0), kPi / 2);
  const auto b = single_variable_target(r, SymmetrySpec::continuous(Vec3::UnitZ()));
  EXPECT_NEAR(b[1], -1.0, 1e-15);
  EXPECT_NEAR(b[2], 0.0, 1e-15);
}

TEST(SingleVariable, R6RoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto r = RotationMatrix::random(rng);
    const auto t = single_variable_target(r, SymmetrySpec::none());
    const auto back = decode_single_variable(t);
    EXPECT_LT((back.matrix() - r.matrix()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(MinSymmetryLoss, ZeroAtEveryEquivalentTarget) {
  Rng rng(2);
  const auto spec = SymmetrySpec::discrete(4, Vec3(0, 1, 1));
  for (int i = 0; i < 20; ++i) {
    const auto r = RotationMatrix::random(rng);
    for (const auto& eq : equivalent_rotations(r, spec)) {
      const auto t = single_variable_target(eq, spec);
      EXPECT_NEAR(min_symmetry_loss(t, r, spec).value, 0.0, 1e-12);
    }
  }
  const auto cont = SymmetrySpec::continuous(Vec3::UnitZ());
  const auto r = RotationMatrix::random(rng);
  const auto t = single_variable_target(r * rot(Vec3::UnitZ(), 1.234), cont);
  EXPECT_NEAR(min_symmetry_loss(t, r, cont).value, 0.0, 1e-12);
}

TEST(MinSymmetryLoss, MatchesExplicitBranches) {
  Rng rng(5);
  const auto spec = SymmetrySpec::discrete(2, Vec3::UnitZ());
  for (int i = 0; i < 50; ++i) {
    const auto r = RotationMatrix::random(rng);
    std::vector<double> pred(6);
    for (auto& v : pred) v = rng.uniform(-1, 1);

    // branch 0 is R itself, branch 1 is R rotated by pi about z
    double branch[2];
    const RotationMatrix eq[2] = {r, r * rot(Vec3::UnitZ(), kPi)};
    for (int b = 0; b < 2; ++b) {
      double s = 0;
      for (int c = 0; c < 2; ++c)
        for (int k = 0; k < 3; ++k) s += std::abs(pred[3 * c + k] - eq[b](k, c));
      branch[b] = s / 6.0;
    }
    const auto l = min_symmetry_loss(pred, r, spec);
    EXPECT_NEAR(l.value, std::min(branch[0], branch[1]), 1e-12);
    EXPECT_EQ(l.branch, branch[1] < branch[0] ? 1u : 0u);
    // gradient is the sign pattern of the winning branch
    const auto& w = eq[l.branch];
    for (int c = 0; c < 2; ++c)
      for (int k = 0; k < 3; ++k) {
        const double d = pred[3 * c + k] - w(k, c);
        EXPECT_DOUBLE_EQ(l.grad[3 * c + k], (d > 0 ? 1.0 : -1.0) / 6.0);
      }
  }
}

TEST(MinSymmetryLoss, TieGoesToLowestBranch) {
  const auto spec = SymmetrySpec::discrete(2, Vec3::UnitZ());
  const auto r = RotationMatrix::identity();
  // the targets are (1,0,0,0,1,0) and (-1,0,0,0,-1,0); zero is halfway
  const std::vector<double> pred(6, 0.0);
  const auto l = min_symmetry_loss(pred, r, spec);
  EXPECT_EQ(l.branch, 0u);
  EXPECT_NEAR(l.value, 2.0 / 6.0, 1e-15);
  EXPECT_THROW(min_symmetry_loss(std::vector<double>(5), r, spec), DimensionMismatch);
}

TEST(OneHot, LatticePointAndTwin) {
  const NeuronGrid grid(72, 12);
  const std::size_t j = 5 * 12 + 3;
  const auto r = matrix_from_axis_angle(grid.preferred(j));
  const auto classes = one_hot_target(r, SymmetrySpec::none(), grid);
  EXPECT_TRUE(std::find(classes.begin(), classes.end(), j) != classes.end());
  // the lattice is not antipodal, so the twin lands on a nearby neuron
  const auto aa = grid.preferred(j);
  const auto twin = nearest_neuron(grid, AxisAngle(-aa.axis, kTwoPi - aa.angle));
  std::vector<std::size_t> expect{j, twin};
  std::sort(expect.begin(), expect.end());
  expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
  EXPECT_EQ(classes, expect);
}

TEST(OneHot, MatchesBruteForce) {
  const NeuronGrid grid(42, 12);
  Rng rng(8);
  const auto spec = SymmetrySpec::discrete(3, Vec3(1, 0, 0));
  auto brute = [&](const AxisAngle& aa) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double dt = std::acos(std::clamp(grid.preferred_axis(i).dot(aa.axis), -1.0, 1.0));
      const double dp = circular_distance(grid.preferred_angle(i), aa.angle);
      const double d = dt * dt + dp * dp;
      if (d < best_d) best_d = d, best = i;
    }
    return best;
  };
  for (int n = 0; n < 30; ++n) {
    const auto r = RotationMatrix::random(rng);
    std::vector<std::size_t> expect;
    for (const auto& eq : equivalent_rotations(r, spec)) {
      const auto aa = axis_angle_from_matrix(eq);
      expect.push_back(brute(aa));
      expect.push_back(brute(AxisAngle(-aa.axis, kTwoPi - aa.angle)));
    }
    std::sort(expect.begin(), expect.end());
    expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
    EXPECT_EQ(one_hot_target(r, spec, grid), expect);
  }
}

TEST(OneHot, PickClass) {
  Rng rng(1);
  const std::vector<std::size_t> classes{4, 9, 17};
  EXPECT_EQ(pick_class(classes, OneHotMode::Canonical, rng), 4u);
  std::vector<int> seen(3, 0);
  for (int i = 0; i < 300; ++i) {
    const auto c = pick_class(classes, OneHotMode::Sample, rng);
    seen[std::find(classes.begin(), classes.end(), c) - classes.begin()]++;
  }
  for (int s : seen) EXPECT_GT(s, 60);
  EXPECT_THROW(pick_class(std::vector<std::size_t>{}, OneHotMode::Sample, rng), EmptyInput);
}

TEST(MultiHypothesis, AllExactIsZero) {
  const Quat q = Quat(1, 2, 3, 4).normalized();
  const std::vector<Quat> preds(5, q);
  EXPECT_DOUBLE_EQ(multi_hypothesis_loss(preds, q, 0.05).value, 0.0);
  const std::vector<Quat> flipped(5, -q);
  EXPECT_DOUBLE_EQ(multi_hypothesis_loss(flipped, q, 0.05).value, 0.0);
}

TEST(MultiHypothesis, TwoHypothesisExample) {
  const Quat q(1, 0, 0, 0);
  for (double d : {0.1, 0.5, 1.3}) {
    for (double eps : {0.01, 0.05, 0.3}) {
      const std::vector<Quat> preds{q, Quat(1, d, 0, 0)};
      const auto l = multi_hypothesis_loss(preds, q, eps);
      EXPECT_NEAR(l.l_min, 0.0, 1e-12);
      EXPECT_NEAR(l.l_avg, d * d / 2, 1e-12);
      EXPECT_NEAR(l.value, eps * d * d, 1e-12);
      EXPECT_EQ(l.best, 0u);
    }
  }
}

TEST(MultiHypothesis, Coefficients) {
  Rng rng(3);
  for (std::size_t m : {2u, 3u, 10u}) {
    std::vector<Quat> preds;
    for (std::size_t i = 0; i < m; ++i) preds.push_back(random_unit_quat(rng));
    const Quat q = random_unit_quat(rng);
    const double l0 = multi_hypothesis_loss(preds, q, 1e-12).value;
    const auto l = multi_hypothesis_loss(preds, q, 0.05);
    EXPECT_NEAR(l0, l.l_min, 1e-9);
    const double w = 0.05 * m / (m - 1.0);
    EXPECT_NEAR(multi_hypothesis_weight(m, 0.05), w, 1e-15);
    EXPECT_NEAR(l.value, (1 - w) * l.l_min + w * l.l_avg, 1e-14);
    // linear in epsilon with slope M/(M-1) (L_avg - L_min)
    const double l2 = multi_hypothesis_loss(preds, q, 0.1).value;
    EXPECT_NEAR((l2 - l.value) / 0.05, m / (m - 1.0) * (l.l_avg - l.l_min), 1e-9);
  }
}

TEST(MultiHypothesis, GradientMatchesFiniteDifference) {
  Rng rng(4);
  std::vector<Quat> preds;
  for (int i = 0; i < 4; ++i) preds.push_back(random_unit_quat(rng));
  const Quat q = random_unit_quat(rng);
  const auto l = multi_hypothesis_loss(preds, q, 0.2);
  const double h = 1e-6;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (int k = 0; k < 4; ++k) {
      auto p = preds, m = preds;
      p[i][k] += h;
      m[i][k] -= h;
      const double num =
          (multi_hypothesis_loss(p, q, 0.2).value - multi_hypothesis_loss(m, q, 0.2).value) / (2 * h);
      EXPECT_NEAR(l.grad[i][k], num, 1e-7);
    }
}

TEST(MultiHypothesis, Preconditions) {
  const Quat q(1, 0, 0, 0);
  const std::vector<Quat> two{q, q};
  EXPECT_THROW(multi_hypothesis_loss(std::vector<Quat>{q}, q, 0.01), InvalidArgument);
  EXPECT_THROW(multi_hypothesis_loss(two, q, 0.0), InvalidEpsilon);
  EXPECT_THROW(multi_hypothesis_loss(two, q, 0.5), InvalidEpsilon);
  EXPECT_THROW(multi_hypothesis_loss(two, q, -0.1), InvalidEpsilon);
  EXPECT_NO_THROW(multi_hypothesis_loss(two, q, 0.49));
  EXPECT_DOUBLE_EQ(epsilon_schedule(0.0), 0.05);
  EXPECT_DOUBLE_EQ(epsilon_schedule(1.0), 0.01);
  EXPECT_NEAR(epsilon_schedule(0.5), 0.03, 1e-15);
}

TEST(MeanShift, IdenticalInputs) {
  const auto r = rot(Vec3(1, 2, 3), 1.1);
  const std::vector<Quat> preds(6, quat_of(r));
  EXPECT_LT(geodesic_angle(mean_shift_decode(preds), r), 1e-7);
  EXPECT_EQ(mean_shift(preds).size(), 1u);
}

TEST(MeanShift, LargerClusterWins) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = RotationMatrix::random(rng), b = RotationMatrix::random(rng);
    // at least 6 bandwidths apart in chord distance
    if (geodesic_angle(a, b) < 1.5) continue;
    std::vector<Quat> preds;
    auto jitter = [&](const RotationMatrix& r) {
      Quat q = quat_of(r);
      for (int k = 0; k < 4; ++k) q[k] += rng.normal(0, 0.005);
      return Quat(q.normalized() * (rng.bernoulli(0.5) ? 1 : -1));
    };
    for (int i = 0; i < 3; ++i) preds.push_back(jitter(b));
    for (int i = 0; i < 7; ++i) preds.push_back(jitter(a));
    const auto clusters = mean_shift(preds);
    ASSERT_EQ(clusters.size(), 2u);
    EXPECT_EQ(clusters[0].members.size(), 3u);
    EXPECT_EQ(clusters[1].members.size(), 7u);
    EXPECT_LT(geodesic_angle(mean_shift_decode(preds), a), 0.02);
  }
}

TEST(MeanShift, SignInvariant) {
  Rng rng(6);
  std::vector<Quat> preds;
  for (int i = 0; i < 10; ++i) preds.push_back(random_unit_quat(rng));
  const auto base = mean_shift_decode(preds);
  for (int t = 0; t < 10; ++t) {
    auto flipped = preds;
    for (auto& q : flipped)
      if (rng.bernoulli(0.5)) q = -q;
    EXPECT_LT(geodesic_angle(mean_shift_decode(flipped), base), 1e-9);
  }
}

TEST(MeanShift, TieGoesToFirstCluster) {
  const auto a = rot(Vec3::UnitX(), 0.3), b = rot(Vec3::UnitY(), 2.0);
  const std::vector<Quat> preds{quat_of(b), quat_of(a), quat_of(b), quat_of(a)};
  EXPECT_LT(geodesic_angle(mean_shift_decode(preds), b), 1e-7);
}
