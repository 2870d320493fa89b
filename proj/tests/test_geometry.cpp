#include "tinyvio/geometry.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "tinyvio/rng.hpp"

using namespace tinyvio;

namespace {

PoseDelta random_delta(std::mt19937_64& eng, double phi_max = 1.2, double v_max = 2.0) {
  PoseDelta d;
  for (int i = 0; i < 3; ++i) {
    d.phi[i] = uniform(eng, -phi_max, phi_max);
    d.v[i] = uniform(eng, -v_max, v_max);
  }
  return d;
}

// Independent 4x4 homogeneous-matrix oracle, no Eigen, no Pose.
struct Hom44 {
  double m[4][4];
};

Hom44 to_hom(const Pose& p) {
  Hom44 h{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) h.m[r][c] = p.R(r, c);
    h.m[r][3] = p.t(r);
  }
  h.m[3][0] = h.m[3][1] = h.m[3][2] = 0.0;
  h.m[3][3] = 1.0;
  return h;
}

Hom44 hom_mul(const Hom44& a, const Hom44& b) {
  Hom44 c{};
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k)
      for (int col = 0; col < 4; ++col) c.m[r][col] += a.m[r][k] * b.m[k][col];
  return c;
}

double hom_max_diff(const Hom44& a, const Pose& p) {
  Hom44 b = to_hom(p);
  double m = 0.0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m = std::max(m, std::abs(a.m[r][c] - b.m[r][c]));
  return m;
}

}  // namespace

TEST(DeltaToTransform, IdentityCase) {
  Pose p = delta_to_transform(PoseDelta{});
  EXPECT_TRUE(p.R.isApprox(Mat3::Identity(), 1e-15));
  EXPECT_EQ(p.t, Vec3::Zero());
}

TEST(DeltaToTransform, QuarterYawMapsXToY) {
  PoseDelta d;
  d.phi = Vec3(0, 0, kPi / 2);
  d.v = Vec3(1, 0, 0);
  Pose p = delta_to_transform(d);
  Vec3 mapped = p.R * Vec3::UnitX();
  EXPECT_NEAR(mapped.x(), 0.0, 1e-12);
  EXPECT_NEAR(mapped.y(), 1.0, 1e-12);
  EXPECT_NEAR(mapped.z(), 0.0, 1e-12);
  EXPECT_EQ(p.t, Vec3(1, 0, 0));
}

TEST(DeltaToTransform, RejectsNonFinite) {
  PoseDelta d;
  d.v = Vec3(std::nan(""), 0, 0);
  EXPECT_THROW(delta_to_transform(d), std::invalid_argument);
}

TEST(DeltaToTransform, RoundTrip100Random) {
  std::mt19937_64 eng(7);
  for (int i = 0; i < 100; ++i) {
    // stay away from gimbal lock at |pitch| = pi/2
    PoseDelta d = random_delta(eng, kPi / 2 - 0.12, 5.0);
    PoseDelta back = transform_to_delta(delta_to_transform(d));
    EXPECT_LT((back.phi - d.phi).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((back.v - d.v).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Compose, IdentityIsTwoSided) {
  std::mt19937_64 eng(3);
  Pose t = delta_to_transform(random_delta(eng));
  Pose id;
  EXPECT_LT(hom_max_diff(to_hom(t), compose(id, t)), 1e-15);
  EXPECT_LT(hom_max_diff(to_hom(t), compose(t, id)), 1e-15);
}

TEST(Compose, PureTranslationsAdd) {
  Pose a, b;
  a.t = Vec3(1, 2, 3);
  b.t = Vec3(-4, 0.5, 2);
  Pose c = compose(a, b);
  EXPECT_TRUE(c.R.isApprox(Mat3::Identity(), 1e-15));
  EXPECT_TRUE(c.t.isApprox(Vec3(-3, 2.5, 5), 1e-15));
}

TEST(Compose, ChainOf20MatchesMatrixOracle) {
  std::mt19937_64 eng(11);
  Pose acc;
  Hom44 oracle = to_hom(acc);
  for (int i = 0; i < 20; ++i) {
    Pose t = delta_to_transform(random_delta(eng));
    acc = compose(acc, t);
    oracle = hom_mul(oracle, to_hom(t));
  }
  EXPECT_LT(hom_max_diff(oracle, acc), 1e-9);
}

TEST(Compose, AssociativeOnRandomTriples) {
  std::mt19937_64 eng(13);
  for (int i = 0; i < 50; ++i) {
    Pose a = delta_to_transform(random_delta(eng));
    Pose b = delta_to_transform(random_delta(eng));
    Pose c = delta_to_transform(random_delta(eng));
    Pose lhs = compose(compose(a, b), c);
    Pose rhs = compose(a, compose(b, c));
    EXPECT_LT((lhs.R - rhs.R).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((lhs.t - rhs.t).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Integrate, EmptyDeltaList) {
  Pose p0;
  p0.t = Vec3(1, 1, 1);
  Trajectory tr = integrate(p0, {});
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_EQ(tr.poses[0].t, p0.t);
}

TEST(Integrate, StraightLine) {
  PoseDelta fwd;
  fwd.v = Vec3(1, 0, 0);
  Trajectory tr = integrate(Pose{}, std::vector<PoseDelta>(5, fwd));
  ASSERT_EQ(tr.size(), 6u);
  for (int i = 0; i <= 5; ++i) {
    EXPECT_NEAR(tr.poses[i].t.x(), i, 1e-15);
    EXPECT_NEAR(tr.poses[i].t.y(), 0, 1e-15);
  }
}

TEST(Integrate, MatchesComposeFoldAndLengthInvariant) {
  std::mt19937_64 eng(17);
  std::vector<PoseDelta> deltas;
  for (int i = 0; i < 30; ++i) deltas.push_back(random_delta(eng, 0.4, 1.0));
  Trajectory tr = integrate(Pose{}, deltas);
  ASSERT_EQ(tr.size(), deltas.size() + 1);
  Pose fold;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    fold = compose(fold, delta_to_transform(deltas[i]));
    EXPECT_LT((fold.t - tr.poses[i + 1].t).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PoseRmse, ZeroWhenEqual) {
  std::mt19937_64 eng(19);
  std::vector<PoseDelta> d;
  for (int i = 0; i < 10; ++i) d.push_back(random_delta(eng));
  RmseResult r = pose_rmse(d, d);
  EXPECT_EQ(r.t_rmse, 0.0);
  EXPECT_EQ(r.r_rmse, 0.0);
}

TEST(PoseRmse, ThreeFourFive) {
  PoseDelta gt, pred;
  pred.v = Vec3(3, 4, 0);
  RmseResult r = pose_rmse({pred}, {gt});
  EXPECT_DOUBLE_EQ(r.t_rmse, 5.0);
  EXPECT_DOUBLE_EQ(r.r_rmse, 0.0);
}

TEST(PoseRmse, RejectsMismatchAndEmpty) {
  std::vector<PoseDelta> a(3), b(2);
  EXPECT_THROW(pose_rmse(a, b), std::invalid_argument);
  EXPECT_THROW(pose_rmse({}, {}), std::invalid_argument);
}

TEST(PoseRmse, MatchesBruteForceOracle) {
  std::mt19937_64 eng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PoseDelta> pred, gt;
    int n = 1 + static_cast<int>(eng() % 40);
    for (int i = 0; i < n; ++i) {
      pred.push_back(random_delta(eng));
      gt.push_back(random_delta(eng));
    }
    // long double accumulation, scalar loops
    long double st = 0, sr = 0;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) {
        long double dv = pred[i].v[k] - gt[i].v[k];
        long double dp = pred[i].phi[k] - gt[i].phi[k];
        st += dv * dv;
        sr += dp * dp;
      }
    }
    RmseResult r = pose_rmse(pred, gt);
    EXPECT_NEAR(r.t_rmse, std::sqrt(static_cast<double>(st / n)), 1e-12);
    EXPECT_NEAR(r.r_rmse, std::sqrt(static_cast<double>(sr / n)), 1e-12);
  }
}

namespace {

// Hand-rolled per-segment oracle for relative_errors, written against the
// same protocol but with its own pose algebra (homogeneous matrices).
std::optional<RelativeErrors> relative_errors_oracle(const Trajectory& pred,
                                                     const Trajectory& gt) {
  const std::size_t n = gt.size();
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    double dx = gt.poses[i].t.x() - gt.poses[i - 1].t.x();
    double dy = gt.poses[i].t.y() - gt.poses[i - 1].t.y();
    double dz = gt.poses[i].t.z() - gt.poses[i - 1].t.z();
    dist[i] = dist[i - 1] + std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  auto inv = [](const Hom44& a) {
    Hom44 r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = a.m[j][i];
    for (int i = 0; i < 3; ++i) {
      r.m[i][3] = 0;
      for (int j = 0; j < 3; ++j) r.m[i][3] -= a.m[j][i] * a.m[j][3];
    }
    r.m[3][3] = 1;
    return r;
  };
  double ts = 0, rs = 0;
  int cnt = 0;
  for (std::size_t first = 0; first < n; ++first) {
    for (double len : {100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0}) {
      std::size_t last = n;
      for (std::size_t j = first; j < n; ++j)
        if (dist[j] - dist[first] >= len) {
          last = j;
          break;
        }
      if (last == n) break;
      Hom44 dgt = hom_mul(inv(to_hom(gt.poses[first])), to_hom(gt.poses[last]));
      Hom44 dpr = hom_mul(inv(to_hom(pred.poses[first])), to_hom(pred.poses[last]));
      Hom44 err = hom_mul(inv(dpr), dgt);
      double te = std::sqrt(err.m[0][3] * err.m[0][3] + err.m[1][3] * err.m[1][3] +
                            err.m[2][3] * err.m[2][3]);
      double c = 0.5 * (err.m[0][0] + err.m[1][1] + err.m[2][2] - 1.0);
      double ang = std::acos(std::max(-1.0, std::min(1.0, c)));
      ts += te / len * 100.0;
      rs += ang * 180.0 / kPi * 100.0 / len;
      ++cnt;
    }
  }
  if (cnt == 0) return std::nullopt;
  return RelativeErrors{ts / cnt, rs / cnt, cnt};
}

Trajectory random_trajectory(std::mt19937_64& eng, int steps, double step_len) {
  std::vector<PoseDelta> deltas;
  for (int i = 0; i < steps; ++i) {
    PoseDelta d = random_delta(eng, 0.05, 0.3);
    d.v.x() = step_len;  // keep arc length growing
    deltas.push_back(d);
  }
  return integrate(Pose{}, deltas);
}

}  // namespace

TEST(RelativeErrors, ZeroWhenEqual) {
  std::mt19937_64 eng(29);
  Trajectory gt = random_trajectory(eng, 200, 1.0);
  auto r = relative_errors(gt, gt);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(r->t_rel_percent, 0.0, 1e-12);
  EXPECT_NEAR(r->r_rel_deg_per_100m, 0.0, 1e-9);
}

TEST(RelativeErrors, NoValidSegmentMarker) {
  PoseDelta fwd;
  fwd.v = Vec3(1, 0, 0);
  Trajectory gt = integrate(Pose{}, std::vector<PoseDelta>(50, fwd));  // 50 m
  EXPECT_FALSE(relative_errors(gt, gt).has_value());
}

TEST(RelativeErrors, UniformScaleErrorGivesOnePercent) {
  PoseDelta fwd;
  fwd.v = Vec3(1, 0, 0);
  Trajectory gt = integrate(Pose{}, std::vector<PoseDelta>(900, fwd));
  Trajectory pred = gt;
  for (auto& p : pred.poses) p.t *= 1.01;
  auto r = relative_errors(pred, gt);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(r->t_rel_percent, 1.0, 1e-6);
  auto oracle = relative_errors_oracle(pred, gt);
  ASSERT_TRUE(oracle.has_value());
  EXPECT_NEAR(r->t_rel_percent, oracle->t_rel_percent, 1e-9);
}

TEST(RelativeErrors, MatchesOracleOnRandomPairs) {
  std::mt19937_64 eng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Trajectory gt = random_trajectory(eng, 150, 2.5);
    Trajectory pred = random_trajectory(eng, 150, 2.5);
    auto a = relative_errors(pred, gt);
    auto b = relative_errors_oracle(pred, gt);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_EQ(a->segment_count, b->segment_count);
      EXPECT_NEAR(a->t_rel_percent, b->t_rel_percent, 1e-9);
      EXPECT_NEAR(a->r_rel_deg_per_100m, b->r_rel_deg_per_100m, 1e-9);
    }
  }
}

TEST(RelativeErrors, InvariantToCommonRigidTransform) {
  std::mt19937_64 eng(37);
  Trajectory gt = random_trajectory(eng, 200, 1.5);
  Trajectory pred = gt;
  for (std::size_t i = 0; i < pred.poses.size(); ++i) pred.poses[i].t *= 1.02;
  Pose g = delta_to_transform(random_delta(eng, 1.0, 10.0));
  Trajectory gt2 = gt, pred2 = pred;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt2.poses[i] = compose(g, gt.poses[i]);
    pred2.poses[i] = compose(g, pred.poses[i]);
  }
  auto a = relative_errors(pred, gt);
  auto b = relative_errors(pred2, gt2);
  ASSERT_TRUE(a && b);
  EXPECT_NEAR(a->t_rel_percent, b->t_rel_percent, 1e-9);
  EXPECT_NEAR(a->r_rel_deg_per_100m, b->r_rel_deg_per_100m, 1e-9);
}

TEST(KittiIo, IdentityLine) {
  std::istringstream in("1 0 0 0 0 1 0 0 0 0 1 0\n");
  auto poses = read_kitti_poses(in);
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_TRUE(poses[0].R.isIdentity(0.0));
  EXPECT_EQ(poses[0].t, Vec3::Zero());
}

TEST(KittiIo, MalformedLineCarriesLineNumber) {
  std::istringstream in("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0\n");
  try {
    read_kitti_poses(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(KittiIo, RoundTripBitIdentical) {
  std::mt19937_64 eng(41);
  std::vector<Pose> poses;
  Pose acc;
  for (int i = 0; i < 25; ++i) {
    acc = compose(acc, delta_to_transform(random_delta(eng, 0.8, 3.0)));
    poses.push_back(acc);
  }
  std::ostringstream out;
  write_kitti_poses(out, poses);
  std::istringstream in(out.str());
  auto back = read_kitti_poses(in);
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    for (int r = 0; r < 3; ++r) {
      EXPECT_EQ(back[i].t[r], poses[i].t[r]);
      for (int c = 0; c < 3; ++c) EXPECT_EQ(back[i].R(r, c), poses[i].R(r, c));
    }
  }
  // writer output is byte-stable under a read/write cycle
  std::ostringstream out2;
  write_kitti_poses(out2, back);
  EXPECT_EQ(out.str(), out2.str());
}
