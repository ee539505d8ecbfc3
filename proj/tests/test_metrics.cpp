#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ovgt/metrics.hpp"
#include "ovgt/nn.hpp"

#include "json.hpp"

using namespace ovgt;

namespace {

std::vector<Eigen::Vector3d> random_cloud(std::size_t n, Rng& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  std::vector<Eigen::Vector3d> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return pts;
}

CameraPose random_pose(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
  CameraPose g;
  g.rotation = q.toRotationMatrix();
  g.translation = Eigen::Vector3d(n(rng), n(rng), n(rng));
  return g;
}

double riemann_auc(const std::vector<PairError>& errors, double max_deg, int samples) {
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double theta = (s + 0.5) * max_deg / samples;
    double hit = 0.0;
    for (const auto& e : errors) {
      if (std::max(e.rotation_deg, e.translation_deg) < theta) hit += 1.0;
    }
    total += hit / static_cast<double>(errors.size());
  }
  return total / samples;
}

}  // namespace

TEST(DepthMetrics, PerfectPrediction) {
  const std::vector<double> gt{1, 2, 3, 4};
  const std::vector<std::uint8_t> mask(4, 1);
  const auto m = depth_metrics(gt, gt, mask);
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(m.delta_125, 1.0);
}

TEST(DepthMetrics, ScaleInvariant) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.5, 5.0);
  std::vector<double> gt(50);
  for (auto& g : gt) g = u(rng);
  const std::vector<std::uint8_t> mask(50, 1);
  for (double c : {0.5, 2.0, 10.0}) {
    std::vector<double> pred(gt);
    for (auto& p : pred) p *= c;
    const auto m = depth_metrics(pred, gt, mask);
    EXPECT_NEAR(m.abs_rel, 0.0, 1e-12);
    EXPECT_EQ(m.delta_125, 1.0);
  }
}

TEST(DepthMetrics, HandExample) {
  const std::vector<double> gt{1, 1, 1, 1};
  const std::vector<double> pred{1, 1, 1, 2};
  const auto m = depth_metrics(pred, gt, std::vector<std::uint8_t>(4, 1));
  EXPECT_DOUBLE_EQ(m.abs_rel, 0.25);
  EXPECT_DOUBLE_EQ(m.delta_125, 0.75);
}

TEST(DepthMetrics, MaskAndErrors) {
  const std::vector<double> gt{1, 2, 0, 4};
  const std::vector<double> pred{1, 2, 9, 40};
  const auto m = depth_metrics(pred, gt, std::vector<std::uint8_t>{1, 1, 1, 0});
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_THROW(depth_metrics(pred, gt, std::vector<std::uint8_t>(4, 0)), MetricError);
  // non-positive median prediction keeps scale 1
  const auto z = depth_metrics(std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 1},
                               std::vector<std::uint8_t>(3, 1));
  EXPECT_EQ(z.abs_rel, 1.0);
}

TEST(PoseErrors, IdenticalPosesHaveZeroError) {
  Rng rng(2);
  std::vector<CameraPose> poses;
  for (int i = 0; i < 5; ++i) poses.push_back(random_pose(rng));
  const auto errors = pairwise_pose_errors(poses, poses);
  EXPECT_EQ(errors.size(), 10u);
  for (const auto& e : errors) {
    EXPECT_NEAR(e.rotation_deg, 0.0, 1e-6);
    EXPECT_NEAR(e.translation_deg, 0.0, 1e-6);
  }
}

TEST(PoseErrors, GlobalGaugeDoesNotChangeErrors) {
  Rng rng(3);
  std::vector<CameraPose> gt, pred, moved;
  for (int i = 0; i < 4; ++i) {
    gt.push_back(random_pose(rng));
    pred.push_back(random_pose(rng));
  }
  const CameraPose gauge = random_pose(rng);
  for (const auto& p : pred) moved.push_back(p * gauge);
  const auto a = pairwise_pose_errors(pred, gt);
  const auto b = pairwise_pose_errors(moved, gt);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].rotation_deg, b[i].rotation_deg, 1e-9);
    EXPECT_NEAR(a[i].translation_deg, b[i].translation_deg, 1e-9);
  }
}

TEST(PoseErrors, OrthogonalTranslationIsNinetyDegrees) {
  CameraPose a, b, c;
  b.translation = Eigen::Vector3d(1, 0, 0);
  c.translation = Eigen::Vector3d(0, 1, 0);
  const auto e = pairwise_pose_errors(std::vector<CameraPose>{a, c}, std::vector<CameraPose>{a, b});
  ASSERT_EQ(e.size(), 1u);
  EXPECT_NEAR(e[0].translation_deg, 90.0, 1e-12);
  EXPECT_NEAR(e[0].rotation_deg, 0.0, 1e-12);
}

TEST(PoseErrors, DegenerateTranslationAndCountChecks) {
  CameraPose a;
  const auto e = pairwise_pose_errors(std::vector<CameraPose>{a, a}, std::vector<CameraPose>{a, a});
  EXPECT_EQ(e[0].translation_deg, 0.0);
  EXPECT_THROW(pairwise_pose_errors(std::vector<CameraPose>{a}, std::vector<CameraPose>{a}), MetricError);
}

TEST(PoseAccuracy, ZeroErrorsGiveUnitScores) {
  const std::vector<PairError> errors(6);
  const auto acc = rra_rta_auc(errors, 5.0);
  EXPECT_EQ(acc.rra, 1.0);
  EXPECT_EQ(acc.rta, 1.0);
  EXPECT_EQ(acc.auc, 1.0);
}

TEST(PoseAccuracy, LargeErrorsGiveZeroAuc) {
  const std::vector<PairError> errors{{30.0, 1.0}, {45.0, 50.0}, {2.0, 31.0}};
  EXPECT_EQ(rra_rta_auc(errors, 5.0).auc, 0.0);
}

TEST(PoseAccuracy, ExactAucMatchesFineRiemannSum) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 45.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<PairError> errors(20);
    for (auto& e : errors) e = {u(rng), u(rng)};
    EXPECT_NEAR(rra_rta_auc(errors, 5.0).auc, riemann_auc(errors, 30.0, 100000), 1e-4);
  }
}

TEST(PoseAccuracy, AucMonotoneInPairError) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  std::vector<PairError> errors(15);
  for (auto& e : errors) e = {u(rng), u(rng)};
  double last = rra_rta_auc(errors, 5.0).auc;
  for (int step = 0; step < 30; ++step) {
    auto& e = errors[static_cast<std::size_t>(step) % errors.size()];
    e.rotation_deg *= 0.7;
    e.translation_deg *= 0.8;
    const double now = rra_rta_auc(errors, 5.0).auc;
    EXPECT_GE(now, last);
    EXPECT_LE(now, 1.0);
    last = now;
  }
}

TEST(KdTree, NearestMatchesExhaustiveScan) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cloud = random_cloud(200, rng);
    const auto queries = random_cloud(200, rng, 1.3);
    const KdTree tree(cloud);
    for (const auto& q : queries) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : cloud) best = std::min(best, (p - q).norm());
      EXPECT_EQ(tree.nearest(q).distance, best);
    }
  }
}

TEST(KdTree, KnnMatchesSortedScan) {
  Rng rng(7);
  const auto cloud = random_cloud(150, rng);
  const KdTree tree(cloud);
  for (const auto& q : random_cloud(30, rng)) {
    std::vector<double> all;
    for (const auto& p : cloud) all.push_back((p - q).norm());
    std::sort(all.begin(), all.end());
    const auto knn = tree.knn(q, 7);
    ASSERT_EQ(knn.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(knn[i].distance, all[i]);
  }
}

TEST(Reconstruction, IdenticalCloudsArePerfect) {
  Rng rng(8);
  const auto cloud = random_cloud(100, rng);
  const auto m = reconstruction_metrics(cloud, cloud);
  EXPECT_EQ(m.acc_mean, 0.0);
  EXPECT_EQ(m.comp_med, 0.0);
  EXPECT_NEAR(m.nc_mean, 1.0, 1e-12);
  EXPECT_NEAR(m.nc_med, 1.0, 1e-12);
}

TEST(Reconstruction, OutlierShiftsAccuracyOnly) {
  Rng rng(9);
  const auto gt = random_cloud(80, rng);
  auto pred = gt;
  const double d = 5.0;
  pred.push_back(gt[0] + Eigen::Vector3d(d + 2.0, 0, 0));
  const double to_nearest = KdTree(gt).nearest(pred.back()).distance;
  const auto m = reconstruction_metrics(pred, gt);
  EXPECT_NEAR(m.acc_mean, to_nearest / 81.0, 1e-12);
  EXPECT_EQ(m.comp_mean, 0.0);
}

TEST(Reconstruction, SwappingArgumentsExchangesAccAndComp) {
  Rng rng(10);
  const auto a = random_cloud(120, rng);
  const auto b = random_cloud(90, rng);
  const auto ab = reconstruction_metrics(a, b);
  const auto ba = reconstruction_metrics(b, a);
  EXPECT_EQ(ab.acc_mean, ba.comp_mean);
  EXPECT_EQ(ab.acc_med, ba.comp_med);
  EXPECT_EQ(ab.comp_mean, ba.acc_mean);
  EXPECT_GE(ab.nc_mean, 0.0);
  EXPECT_LE(ab.nc_mean, 1.0);
}

TEST(Reconstruction, CoplanarCloudsHaveUnitNormalConsistency) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::Vector3d> a, b;
  const Eigen::Vector3d n = Eigen::Vector3d(1, 2, 3).normalized();
  const Eigen::Vector3d e1 = n.unitOrthogonal();
  const Eigen::Vector3d e2 = n.cross(e1);
  for (int i = 0; i < 150; ++i) a.push_back(u(rng) * e1 + u(rng) * e2);
  for (int i = 0; i < 150; ++i) b.push_back(u(rng) * e1 + u(rng) * e2);
  const auto m = reconstruction_metrics(a, b);
  EXPECT_NEAR(m.nc_mean, 1.0, 1e-9);
  EXPECT_THROW(reconstruction_metrics({}, b), MetricError);
}

TEST(Reconstruction, MedianScaleAlignment) {
  Rng rng(12);
  const auto gt = random_cloud(51, rng);
  auto pred = gt;
  for (auto& p : pred) p *= 0.25;
  const auto aligned = median_scale_align(pred, gt);
  for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_LT((aligned[i] - gt[i]).norm(), 1e-12);
}

TEST(MetricsReport, JsonHasAllKeysAndRoundTrips) {
  MetricsReport r;
  r.abs_rel = 0.1;
  r.delta_125 = 0.9;
  r.rra5 = 0.3;
  r.rta5 = 0.4;
  r.auc30 = 0.5;
  r.acc_mean = 0.01;
  r.acc_med = 0.02;
  r.comp_mean = 0.03;
  r.comp_med = 0.04;
  r.nc_mean = 0.8;
  r.nc_med = 0.85;
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.size(), 11u);
  for (const char* key : {"abs_rel", "delta_125", "rra5", "rta5", "auc30", "acc_mean", "acc_med", "comp_mean",
                          "comp_med", "nc_mean", "nc_med"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  EXPECT_EQ(back.nc_med, 0.85);
  EXPECT_EQ(back.abs_rel, 0.1);
  const std::vector<MetricsReport> two{r, back};
  EXPECT_DOUBLE_EQ(MetricsReport::average(two).auc30, 0.5);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), MetricError);
}
