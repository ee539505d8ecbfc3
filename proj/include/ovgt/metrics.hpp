#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ovgt/geometry.hpp"

namespace ovgt {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Median of a non-empty sample; even counts average the middle pair.
double median(std::vector<double> values);

struct DepthMetrics {
  double abs_rel = 0.0;
  double delta_125 = 0.0;
};

/// Aligns pred to gt by median(gt)/median(pred) over pixels with mask && gt > 0,
/// then reports mean |p-g|/g and the fraction with max(p/g, g/p) < 1.25.
DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt,
                           std::span<const std::uint8_t> mask);

struct PairError {
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
};

/// Relative rotation and translation-direction errors for every unordered pair (i < j).
std::vector<PairError> pairwise_pose_errors(std::span<const CameraPose> pred, std::span<const CameraPose> gt);

struct PoseAccuracy {
  double rra = 0.0;
  double rta = 0.0;
  double auc = 0.0;
};

/// RRA/RTA at tau and the exact area under min(RRA, RTA) on [0, auc_max], normalized.
PoseAccuracy rra_rta_auc(std::span<const PairError> errors, double tau_deg, double auc_max_deg = 30.0);

/// Static 3-D k-d tree over a borrowed point set; exact queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Eigen::Vector3d> points);

  struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
  };

  Neighbor nearest(const Eigen::Vector3d& query) const;
  /// k nearest (including an exact duplicate of the query), closest first.
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k) const;

 private:
  struct Node {
    std::size_t point = 0;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Eigen::Vector3d& q, std::size_t k, std::vector<Neighbor>& heap) const;

  std::span<const Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Unit normals from a plane fit to each point's k nearest neighbours.
std::vector<Eigen::Vector3d> estimate_normals(std::span<const Eigen::Vector3d> points, std::size_t k);

struct ReconstructionMetrics {
  double acc_mean = 0.0;
  double acc_med = 0.0;
  double comp_mean = 0.0;
  double comp_med = 0.0;
  double nc_mean = 0.0;
  double nc_med = 0.0;
};

/// Accuracy (pred->gt), completeness (gt->pred) and normal consistency
/// |n_pred . n_gt| averaged over both matching directions.
ReconstructionMetrics reconstruction_metrics(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> gt,
                                             std::size_t k_normals = 10);

/// Scales pred by median(|gt|)/median(|pred|); falls back to 1 on a non-positive median.
std::vector<Eigen::Vector3d> median_scale_align(std::span<const Eigen::Vector3d> pred,
                                                std::span<const Eigen::Vector3d> gt);

struct MetricsReport {
  double abs_rel = 0.0;
  double delta_125 = 0.0;
  double rra5 = 0.0;
  double rta5 = 0.0;
  double auc30 = 0.0;
  double acc_mean = 0.0;
  double acc_med = 0.0;
  double comp_mean = 0.0;
  double comp_med = 0.0;
  double nc_mean = 0.0;
  double nc_med = 0.0;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  /// Field-wise mean of several reports.
  static MetricsReport average(std::span<const MetricsReport> reports);
};

}  // namespace ovgt
