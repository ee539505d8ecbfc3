#include "ovgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "json.hpp"

namespace ovgt {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double direction_angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
}

double mean_of(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw MetricError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt,
                           std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) throw MetricError("depth metric inputs differ in size");
  std::vector<double> p, g;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i] && gt[i] > 0.0) {
      p.push_back(pred[i]);
      g.push_back(gt[i]);
    }
  }
  if (g.empty()) throw MetricError("depth metrics need at least one valid pixel");
  const double med_pred = median(p);
  const double scale = med_pred > 0.0 ? median(g) / med_pred : 1.0;
  DepthMetrics m;
  std::size_t inliers = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double aligned = p[i] * scale;
    m.abs_rel += std::abs(aligned - g[i]) / g[i];
    const double ratio = std::max(aligned / g[i], g[i] / aligned);
    if (ratio < 1.25) ++inliers;
  }
  m.abs_rel /= static_cast<double>(g.size());
  m.delta_125 = static_cast<double>(inliers) / static_cast<double>(g.size());
  return m;
}

std::vector<PairError> pairwise_pose_errors(std::span<const CameraPose> pred, std::span<const CameraPose> gt) {
  if (pred.size() != gt.size()) throw MetricError("pose lists differ in length");
  if (pred.size() < 2) throw MetricError("pairwise pose errors need at least two cameras");
  std::vector<PairError> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const CameraPose rel_pred = pred[j] * pred[i].inverse();
      const CameraPose rel_gt = gt[j] * gt[i].inverse();
      PairError e;
      e.rotation_deg = rotation_angle(rel_pred.rotation, rel_gt.rotation) * kRadToDeg;
      if (rel_gt.translation.norm() < 1e-9 || rel_pred.translation.norm() < 1e-9) {
        e.translation_deg = 0.0;
      } else {
        e.translation_deg = direction_angle_deg(rel_pred.translation, rel_gt.translation);
      }
      out.push_back(e);
    }
  }
  return out;
}

PoseAccuracy rra_rta_auc(std::span<const PairError> errors, double tau_deg, double auc_max_deg) {
  if (errors.empty()) throw MetricError("pose accuracy needs at least one pair");
  PoseAccuracy acc;
  double area = 0.0;
  for (const auto& e : errors) {
    if (e.rotation_deg < tau_deg) acc.rra += 1.0;
    if (e.translation_deg < tau_deg) acc.rta += 1.0;
    // a pair counts as accurate on (max_err, auc_max]
    const double worst = std::max(e.rotation_deg, e.translation_deg);
    if (worst < auc_max_deg) area += (auc_max_deg - worst) / auc_max_deg;
  }
  const double n = static_cast<double>(errors.size());
  acc.rra /= n;
  acc.rta /= n;
  acc.auc = area / n;
  return acc;
}

// ---------------------------------------------------------------------------

KdTree::KdTree(std::span<const Eigen::Vector3d> points) : points_(points) {
  if (points.empty()) return;
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  nodes_.reserve(points.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(int node, const Eigen::Vector3d& q, std::size_t k, std::vector<Neighbor>& best) const {
  if (node < 0) return;
  const Node& nd = nodes_[static_cast<std::size_t>(node)];
  const Neighbor cand{nd.point, (points_[nd.point] - q).norm()};
  const auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  if (best.size() < k || closer(cand, best.back())) {
    best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
    if (best.size() > k) best.pop_back();
  }
  const double diff = q[nd.axis] - points_[nd.point][nd.axis];
  const int near = diff < 0.0 ? nd.left : nd.right;
  const int far = diff < 0.0 ? nd.right : nd.left;
  search(near, q, k, best);
  if (best.size() < k || std::abs(diff) <= best.back().distance) search(far, q, k, best);
}

KdTree::Neighbor KdTree::nearest(const Eigen::Vector3d& query) const {
  if (root_ < 0) throw MetricError("nearest-neighbour query on an empty tree");
  std::vector<Neighbor> best;
  best.reserve(2);
  search(root_, query, 1, best);
  return best.front();
}

std::vector<KdTree::Neighbor> KdTree::knn(const Eigen::Vector3d& query, std::size_t k) const {
  std::vector<Neighbor> best;
  if (root_ < 0 || k == 0) return best;
  best.reserve(k + 1);
  search(root_, query, k, best);
  return best;
}

std::vector<Eigen::Vector3d> estimate_normals(std::span<const Eigen::Vector3d> points, std::size_t k) {
  const KdTree tree(points);
  std::vector<Eigen::Vector3d> normals(points.size(), Eigen::Vector3d::UnitZ());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nbrs = tree.knn(points[i], k);
    if (nbrs.size() < 3) continue;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& nb : nbrs) centroid += points[nb.index];
    centroid /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbrs) {
      const Eigen::Vector3d d = points[nb.index] - centroid;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    normals[i] = solver.eigenvectors().col(0).normalized();
  }
  return normals;
}

ReconstructionMetrics reconstruction_metrics(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> gt,
                                             std::size_t k_normals) {
  if (pred.empty() || gt.empty()) throw MetricError("reconstruction metrics need non-empty point sets");
  const KdTree gt_tree(gt);
  const KdTree pred_tree(pred);
  const auto pred_normals = estimate_normals(pred, k_normals);
  const auto gt_normals = estimate_normals(gt, k_normals);

  std::vector<double> acc, comp, nc_pred, nc_gt;
  acc.reserve(pred.size());
  nc_pred.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto nb = gt_tree.nearest(pred[i]);
    acc.push_back(nb.distance);
    nc_pred.push_back(std::abs(pred_normals[i].dot(gt_normals[nb.index])));
  }
  comp.reserve(gt.size());
  nc_gt.reserve(gt.size());
  for (std::size_t j = 0; j < gt.size(); ++j) {
    const auto nb = pred_tree.nearest(gt[j]);
    comp.push_back(nb.distance);
    nc_gt.push_back(std::abs(gt_normals[j].dot(pred_normals[nb.index])));
  }
  ReconstructionMetrics m;
  m.acc_mean = mean_of(acc);
  m.acc_med = median(acc);
  m.comp_mean = mean_of(comp);
  m.comp_med = median(comp);
  m.nc_mean = 0.5 * (mean_of(nc_pred) + mean_of(nc_gt));
  m.nc_med = 0.5 * (median(nc_pred) + median(nc_gt));
  return m;
}

std::vector<Eigen::Vector3d> median_scale_align(std::span<const Eigen::Vector3d> pred,
                                                std::span<const Eigen::Vector3d> gt) {
  std::vector<double> pn, gn;
  for (const auto& p : pred) pn.push_back(p.norm());
  for (const auto& g : gt) gn.push_back(g.norm());
  const double mp = pn.empty() ? 0.0 : median(pn);
  const double scale = mp > 0.0 && !gn.empty() ? median(gn) / mp : 1.0;
  std::vector<Eigen::Vector3d> out(pred.begin(), pred.end());
  for (auto& p : out) p *= scale;
  return out;
}

// ---------------------------------------------------------------------------

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["abs_rel"] = abs_rel;
  j["delta_125"] = delta_125;
  j["rra5"] = rra5;
  j["rta5"] = rta5;
  j["auc30"] = auc30;
  j["acc_mean"] = acc_mean;
  j["acc_med"] = acc_med;
  j["comp_mean"] = comp_mean;
  j["comp_med"] = comp_med;
  j["nc_mean"] = nc_mean;
  j["nc_med"] = nc_med;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.abs_rel = j.at("abs_rel").get<double>();
  r.delta_125 = j.at("delta_125").get<double>();
  r.rra5 = j.at("rra5").get<double>();
  r.rta5 = j.at("rta5").get<double>();
  r.auc30 = j.at("auc30").get<double>();
  r.acc_mean = j.at("acc_mean").get<double>();
  r.acc_med = j.at("acc_med").get<double>();
  r.comp_mean = j.at("comp_mean").get<double>();
  r.comp_med = j.at("comp_med").get<double>();
  r.nc_mean = j.at("nc_mean").get<double>();
  r.nc_med = j.at("nc_med").get<double>();
  return r;
}

MetricsReport MetricsReport::average(std::span<const MetricsReport> reports) {
  MetricsReport out;
  if (reports.empty()) return out;
  for (const auto& r : reports) {
    out.abs_rel += r.abs_rel;
    out.delta_125 += r.delta_125;
    out.rra5 += r.rra5;
    out.rta5 += r.rta5;
    out.auc30 += r.auc30;
    out.acc_mean += r.acc_mean;
    out.acc_med += r.acc_med;
    out.comp_mean += r.comp_mean;
    out.comp_med += r.comp_med;
    out.nc_mean += r.nc_mean;
    out.nc_med += r.nc_med;
  }
  const double n = static_cast<double>(reports.size());
  for (double* f : {&out.abs_rel, &out.delta_125, &out.rra5, &out.rta5, &out.auc30, &out.acc_mean, &out.acc_med,
                    &out.comp_mean, &out.comp_med, &out.nc_mean, &out.nc_med}) {
    *f /= n;
  }
  return out;
}

}  // namespace ovgt
