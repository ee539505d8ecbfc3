#include "ovgt/losses.hpp"

#include <stdexcept>

namespace ovgt {

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
}

GroundTruth build_ground_truth(const SceneSample& sequence) {
  const std::size_t n = sequence.frames.size();
  if (n == 0) throw std::invalid_argument("ground truth needs at least one frame");
  const std::size_t h = sequence.frames[0].depth.height;
  const std::size_t w = sequence.frames[0].depth.width;

  SceneGeometry geom;
  const CameraPose anchor_inv = sequence.frames[0].pose.inverse();
  for (const auto& f : sequence.frames) {
    CameraPose rel = f.pose * anchor_inv;
    geom.pmaps.push_back(unproject(f.depth, f.intrinsics, rel));
    geom.depths.push_back(f.depth);
    geom.poses.push_back(rel);
  }
  geom.poses[0] = CameraPose::identity();
  const NormalizedScene normalized = normalize_scene_gt(geom);

  GroundTruth gt;
  gt.scale = normalized.scale;
  gt.poses = normalized.scene.poses;
  std::vector<double> depth(n * h * w), pmap(n * 3 * h * w), mask(n * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    gt.cameras.push_back(encode_camera(sequence.frames[i].intrinsics, gt.poses[i]));
    const auto& d = normalized.scene.depths[i];
    const auto& pm = normalized.scene.pmaps[i];
    for (std::size_t p = 0; p < h * w; ++p) {
      const bool valid = d.mask[p] != 0;
      depth[i * h * w + p] = valid ? d.depth[p] : 0.0;
      mask[i * h * w + p] = valid ? 1.0 : 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        pmap[(i * 3 + c) * h * w + p] = valid ? pm.points[p][static_cast<int>(c)] : 0.0;
      }
    }
  }
  gt.depth = Tensor({n, 1, h, w}, std::move(depth));
  gt.pmap = Tensor({n, 3, h, w}, std::move(pmap));
  gt.mask = Tensor({n, h, w}, std::move(mask));
  return gt;
}

Tensor camera_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("camera loss shape mismatch: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  return sum(abs(pred - target));
}

Tensor camera_targets(const Tensor& pred, const std::vector<CameraParamVector>& gt) {
  const std::size_t n = gt.size();
  if (pred.rank() != 2 || pred.size(0) != n || pred.size(1) != CameraParamVector::kSize) {
    throw ShapeError("camera predictions " + to_string(pred.shape()) + " do not match " + std::to_string(n) +
                     " targets");
  }
  const auto pv = pred.values();
  std::vector<double> values;
  values.reserve(n * CameraParamVector::kSize);
  for (std::size_t i = 0; i < n; ++i) {
    auto arr = gt[i].to_array();
    double dot = 0.0;
    for (std::size_t k = 0; k < 4; ++k) dot += arr[k] * pv[i * CameraParamVector::kSize + k];
    if (dot < 0.0) {
      for (std::size_t k = 0; k < 4; ++k) arr[k] = -arr[k];
    }
    values.insert(values.end(), arr.begin(), arr.end());
  }
  return Tensor({n, CameraParamVector::kSize}, std::move(values));
}

Tensor dense_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask, const Tensor& confidence,
                  const LossConfig& config) {
  if (pred.rank() != 4 || pred.shape() != gt.shape()) {
    throw ShapeError("dense loss needs matching [N,C,H,W] maps, got " + to_string(pred.shape()) + " and " +
                     to_string(gt.shape()));
  }
  const std::size_t n = pred.size(0), h = pred.size(2), w = pred.size(3);
  const Shape plane{n, h, w};
  if (mask.shape() != plane || confidence.shape() != plane) {
    throw ShapeError("dense loss mask/confidence must be " + to_string(plane));
  }
  const Tensor m = reshape(mask, {n, 1, h, w});
  const Tensor conf = reshape(confidence, {n, 1, h, w});
  const Tensor residual = pred - gt;
  Tensor loss = sum(abs(conf * residual) * m);
  if (config.gradient_terms) {
    if (w > 1) {
      const Tensor dx = slice(residual, 3, 1, w) - slice(residual, 3, 0, w - 1);
      const Tensor pair = slice(m, 3, 1, w) * slice(m, 3, 0, w - 1);
      loss = loss + sum(abs(slice(conf, 3, 0, w - 1) * dx) * pair);
    }
    if (h > 1) {
      const Tensor dy = slice(residual, 2, 1, h) - slice(residual, 2, 0, h - 1);
      const Tensor pair = slice(m, 2, 1, h) * slice(m, 2, 0, h - 1);
      loss = loss + sum(abs(slice(conf, 2, 0, h - 1) * dy) * pair);
    }
  }
  if (config.alpha != 0.0) loss = loss - config.alpha * sum(log(confidence) * mask);
  return loss;
}

LossBreakdown total_loss(const Predictions& preds, const GroundTruth& gt, const LossConfig& config) {
  const std::size_t n = gt.frames();
  LossBreakdown out;
  out.camera = camera_loss(preds.cameras, camera_targets(preds.cameras, gt.cameras));
  const Tensor depth = reshape(preds.depth, {n, 1, preds.depth.size(1), preds.depth.size(2)});
  out.depth = dense_loss(depth, gt.depth, gt.mask, preds.depth_conf, config);
  out.pmap = dense_loss(preds.pmap, gt.pmap, gt.mask, preds.pmap_conf, config);
  out.total = out.camera + out.depth + out.pmap;
  return out;
}

}  // namespace ovgt
