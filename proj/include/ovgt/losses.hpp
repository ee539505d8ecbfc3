#pragma once

#include <vector>

#include "ovgt/backbone.hpp"
#include "ovgt/geometry.hpp"
#include "ovgt/synthscene.hpp"
#include "ovgt/tensor.hpp"

namespace ovgt {

struct LossConfig {
  double alpha = 0.2;          // weight of the -log(confidence) regularizer
  bool gradient_terms = true;  // include the forward-difference terms

  void validate() const;
};

struct LossBreakdown {
  Tensor camera;
  Tensor depth;
  Tensor pmap;
  Tensor total;
};

/// Supervision targets for one sequence, expressed in the first frame's camera
/// coordinates and divided by the mean norm of all valid points.
struct GroundTruth {
  std::vector<CameraParamVector> cameras;
  std::vector<CameraPose> poses;  // normalized, first frame = identity
  Tensor depth;                   // [N, 1, H, W]
  Tensor pmap;                    // [N, 3, H, W]
  Tensor mask;                    // [N, H, W]
  double scale = 1.0;

  std::size_t frames() const { return cameras.size(); }
};

GroundTruth build_ground_truth(const SceneSample& sequence);

/// Sum of absolute differences between [N, 9] predictions and targets.
Tensor camera_loss(const Tensor& pred, const Tensor& target);

/// [N, 9] target tensor whose quaternions sit in the hemisphere of the matching prediction.
Tensor camera_targets(const Tensor& pred, const std::vector<CameraParamVector>& gt);

/// Confidence-weighted L1 on a [N, C, H, W] map with optional forward-difference
/// gradient terms and the -alpha*log(conf) regularizer, over valid pixels only.
/// `mask` and `confidence` are [N, H, W].
Tensor dense_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask, const Tensor& confidence,
                  const LossConfig& config);

/// camera + depth + point-map loss over every frame of the sequence.
LossBreakdown total_loss(const Predictions& preds, const GroundTruth& gt, const LossConfig& config);

}  // namespace ovgt
