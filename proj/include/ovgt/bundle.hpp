#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ovgt/geometry.hpp"
#include "ovgt/tensor.hpp"

namespace ovgt {

/// Channel-major image, values in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
};

struct CameraAnnotation {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

/// One input view: the RGB frame plus whichever auxiliary modalities are known.
struct FrameInput {
  Image image;
  std::optional<CameraAnnotation> camera;
  std::optional<DepthObservation> depth;
};

/// One sequence handed to the model. All frames share one resolution.
struct FrameBundle {
  std::vector<FrameInput> frames;

  std::size_t size() const { return frames.size(); }
  std::size_t channels() const;
  std::size_t height() const;
  std::size_t width() const;

  /// m_i: 1 where frame i carries a camera annotation.
  std::vector<std::uint8_t> camera_flags() const;
  /// n_i: 1 where frame i carries a depth map.
  std::vector<std::uint8_t> depth_flags() const;

  /// Stacked images as a constant [N, C, H, W] tensor. Throws ShapeError on mixed resolutions.
  Tensor images() const;
};

}  // namespace ovgt
