#include "ovgt/bundle.hpp"

namespace ovgt {

std::size_t FrameBundle::channels() const { return frames.empty() ? 0 : frames.front().image.channels; }
std::size_t FrameBundle::height() const { return frames.empty() ? 0 : frames.front().image.height; }
std::size_t FrameBundle::width() const { return frames.empty() ? 0 : frames.front().image.width; }

std::vector<std::uint8_t> FrameBundle::camera_flags() const {
  std::vector<std::uint8_t> flags;
  flags.reserve(frames.size());
  for (const auto& f : frames) flags.push_back(f.camera ? 1 : 0);
  return flags;
}

std::vector<std::uint8_t> FrameBundle::depth_flags() const {
  std::vector<std::uint8_t> flags;
  flags.reserve(frames.size());
  for (const auto& f : frames) flags.push_back(f.depth ? 1 : 0);
  return flags;
}

Tensor FrameBundle::images() const {
  if (frames.empty()) throw ShapeError("bundle has no frames");
  const std::size_t c = channels(), h = height(), w = width();
  std::vector<double> values;
  values.reserve(frames.size() * c * h * w);
  for (const auto& f : frames) {
    const auto& img = f.image;
    if (img.channels != c || img.height != h || img.width != w || img.values.size() != c * h * w) {
      throw ShapeError("bundle frames must share one resolution");
    }
    values.insert(values.end(), img.values.begin(), img.values.end());
  }
  return Tensor({frames.size(), c, h, w}, std::move(values));
}

}  // namespace ovgt
