#include "ovgt/geoadapter.hpp"

#include <cmath>
#include <stdexcept>

namespace ovgt {

std::string to_string(AdapterVariant variant) {
  switch (variant) {
    case AdapterVariant::kOmniVGGT:
      return "omnivggt";
    case AdapterVariant::kReplace:
      return "replace";
    case AdapterVariant::kOneLayer:
      return "one_layer";
    case AdapterVariant::kDepthZeroConv:
      return "depth_zeroconv";
  }
  return "unknown";
}

AdapterVariant parse_adapter_variant(const std::string& name) {
  if (name == "omnivggt") return AdapterVariant::kOmniVGGT;
  if (name == "replace") return AdapterVariant::kReplace;
  if (name == "one_layer") return AdapterVariant::kOneLayer;
  if (name == "depth_zeroconv") return AdapterVariant::kDepthZeroConv;
  throw std::invalid_argument("unknown adapter variant '" + name + "'");
}

AuxInputs prepare_aux(const FrameBundle& bundle) {
  const std::size_t n = bundle.size();
  const std::size_t h = bundle.height();
  const std::size_t w = bundle.width();
  AuxInputs aux;
  aux.camera_flags = bundle.camera_flags();
  aux.depth_flags = bundle.depth_flags();
  aux.cameras.assign(n, CameraParamVector{});

  std::vector<std::size_t> cam_idx;
  std::vector<CameraPose> poses;
  for (std::size_t i = 0; i < n; ++i) {
    if (!bundle.frames[i].camera) continue;
    cam_idx.push_back(i);
    poses.push_back(bundle.frames[i].camera->pose);
  }
  std::vector<double> cam_values(n * CameraParamVector::kSize, 0.0);
  std::vector<double> cam_mask(n, 0.0);
  if (!poses.empty()) {
    const NormalizedPoses normalized = normalize_poses(poses);
    aux.pose_scale = normalized.scale;
    for (std::size_t j = 0; j < cam_idx.size(); ++j) {
      const std::size_t i = cam_idx[j];
      aux.cameras[i] = encode_camera(bundle.frames[i].camera->intrinsics, normalized.poses[j]);
      const auto arr = aux.cameras[i].to_array();
      std::copy(arr.begin(), arr.end(), cam_values.begin() + static_cast<std::ptrdiff_t>(i * CameraParamVector::kSize));
      cam_mask[i] = 1.0;
    }
  }
  aux.camera_matrix = Tensor({n, CameraParamVector::kSize}, std::move(cam_values));
  aux.camera_mask = Tensor({n, 1}, std::move(cam_mask));

  std::vector<std::size_t> depth_idx;
  std::vector<DepthObservation> depths;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = bundle.frames[i].depth;
    if (!d) continue;
    if (d->height != h || d->width != w || d->depth.size() != h * w || d->mask.size() != h * w) {
      throw ShapeError("depth map of frame " + std::to_string(i) + " does not match the image resolution");
    }
    depth_idx.push_back(i);
    depths.push_back(*d);
  }
  std::vector<double> depth_values(n * 2 * h * w, 0.0);
  std::vector<double> depth_mask(n, 0.0);
  if (!depths.empty()) {
    const NormalizedDepths normalized = normalize_depth_batch(depths);
    aux.depth_mean = normalized.mean;
    for (std::size_t j = 0; j < depth_idx.size(); ++j) {
      const std::size_t i = depth_idx[j];
      const auto& d = normalized.depths[j];
      double* dst = depth_values.data() + i * 2 * h * w;
      for (std::size_t p = 0; p < h * w; ++p) {
        const bool valid = d.mask[p] != 0;
        dst[p] = valid ? d.depth[p] : 0.0;
        dst[h * w + p] = valid ? 1.0 : 0.0;
      }
      depth_mask[i] = 1.0;
    }
  }
  aux.depth_input = Tensor({n, 2, h, w}, std::move(depth_values));
  aux.depth_mask = Tensor({n, 1, 1}, std::move(depth_mask));
  return aux;
}

// ---------------------------------------------------------------------------

CameraAdapter::CameraAdapter(const BackboneConfig& config, AdapterVariant variant, Rng& rng)
    : placeholder(Tensor::zeros({config.dim})), variant_(variant), layers_(config.layers) {
  const std::size_t count = variant == AdapterVariant::kOneLayer ? 1 : config.layers + 1;
  for (std::size_t l = 0; l < count; ++l) {
    const std::string prefix = "adapter.camera.";
    encoders.emplace_back(prefix + "encoder" + std::to_string(l), CameraParamVector::kSize, config.dim, rng);
    if (variant != AdapterVariant::kReplace) {
      zero_injections.emplace_back(prefix + "zero" + std::to_string(l), config.dim, config.dim, rng,
                                   Linear::Init::kZero);
    }
  }
}

Tensor CameraAdapter::inject(const Tensor& camera_tokens, const AuxInputs& aux, std::size_t layer) const {
  if (layer > layers_) {
    throw std::out_of_range("camera injection layer " + std::to_string(layer) + " exceeds " + std::to_string(layers_));
  }
  if (layer >= encoders.size()) return camera_tokens;  // one-layer variant beyond block 0
  const std::size_t n = camera_tokens.size(0);
  if (aux.frames() != n) throw ShapeError("aux inputs and camera tokens disagree on frame count");
  const Tensor tokens = reshape(camera_tokens, {n, camera_tokens.size(-1)});
  const Tensor encoded = encoders[layer](aux.camera_matrix);
  const Tensor absent = 1.0 - aux.camera_mask;
  Tensor result;
  if (variant_ == AdapterVariant::kReplace) {
    result = aux.camera_mask * encoded + absent * tokens;
  } else {
    const Tensor injected = aux.camera_mask * encoded + absent * placeholder;
    result = tokens + zero_injections[layer](injected);
  }
  return reshape(result, camera_tokens.shape());
}

void CameraAdapter::collect(ParameterList& out) const {
  for (std::size_t l = 0; l < encoders.size(); ++l) {
    encoders[l].collect(out);
    if (l < zero_injections.size()) zero_injections[l].collect(out);
  }
}

DepthAdapter::DepthAdapter(const BackboneConfig& config, AdapterVariant variant, Rng& rng)
    : placeholder(Tensor::zeros({config.dim}, true)), patch_(config.patch) {
  const std::size_t kdim = 2 * config.patch * config.patch;
  weight = normal_parameter({kdim, config.dim}, 1.0 / std::sqrt(static_cast<double>(kdim)), rng);
  bias = Tensor::zeros({config.dim}, true);
  if (variant == AdapterVariant::kDepthZeroConv) {
    zero_conv.emplace("adapter.depth.zero", config.dim, config.dim, rng, Linear::Init::kZero);
  }
}

Tensor DepthAdapter::inject(const Tensor& spatial, const AuxInputs& aux) const {
  if (aux.depth_input.size(2) % patch_ != 0 || aux.depth_input.size(3) % patch_ != 0) {
    throw ShapeError("depth resolution not divisible by the patch size");
  }
  const std::size_t patches = (aux.depth_input.size(2) / patch_) * (aux.depth_input.size(3) / patch_);
  if (spatial.size(0) != aux.frames() || spatial.size(1) != patches) {
    throw ShapeError("depth resolution " + to_string(aux.depth_input.shape()) + " does not match spatial tokens " +
                     to_string(spatial.shape()));
  }
  Tensor encoded = patchify_conv(aux.depth_input, weight, bias, patch_);
  if (zero_conv) encoded = (*zero_conv)(encoded);
  return spatial + (aux.depth_mask * encoded + (1.0 - aux.depth_mask) * placeholder);
}

void DepthAdapter::collect(ParameterList& out) const {
  out.push_back({"adapter.depth.encoder.weight", weight});
  out.push_back({"adapter.depth.encoder.bias", bias});
  out.push_back({"adapter.depth.placeholder", placeholder});
  if (zero_conv) zero_conv->collect(out);
}

GeoAdapter::GeoAdapter(const BackboneConfig& config, AdapterVariant variant, Rng& rng)
    : camera(config, variant, rng), depth(config, variant, rng), config_(config), variant_(variant) {}

ParameterList GeoAdapter::parameters() const {
  ParameterList params;
  camera.collect(params);
  depth.collect(params);
  return params;
}

ParameterList GeoAdapter::zero_init_parameters() const {
  ParameterList params;
  for (const auto& zc : camera.zero_injections) zc.collect(params);
  if (depth.zero_conv) depth.zero_conv->collect(params);
  return params;
}

}  // namespace ovgt
