#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ovgt/backbone.hpp"
#include "ovgt/bundle.hpp"
#include "ovgt/nn.hpp"
#include "ovgt/tensor.hpp"

namespace ovgt {

/// Injection architecture. kOmniVGGT is the full design; the others are ablations.
enum class AdapterVariant {
  kOmniVGGT,       // zero-initialized camera injection before every block, plain depth add
  kReplace,        // annotated frames' camera tokens are overwritten by the encoded camera
  kOneLayer,       // camera injection only before the first block
  kDepthZeroConv,  // full design plus a zero-initialized map after the depth encoder
};

std::string to_string(AdapterVariant variant);
/// Accepts omnivggt | replace | one_layer | depth_zeroconv.
AdapterVariant parse_adapter_variant(const std::string& name);

/// Normalized, encoded auxiliary inputs of one bundle plus the presence flags.
struct AuxInputs {
  std::vector<std::uint8_t> camera_flags;  // m_i
  std::vector<std::uint8_t> depth_flags;   // n_i
  std::vector<CameraParamVector> cameras;  // one per frame; identity-filled where m_i = 0
  double pose_scale = 1.0;
  double depth_mean = 1.0;

  Tensor camera_matrix;  // [N, 9], zero rows where m_i = 0
  Tensor camera_mask;    // [N, 1]
  Tensor depth_input;    // [N, 2, H, W]: normalized depth (0 where invalid) and mask
  Tensor depth_mask;     // [N, 1, 1]

  std::size_t frames() const { return camera_flags.size(); }
};

/// Normalizes annotated poses (the lowest-index annotated frame anchors them),
/// encodes them, normalizes annotated depths by their joint mean, and stacks
/// everything into constant tensors. Bundles with no auxiliary data are legal.
AuxInputs prepare_aux(const FrameBundle& bundle);

class CameraAdapter {
 public:
  CameraAdapter() = default;
  CameraAdapter(const BackboneConfig& config, AdapterVariant variant, Rng& rng);

  /// camera tokens [N, 1, dim] (or [N, dim]) for layer l in [0, L].
  Tensor inject(const Tensor& camera_tokens, const AuxInputs& aux, std::size_t layer) const;
  void collect(ParameterList& out) const;

  std::size_t injection_layers() const { return encoders.size(); }

  std::vector<Linear> encoders;
  std::vector<Linear> zero_injections;  // empty for kReplace
  Tensor placeholder;                   // constant zero [dim]

 private:
  AdapterVariant variant_ = AdapterVariant::kOmniVGGT;
  std::size_t layers_ = 0;
};

class DepthAdapter {
 public:
  DepthAdapter() = default;
  DepthAdapter(const BackboneConfig& config, AdapterVariant variant, Rng& rng);

  /// spatial tokens [N, P, dim].
  Tensor inject(const Tensor& spatial, const AuxInputs& aux) const;
  void collect(ParameterList& out) const;

  Tensor weight;       // [2*patch*patch, dim]
  Tensor bias;         // [dim]
  Tensor placeholder;  // learnable [dim], zero at init
  std::optional<Linear> zero_conv;

 private:
  std::size_t patch_ = 1;
};

/// Camera adapter plus depth adapter, sized for one backbone configuration.
class GeoAdapter {
 public:
  GeoAdapter(const BackboneConfig& config, AdapterVariant variant, Rng& rng);

  const BackboneConfig& config() const { return config_; }
  AdapterVariant variant() const { return variant_; }

  Tensor inject_camera(const Tensor& camera_tokens, const AuxInputs& aux, std::size_t layer) const {
    return camera.inject(camera_tokens, aux, layer);
  }
  Tensor inject_depth(const Tensor& spatial, const AuxInputs& aux) const { return depth.inject(spatial, aux); }

  ParameterList parameters() const;
  /// Parameters of every zero-initialized map (camera injections and the depth zero-conv).
  ParameterList zero_init_parameters() const;

  CameraAdapter camera;
  DepthAdapter depth;

 private:
  BackboneConfig config_;
  AdapterVariant variant_;
};

}  // namespace ovgt
