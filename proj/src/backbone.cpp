#include "ovgt/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ovgt/geoadapter.hpp"

namespace ovgt {

void BackboneConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) throw std::invalid_argument("dim must be a positive multiple of heads");
  if (patch == 0 || height == 0 || width == 0 || height % patch != 0 || width % patch != 0) {
    throw std::invalid_argument("image height and width must be positive multiples of patch");
  }
  if (layers < 1) throw std::invalid_argument("at least one AA block is required");
  if (channels == 0) throw std::invalid_argument("channels must be positive");
  if (mlp_ratio == 0) throw std::invalid_argument("mlp_ratio must be positive");
}

Tensor TokenSet::joined() const {
  if (registers.defined()) return concat({camera, registers, spatial}, 1);
  return concat({camera, spatial}, 1);
}

TokenSet TokenSet::split(const Tensor& joined, std::size_t registers) {
  const std::size_t total = joined.size(1);
  TokenSet out;
  out.camera = slice(joined, 1, 0, 1);
  if (registers > 0) out.registers = slice(joined, 1, 1, 1 + registers);
  out.spatial = slice(joined, 1, 1 + registers, total);
  return out;
}

std::vector<CameraParamVector> Predictions::camera_vectors() const {
  const std::size_t n = cameras.size(0);
  std::vector<CameraParamVector> out;
  out.reserve(n);
  const auto v = cameras.values();
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(CameraParamVector::from_array(v.subspan(i * CameraParamVector::kSize, CameraParamVector::kSize)));
  }
  return out;
}

Tensor normalize_camera_quaternions(const Tensor& raw) {
  if (raw.rank() != 2 || raw.size(1) != CameraParamVector::kSize) {
    throw ShapeError("camera tensor must be [N, 9], got " + to_string(raw.shape()));
  }
  const std::size_t n = raw.size(0);
  const Tensor q = slice(raw, 1, 0, 4);
  const Tensor rest = slice(raw, 1, 4, CameraParamVector::kSize);
  const Tensor sumsq = sum(q * q, 1, true);

  std::vector<double> degenerate(n), sign(n), fallback(n * 4, 0.0);
  const auto qv = q.values();
  const auto ss = sumsq.values();
  for (std::size_t i = 0; i < n; ++i) {
    const bool zero = !(ss[i] > 1e-24);
    degenerate[i] = zero ? 1.0 : 0.0;
    const Eigen::Vector4d row(qv[i * 4], qv[i * 4 + 1], qv[i * 4 + 2], qv[i * 4 + 3]);
    const double s = canonicalize_quaternion(row) == row ? 1.0 : -1.0;
    sign[i] = zero ? 0.0 : s;
    fallback[i * 4] = zero ? 1.0 : 0.0;
  }
  const Tensor degenerate_t({n, 1}, std::move(degenerate));
  const Tensor sign_t({n, 1}, std::move(sign));
  const Tensor fallback_t({n, 4}, std::move(fallback));
  const Tensor norm = sqrt(sumsq + degenerate_t);
  const Tensor unit = q / norm * sign_t + fallback_t;
  return concat({unit, rest}, 1);
}

// ---------------------------------------------------------------------------

TransformerLayer::TransformerLayer(const std::string& name, std::size_t dim, std::size_t heads, std::size_t mlp_ratio,
                                   Rng& rng)
    : norm1(name + ".norm1", dim),
      query(name + ".query", dim, dim, rng),
      key(name + ".key", dim, dim, rng),
      value(name + ".value", dim, dim, rng),
      out(name + ".out", dim, dim, rng),
      norm2(name + ".norm2", dim),
      fc1(name + ".fc1", dim, dim * mlp_ratio, rng),
      fc2(name + ".fc2", dim * mlp_ratio, dim, rng),
      heads_(heads) {}

Tensor TransformerLayer::attention(const Tensor& x) const {
  const std::size_t b = x.size(0);
  const std::size_t t = x.size(1);
  const std::size_t dim = x.size(2);
  const std::size_t hd = dim / heads_;
  const auto split_heads = [&](const Tensor& y) {
    return reshape(transpose(reshape(y, {b, t, heads_, hd}), {0, 2, 1, 3}), {b * heads_, t, hd});
  };
  const Tensor q = split_heads(query(x));
  const Tensor k = split_heads(key(x));
  const Tensor v = split_heads(value(x));
  const Tensor scores = matmul(q, transpose(k, 1, 2)) * (1.0 / std::sqrt(static_cast<double>(hd)));
  const Tensor mixed = matmul(softmax(scores, -1), v);
  const Tensor merged = reshape(transpose(reshape(mixed, {b, heads_, t, hd}), {0, 2, 1, 3}), {b, t, dim});
  return out(merged);
}

Tensor TransformerLayer::feed_forward(const Tensor& x) const { return fc2(gelu(fc1(x))); }

Tensor TransformerLayer::operator()(const Tensor& x) const {
  const Tensor h = x + attention(norm1(x));
  return h + feed_forward(norm2(h));
}

void TransformerLayer::collect(ParameterList& params) const {
  norm1.collect(params);
  query.collect(params);
  key.collect(params);
  value.collect(params);
  out.collect(params);
  norm2.collect(params);
  fc1.collect(params);
  fc2.collect(params);
}

TokenSet AABlock::operator()(const TokenSet& tokens) const {
  const std::size_t registers = tokens.registers.defined() ? tokens.registers.size(1) : 0;
  const Tensor joined = tokens.joined();
  const std::size_t n = joined.size(0);
  const std::size_t t = joined.size(1);
  const std::size_t dim = joined.size(2);
  const Tensor framewise = frame(joined);
  const Tensor global_out = global(reshape(framewise, {1, n * t, dim}));
  return TokenSet::split(reshape(global_out, {n, t, dim}), registers);
}

// ---------------------------------------------------------------------------

DenseHead::DenseHead(const std::string& name, const BackboneConfig& config, Kind kind, Rng& rng)
    : norm(name + ".norm", config.dim),
      proj(name + ".proj", config.dim, config.patch * config.patch * ((kind == Kind::kDepth ? 1 : 3) + 1), rng),
      kind_(kind),
      patch_(config.patch),
      height_(config.height),
      width_(config.width) {}

DenseOutput DenseHead::operator()(const Tensor& spatial) const {
  const std::size_t n = spatial.size(0);
  const std::size_t c = channels();
  const std::size_t ph = height_ / patch_;
  const std::size_t pw = width_ / patch_;
  const Tensor raw = proj(norm(spatial));
  // token features are laid out (row-in-patch, col-in-patch, channel)
  const Tensor grid = reshape(transpose(reshape(raw, {n, ph, pw, patch_, patch_, c + 1}), {0, 5, 1, 3, 2, 4}),
                              {n, c + 1, height_, width_});
  DenseOutput out;
  const Tensor values = slice(grid, 1, 0, c);
  out.values = kind_ == Kind::kDepth ? softplus(values) : values;
  out.confidence = softplus(reshape(slice(grid, 1, c, c + 1), {n, height_, width_})) + 1.0;
  return out;
}

void DenseHead::collect(ParameterList& params) const {
  norm.collect(params);
  proj.collect(params);
}

CameraHead::CameraHead(const std::string& name, const BackboneConfig& config, Rng& rng)
    : norm(name + ".norm", config.dim), proj(name + ".proj", config.dim, CameraParamVector::kSize, rng) {
  for (std::size_t i = 0; i < config.camera_head_layers; ++i) {
    layers.emplace_back(name + ".layer" + std::to_string(i), config.dim, config.heads, config.mlp_ratio, rng);
  }
}

Tensor CameraHead::operator()(const Tensor& camera_tokens) const {
  const std::size_t n = camera_tokens.size(0);
  const std::size_t dim = camera_tokens.size(-1);
  Tensor x = reshape(camera_tokens, {1, n, dim});
  for (const auto& layer : layers) x = layer(x);
  return reshape(proj(norm(x)), {n, CameraParamVector::kSize});
}

void CameraHead::collect(ParameterList& params) const {
  for (const auto& layer : layers) layer.collect(params);
  norm.collect(params);
  proj.collect(params);
}

// ---------------------------------------------------------------------------

Backbone::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t dim = config_.dim;
  const std::size_t kdim = config_.channels * config_.patch * config_.patch;
  patch_weight = normal_parameter({kdim, dim}, 1.0 / std::sqrt(static_cast<double>(kdim)), rng);
  patch_bias = Tensor::zeros({dim}, true);
  pos_embed = normal_parameter({config_.patches_per_frame(), dim}, 0.02, rng);
  camera_token = normal_parameter({dim}, 0.02, rng);
  if (config_.registers > 0) register_tokens = normal_parameter({config_.registers, dim}, 0.02, rng);
  first_frame_flag = normal_parameter({dim}, 0.02, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string prefix = "backbone.block" + std::to_string(l);
    blocks.push_back({TransformerLayer(prefix + ".frame", dim, config_.heads, config_.mlp_ratio, rng),
                      TransformerLayer(prefix + ".global", dim, config_.heads, config_.mlp_ratio, rng)});
  }
  camera_head = CameraHead("head.camera", config_, rng);
  depth_head = DenseHead("head.depth", config_, DenseHead::Kind::kDepth, rng);
  pmap_head = DenseHead("head.pmap", config_, DenseHead::Kind::kPointMap, rng);
}

TokenSet Backbone::embed_frames(const Tensor& images) const {
  if (images.rank() != 4 || images.size(1) != config_.channels || images.size(2) != config_.height ||
      images.size(3) != config_.width) {
    throw ShapeError("images " + to_string(images.shape()) + " do not match the configured resolution");
  }
  const std::size_t n = images.size(0);
  const std::size_t dim = config_.dim;
  TokenSet tokens;
  tokens.spatial = patchify_conv(images, patch_weight, patch_bias, config_.patch) + pos_embed;

  std::vector<double> first(n, 0.0);
  first[0] = 1.0;
  const Tensor first_mask({n, 1, 1}, std::move(first));
  tokens.camera = reshape(camera_token, {1, 1, dim}) + first_mask * reshape(first_frame_flag, {1, 1, dim});
  if (config_.registers > 0) {
    tokens.registers = reshape(register_tokens, {1, config_.registers, dim}) + Tensor::zeros({n, 1, 1});
  }
  return tokens;
}

TokenSet Backbone::aa_block(const TokenSet& tokens, std::size_t layer) const {
  if (layer >= blocks.size()) throw std::out_of_range("AA block index " + std::to_string(layer) + " out of range");
  return blocks[layer](tokens);
}

Predictions Backbone::heads(const TokenSet& tokens) const {
  Predictions p;
  p.cameras_raw = camera_head(tokens.camera);
  p.cameras = normalize_camera_quaternions(p.cameras_raw);
  const DenseOutput depth = depth_head(tokens.spatial);
  const std::size_t n = tokens.frames();
  p.depth = reshape(depth.values, {n, config_.height, config_.width});
  p.depth_conf = depth.confidence;
  const DenseOutput pmap = pmap_head(tokens.spatial);
  p.pmap = pmap.values;
  p.pmap_conf = pmap.confidence;
  return p;
}

Predictions Backbone::forward(const FrameBundle& bundle, const GeoAdapter* adapter) const {
  if (adapter != nullptr && adapter->config().dim != config_.dim) {
    throw std::invalid_argument("adapter width " + std::to_string(adapter->config().dim) +
                                " does not match backbone width " + std::to_string(config_.dim));
  }
  TokenSet tokens = embed_frames(bundle.images());
  if (adapter == nullptr) {
    for (std::size_t l = 0; l < config_.layers; ++l) tokens = aa_block(tokens, l);
    return heads(tokens);
  }
  const AuxInputs aux = prepare_aux(bundle);
  tokens.spatial = adapter->inject_depth(tokens.spatial, aux);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    tokens.camera = adapter->inject_camera(tokens.camera, aux, l);
    tokens = aa_block(tokens, l);
  }
  tokens.camera = adapter->inject_camera(tokens.camera, aux, config_.layers);
  return heads(tokens);
}

ParameterList Backbone::parameters() const {
  ParameterList params;
  params.push_back({"backbone.patch_embed.weight", patch_weight});
  params.push_back({"backbone.patch_embed.bias", patch_bias});
  params.push_back({"backbone.pos_embed", pos_embed});
  params.push_back({"backbone.camera_token", camera_token});
  if (register_tokens.defined()) params.push_back({"backbone.register_tokens", register_tokens});
  params.push_back({"backbone.first_frame_flag", first_frame_flag});
  for (const auto& block : blocks) {
    block.frame.collect(params);
    block.global.collect(params);
  }
  camera_head.collect(params);
  depth_head.collect(params);
  pmap_head.collect(params);
  return params;
}

}  // namespace ovgt
