#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ovgt/tensor.hpp"

namespace ovgt {

using Rng = std::mt19937_64;

/// A trainable tensor with its hierarchical name (e.g. "backbone.block0.frame.q.weight").
struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

/// Leaf tensor drawn from N(0, std^2), tracked for gradients.
Tensor normal_parameter(Shape shape, double std, Rng& rng);

/// Affine map on the last axis: y = x W + b, W stored as [in, out].
class Linear {
 public:
  enum class Init { kScaledNormal, kZero };

  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, Init init = Init::kScaledNormal);

  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out) const;

  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }

  Tensor weight;
  Tensor bias;

 private:
  std::string name_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layernorm(x, gain, bias, eps); }
  void collect(ParameterList& out) const;

  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

 private:
  std::string name_;
};

/// Zeroes the gradient buffers of every parameter.
void zero_grad(const ParameterList& params);

}  // namespace ovgt
