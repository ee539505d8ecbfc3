#include "ovgt/nn.hpp"

#include <cmath>

namespace ovgt {

Tensor normal_parameter(Shape shape, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, Init init) : name_(std::move(name)) {
  if (init == Init::kZero) {
    weight = Tensor::zeros({in, out}, true);
  } else {
    weight = normal_parameter({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }
  bias = Tensor::zeros({out}, true);
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() == 1) return reshape(matmul(reshape(x, {1, x.numel()}), weight), {weight.size(1)}) + bias;
  return matmul(x, weight) + bias;
}

void Linear::collect(ParameterList& out) const {
  out.push_back({name_ + ".weight", weight});
  out.push_back({name_ + ".bias", bias});
}

LayerNorm::LayerNorm(std::string name, std::size_t dim)
    : gain(Tensor::full({dim}, 1.0, true)), bias(Tensor::zeros({dim}, true)), name_(std::move(name)) {}

void LayerNorm::collect(ParameterList& out) const {
  out.push_back({name_ + ".gain", gain});
  out.push_back({name_ + ".bias", bias});
}

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace ovgt
