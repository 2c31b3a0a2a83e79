#include "lrpabn/binding.hpp"

namespace lrpabn {

Var ParamBinding::operator()(std::string_view name) {
  if (auto it = cache_.find(name); it != cache_.end()) return it->second;
  Var v = mutable_ ? tape_.parameter(mutable_->get(name)) : tape_.frozen(frozen_->get(name).value);
  cache_.emplace(std::string(name), v);
  return v;
}

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace lrpabn
