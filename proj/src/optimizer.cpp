#include "mcf/optimizer.hpp"

#include <cmath>

namespace mcf {

template <typename T>
void Sgd<T>::step(ParameterSet<T>& params, double lr) {
  auto& list = params.parameters();
  for (const auto& p : list) {
    for (T g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("sgd: non-finite gradient in " + p.name);
    }
  }
  if (velocity_.size() != list.size()) {
    velocity_.assign(list.size(), {});
    for (std::size_t i = 0; i < list.size(); ++i) velocity_[i].assign(list[i].value.numel(), T(0));
  }
  const T mu = static_cast<T>(options_.momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto& p = list[i];
    if (velocity_[i].size() != p.value.numel()) throw ShapeError("sgd: parameter set changed shape");
    const T decay = p.weight_decay ? static_cast<T>(options_.weight_decay) : T(0);
    auto values = p.value.mutable_data();
    const auto grad = p.value.grad();
    const bool has_grad = !grad.empty();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = has_grad ? grad[j] : T(0);
      v[j] = mu * v[j] + g + decay * values[j];
      values[j] -= rate * v[j];
    }
  }
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace mcf
