#include "tae/parameters.hpp"

#include <algorithm>

namespace tae {

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::encoder: return "encoder";
    case Partition::decoder: return "decoder";
    case Partition::shared_embedding: return "shared_embedding";
  }
  return "?";
}

Partition partition_from_string(std::string_view s) {
  if (s == "encoder") return Partition::encoder;
  if (s == "decoder") return Partition::decoder;
  if (s == "shared_embedding") return Partition::shared_embedding;
  throw std::invalid_argument("unknown partition: " + std::string(s));
}

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Partition partition, int rows, int cols) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("empty parameter shape: " + name);
  auto& p = params_.emplace_back();
  p.name = std::move(name);
  p.partition = partition;
  p.rows = rows;
  p.cols = cols;
  p.value.assign(static_cast<std::size_t>(rows) * cols, T(0));
  p.grad.assign(p.value.size(), T(0));
  return p;
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
std::size_t ParameterStore<T>::count_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) {
    std::fill(p.grad.begin(), p.grad.end(), T(0));
    p.touched = false;
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace tae
