#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tae {

/// Which side of the encoder/decoder split a parameter belongs to. Gradient
/// routing on the monolingual branch acts on this label.
enum class Partition { encoder, decoder, shared_embedding };

std::string_view to_string(Partition p);
Partition partition_from_string(std::string_view s);

template <typename T>
struct Parameter {
  std::string name;
  Partition partition;
  int rows = 0;
  int cols = 0;
  std::vector<T> value;
  std::vector<T> grad;
  // Set when a tape routed gradient into `grad` since the last zero_grad().
  bool touched = false;

  std::size_t size() const { return value.size(); }
};

/// Owns every parameter of a model under a unique name. Addresses are stable
/// for the lifetime of the store.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<T>& add(std::string name, Partition partition, int rows, int cols);

  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t count_values() const;
  void zero_grad();

  /// Copies values from a store with identical names and shapes.
  template <typename U>
  void copy_values_from(const ParameterStore<U>& other);

 private:
  std::deque<Parameter<T>> params_;
};

template <typename T>
template <typename U>
void ParameterStore<T>::copy_values_from(const ParameterStore<U>& other) {
  if (other.size() != size()) throw std::invalid_argument("parameter stores differ in size");
  for (std::size_t i = 0; i < size(); ++i) {
    auto& dst = params_[i];
    const auto& src = other[i];
    if (dst.name != src.name || dst.rows != src.rows || dst.cols != src.cols)
      throw std::invalid_argument("parameter mismatch at " + dst.name);
    for (std::size_t j = 0; j < dst.value.size(); ++j) dst.value[j] = static_cast<T>(src.value[j]);
  }
}

}  // namespace tae
