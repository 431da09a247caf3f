#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace ntrf {

/// A named view of one parameter array. Eigen storage is column-major;
/// `values` follows that order.
struct TensorRef {
  std::string name;
  std::span<double> values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

struct ConstTensorRef {
  std::string name;
  std::span<const double> values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

template <class Derived>
TensorRef tensor_ref(std::string name, Eigen::PlainObjectBase<Derived>& m) {
  return {std::move(name), std::span<double>(m.data(), static_cast<std::size_t>(m.size())),
          m.rows(), m.cols()};
}

template <class Derived>
ConstTensorRef tensor_ref(std::string name, const Eigen::PlainObjectBase<Derived>& m) {
  return {std::move(name),
          std::span<const double>(m.data(), static_cast<std::size_t>(m.size())), m.rows(),
          m.cols()};
}

std::size_t total_size(const std::vector<TensorRef>& tensors);
std::size_t total_size(const std::vector<ConstTensorRef>& tensors);
double squared_norm(const std::vector<ConstTensorRef>& tensors);
std::vector<double> flatten(const std::vector<ConstTensorRef>& tensors);
void assign(const std::vector<TensorRef>& tensors, std::span<const double> flat);

/// Name of the first tensor holding a non-finite value, or empty.
std::string first_non_finite(const std::vector<ConstTensorRef>& tensors);

/// {"name", "shape": [rows, cols], "data": [...]} per tensor.
nlohmann::json tensors_to_json(const std::vector<ConstTensorRef>& tensors);
/// Fills `tensors` from `doc`; names and shapes must match exactly.
void tensors_from_json(const nlohmann::json& doc, const std::vector<TensorRef>& tensors);

/// Adam with the usual bias correction, over a fixed list of tensors.
class Adam {
 public:
  explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// params -= lr * adam(grad).
  void step(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grad,
            double lr);
  void step(std::span<double> params, std::span<const double> grad, double lr);

 private:
  double beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// params -= lr * grad.
void sgd_step(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grad,
              double lr);

}  // namespace ntrf
