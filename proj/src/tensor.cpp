#include "ntrf/tensor.hpp"

#include <cmath>

#include "ntrf/common.hpp"

namespace ntrf {

std::size_t total_size(const std::vector<TensorRef>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

std::size_t total_size(const std::vector<ConstTensorRef>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

double squared_norm(const std::vector<ConstTensorRef>& tensors) {
  double s = 0.0;
  for (const auto& t : tensors) {
    for (double v : t.values) s += v * v;
  }
  return s;
}

std::vector<double> flatten(const std::vector<ConstTensorRef>& tensors) {
  std::vector<double> flat;
  flat.reserve(total_size(tensors));
  for (const auto& t : tensors) flat.insert(flat.end(), t.values.begin(), t.values.end());
  return flat;
}

void assign(const std::vector<TensorRef>& tensors, std::span<const double> flat) {
  if (flat.size() != total_size(tensors)) throw Error("assign: flat size mismatch");
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    for (auto& v : t.values) v = flat[offset++];
  }
}

std::string first_non_finite(const std::vector<ConstTensorRef>& tensors) {
  for (const auto& t : tensors) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return t.name;
    }
  }
  return {};
}

nlohmann::json tensors_to_json(const std::vector<ConstTensorRef>& tensors) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : tensors) {
    out.push_back({{"name", t.name},
                   {"shape", {t.rows, t.cols}},
                   {"data", std::vector<double>(t.values.begin(), t.values.end())}});
  }
  return out;
}

void tensors_from_json(const nlohmann::json& doc, const std::vector<TensorRef>& tensors) {
  if (!doc.is_array() || doc.size() != tensors.size()) {
    throw Error("tensor list has " + std::to_string(doc.size()) + " entries, expected " +
                std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& entry = doc[i];
    const auto& t = tensors[i];
    try {
      if (entry.at("name").get<std::string>() != t.name) {
        throw Error("tensor '" + entry.at("name").get<std::string>() + "' found where '" + t.name +
                    "' was expected");
      }
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols) {
        throw Error("tensor '" + t.name + "' has the wrong shape");
      }
      const auto data = entry.at("data").get<std::vector<double>>();
      if (data.size() != t.values.size()) throw Error("tensor '" + t.name + "' has the wrong size");
      std::copy(data.begin(), data.end(), t.values.begin());
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed tensor entry '" + t.name + "': " + e.what());
    }
  }
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw Error("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void Adam::step(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grad,
                double lr) {
  if (params.size() != grad.size() || total_size(params) != m_.size()) {
    throw Error("Adam: parameter layout mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto p = params[j].values;
    auto g = grad[j].values;
    if (p.size() != g.size()) throw Error("Adam: tensor '" + params[j].name + "' size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g[i];
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
  }
}

void sgd_step(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grad,
              double lr) {
  if (params.size() != grad.size()) throw Error("sgd_step: parameter layout mismatch");
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto p = params[j].values;
    auto g = grad[j].values;
    if (p.size() != g.size()) throw Error("sgd_step: tensor '" + params[j].name + "' size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
}

}  // namespace ntrf
