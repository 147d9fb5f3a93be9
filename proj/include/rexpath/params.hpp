#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "rexpath/common.hpp"
#include "rexpath/tensor.hpp"

namespace rexpath {

template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  bool decay = true;  // subject to decoupled weight decay
};

// Every trainable array, registered exactly once under a unique name. The
// gradient of each array always has the value's shape.
template <typename S>
class ParamStore {
 public:
  using Handle = std::size_t;

  Handle add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool decay = true) {
    if (index_.count(name)) throw std::logic_error("parameter registered twice: " + name);
    Param<S> p;
    p.name = name;
    p.value = Mat<S>::Zero(rows, cols);
    p.grad = Mat<S>::Zero(rows, cols);
    p.decay = decay;
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Param<S>& operator[](Handle h) { return params_[h]; }
  const Param<S>& operator[](Handle h) const { return params_[h]; }

  Param<S>& at(const std::string& name) { return params_.at(index_.at(name)); }
  const Param<S>& at(const std::string& name) const { return params_.at(index_.at(name)); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Mat<S>& value(Handle h) { return params_[h].value; }
  const Mat<S>& value(Handle h) const { return params_[h].value; }
  Mat<S>& grad(Handle h) { return params_[h].grad; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_) s += static_cast<double>(p.grad.squaredNorm());
    return std::sqrt(s);
  }

  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& p : params_) {
      auto h = out.add(p.name, p.value.rows(), p.value.cols(), p.decay);
      out[h].value = p.value.template cast<T>();
    }
    return out;
  }

  // Copies values (not gradients) from a store with identical layout.
  template <typename T>
  void assign_values(const ParamStore<T>& other) {
    for (auto& p : params_) {
      const auto& src = other.at(p.name);
      if (src.value.rows() != p.value.rows() || src.value.cols() != p.value.cols()) {
        throw Error(ErrorKind::kHashMismatch, "shape mismatch for parameter " + p.name);
      }
      p.value = src.value.template cast<S>();
    }
  }

 private:
  std::vector<Param<S>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Truncated normal (|z| <= 2), std `std`.
template <typename S>
void truncated_normal_fill(Mat<S>& m, Rng& rng, double std) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z;
    do {
      // Box-Muller on the portable uniform keeps draws identical across libraries.
      const double u1 = std::max(uniform_unit(rng), 1e-300);
      const double u2 = uniform_unit(rng);
      z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    } while (std::abs(z) > 2.0);
    m.data()[i] = static_cast<S>(z * std);
  }
}

}  // namespace rexpath
