#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "obsmae/core/error.hpp"
#include "obsmae/core/random.hpp"

namespace obsmae::model {

/// Row-major dynamic matrix; tokens are rows throughout the model.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using ParamId = std::size_t;

/// Named parameter tensors in registration order. Layers refer to entries by ParamId.
template <class S>
class ParamSet {
 public:
  ParamId add(const std::string& name, std::size_t rows, std::size_t cols) {
    require(index_.count(name) == 0, "duplicate parameter '" + name + "'");
    index_[name] = values_.size();
    names_.push_back(name);
    values_.emplace_back(Mat<S>::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  Mat<S>& operator[](ParamId id) { return values_[id]; }
  const Mat<S>& operator[](ParamId id) const { return values_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  const std::vector<std::string>& names() const { return names_; }

  ParamId id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& v : values_)
      if (!v.allFinite()) return false;
    return true;
  }

  /// Same-shaped zero tensors, used as a gradient accumulator.
  ParamSet zeros_like() const {
    ParamSet g = *this;
    for (auto& v : g.values_) v.setZero();
    return g;
  }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  template <class T>
  ParamSet<T> cast() const {
    ParamSet<T> out;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      out.add(names_[i], static_cast<std::size_t>(values_[i].rows()), static_cast<std::size_t>(values_[i].cols()));
      out[i] = values_[i].template cast<T>();
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<S>> values_;
  std::map<std::string, ParamId> index_;
};

template <class S>
void init_xavier(Mat<S>& w, core::Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(u(rng));
}

template <class S>
void init_normal(Mat<S>& w, core::Rng& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(n(rng));
}

}  // namespace obsmae::model
