#include "vidret/params.hpp"

#include <cmath>

namespace vidret {

Parameter& ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name) != 0) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw Error("unknown parameter: " + std::string(name));
  }
  return *params_[it->second];
}

const Parameter& ParamStore::get(std::string_view name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

bool ParamStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->trainable) n += p->size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

void init_fan_in(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      p.value(r, c) = dist(rng);
    }
  }
}

void init_constant(Parameter& p, double value) { p.value.setConstant(value); }

}  // namespace vidret
