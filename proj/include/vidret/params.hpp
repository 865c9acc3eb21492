#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vidret {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Owns all parameters of a model. Insertion order is stable and is the
/// order used by the optimizer, checkpoints and gradient checks.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Eigen::Index rows, Eigen::Index cols);

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

  /// Total number of trainable scalars.
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_fan_in(Parameter& p, std::size_t fan_in, Rng& rng);
void init_constant(Parameter& p, double value);

}  // namespace vidret
