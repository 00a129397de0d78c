#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "splatforge/numerics/tensor.hpp"

namespace splatforge {

using Rng = std::mt19937_64;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named learnable tensors plus Adam state.
///
/// Iteration order is lexicographic by name, which fixes the order of every
/// reduction the optimizer and the gradient checker perform.
class ParamStore {
 public:
  /// Registers a parameter; the name must be new.
  const Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void set_values(std::string_view name, std::span<const double> values);
  void zero_grad();

  std::uint64_t step_count() const { return step_; }

  struct Entry {
    Tensor tensor;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
  };
  const std::map<std::string, Entry, std::less<>>& entries() const { return entries_; }

 private:
  friend void adam_step(ParamStore&, const AdamConfig&);
  Entry& entry(std::string_view name);

  std::map<std::string, Entry, std::less<>> entries_;
  std::uint64_t step_ = 0;
};

/// Gradient per parameter name, same length as the parameter.
using GradientSet = std::map<std::string, std::vector<double>, std::less<>>;

/// Clears parameter gradients, runs backward from `loss`, and returns the
/// gradient of every parameter (zero for parameters the loss never touched).
GradientSet grad(const Tensor& loss, ParamStore& store);

/// One bias-corrected Adam update from the accumulated gradients, which are
/// zeroed afterwards.
void adam_step(ParamStore& store, const AdamConfig& config);

using ScalarFunction = std::function<Tensor(const ParamStore&)>;

/// Max over all parameter scalars of |analytic - central difference| /
/// max(1, |analytic|). Throws ValidationError if two evaluations at the same
/// point disagree.
double check_gradients(const ScalarFunction& f, ParamStore& store, double h = 1e-5);

/// Glorot-uniform values for a weight with the given fan-in/fan-out.
std::vector<double> glorot_uniform(Rng& rng, std::size_t count, std::size_t fan_in,
                                   std::size_t fan_out, double gain = 1.0);

void save_params(const ParamStore& store, const std::filesystem::path& path);
/// Loads values into an existing store; names and shapes must match exactly.
void load_params(ParamStore& store, const std::filesystem::path& path);

}  // namespace splatforge
