#include "splatforge/numerics/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "splatforge/errors.hpp"

namespace splatforge {

const Tensor& ParamStore::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (entries_.contains(name)) throw ValidationError("duplicate parameter: " + name);
  Entry e;
  e.tensor = Tensor::parameter(std::move(shape), std::move(values));
  e.first_moment.assign(e.tensor.numel(), 0.0);
  e.second_moment.assign(e.tensor.numel(), 0.0);
  detail::mutable_grad(e.tensor);
  return entries_.emplace(name, std::move(e)).first->second.tensor;
}

ParamStore::Entry& ParamStore::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter: " + std::string(name));
  return it->second;
}

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter: " + std::string(name));
  return it->second.tensor;
}

bool ParamStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::set_values(std::string_view name, std::span<const double> values) {
  Entry& e = entry(name);
  auto& dst = detail::mutable_values(e.tensor);
  if (values.size() != dst.size()) {
    throw ValidationError("parameter " + std::string(name) + ": expected " + std::to_string(dst.size()) +
                          " values, got " + std::to_string(values.size()));
  }
  detail::require_finite("set_values", values);
  std::copy(values.begin(), values.end(), dst.begin());
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) {
    auto& g = detail::mutable_grad(e.tensor);
    std::fill(g.begin(), g.end(), 0.0);
  }
}

GradientSet grad(const Tensor& loss, ParamStore& store) {
  if (!loss.defined() || loss.numel() != 1) throw ValidationError("grad needs a scalar loss");
  store.zero_grad();
  backward(loss);
  GradientSet out;
  for (const auto& [name, e] : store.entries()) {
    out.emplace(name, std::vector<double>(e.tensor.grad().begin(), e.tensor.grad().end()));
  }
  return out;
}

void adam_step(ParamStore& store, const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw ValidationError("adam: learning rate must be positive");
  if (!(config.eps > 0.0)) throw ValidationError("adam: epsilon must be positive");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw ValidationError("adam: betas must lie in [0, 1)");
  }
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [_, e] : store.entries_) {
    auto& values = detail::mutable_values(e.tensor);
    auto& g = detail::mutable_grad(e.tensor);
    for (std::size_t i = 0; i < values.size(); ++i) {
      e.first_moment[i] = config.beta1 * e.first_moment[i] + (1.0 - config.beta1) * g[i];
      e.second_moment[i] = config.beta2 * e.second_moment[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = e.first_moment[i] / c1;
      const double v_hat = e.second_moment[i] / c2;
      values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    std::fill(g.begin(), g.end(), 0.0);
  }
}

double check_gradients(const ScalarFunction& f, ParamStore& store, double h) {
  if (!(h > 0.0)) throw ValidationError("check_gradients: step must be positive");
  Tensor loss = f(store);
  const double base = loss.item();
  if (f(store).item() != base) throw ValidationError("check_gradients: function is not deterministic");
  GradientSet analytic = grad(loss, store);

  double worst = 0.0;
  for (const auto& name : store.names()) {
    std::vector<double> values(store.get(name).values().begin(), store.get(name).values().end());
    const auto& g = analytic.at(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      store.set_values(name, values);
      const double plus = f(store).item();
      values[i] = original - h;
      store.set_values(name, values);
      const double minus = f(store).item();
      values[i] = original;
      store.set_values(name, values);
      const double numeric = (plus - minus) / (2.0 * h);
      worst = std::max(worst, std::fabs(g[i] - numeric) / std::max(1.0, std::fabs(g[i])));
    }
  }
  store.zero_grad();
  return worst;
}

std::vector<double> glorot_uniform(Rng& rng, std::size_t count, std::size_t fan_in, std::size_t fan_out,
                                   double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> out(count);
  for (double& v : out) v = dist(rng);
  return out;
}

void save_params(const ParamStore& store, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["step"] = store.step_count();
  auto& params = doc["params"];
  params = nlohmann::json::object();
  for (const auto& [name, e] : store.entries()) {
    params[name] = {{"shape", e.tensor.shape()},
                    {"values", std::vector<double>(e.tensor.values().begin(), e.tensor.values().end())}};
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write parameters to " + path.string());
  out << doc.dump();
  if (!out) throw IoError("failed writing parameters to " + path.string());
}

void load_params(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read parameters from " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed parameter file " + path.string() + ": " + e.what());
  }
  try {
    const auto& params = doc.at("params");
    if (params.size() != store.size()) {
      throw ValidationError("parameter file " + path.string() + " has " + std::to_string(params.size()) +
                            " tensors, model expects " + std::to_string(store.size()));
    }
    for (const auto& name : store.names()) {
      if (!params.contains(name)) throw ValidationError("parameter file lacks " + name);
      const auto& p = params.at(name);
      auto shape = p.at("shape").get<Shape>();
      if (shape != store.get(name).shape()) {
        throw ValidationError("parameter " + name + " has shape " + shape_string(shape) + ", expected " +
                              shape_string(store.get(name).shape()));
      }
      store.set_values(name, p.at("values").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed parameter file " + path.string() + ": " + e.what());
  }
}

}  // namespace splatforge
