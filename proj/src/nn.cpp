#include "catintell/nn.hpp"

#include <cmath>
#include <sstream>

#include "catintell/error.hpp"

namespace catintell {

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (in.fail()) fail(ErrorKind::DecodeError, "corrupt rng state");
}

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

Var ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) fail(ErrorKind::ConfigError, "duplicate parameter " + name);
  Var v = parameter(std::move(init));
  params_.push_back({name, v});
  return v;
}

Var ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  fail(ErrorKind::NotFound, "no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.var->value.size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

void ParamStore::set_trainable(bool on) {
  for (auto& p : params_) p.var->requires_grad = on;
}

std::vector<Tensor> ParamStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var->value);
  return out;
}

void ParamStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) fail(ErrorKind::ShapeError, "parameter snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i].shape() == params_[i].var->value.shape())) {
      fail(ErrorKind::ShapeError, "snapshot shape mismatch for " + params_[i].name);
    }
    params_[i].var->value = values[i];
  }
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  return uniform_tensor(shape, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

Adam::Adam(const ParamStore& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.var->value.shape(), 0.0);
    v_.emplace_back(p.var->value.shape(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& items = params_->items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    Node& node = *items[i].var;
    if (node.grad.empty()) continue;
    auto w = node.value.data();
    auto g = node.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double eps = cfg_.eps;
#pragma omp parallel for simd schedule(static) if (w.size() > 65536)
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
    }
    if (lr == 0.0) continue;
#pragma omp parallel for simd schedule(static) if (w.size() > 65536)
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.items()) {
    for (double g : p.var->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / (norm + 1e-12);
    for (const auto& p : params.items()) {
      for (double& g : p.var->grad.data()) g *= factor;
    }
  }
  return norm;
}

bool grads_finite(const ParamStore& params) {
  for (const auto& p : params.items()) {
    if (!p.var->grad.empty() && !p.var->grad.all_finite()) return false;
  }
  return true;
}

}  // namespace catintell
