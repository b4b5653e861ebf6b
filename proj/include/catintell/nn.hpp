#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "catintell/autograd.hpp"

namespace catintell {

using Rng = std::mt19937_64;

std::string rng_state(const Rng& rng);
void restore_rng(Rng& rng, const std::string& state);
// Independent stream for a named purpose, derived from a base seed.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

struct NamedParam {
  std::string name;
  Var var;
};

// Ordered collection of trainable tensors. Registration order is the
// serialization and optimizer order.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<NamedParam>& items() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();
  void set_trainable(bool on);

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<NamedParam> params_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng);
Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg = {});

  void step(double lr);
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  const ParamStore* params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping; max_norm <= 0 disables the rescale.
double clip_grad_norm(ParamStore& params, double max_norm);
bool grads_finite(const ParamStore& params);

}  // namespace catintell
