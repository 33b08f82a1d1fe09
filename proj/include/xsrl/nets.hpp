#pragma once

#include "xsrl/autodiff.hpp"
#include "xsrl/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace xsrl {

enum class Act : std::uint8_t { kLinear, kLeakyRelu };

struct LayerSpec {
  Index in = 0;
  Index out = 0;
  Act act = Act::kLinear;
};

/// Ordered, named collection of parameter tensors for one model. Iteration
/// order is insertion order, which keeps serialization stable.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  std::size_t size() const { return keys_.size(); }

  Tensor& add(std::string key, Tensor t);
  Tensor& at(std::string_view key);
  const Tensor& at(std::string_view key) const;
  const std::string& key(std::size_t i) const { return keys_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

  std::vector<Tensor*> tensors();
  std::vector<LayerSpec>& layers() { return layers_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  /// Bitwise parameter copy from a structurally identical set.
  void copy_values_from(const ParamSet& other);
  bool values_equal(const ParamSet& other) const;

 private:
  std::string name_;
  std::vector<std::string> keys_;
  std::vector<Tensor> tensors_;
  std::vector<LayerSpec> layers_;
};

/// Binds parameter tensors into a tape as leaves, deduplicating by address so
/// a model used twice in one graph contributes a single leaf per tensor.
/// Trainable binds collect gradients; frozen binds never appear in the map.
class Bind {
 public:
  Bind(Tape& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}

  Var operator()(Tensor& t);
  bool trainable() const { return trainable_; }

  /// Gradients in bind order; also deposits each into the tensor's grad slot.
  std::vector<ArrayX> collect(const GradMap& gm) const;
  const std::vector<std::pair<Tensor*, Var>>& items() const { return items_; }
  std::vector<Tensor*> bound_tensors() const;

 private:
  Tape* tape_;
  bool trainable_;
  std::vector<std::pair<Tensor*, Var>> items_;
  std::unordered_map<const Tensor*, std::size_t> index_;
};

/// Glorot-uniform weight init, zero biases.
void glorot_init(Tensor& w, Rng& rng);

/// Plain dense network. Hidden layers use leaky ReLU; the final layer is
/// linear unless `final_activation` says otherwise.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, const std::vector<Index>& dims, Act final_activation, Rng& rng);

  Var forward(Tape& tape, Var x, Bind& bind) const;
  /// Convenience: forward with internally frozen parameters.
  Var forward_frozen(Tape& tape, Var x) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  Index in_dim() const { return params_.layers().front().in; }
  Index out_dim() const { return params_.layers().back().out; }

  void reinit(Rng& rng);

 private:
  // Bind is address-keyed, so forward needs mutable tensors even when frozen.
  mutable ParamSet params_;
};

// ---------------------------------------------------------------------------
// The state transition estimator and its companions

/// s_{t+1} = gamma([alpha(o_t), beta([s_t, a_t])]).
struct PhiNet {
  Mlp alpha, beta, gamma;
  Index obs_dim = 0, act_dim = 0, state_dim = 0;

  static PhiNet make(Index obs_dim, Index act_dim, Index state_dim,
                     const std::vector<Index>& alpha_hidden, std::uint64_t seed);

  Var forward(Tape& tape, Var o, Var s, Var a, Bind& bind) const;
  std::vector<Tensor*> tensors();
  std::size_t tensor_count() const;
};

/// Frozen copy of phi, delayed by the sampling period. Never receives
/// gradients; sync-age is tracked by the trainer in sampling-period units.
struct CloneHandle {
  Mlp alpha, beta, gamma;
  int sync_age = 0;

  static CloneHandle clone_of(const PhiNet& phi);
  void sync(const PhiNet& phi);
  Var forward(Tape& tape, Var o, Var s, Var a) const;
  bool matches(const PhiNet& phi) const;
};

/// Diagonal Gaussian policy: shared trunk, mean head, log-sigma head. The
/// log-sigma pre-activation is mapped smoothly into [ln 1e-3, ln 2] before
/// exponentiation, so sigma is positive and bounded by construction.
struct PolicyNet {
  Mlp trunk;
  Mlp mu_head;
  Mlp sigma_head;
  Index state_dim = 0, act_dim = 0;

  static constexpr Scalar kLogSigMin = -6.907755278982137;  // ln 1e-3
  static constexpr Scalar kLogSigMax = 0.6931471805599453;  // ln 2

  static PolicyNet make(std::string name, Index state_dim, Index act_dim, std::uint64_t seed);

  struct Heads {
    Var mu, sigma;
  };
  Heads heads(Tape& tape, Var state, Bind& bind) const;

  struct Sampled {
    Var action;   // mu + noise * sigma (pre-clip; the env clips)
    Var log_pi;   // diagonal Gaussian log density at the action
    Var mu, sigma;
  };
  /// Reparametrized sample: noise is an externally drawn standard-normal
  /// tensor of the same shape as the action batch.
  Sampled sample(Tape& tape, Var state, const Tensor& noise, Bind& bind) const;

  std::vector<Tensor*> tensors();
  void reinit(std::uint64_t seed);
};

/// Two discovery policies trained in parallel; the weaker one is reset.
struct PolicyPair {
  PolicyNet policy[2];
  Scalar score_sum[2] = {0, 0};
  long score_count[2] = {0, 0};

  void zero_scores();
};

// Model factories matching the published layer sizes.
Mlp make_omega(Index state_dim, Index obs_dim, const std::vector<Index>& hidden,
               std::uint64_t seed);
Mlp make_inverse(Index state_dim, Index act_dim, std::uint64_t seed);

}  // namespace xsrl
