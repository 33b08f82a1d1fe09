#include "xsrl/nets.hpp"

#include <stdexcept>

namespace xsrl {

// ---------------------------------------------------------------------------
// ParamSet

Tensor& ParamSet::add(std::string key, Tensor t) {
  keys_.push_back(std::move(key));
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

Tensor& ParamSet::at(std::string_view key) {
  for (std::size_t i = 0; i < keys_.size(); ++i)
    if (keys_[i] == key) return tensors_[i];
  throw std::out_of_range("ParamSet '" + name_ + "': no parameter named " + std::string(key));
}

const Tensor& ParamSet::at(std::string_view key) const {
  return const_cast<ParamSet*>(this)->at(key);
}

std::vector<Tensor*> ParamSet::tensors() {
  std::vector<Tensor*> out;
  out.reserve(tensors_.size());
  for (auto& t : tensors_) out.push_back(&t);
  return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.size() != size())
    throw std::invalid_argument("ParamSet::copy_values_from: entry count mismatch");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i]))
      throw std::invalid_argument("ParamSet::copy_values_from: shape mismatch at " + keys_[i]);
    tensors_[i].data() = other.tensors_[i].data();
  }
}

bool ParamSet::values_equal(const ParamSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i])) return false;
    if ((tensors_[i].data() != other.tensors_[i].data()).any()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Bind

Var Bind::operator()(Tensor& t) {
  auto it = index_.find(&t);
  if (it != index_.end()) return items_[it->second].second;
  Var v = tape_->leaf(t, trainable_);
  index_.emplace(&t, items_.size());
  items_.emplace_back(&t, v);
  return v;
}

std::vector<ArrayX> Bind::collect(const GradMap& gm) const {
  std::vector<ArrayX> out;
  out.reserve(items_.size());
  for (const auto& [tensor, var] : items_) {
    out.push_back(gm.at(var));
    tensor->grad = out.back();
  }
  return out;
}

std::vector<Tensor*> Bind::bound_tensors() const {
  std::vector<Tensor*> out;
  out.reserve(items_.size());
  for (const auto& [tensor, var] : items_) out.push_back(tensor);
  return out;
}

// ---------------------------------------------------------------------------
// Mlp

void glorot_init(Tensor& w, Rng& rng) {
  const Scalar bound = std::sqrt(6.0 / static_cast<Scalar>(w.rows() + w.cols()));
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
}

Mlp::Mlp(std::string name, const std::vector<Index>& dims, Act final_activation, Rng& rng)
    : params_(std::move(name)) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = l + 2 == dims.size();
    LayerSpec spec{dims[l], dims[l + 1], last ? final_activation : Act::kLeakyRelu};
    params_.layers().push_back(spec);
    Tensor w = Tensor::zeros({spec.in, spec.out});
    glorot_init(w, rng);
    params_.add("W" + std::to_string(l), std::move(w));
    params_.add("b" + std::to_string(l), Tensor::zeros({spec.out}));
  }
}

Var Mlp::forward(Tape& tape, Var x, Bind& bind) const {
  const auto& layers = params_.layers();
  if (tape.value(x).cols() != layers.front().in)
    shape_error("affine", "Mlp '" + params_.name() + "' expects input dim " +
                              std::to_string(layers.front().in) + ", got " +
                              tape.value(x).shape_str());
  Var h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Var w = bind(params_.tensor(2 * l));
    Var b = bind(params_.tensor(2 * l + 1));
    h = tape.affine(h, w, b);
    if (layers[l].act == Act::kLeakyRelu) h = tape.leaky_relu(h);
  }
  return h;
}

Var Mlp::forward_frozen(Tape& tape, Var x) const {
  Bind frozen(tape, false);
  return forward(tape, x, frozen);
}

void Mlp::reinit(Rng& rng) {
  const auto& layers = params_.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    glorot_init(params_.tensor(2 * l), rng);
    params_.tensor(2 * l + 1).data().setZero();
  }
}

// ---------------------------------------------------------------------------
// PhiNet

PhiNet PhiNet::make(Index obs_dim, Index act_dim, Index state_dim,
                    const std::vector<Index>& alpha_hidden, std::uint64_t seed) {
  PhiNet phi;
  phi.obs_dim = obs_dim;
  phi.act_dim = act_dim;
  phi.state_dim = state_dim;

  constexpr Index kAlphaOut = 30;
  std::vector<Index> alpha_dims{obs_dim};
  alpha_dims.insert(alpha_dims.end(), alpha_hidden.begin(), alpha_hidden.end());
  alpha_dims.push_back(kAlphaOut);

  const Index sa = state_dim + act_dim;
  Rng ra(derive_seed(seed, "init:alpha"));
  Rng rb(derive_seed(seed, "init:beta"));
  Rng rg(derive_seed(seed, "init:gamma"));
  phi.alpha = Mlp("alpha", alpha_dims, Act::kLinear, ra);
  phi.beta = Mlp("beta", {sa, 128, 512, 32, sa}, Act::kLinear, rb);
  phi.gamma = Mlp("gamma", {kAlphaOut + sa, 128, 512, 128, state_dim}, Act::kLinear, rg);
  return phi;
}

Var PhiNet::forward(Tape& tape, Var o, Var s, Var a, Bind& bind) const {
  Var ao = alpha.forward(tape, o, bind);
  Var sa = tape.concat(s, a);
  Var bsa = beta.forward(tape, sa, bind);
  return gamma.forward(tape, tape.concat(ao, bsa), bind);
}

std::vector<Tensor*> PhiNet::tensors() {
  std::vector<Tensor*> out;
  for (Mlp* m : {&alpha, &beta, &gamma})
    for (Tensor* t : m->params().tensors()) out.push_back(t);
  return out;
}

std::size_t PhiNet::tensor_count() const {
  return alpha.params().size() + beta.params().size() + gamma.params().size();
}

// ---------------------------------------------------------------------------
// CloneHandle

CloneHandle CloneHandle::clone_of(const PhiNet& phi) {
  CloneHandle c;
  c.alpha = phi.alpha;
  c.beta = phi.beta;
  c.gamma = phi.gamma;
  c.sync_age = 0;
  return c;
}

void CloneHandle::sync(const PhiNet& phi) {
  alpha.params().copy_values_from(phi.alpha.params());
  beta.params().copy_values_from(phi.beta.params());
  gamma.params().copy_values_from(phi.gamma.params());
  sync_age = 0;
}

Var CloneHandle::forward(Tape& tape, Var o, Var s, Var a) const {
  Bind frozen(tape, false);
  Var ao = alpha.forward(tape, o, frozen);
  Var bsa = beta.forward(tape, tape.concat(s, a), frozen);
  return gamma.forward(tape, tape.concat(ao, bsa), frozen);
}

bool CloneHandle::matches(const PhiNet& phi) const {
  return alpha.params().values_equal(phi.alpha.params()) &&
         beta.params().values_equal(phi.beta.params()) &&
         gamma.params().values_equal(phi.gamma.params());
}

// ---------------------------------------------------------------------------
// PolicyNet

PolicyNet PolicyNet::make(std::string name, Index state_dim, Index act_dim, std::uint64_t seed) {
  PolicyNet p;
  p.state_dim = state_dim;
  p.act_dim = act_dim;
  Rng rt(derive_seed(seed, "init:" + name + ":trunk"));
  Rng rm(derive_seed(seed, "init:" + name + ":mu"));
  Rng rs(derive_seed(seed, "init:" + name + ":sigma"));
  p.trunk = Mlp(name + "/trunk", {state_dim, 128, 512, 128}, Act::kLeakyRelu, rt);
  p.mu_head = Mlp(name + "/mu", {128, act_dim}, Act::kLinear, rm);
  p.sigma_head = Mlp(name + "/sigma", {128, act_dim}, Act::kLinear, rs);
  return p;
}

PolicyNet::Heads PolicyNet::heads(Tape& tape, Var state, Bind& bind) const {
  Var h = trunk.forward(tape, state, bind);
  Var mu = mu_head.forward(tape, h, bind);
  Var pre = sigma_head.forward(tape, h, bind);

  // Smooth two-sided clamp of log-sigma into (lo, hi):
  //   lo + softplus(x - lo) - softplus(x - hi)
  const Tensor& pv = tape.value(pre);
  Var lo = tape.leaf(Tensor::full(pv.shape(), kLogSigMin));
  Var hi = tape.leaf(Tensor::full(pv.shape(), kLogSigMax));
  Var clamped = tape.sub(tape.add(lo, tape.softplus(tape.sub(pre, lo))),
                         tape.softplus(tape.sub(pre, hi)));
  Var sigma = tape.exp(clamped);
  return {mu, sigma};
}

PolicyNet::Sampled PolicyNet::sample(Tape& tape, Var state, const Tensor& noise,
                                     Bind& bind) const {
  Heads h = heads(tape, state, bind);
  const Tensor& mu = tape.value(h.mu);
  if (!mu.same_shape(noise))
    shape_error("mul", "policy noise " + noise.shape_str() + " vs mean " + mu.shape_str());
  Var eps = tape.leaf(noise);
  Var action = tape.add(h.mu, tape.mul(eps, h.sigma));
  Var log_pi = tape.gauss_log_pdf(action, h.mu, h.sigma);
  return {action, log_pi, h.mu, h.sigma};
}

std::vector<Tensor*> PolicyNet::tensors() {
  std::vector<Tensor*> out;
  for (Mlp* m : {&trunk, &mu_head, &sigma_head})
    for (Tensor* t : m->params().tensors()) out.push_back(t);
  return out;
}

void PolicyNet::reinit(std::uint64_t seed) {
  Rng rt(derive_seed(seed, "init:" + trunk.params().name()));
  Rng rm(derive_seed(seed, "init:" + mu_head.params().name()));
  Rng rs(derive_seed(seed, "init:" + sigma_head.params().name()));
  trunk.reinit(rt);
  mu_head.reinit(rm);
  sigma_head.reinit(rs);
}

void PolicyPair::zero_scores() {
  score_sum[0] = score_sum[1] = 0;
  score_count[0] = score_count[1] = 0;
}

// ---------------------------------------------------------------------------
// Factories

Mlp make_omega(Index state_dim, Index obs_dim, const std::vector<Index>& hidden,
               std::uint64_t seed) {
  std::vector<Index> dims{state_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(obs_dim);
  Rng r(derive_seed(seed, "init:omega"));
  return Mlp("omega", dims, Act::kLinear, r);
}

Mlp make_inverse(Index state_dim, Index act_dim, std::uint64_t seed) {
  Rng r(derive_seed(seed, "init:inv"));
  return Mlp("inv", {2 * state_dim, 128, 512, 128, act_dim}, Act::kLinear, r);
}

}  // namespace xsrl
