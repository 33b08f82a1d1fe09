#include "xsrl/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace xsrl {

namespace {

constexpr Scalar kHalfLog2Pi = 0.9189385332046727417803297;  // 0.5*ln(2*pi)

Index shape_product(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: shape dimensions must be positive");
    n *= d;
  }
  return n;
}

// Stable softplus and its derivative.
inline Scalar softplus_fwd(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}
inline Scalar sigmoid(Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::vector<Index> shape) {
  Tensor t;
  const Index n = shape_product(shape);
  t.shape_ = std::move(shape);
  t.data_ = ArrayX::Zero(n);
  return t;
}

Tensor Tensor::full(std::vector<Index> shape, Scalar v) {
  Tensor t = zeros(std::move(shape));
  t.data_.setConstant(v);
  return t;
}

Tensor Tensor::scalar(Scalar v) { return full({1}, v); }

Tensor Tensor::row(const ArrayX& v) {
  Tensor t;
  t.shape_ = {v.size()};
  t.data_ = v;
  return t;
}

Tensor Tensor::from(std::vector<Index> shape, ArrayX data) {
  if (shape_product(shape) != data.size())
    throw std::invalid_argument("Tensor: shape does not match data length");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

void shape_error(const std::string& prim, const std::string& detail) {
  throw std::invalid_argument("autodiff: " + prim + ": shape mismatch: " + detail);
}

// ---------------------------------------------------------------------------
// GradMap

const ArrayX& GradMap::at(Var v) const {
  auto it = index_.find(v.id);
  if (it == index_.end()) throw std::out_of_range("GradMap: no gradient for node " + std::to_string(v.id));
  return entries_[it->second].second;
}

void GradMap::insert(std::int32_t id, ArrayX g) {
  index_.emplace(id, entries_.size());
  entries_.emplace_back(id, std::move(g));
}

// ---------------------------------------------------------------------------
// Tape forward

std::size_t Tape::check(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::out_of_range("Tape: invalid node id");
  return static_cast<std::size_t>(v.id);
}

Var Tape::push(Op op, std::initializer_list<Var> ins, Tensor value, Scalar c0) {
  Node n;
  n.op = op;
  n.nin = static_cast<int>(ins.size());
  int i = 0;
  for (Var v : ins) n.in[i++] = static_cast<std::int32_t>(check(v));
  n.value = std::move(value);
  n.c0 = c0;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(const Tensor& t, bool trainable) {
  Node n;
  n.op = Op::kLeaf;
  n.value = t;
  n.trainable = trainable;
  n.value.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::affine(Var xv, Var wv, Var bv) {
  const Tensor& x = value(xv);
  const Tensor& w = value(wv);
  const Tensor& b = value(bv);
  if (w.rank() != 2) shape_error("affine", "weight must be rank 2, got " + w.shape_str());
  if (b.rank() != 1 || b.cols() != w.cols())
    shape_error("affine", "bias " + b.shape_str() + " vs weight " + w.shape_str());
  if (x.cols() != w.rows())
    shape_error("affine", "input " + x.shape_str() + " vs weight " + w.shape_str());

  Tensor y = x.rank() == 2 ? Tensor::zeros({x.rows(), w.cols()}) : Tensor::zeros({w.cols()});
  y.mat().noalias() = x.mat() * w.mat();
  y.mat().rowwise() += b.mat().row(0);
  return push(Op::kAffine, {xv, wv, bv}, std::move(y));
}

Var Tape::concat(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (a.rank() != b.rank() || a.rows() != b.rows())
    shape_error("concat", a.shape_str() + " vs " + b.shape_str());
  Tensor y = a.rank() == 2 ? Tensor::zeros({a.rows(), a.cols() + b.cols()})
                           : Tensor::zeros({a.cols() + b.cols()});
  y.mat().leftCols(a.cols()) = a.mat();
  y.mat().rightCols(b.cols()) = b.mat();
  return push(Op::kConcat, {av, bv}, std::move(y));
}

Var Tape::leaky_relu(Var xv, Scalar slope) {
  const Tensor& x = value(xv);
  Tensor y = x;
  y.data() = (x.data() >= 0).select(x.data(), slope * x.data());
  y.grad.reset();
  return push(Op::kLeakyRelu, {xv}, std::move(y), slope);
}

Var Tape::tanh(Var xv) {
  Tensor y = value(xv);
  y.data() = y.data().tanh();
  y.grad.reset();
  return push(Op::kTanh, {xv}, std::move(y));
}

Var Tape::add(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b)) shape_error("add", a.shape_str() + " vs " + b.shape_str());
  Tensor y = a;
  y.data() += b.data();
  y.grad.reset();
  return push(Op::kAdd, {av, bv}, std::move(y));
}

Var Tape::sub(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b)) shape_error("sub", a.shape_str() + " vs " + b.shape_str());
  Tensor y = a;
  y.data() -= b.data();
  y.grad.reset();
  return push(Op::kSub, {av, bv}, std::move(y));
}

Var Tape::mul(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b)) shape_error("mul", a.shape_str() + " vs " + b.shape_str());
  Tensor y = a;
  y.data() *= b.data();
  y.grad.reset();
  return push(Op::kMul, {av, bv}, std::move(y));
}

Var Tape::scale(Var xv, Scalar c) {
  Tensor y = value(xv);
  y.data() *= c;
  y.grad.reset();
  return push(Op::kScale, {xv}, std::move(y), c);
}

Var Tape::sum_sq_rows(Var xv) {
  const Tensor& x = value(xv);
  Tensor y = Tensor::zeros({x.rows()});
  y.data() = x.mat().rowwise().squaredNorm().array();
  return push(Op::kSumSqRows, {xv}, std::move(y));
}

Var Tape::sum_rows(Var xv) {
  const Tensor& x = value(xv);
  Tensor y = Tensor::zeros({x.rows()});
  y.data() = x.mat().rowwise().sum().array();
  return push(Op::kSumRows, {xv}, std::move(y));
}

Var Tape::mean_vec(Var xv) {
  const Tensor& x = value(xv);
  if (x.rank() != 1) shape_error("mean-vec", "expects rank 1, got " + x.shape_str());
  return push(Op::kMeanVec, {xv}, Tensor::scalar(x.data().mean()));
}

Var Tape::gauss_log_pdf(Var av, Var mv, Var sv) {
  const Tensor& a = value(av);
  const Tensor& m = value(mv);
  const Tensor& s = value(sv);
  if (!a.same_shape(m) || !a.same_shape(s))
    shape_error("diag-gaussian-log-density",
                a.shape_str() + " vs " + m.shape_str() + " vs " + s.shape_str());
  Tensor y = Tensor::zeros({a.rows()});
  auto am = a.mat();
  auto mm = m.mat();
  auto sm = s.mat();
  for (Index r = 0; r < a.rows(); ++r) {
    Scalar acc = 0;
    for (Index c = 0; c < a.cols(); ++c) {
      const Scalar z = (am(r, c) - mm(r, c)) / sm(r, c);
      acc += -kHalfLog2Pi - std::log(sm(r, c)) - Scalar(0.5) * z * z;
    }
    y[r] = acc;
  }
  return push(Op::kGaussLogPdf, {av, mv, sv}, std::move(y));
}

Var Tape::softplus(Var xv) {
  Tensor y = value(xv);
  y.data() = y.data().unaryExpr([](Scalar v) { return softplus_fwd(v); });
  y.grad.reset();
  return push(Op::kSoftplus, {xv}, std::move(y));
}

Var Tape::exp(Var xv) {
  Tensor y = value(xv);
  y.data() = y.data().exp();
  y.grad.reset();
  return push(Op::kExp, {xv}, std::move(y));
}

Var Tape::min(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b)) shape_error("min", a.shape_str() + " vs " + b.shape_str());
  Tensor y = a;
  y.data() = a.data().min(b.data());
  y.grad.reset();
  return push(Op::kMin, {av, bv}, std::move(y));
}

Var Tape::apply(Op kind, std::span<const Var> in, std::span<const Scalar> c) {
  auto want = [&](std::size_t n) {
    if (in.size() != n)
      throw std::invalid_argument("Tape::apply: wrong input count for primitive");
  };
  switch (kind) {
    case Op::kAffine: want(3); return affine(in[0], in[1], in[2]);
    case Op::kConcat: want(2); return concat(in[0], in[1]);
    case Op::kLeakyRelu: want(1); return leaky_relu(in[0], c.empty() ? Scalar(0.01) : c[0]);
    case Op::kTanh: want(1); return tanh(in[0]);
    case Op::kAdd: want(2); return add(in[0], in[1]);
    case Op::kSub: want(2); return sub(in[0], in[1]);
    case Op::kMul: want(2); return mul(in[0], in[1]);
    case Op::kScale: want(1); return scale(in[0], c.empty() ? Scalar(1) : c[0]);
    case Op::kSumSqRows: want(1); return sum_sq_rows(in[0]);
    case Op::kSumRows: want(1); return sum_rows(in[0]);
    case Op::kMeanVec: want(1); return mean_vec(in[0]);
    case Op::kGaussLogPdf: want(3); return gauss_log_pdf(in[0], in[1], in[2]);
    case Op::kSoftplus: want(1); return softplus(in[0]);
    case Op::kExp: want(1); return exp(in[0]);
    case Op::kMin: want(2); return min(in[0], in[1]);
    case Op::kLeaf: break;
  }
  throw std::invalid_argument("Tape::apply: not a computable primitive");
}

// ---------------------------------------------------------------------------
// Backward

GradMap Tape::backward(Var loss) const {
  const std::size_t root = check(loss);
  if (nodes_[root].value.size() != 1)
    throw std::invalid_argument("Tape::backward: loss must be a scalar node");

  std::vector<ArrayX> adj(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  adj[root] = ArrayX::Ones(1);
  live[root] = true;

  auto bump = [&](std::int32_t id, const ArrayX& g) {
    if (!live[id]) {
      adj[id] = g;
      live[id] = true;
    } else {
      adj[id] += g;
    }
  };

  for (std::size_t idx = root + 1; idx-- > 0;) {
    if (!live[idx]) continue;
    const Node& n = nodes_[idx];
    if (n.op == Op::kLeaf) continue;
    const ArrayX& g = adj[idx];
    const Tensor& y = n.value;
    const Tensor& x0 = nodes_[n.in[0]].value;

    switch (n.op) {
      case Op::kAffine: {
        const Tensor& w = nodes_[n.in[1]].value;
        const Tensor& b = nodes_[n.in[2]].value;
        ConstMatMap gm(g.data(), y.rows(), y.cols());
        ArrayX gx(x0.size());
        MatMap(gx.data(), x0.rows(), x0.cols()).noalias() = gm * w.mat().transpose();
        bump(n.in[0], gx);
        ArrayX gw(w.size());
        MatMap(gw.data(), w.rows(), w.cols()).noalias() = x0.mat().transpose() * gm;
        bump(n.in[1], gw);
        ArrayX gb(b.size());
        MatMap(gb.data(), 1, b.size()) = gm.colwise().sum();
        bump(n.in[2], gb);
        break;
      }
      case Op::kConcat: {
        const Tensor& x1 = nodes_[n.in[1]].value;
        ConstMatMap gm(g.data(), y.rows(), y.cols());
        ArrayX ga(x0.size()), gb(x1.size());
        MatMap(ga.data(), x0.rows(), x0.cols()) = gm.leftCols(x0.cols());
        MatMap(gb.data(), x1.rows(), x1.cols()) = gm.rightCols(x1.cols());
        bump(n.in[0], ga);
        bump(n.in[1], gb);
        break;
      }
      case Op::kLeakyRelu:
        bump(n.in[0], ArrayX((x0.data() >= 0).select(g, n.c0 * g)));
        break;
      case Op::kTanh:
        bump(n.in[0], ArrayX(g * (1.0 - y.data().square())));
        break;
      case Op::kAdd:
        bump(n.in[0], g);
        bump(n.in[1], g);
        break;
      case Op::kSub:
        bump(n.in[0], g);
        bump(n.in[1], ArrayX(-g));
        break;
      case Op::kMul:
        bump(n.in[0], ArrayX(g * nodes_[n.in[1]].value.data()));
        bump(n.in[1], ArrayX(g * x0.data()));
        break;
      case Op::kScale:
        bump(n.in[0], ArrayX(n.c0 * g));
        break;
      case Op::kSumSqRows: {
        using RowArr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        ArrayX gx(x0.size());
        Eigen::Map<RowArr> gm(gx.data(), x0.rows(), x0.cols());
        Eigen::Map<const RowArr> xm(x0.data().data(), x0.rows(), x0.cols());
        Eigen::Map<const ArrayX> gr(g.data(), g.size());
        gm = 2.0 * xm * gr.replicate(1, x0.cols());
        bump(n.in[0], gx);
        break;
      }
      case Op::kSumRows: {
        using RowArr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        ArrayX gx(x0.size());
        Eigen::Map<RowArr> gm(gx.data(), x0.rows(), x0.cols());
        Eigen::Map<const ArrayX> gr(g.data(), g.size());
        gm = gr.replicate(1, x0.cols());
        bump(n.in[0], gx);
        break;
      }
      case Op::kMeanVec:
        bump(n.in[0], ArrayX::Constant(x0.size(), g[0] / static_cast<Scalar>(x0.size())));
        break;
      case Op::kGaussLogPdf: {
        const Tensor& m = nodes_[n.in[1]].value;
        const Tensor& s = nodes_[n.in[2]].value;
        ArrayX ga(x0.size()), gm(x0.size()), gs(x0.size());
        auto am = x0.mat();
        auto mm = m.mat();
        auto sm = s.mat();
        for (Index r = 0; r < x0.rows(); ++r) {
          const Scalar gr = g[r];
          for (Index c = 0; c < x0.cols(); ++c) {
            const Index i = r * x0.cols() + c;
            const Scalar sd = sm(r, c);
            const Scalar d = am(r, c) - mm(r, c);
            ga[i] = gr * (-d / (sd * sd));
            gm[i] = gr * (d / (sd * sd));
            gs[i] = gr * (d * d / (sd * sd * sd) - Scalar(1) / sd);
          }
        }
        bump(n.in[0], ga);
        bump(n.in[1], gm);
        bump(n.in[2], gs);
        break;
      }
      case Op::kSoftplus:
        bump(n.in[0], ArrayX(g * x0.data().unaryExpr([](Scalar v) { return sigmoid(v); })));
        break;
      case Op::kExp:
        bump(n.in[0], ArrayX(g * y.data()));
        break;
      case Op::kMin: {
        const Tensor& x1 = nodes_[n.in[1]].value;
        ArrayX zero = ArrayX::Zero(g.size());
        bump(n.in[0], ArrayX((x0.data() <= x1.data()).select(g, zero)));
        bump(n.in[1], ArrayX((x0.data() <= x1.data()).select(zero, g)));
        break;
      }
      case Op::kLeaf:
        break;
    }
  }

  GradMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::kLeaf || !nodes_[i].trainable) continue;
    if (live[i])
      out.insert(static_cast<std::int32_t>(i), std::move(adj[i]));
    else
      out.insert(static_cast<std::int32_t>(i), ArrayX::Zero(nodes_[i].value.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::init(std::span<Tensor* const> params) {
  m_.clear();
  v_.clear();
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.push_back(ArrayX::Zero(p->size()));
    v_.push_back(ArrayX::Zero(p->size()));
  }
  step_ = 0;
}

void AdamState::reset() {
  for (auto& a : m_) a.setZero();
  for (auto& a : v_) a.setZero();
  step_ = 0;
}

void AdamState::update(std::span<Tensor* const> params, std::span<const ArrayX> grads) {
  if (!initialized()) init(params);
  if (params.size() != m_.size())
    throw std::invalid_argument("AdamState: parameter group size changed");
  if (grads.size() != params.size())
    throw std::invalid_argument("AdamState: missing gradient for a parameter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size())
      throw std::invalid_argument("AdamState: gradient length mismatch for parameter " +
                                  std::to_string(i));
  }
  ++step_;
  const Scalar c1 = 1.0 - std::pow(cfg_.beta1, static_cast<Scalar>(step_));
  const Scalar c2 = 1.0 - std::pow(cfg_.beta2, static_cast<Scalar>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].square();
    params[i]->data() -= cfg_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + cfg_.eps);
  }
}

}  // namespace xsrl
