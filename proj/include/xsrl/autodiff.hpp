#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace xsrl {

using Scalar = double;
using Index = Eigen::Index;
using ArrayX = Eigen::ArrayX<Scalar>;
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Dense real tensor: flat storage plus a shape. Rank 1 or 2 is all the
/// models here need; a rank-1 tensor acts as a single row wherever a matrix
/// view is requested.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<Index> shape);
  static Tensor full(std::vector<Index> shape, Scalar v);
  static Tensor scalar(Scalar v);
  static Tensor row(const ArrayX& v);                       // shape [n]
  static Tensor from(std::vector<Index> shape, ArrayX data);

  const std::vector<Index>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index rows() const { return rank() == 2 ? shape_[0] : 1; }
  Index cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  ArrayX& data() { return data_; }
  const ArrayX& data() const { return data_; }
  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  MatMap mat() { return MatMap(data_.data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data_.data(), rows(), cols()); }

  bool requires_grad = false;
  std::optional<ArrayX> grad;

 private:
  std::vector<Index> shape_;
  ArrayX data_;
};

/// Primitive catalog. Covers every model and loss in the training stack.
enum class Op : std::uint8_t {
  kLeaf,
  kAffine,       // x*W + b
  kConcat,       // along the feature axis
  kLeakyRelu,    // constant: negative slope
  kTanh,
  kAdd,
  kSub,
  kMul,          // elementwise
  kScale,        // constant: factor
  kSumSqRows,    // squared L2 norm per row
  kSumRows,      // plain row sum
  kMeanVec,      // mean of a rank-1 tensor -> scalar
  kGaussLogPdf,  // diagonal Gaussian log density per row, inputs (a, mu, sigma)
  kSoftplus,
  kExp,
  kMin,          // elementwise min; ties take the first input
};

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Gradients produced by a backward pass, keyed by node id. Holds one entry
/// per trainable leaf (zero-filled if the leaf did not participate in the
/// loss); frozen leaves and interior nodes never appear.
class GradMap {
 public:
  bool contains(Var v) const { return index_.count(v.id) != 0; }
  const ArrayX& at(Var v) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::int32_t, ArrayX>>& entries() const { return entries_; }

 private:
  friend class Tape;
  void insert(std::int32_t id, ArrayX g);
  std::vector<std::pair<std::int32_t, ArrayX>> entries_;
  std::unordered_map<std::int32_t, std::size_t> index_;
};

/// Define-by-run computation graph. Nodes are appended in forward order, so
/// the sequence is acyclic by construction and a backward pass visits each
/// node exactly once in reverse.
class Tape {
 public:
  Var leaf(const Tensor& t, bool trainable = false);

  Var affine(Var x, Var w, Var b);
  Var concat(Var a, Var b);
  Var leaky_relu(Var x, Scalar slope = 0.01);
  Var tanh(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, Scalar c);
  Var sum_sq_rows(Var x);
  Var sum_rows(Var x);
  Var mean_vec(Var x);
  Var gauss_log_pdf(Var a, Var mu, Var sigma);
  Var softplus(Var x);
  Var exp(Var x);
  Var min(Var a, Var b);

  /// Generic dispatcher over the catalog above (kLeaf excluded).
  Var apply(Op kind, std::span<const Var> inputs, std::span<const Scalar> constants);

  const Tensor& value(Var v) const { return nodes_.at(check(v)).value; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse-mode pass from a scalar loss node. Deterministic: identical
  /// graph and loss give bitwise-identical gradients.
  GradMap backward(Var loss) const;

 private:
  struct Node {
    Op op;
    std::array<std::int32_t, 3> in{-1, -1, -1};
    int nin = 0;
    Tensor value;
    Scalar c0 = 0;  // op-specific constant (slope, factor)
    bool trainable = false;
  };

  std::size_t check(Var v) const;
  Var push(Op op, std::initializer_list<Var> ins, Tensor value, Scalar c0 = 0);

  std::vector<Node> nodes_;
};

[[noreturn]] void shape_error(const std::string& prim, const std::string& detail);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  Scalar lr = 1e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Per-parameter first/second moment state for one group of tensors.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step() const { return step_; }
  bool initialized() const { return !m_.empty(); }
  const std::vector<ArrayX>& moments1() const { return m_; }
  const std::vector<ArrayX>& moments2() const { return v_; }

  void init(std::span<Tensor* const> params);
  void reset();

  /// One bias-corrected Adam update over the whole group. `grads` must align
  /// one-to-one with `params`; a missing gradient is rejected.
  void update(std::span<Tensor* const> params, std::span<const ArrayX> grads);

  // Checkpoint support: raw access to moments in group order.
  std::vector<ArrayX>& mutable_m() { return m_; }
  std::vector<ArrayX>& mutable_v() { return v_; }
  void set_step(long s) { step_ = s; }

 private:
  AdamConfig cfg_;
  std::vector<ArrayX> m_, v_;
  long step_ = 0;
};

}  // namespace xsrl
