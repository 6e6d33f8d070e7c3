#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. A Tape records every operation of one forward pass; calling
// backward() on a scalar node propagates gradients into the Parameter objects
// that were bound with Tape::param().

#include <Eigen/Core>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace saber::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // subject to decoupled weight decay
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  // Leaf bound to `p`; repeated calls within one tape return the same node.
  Var param(Parameter& p);

  // Appends a node. `fn` is dropped when no parent requires a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, Backward fn);
  Var record(Mat value, std::span<const Var> parents, Backward fn);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  // Adds `g` into the gradient of node `id` if it participates in backprop.
  void accumulate(int id, const Mat& g);

  // Seeds d(root)/d(root) = 1 and accumulates into bound Parameter::grad.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// ---- linear algebra -------------------------------------------------------
Var matmul(const Var& a, const Var& b);     // a · b
Var matmul_nt(const Var& a, const Var& b);  // a · bᵀ
Var transpose(const Var& a);

// ---- elementwise ----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var scale_by(const Var& a, const Var& s);  // s is 1×1
Var affine(const Var& a, double mul, double shift);
Var add_row(const Var& a, const Var& row);  // row broadcast over rows of a
Var mul_col(const Var& a, const Var& col);  // out_ij = a_ij · col_i
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var log(const Var& a);
// Values outside [lo, hi] are clipped and receive zero gradient.
Var clamp(const Var& a, double lo, double hi);

// ---- shape ----------------------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice(const Var& a, Eigen::Index row, Eigen::Index nrows, Eigen::Index col,
          Eigen::Index ncols);
Var row(const Var& a, Eigen::Index r);
Var gather_rows(const Var& a, std::span<const int> indices);
Var repeat_rows(const Var& a, Eigen::Index n);

// ---- reductions -----------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);

// ---- neural-net building blocks -------------------------------------------
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var normalize_rows(const Var& x);
Var softmax_rows(const Var& x);

struct AttentionTrace {
  std::vector<Mat> probs;  // one L×S matrix per head
};

// Multi-head scaled dot-product attention. Logits of head h are
// Q_h K_hᵀ / sqrt(d_h) + M, restricted to `allowed` entries; rows with no
// allowed entry are rejected. `mask` may be an invalid Var (no additive term).
// Throws NumericError naming `label` and the row if a NaN appears.
Var attention(const Var& q, const Var& k, const Var& v, const Var& mask,
              const BoolMat& allowed, int n_heads, const std::string& label,
              AttentionTrace* trace = nullptr);

// Mean over rows of −log softmax(logits_r)[target_r].
Var cross_entropy(const Var& logits, std::span<const int> targets);

// Σ_r KL(softmax(m_r restricted to support_r) ‖ uniform(support_r)).
Var kl_to_uniform_rows(const Var& m, const BoolMat& support);

}  // namespace saber::ad
