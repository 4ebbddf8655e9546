#pragma once

// Dense matrices on a reverse-mode gradient tape.
//
// Every value is an Eigen::MatrixXd (scalars are 1x1, row vectors 1xn). Ops
// are free functions that record a backward rule on the tape owning their
// inputs; Tape::backward replays the rules in reverse recording order.

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace conxgnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// A named trainable matrix. Gradients live on the tape, not here.
struct Parameter {
  std::string name;
  Matrix value;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient after backward(); empty when the node was not reached.
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  /// With record == false no backward rules are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// A free-standing leaf that requires a gradient.
  Var leaf(Matrix value);
  /// Binds a parameter as a leaf. Binding the same parameter twice returns
  /// the same Var, so its gradient accumulates over every use.
  Var param(const Parameter& p);

  /// Records the result of an op. The rule runs during backward() only if
  /// at least one input requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws for non-scalar losses,
  /// for an empty tape, and for a loss recorded on another tape.
  void backward(const Var& loss);

  /// Gradient accumulated for a bound parameter by the last backward();
  /// nullptr if the parameter was unused or unreachable from the loss.
  const Matrix* gradient(const Parameter& p) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  const Matrix& value(const Var& v) const;
  const Matrix& grad(const Var& v) const;
  bool requires_grad(const Var& v) const;

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  bool record_;
};

// ---------------------------------------------------------------------------
// Ops. Shapes are checked eagerly and mismatches throw std::invalid_argument.

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
/// Matrix product.
Var operator*(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);

/// a * b^T
Var matmul_transposed(const Var& a, const Var& b);
Var transpose(const Var& a);

/// Adds the 1xn row `row` to every row of `a`.
Var add_row(const Var& a, const Var& row);
/// Scales row i of `a` by `col(i)`; `col` is m x 1.
Var scale_rows(const Var& a, const Var& col);
/// Scales column j of `a` by `row(j)`; `row` is 1 x n.
Var scale_cols(const Var& a, const Var& row);
Var cwise_product(const Var& a, const Var& b);

Var relu(const Var& a);
Var exp(const Var& a);
/// Natural log of max(a, floor). With floor == 0 every entry must be > 0.
Var log(const Var& a, double floor = 0.0);
Var reciprocal(const Var& a);

Var softmax_rows(const Var& a);
/// Softmax over the entries of each row where mask != 0; masked entries are
/// exactly 0. A row with no unmasked entry is all zeros.
Var masked_softmax_rows(const Var& a, const Matrix& mask);
/// Row r maps to r / max(|r|, eps).
Var l2_normalize_rows(const Var& a, double eps);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, std::span<const Index> rows);

Var sum(const Var& a);
Var mean(const Var& a);

// Composites.

/// x * W^T + b
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Per-row layer normalization with elementwise gain and bias (1 x n each),
/// built from centering and l2_normalize_rows.
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-12);

}  // namespace conxgnn
