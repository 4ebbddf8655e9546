#include "conxgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace conxgnn {

namespace {

std::string shape_of(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
              shape_of(b.value()));
}

Tape& common_tape(const Var& a, const Var& b) {
  require(a.valid() && b.valid(), "op on an unbound Var");
  require(&a.tape() == &b.tape(), "op mixes Vars from different tapes");
  return a.tape();
}

Tape& tape_of(const Var& a) {
  require(a.valid(), "op on an unbound Var");
  return a.tape();
}

}  // namespace

// ---------------------------------------------------------------------------
// Var

const Matrix& Var::value() const { return tape_->value(*this); }
const Matrix& Var::grad() const { return tape_->grad(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.size() == 1, "scalar() on a non-scalar " + shape_of(v));
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, record_, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  nodes_.push_back(Node{{}, {}, &p, record_, {}});
  bound_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) needs = needs || requires_grad(in);
  }
  nodes_.push_back(Node{std::move(value), {}, nullptr, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  if (!record_) throw std::logic_error("backward on an inference tape");
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (&loss.tape() != this) throw std::logic_error("backward: loss belongs to another tape");
  const Matrix& lv = value(loss);
  if (lv.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + shape_of(lv));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

const Matrix* Tape::gradient(const Parameter& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.size() == 0 ? nullptr : &n.grad;
}

void Tape::clear() {
  nodes_.clear();
  bound_.clear();
}

const Matrix& Tape::value(const Var& v) const {
  const Node& n = nodes_[v.id()];
  return n.param != nullptr ? n.param->value : n.value;
}

const Matrix& Tape::grad(const Var& v) const { return nodes_[v.id()].grad; }

bool Tape::requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

// ---------------------------------------------------------------------------
// Arithmetic

Var operator+(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "add");
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require(a.cols() == b.rows(),
          "matmul: inner dimension mismatch " + shape_of(a.value()) + " * " + shape_of(b.value()));
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var operator*(double s, const Var& a) {
  Tape& t = tape_of(a);
  return t.record(s * a.value(), {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, s * g); });
}

Var operator*(const Var& a, double s) { return s * a; }

Var matmul_transposed(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require(a.cols() == b.cols(), "matmul_transposed: dimension mismatch " + shape_of(a.value()) +
                                    " * " + shape_of(b.value()) + "^T");
  return t.record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b));
    if (tp.requires_grad(b)) tp.accumulate(b, g.transpose() * tp.value(a));
  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  return t.record(a.value().transpose(), {a},
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = common_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(),
          "add_row: expected 1x" + std::to_string(a.cols()) + " row, got " + shape_of(row.value()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(row, g.colwise().sum());
  });
}

Var scale_rows(const Var& a, const Var& col) {
  Tape& t = common_tape(a, col);
  require(col.cols() == 1 && col.rows() == a.rows(),
          "scale_rows: expected " + std::to_string(a.rows()) + "x1 column, got " +
              shape_of(col.value()));
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return t.record(std::move(out), {a, col}, [a, col](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, tp.value(col).col(0).asDiagonal() * g);
    if (tp.requires_grad(col)) {
      tp.accumulate(col, g.cwiseProduct(tp.value(a)).rowwise().sum());
    }
  });
}

Var scale_cols(const Var& a, const Var& row) {
  Tape& t = common_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(),
          "scale_cols: expected 1x" + std::to_string(a.cols()) + " row, got " +
              shape_of(row.value()));
  Matrix out = a.value() * row.value().row(0).asDiagonal();
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(row).row(0).asDiagonal());
    if (tp.requires_grad(row)) {
      tp.accumulate(row, g.cwiseProduct(tp.value(a)).colwise().sum());
    }
  });
}

Var cwise_product(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "cwise_product");
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

// ---------------------------------------------------------------------------
// Pointwise

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (tp.value(a).array() > 0.0).select(g, 0.0));
  });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a);
  Matrix y = a.value().array().exp().matrix();
  Matrix saved = y;
  return t.record(std::move(y), {a}, [a, y = std::move(saved)](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(y));
  });
}

Var log(const Var& a, double floor) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (floor <= 0.0 && (x.array() <= 0.0).any()) {
    throw std::domain_error("log: non-positive input without a floor");
  }
  Matrix out = x.array().max(floor).log().matrix();
  return t.record(std::move(out), {a}, [a, floor](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value(a);
    tp.accumulate(a, (xv.array() > floor).select(g.array() / xv.array(), 0.0).matrix());
  });
}

Var reciprocal(const Var& a) {
  Tape& t = tape_of(a);
  if ((a.value().array() == 0.0).any()) throw std::domain_error("reciprocal: zero entry");
  return t.record(a.value().cwiseInverse(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (-g.array() / tp.value(a).array().square()).matrix());
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

namespace {

Matrix masked_softmax_value(const Matrix& x, const Matrix* mask) {
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j) != 0.0) m = std::max(m, x(i, j));
    }
    if (!std::isfinite(m)) continue;
    double z = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j) != 0.0) {
        y(i, j) = std::exp(x(i, j) - m);
        z += y(i, j);
      }
    }
    y.row(i) /= z;
  }
  return y;
}

Var softmax_impl(const Var& a, const Matrix* mask) {
  Tape& t = tape_of(a);
  Matrix y = masked_softmax_value(a.value(), mask);
  Matrix saved = y;
  return t.record(std::move(y), {a}, [a, y = std::move(saved)](Tape& tp, const Matrix& g) {
    Vector dot = g.cwiseProduct(y).rowwise().sum();
    tp.accumulate(a, y.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

}  // namespace

Var softmax_rows(const Var& a) {
  require(a.cols() > 0, "softmax_rows: empty row dimension");
  return softmax_impl(a, nullptr);
}

Var masked_softmax_rows(const Var& a, const Matrix& mask) {
  require(mask.rows() == a.rows() && mask.cols() == a.cols(),
          "masked_softmax_rows: mask " + shape_of(mask) + " vs input " + shape_of(a.value()));
  require(a.cols() > 0, "masked_softmax_rows: empty row dimension");
  return softmax_impl(a, &mask);
}

Var l2_normalize_rows(const Var& a, double eps) {
  require(eps > 0.0, "l2_normalize_rows: eps must be positive");
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Vector denom = x.rowwise().norm().cwiseMax(eps);
  Matrix y = denom.cwiseInverse().asDiagonal() * x;
  Matrix saved_y = y;
  return t.record(std::move(y), {a},
                  [a, eps, y = std::move(saved_y), denom](Tape& tp, const Matrix& g) {
                    Matrix dx(g.rows(), g.cols());
                    const Matrix& xv = tp.value(a);
                    for (Index i = 0; i < g.rows(); ++i) {
                      if (xv.row(i).norm() >= eps) {
                        dx.row(i) = (g.row(i) - y.row(i) * g.row(i).dot(y.row(i))) / denom(i);
                      } else {
                        dx.row(i) = g.row(i) / eps;
                      }
                    }
                    tp.accumulate(a, dx);
                  });
}

// ---------------------------------------------------------------------------
// Structural

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require(&tape_of(p) == &t, "concat_cols mixes tapes");
    require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& tp, const Matrix& g) {
    Index off = 0;
    for (const Var& p : inputs) {
      Index c = tp.value(p).cols();
      tp.accumulate(p, g.middleCols(off, c));
      off += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require(&tape_of(p) == &t, "concat_rows mixes tapes");
    require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& tp, const Matrix& g) {
    Index off = 0;
    for (const Var& p : inputs) {
      Index r = tp.value(p).rows();
      tp.accumulate(p, g.middleRows(off, r));
      off += r;
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(),
          "slice_cols: range out of bounds for " + shape_of(a.value()));
  Tape& t = tape_of(a);
  return t.record(a.value().middleCols(start, count), {a},
                  [a, start, count](Tape& tp, const Matrix& g) {
                    const Matrix& x = tp.value(a);
                    Matrix full = Matrix::Zero(x.rows(), x.cols());
                    full.middleCols(start, count) = g;
                    tp.accumulate(a, full);
                  });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Tape& t = tape_of(a);
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(),
            "gather_rows: index " + std::to_string(rows[i]) + " out of range for " +
                std::to_string(a.rows()) + " rows");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Index>(i));
    tp.accumulate(a, full);
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean of an empty matrix");
  return (1.0 / static_cast<double>(a.value().size())) * sum(a);
}

// ---------------------------------------------------------------------------
// Composites

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul_transposed(x, weight), bias);
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Index d = x.cols();
  Matrix centering = Matrix::Identity(d, d) - Matrix::Constant(d, d, 1.0 / static_cast<double>(d));
  Var centered = x * x.tape().constant(std::move(centering));
  Var unit = std::sqrt(static_cast<double>(d)) * l2_normalize_rows(centered, eps);
  return add_row(scale_cols(unit, gain), bias);
}

}  // namespace conxgnn
