#include <doctest.h>

#include <cmath>
#include <random>

#include "conxgnn/tensor.hpp"
#include "oracles.hpp"

using namespace conxgnn;

namespace {

// Checks d/dx sum(op(x) .* R) against central differences for a random R.
void check_unary(const std::function<Var(const Var&)>& op, Matrix x, std::uint64_t seed = 1, double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  Matrix weights;
  {
    Tape probe(false);
    const Matrix y = op(probe.constant(x)).value();
    weights = oracle::random_matrix(y.rows(), y.cols(), rng);
  }
  Tape tape;
  Var xv = tape.leaf(x);
  Var loss = sum(cwise_product(op(xv), tape.constant(weights)));
  tape.backward(loss);
  const Matrix analytic = xv.grad();
  auto f = [&]() {
    Tape t(false);
    return sum(cwise_product(op(t.constant(x)), t.constant(weights))).scalar();
  };
  const Matrix numeric = oracle::numeric_gradient(f, x);
  CHECK(oracle::max_relative_error(analytic, numeric) < tol);
}

void check_binary(const std::function<Var(const Var&, const Var&)>& op, Matrix a, Matrix b) {
  std::mt19937_64 rng(3);
  Matrix weights;
  {
    Tape probe(false);
    const Matrix y = op(probe.constant(a), probe.constant(b)).value();
    weights = oracle::random_matrix(y.rows(), y.cols(), rng);
  }
  Tape tape;
  Var av = tape.leaf(a), bv = tape.leaf(b);
  tape.backward(sum(cwise_product(op(av, bv), tape.constant(weights))));
  auto f = [&]() {
    Tape t(false);
    return sum(cwise_product(op(t.constant(a), t.constant(b)), t.constant(weights))).scalar();
  };
  CHECK(oracle::max_relative_error(av.grad(), oracle::numeric_gradient(f, a)) < 1e-6);
  CHECK(oracle::max_relative_error(bv.grad(), oracle::numeric_gradient(f, b)) < 1e-6);
}

Matrix rand(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_matrix(r, c, rng);
}

}  // namespace

TEST_CASE("x*x at 3 has gradient 6") {
  Tape tape;
  Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
  Var y = x * x;
  tape.backward(y);
  CHECK(y.scalar() == doctest::Approx(9.0));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("sum(X W) gradients match finite differences") {
  check_binary([](const Var& x, const Var& w) { return x * w; }, rand(3, 4, 1), rand(4, 2, 2));
}

TEST_CASE("softmax cross-entropy gradient is softmax minus one-hot") {
  Matrix logits(1, 4);
  logits << 0.3, -1.2, 2.0, 0.1;
  Matrix onehot = Matrix::Zero(1, 4);
  onehot(0, 2) = 1.0;
  Tape tape;
  Var x = tape.leaf(logits);
  Var loss = -sum(cwise_product(log(softmax_rows(x)), tape.constant(onehot)));
  tape.backward(loss);
  Matrix expected = (logits.array() - logits.maxCoeff()).exp().matrix();
  expected /= expected.sum();
  expected -= onehot;
  CHECK((x.grad() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("softmax_rows values") {
  Tape tape(false);
  Matrix m(2, 2);
  m << 0.0, 0.0, std::log(2.0), 0.0;
  const Matrix s = softmax_rows(tape.constant(m)).value();
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.5));
  CHECK(s(1, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(s(1, 1) == doctest::Approx(1.0 / 3.0));

  const Matrix x = rand(3, 5, 9);
  const Matrix shifted = (x.array() + 123.0).matrix();
  const Matrix a = softmax_rows(tape.constant(x)).value();
  const Matrix b = softmax_rows(tape.constant(shifted)).value();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  // Large logits do not overflow.
  const Matrix big = softmax_rows(tape.constant(Matrix::Constant(1, 3, 1e4))).value();
  CHECK(big.allFinite());
}

TEST_CASE("l2_normalize_rows values") {
  Tape tape(false);
  Matrix m(2, 2);
  m << 3.0, 4.0, 0.0, 0.0;
  const Matrix n = l2_normalize_rows(tape.constant(m), 1e-12).value();
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  CHECK(n(1, 0) == 0.0);
  CHECK(n(1, 1) == 0.0);
  const Matrix r = l2_normalize_rows(tape.constant(rand(6, 4, 2)), 1e-12).value();
  for (Index i = 0; i < r.rows(); ++i) CHECK(r.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked_softmax_rows zeroes masked entries") {
  Tape tape(false);
  Matrix mask(2, 3);
  mask << 1, 0, 1, 0, 0, 0;
  const Matrix s = masked_softmax_rows(tape.constant(rand(2, 3, 4)), mask).value();
  CHECK(s(0, 1) == 0.0);
  CHECK(s.row(0).sum() == doctest::Approx(1.0));
  CHECK(s.row(1).isZero(0.0));
}

TEST_CASE("every op agrees with finite differences") {
  const Matrix a = rand(3, 4, 11), b = rand(3, 4, 12), c = rand(4, 5, 13);
  SUBCASE("add/sub/neg/scale") {
    check_binary([](const Var& x, const Var& y) { return x + y; }, a, b);
    check_binary([](const Var& x, const Var& y) { return x - y; }, a, b);
    check_unary([](const Var& x) { return -x; }, a);
    check_unary([](const Var& x) { return 2.5 * x; }, a);
  }
  SUBCASE("products") {
    check_binary([](const Var& x, const Var& y) { return x * y; }, a, c);
    check_binary([](const Var& x, const Var& y) { return matmul_transposed(x, y); }, a, b);
    check_binary([](const Var& x, const Var& y) { return cwise_product(x, y); }, a, b);
    check_unary([](const Var& x) { return transpose(x); }, a);
  }
  SUBCASE("broadcasting") {
    check_binary([](const Var& x, const Var& r) { return add_row(x, r); }, a, rand(1, 4, 5));
    check_binary([](const Var& x, const Var& s) { return scale_rows(x, s); }, a, rand(3, 1, 6));
    check_binary([](const Var& x, const Var& s) { return scale_cols(x, s); }, a, rand(1, 4, 7));
  }
  SUBCASE("pointwise") {
    // Keep entries away from the ReLU kink.
    Matrix shifted = a;
    for (Index i = 0; i < shifted.size(); ++i) shifted(i) += shifted(i) > 0 ? 0.1 : -0.1;
    check_unary([](const Var& x) { return relu(x); }, shifted);
    check_unary([](const Var& x) { return exp(x); }, a);
    const Matrix positive = (a.array().abs() + 0.5).matrix();
    check_unary([](const Var& x) { return log(x); }, positive);
    check_unary([](const Var& x) { return reciprocal(x); }, positive);
  }
  SUBCASE("normalizations") {
    check_unary([](const Var& x) { return softmax_rows(x); }, a);
    Matrix mask = Matrix::Ones(3, 4);
    mask(0, 0) = mask(1, 3) = 0.0;
    check_unary([mask](const Var& x) { return masked_softmax_rows(x, mask); }, a);
    check_unary([](const Var& x) { return l2_normalize_rows(x, 1e-12); }, a);
    check_unary(
        [](const Var& x) {
          Tape& t = x.tape();
          return layer_norm_rows(x, t.constant(Matrix::Constant(1, 4, 1.3)), t.constant(Matrix::Constant(1, 4, 0.2)));
        },
        a);
  }
  SUBCASE("structural and reductions") {
    check_binary(
        [](const Var& x, const Var& y) {
          const std::array<Var, 2> parts{x, y};
          return concat_cols(parts);
        },
        a, b);
    check_binary(
        [](const Var& x, const Var& y) {
          const std::array<Var, 2> parts{x, y};
          return concat_rows(parts);
        },
        a, b);
    check_unary([](const Var& x) { return slice_cols(x, 1, 2); }, a);
    check_unary(
        [](const Var& x) {
          const std::array<Index, 4> rows{2, 0, 2, 1};
          return gather_rows(x, rows);
        },
        a);
    check_unary([](const Var& x) { return sum(x); }, a);
    check_unary([](const Var& x) { return mean(x); }, a);
  }
  SUBCASE("linear") {
    check_binary(
        [](const Var& x, const Var& w) {
          return linear(x, w, x.tape().constant(Matrix::Constant(1, 5, 0.3)));
        },
        a, rand(5, 4, 8));
  }
}

TEST_CASE("layer_norm_rows normalizes each row") {
  Tape tape(false);
  const Matrix x = rand(4, 8, 21);
  const Matrix y = layer_norm_rows(tape.constant(x), tape.constant(Matrix::Ones(1, 8)),
                                   tape.constant(Matrix::Zero(1, 8)))
                       .value();
  for (Index i = 0; i < y.rows(); ++i) {
    CHECK(std::abs(y.row(i).mean()) < 1e-12);
    CHECK(y.row(i).squaredNorm() / 8.0 == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("parameters are bound once and accumulate gradient") {
  Parameter p("w", Matrix::Constant(1, 1, 2.0));
  Parameter unused("u", Matrix::Ones(2, 2));
  Tape tape;
  Var a = tape.param(p);
  Var b = tape.param(p);
  CHECK(a.id() == b.id());
  tape.param(unused);
  tape.backward(a * b + 3.0 * a);  // w^2 + 3w -> 2w + 3 = 7
  REQUIRE(tape.gradient(p) != nullptr);
  CHECK((*tape.gradient(p))(0, 0) == doctest::Approx(7.0));
  CHECK(tape.gradient(unused) == nullptr);
  Parameter stranger("s", Matrix::Ones(1, 1));
  CHECK(tape.gradient(stranger) == nullptr);
}

TEST_CASE("constants get no gradient and inference tapes keep no rules") {
  Tape tape;
  Var c = tape.constant(Matrix::Ones(1, 1));
  Var x = tape.leaf(Matrix::Ones(1, 1));
  tape.backward(cwise_product(c, x));
  CHECK(c.grad().size() == 0);
  CHECK(x.grad()(0, 0) == 1.0);

  Tape inference(false);
  Var y = inference.leaf(Matrix::Ones(1, 1));
  CHECK_THROWS(inference.backward(y * y));
}

TEST_CASE("tape errors") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(Var{}), std::exception);
  Var m = tape.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(m), std::invalid_argument);
  Tape other;
  Var s = other.leaf(Matrix::Ones(1, 1));
  CHECK_THROWS(tape.backward(s));
  CHECK_THROWS_AS(m * tape.leaf(Matrix::Ones(3, 1)), std::invalid_argument);
  CHECK_THROWS_AS(m + tape.leaf(Matrix::Ones(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(log(tape.leaf(Matrix::Constant(1, 1, -1.0))), std::domain_error);
  CHECK(log(tape.leaf(Matrix::Constant(1, 1, 0.0)), 1e-12).scalar() == doctest::Approx(std::log(1e-12)));
  CHECK_THROWS(m + s);
}
