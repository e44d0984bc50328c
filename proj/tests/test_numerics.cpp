#include "seqfuse/gradcheck.hpp"
#include "seqfuse/graph.hpp"
#include "seqfuse/kernels.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace seqfuse;
using testing::random_matrix;

namespace {

MatX mat(std::initializer_list<std::initializer_list<double>> rows) {
  MatX m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Random projection so that every op can be reduced to a scalar with
// non-degenerate adjoints.
Var project(Graph& g, Var x, const MatX& weights) { return sum(mul(x, g.constant(weights))); }

GradCheckReport check_unary(Rng& rng, Index rows, Index cols, const std::function<Var(Var)>& op,
                            double scale = 1.0) {
  Tensor x(random_matrix(rng, rows, cols, scale), true);
  MatX w;
  const Tensor* params[] = {&x};
  auto objective = [&](Graph& g) {
    Var y = op(g.param(x));
    if (w.size() == 0) w = random_matrix(rng, y.rows(), y.cols());
    return project(g, y, w);
  };
  return finite_diff_check(objective, params, 1e-5, 1e-6);
}

}  // namespace

TEST_CASE("matmul examples") {
  Graph g;
  CHECK(matmul(g.constant(MatX::Identity(2, 2)), g.constant(mat({{1, 2}, {3, 4}}))).value() == mat({{1, 2}, {3, 4}}));
  CHECK(matmul(g.constant(mat({{1, 0}})), g.constant(mat({{0}, {5}}))).value() == mat({{0}}));
  CHECK(matmul(g.constant(mat({{1, 2}, {3, 4}})), g.constant(mat({{5, 6}, {7, 8}}))).value() ==
        mat({{19, 22}, {43, 50}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  try {
    matmul(g.constant(MatX::Zero(2, 3)), g.constant(MatX::Zero(2, 3)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("log_softmax examples") {
  Graph g;
  const MatX a = log_softmax(g.constant(mat({{0, 0}}))).value();
  CHECK(a(0, 0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(a(0, 1) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(log_softmax(g.constant(mat({{7.5}}))).value()(0, 0) == 0.0);
  const MatX b = log_softmax(g.constant(mat({{1000, 1000 + std::log(3.0)}}))).value();
  CHECK(std::abs(b(0, 0) + std::log(4.0)) < 1e-12);
  CHECK(std::abs(b(0, 1) - std::log(0.75)) < 1e-12);
}

TEST_CASE("log_softmax normalization and shift invariance") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    MatX x(3, 1 + trial % 9);
    for (Index i = 0; i < x.size(); ++i) x(i) = u(rng);
    const MatX ls = log_softmax_rows(x);
    for (Index r = 0; r < x.rows(); ++r) CHECK(std::abs(ls.row(r).array().exp().sum() - 1.0) < 1e-12);
    const double c = u(rng);
    const MatX shifted = log_softmax_rows(MatX(x.array() + c));
    CHECK((shifted - ls).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("logsumexp examples") {
  RowVecX one(1);
  one << 3.25;
  CHECK(logsumexp(one) == 3.25);
  RowVecX zeros = RowVecX::Zero(2);
  CHECK(logsumexp(zeros) == doctest::Approx(0.693147).epsilon(1e-6));
  RowVecX big(2);
  big << -1000.0, -1001.0;
  CHECK(std::abs(logsumexp(big) - (-1000.0 + std::log1p(std::exp(-1.0)))) < 1e-12);
  CHECK(logsumexp(big) == doctest::Approx(-999.686738).epsilon(1e-9));
  CHECK_THROWS_AS(logsumexp(RowVecX(0)), ArgumentError);

  Graph g;
  CHECK_THROWS_AS(logsumexp(g.constant(MatX(2, 0)), Axis::kCols), ArgumentError);
}

TEST_CASE("logsumexp bounds and axes") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const RowVecX x = random_matrix(rng, 1, 1 + trial % 7, 20.0);
    const double l = logsumexp(x);
    CHECK(l >= x.maxCoeff());
    CHECK(l <= x.maxCoeff() + std::log(static_cast<double>(x.size())) + 1e-12);
  }
  Graph g;
  const MatX m = mat({{0, 0, 0}, {1, 2, 3}});
  const MatX by_row = logsumexp(g.constant(m), Axis::kCols).value();
  REQUIRE(by_row.rows() == 2);
  REQUIRE(by_row.cols() == 1);
  CHECK(std::abs(by_row(0, 0) - std::log(3.0)) < 1e-15);
  const MatX by_col = logsumexp(g.constant(m), Axis::kRows).value();
  REQUIRE(by_col.rows() == 1);
  REQUIRE(by_col.cols() == 3);
  CHECK(std::abs(by_col(0, 2) - (3.0 + std::log1p(std::exp(-3.0)))) < 1e-14);
}

TEST_CASE("gather_logprob examples") {
  Graph g;
  const MatX lp = mat({{-0.1, -2.0}, {-3.0, -0.05}});
  const TokenId first[] = {0};
  CHECK(gather_logprob(g.constant(lp.topRows(1)), first).value()(0, 0) == -0.1);
  const TokenId both[] = {1, 0};
  const MatX picked = gather_logprob(g.constant(lp), both).value();
  CHECK(picked(0, 0) == -2.0);
  CHECK(picked(1, 0) == -3.0);
  const MatX uniform = MatX::Constant(3, 4, -std::log(4.0));
  const TokenId any[] = {3, 0, 2};
  CHECK((gather_logprob(g.constant(uniform), any).value().array() == -std::log(4.0)).all());
}

TEST_CASE("gather_logprob out of range names the position") {
  Graph g;
  const TokenId bad[] = {0, 4};
  try {
    gather_logprob(g.constant(MatX::Zero(2, 4)), bad);
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("position 1") != std::string::npos);
  }
}

TEST_CASE("gather_logprob scatters adjoints to selected entries only") {
  Tensor x(MatX::Zero(2, 3), true);
  Graph g;
  const TokenId idx[] = {2, 0};
  backward(sum(gather_logprob(g.param(x), idx)));
  CHECK(x.grad() == mat({{0, 0, 1}, {1, 0, 0}}));
}

TEST_CASE("backward examples") {
  SUBCASE("sum gives ones") {
    Tensor w(MatX::Random(2, 3), true);
    Graph g;
    backward(sum(g.param(w)));
    CHECK(w.grad() == MatX::Ones(2, 3));
  }
  SUBCASE("w * w at 3 gives 6") {
    Tensor w(mat({{3.0}}), true);
    Graph g;
    Var v = g.param(w);
    backward(mul(v, v));
    CHECK(w.grad()(0, 0) == 6.0);
  }
  SUBCASE("logsumexp at [0, 0] gives softmax") {
    Tensor w(mat({{0.0, 0.0}}), true);
    Graph g;
    backward(logsumexp(g.param(w)));
    CHECK(w.grad()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w.grad()(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("non-scalar root is rejected") {
    Tensor w(MatX::Zero(2, 2), true);
    Graph g;
    CHECK_THROWS_AS(backward(g.param(w)), ArgumentError);
  }
  SUBCASE("leaf used twice accumulates both paths") {
    Tensor w(mat({{1.5, -2.0}}), true);
    Graph g;
    Var v = g.param(w);
    backward(sum(v + v));
    CHECK(w.grad() == mat({{2.0, 2.0}}));
  }
  SUBCASE("tensor gradients accumulate across graphs") {
    Tensor w(mat({{1.0}}), true);
    w.zero_grad();
    for (int i = 0; i < 3; ++i) {
      Graph g;
      backward(scale(g.param(w), 2.0));
    }
    CHECK(w.grad()(0, 0) == 6.0);
  }
}

TEST_CASE("non-finite results are rejected") {
  Graph g;
  CHECK_THROWS_AS(exp(g.constant(mat({{1000.0}}))), ArgumentError);
}

TEST_CASE("tensor basics") {
  const Tensor v = Tensor::vector(RowVecX::LinSpaced(4, 0, 3));
  CHECK(v.rank() == 1);
  CHECK(v.shape() == std::vector<std::size_t>{4});
  const Tensor m = Tensor::zeros(2, 5, true);
  CHECK(m.shape() == std::vector<std::size_t>{2, 5});
  CHECK(m.requires_grad());
  ParameterList ps{{"a", v}, {"b", m}};
  CHECK(parameter_count(ps) == 14);
}

TEST_CASE("finite_diff_check on sum of squares") {
  Rng rng(3);
  Tensor x(random_matrix(rng, 3, 4), true);
  const Tensor* params[] = {&x};
  const auto rep = finite_diff_check([&](Graph& g) { Var v = g.param(x); return sum(mul(v, v)); }, params, 1e-5, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-9);
  CHECK(rep.coords_checked == 12);
  // Values are restored after perturbation.
  Rng again(3);
  CHECK(x.value() == random_matrix(again, 3, 4));
}

TEST_CASE("finite_diff_check negative control: doubled gradient on one weight fails") {
  Rng rng(5);
  Tensor x(random_matrix(rng, 2, 3), true);
  const Tensor* params[] = {&x};
  auto value = [&] { return x.value().array().square().sum(); };
  auto buggy = [&] {
    MatX grad = 2.0 * x.value();
    grad(1, 2) *= 2.0;
    return std::vector<MatX>{grad};
  };
  const auto rep = finite_diff_check(value, buggy, params, 1e-5, 1e-6);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst_coord == 5);  // column-major (1, 2)
  CHECK(rep.max_rel_err > 0.4);
}

TEST_CASE("finite_diff_check reports non-finite evaluations") {
  // Objective that overflows just above the evaluation point.
  Tensor x(mat({{709.0}}), true);
  const Tensor* params[] = {&x};
  const auto rep = finite_diff_check([&](Graph& g) { return sum(exp(add_scalar(g.param(x), 0.782705))); }, params,
                                     1e-5, 1e-6);
  CHECK_FALSE(rep.finite);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("every op passes the gradient check") {
  Rng rng(17);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return tanh(x); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return sigmoid(x); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return exp(x); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return log_softmax(x); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return logsumexp(x, Axis::kCols); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return logsumexp(x, Axis::kRows); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return scale(x, -1.7); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return add_scalar(x, 2.5); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return transpose(x); }).pass);
  CHECK(check_unary(rng, 4, 5, [](Var x) { return slice_rows(x, 1, 2); }).pass);
  CHECK(check_unary(rng, 4, 5, [](Var x) { return slice_cols(x, 2, 3); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) { return mul(x, x); }).pass);
  CHECK(check_unary(rng, 3, 4, [](Var x) {
    const TokenId idx[] = {3, 0, 1};
    return gather_logprob(log_softmax(x), idx);
  }).pass);

  Tensor a(random_matrix(rng, 3, 4), true), b(random_matrix(rng, 4, 2), true), c(random_matrix(rng, 3, 4), true),
      row(random_matrix(rng, 1, 4), true);
  const Tensor* ab[] = {&a, &b};
  const Tensor* ac[] = {&a, &c};
  const Tensor* arow[] = {&a, &row};
  const MatX w32 = random_matrix(rng, 3, 2), w34 = random_matrix(rng, 3, 4), w38 = random_matrix(rng, 3, 8),
             w64 = random_matrix(rng, 6, 4);
  CHECK(finite_diff_check([&](Graph& g) { return project(g, matmul(g.param(a), g.param(b)), w32); }, ab, 1e-5, 1e-6).pass);
  CHECK(finite_diff_check([&](Graph& g) { return project(g, g.param(a) + g.param(c), w34); }, ac, 1e-5, 1e-6).pass);
  CHECK(finite_diff_check([&](Graph& g) { return project(g, g.param(a) - g.param(c), w34); }, ac, 1e-5, 1e-6).pass);
  CHECK(finite_diff_check([&](Graph& g) { return project(g, mul(g.param(a), g.param(c)), w34); }, ac, 1e-5, 1e-6).pass);
  CHECK(finite_diff_check([&](Graph& g) { return project(g, add_row(g.param(a), g.param(row)), w34); }, arow, 1e-5, 1e-6).pass);
  CHECK(finite_diff_check([&](Graph& g) { return project(g, concat_cols(g.param(a), g.param(c)), w38); }, ac, 1e-5, 1e-6).pass);
  CHECK(finite_diff_check([&](Graph& g) {
          const Var parts[] = {g.param(a), g.param(c)};
          return project(g, concat_rows(parts), w64);
        }, ac, 1e-5, 1e-6).pass);
}

TEST_CASE("gru_cell matches its definition and passes the gradient check") {
  Rng rng(23);
  const Index H = 3;
  Tensor proj(random_matrix(rng, 2, 3 * H), true), h(random_matrix(rng, 1, H), true),
      wg(random_matrix(rng, H, 2 * H), true), wc(random_matrix(rng, H, H), true);

  // Forward against a direct evaluation of the equations.
  Graph g;
  const MatX out = gru_cell(g.param(proj), 1, g.param(h), g.param(wg), g.param(wc)).value();
  auto sig = [](const RowVecX& x) { return RowVecX(1.0 / (1.0 + (-x.array()).exp())); };
  const RowVecX x = proj.value().row(1), hv = h.value();
  const RowVecX gates = hv * wg.value();
  const RowVecX z = sig(x.head(H) + gates.head(H));
  const RowVecX r = sig(x.segment(H, H) + gates.tail(H));
  const RowVecX c = (x.tail(H) + RowVecX(r.cwiseProduct(hv)) * wc.value()).array().tanh().matrix();
  const RowVecX expect = (1.0 - z.array()) * hv.array() + z.array() * c.array();
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-14);

  const Tensor* params[] = {&proj, &h, &wg, &wc};
  const MatX w = random_matrix(rng, 1, H);
  const auto rep = finite_diff_check(
      [&](Graph& gg) { return project(gg, gru_cell(gg.param(proj), 1, gg.param(h), gg.param(wg), gg.param(wc)), w); },
      params, 1e-5, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-6);
}
