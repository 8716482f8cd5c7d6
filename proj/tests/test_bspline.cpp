#include <doctest.h>

#include <cmath>
#include <thread>

#include "helpers.hpp"
#include "omnisat/bspline.hpp"

using namespace omnisat;

namespace {

// Textbook recursion, evaluated independently of the triangular scheme.
double naive_basis(const std::vector<double>& U, int i, int p, double u) {
  const auto at = [&](int k) { return U[static_cast<std::size_t>(k)]; };
  if (p == 0) {
    if (at(i) <= u && u < at(i + 1)) return 1.0;
    // Closed last non-empty span so that u = 1 is covered.
    return u == U.back() && at(i + 1) == U.back() && at(i) < at(i + 1) ? 1.0 : 0.0;
  }
  double v = 0.0;
  if (at(i + p) > at(i)) v += (u - at(i)) / (at(i + p) - at(i)) * naive_basis(U, i, p - 1, u);
  if (at(i + p + 1) > at(i + 1)) {
    v += (at(i + p + 1) - u) / (at(i + p + 1) - at(i + 1)) * naive_basis(U, i + 1, p - 1, u);
  }
  return v;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

Matrix dense_ridge(const Matrix& phi, const Matrix& a, double lambda) {
  const Matrix gram = phi.transpose() * phi + lambda * Matrix::Identity(phi.cols(), phi.cols());
  return gram.fullPivLu().solve(phi.transpose() * a);
}

}  // namespace

TEST_CASE("knot vector examples") {
  CHECK(knot_vector(3, 4) == std::vector<double>{0, 0, 0, 0, 1, 1, 1, 1});
  const auto k0 = knot_vector(0, 3);
  REQUIRE(k0.size() == 4);
  CHECK(k0[1] == doctest::Approx(1.0 / 3));
  CHECK(k0[2] == doctest::Approx(2.0 / 3));
  const auto k3 = knot_vector(3, 8);
  REQUIRE(k3.size() == 12);
  for (int i = 0; i < 4; ++i) {
    CHECK(k3[static_cast<std::size_t>(i)] == 0.0);
    CHECK(k3[static_cast<std::size_t>(8 + i)] == 1.0);
  }
  for (int i = 1; i <= 4; ++i) CHECK(k3[static_cast<std::size_t>(3 + i)] == doctest::Approx(i / 5.0));
  CHECK_THROWS_AS(knot_vector(3, 3), Error);
}

TEST_CASE("basis_eval examples") {
  const auto v0 = basis_eval(knot_vector(0, 3), 0, 0.5);
  CHECK(v0(0) == 0.0);
  CHECK(v0(1) == 1.0);
  CHECK(v0(2) == 0.0);

  const auto k = knot_vector(3, 4);
  const auto e = basis_eval(k, 3, 0.0);
  CHECK(e(0) == 1.0);
  CHECK(e.tail(3).cwiseAbs().maxCoeff() == 0.0);

  const auto mid = basis_eval(k, 3, 0.5);
  for (int i = 0; i < 4; ++i) {
    // Bernstein oracle: C(3, i) u^i (1-u)^(3-i).
    const double want = binomial(3, i) * std::pow(0.5, i) * std::pow(0.5, 3 - i);
    CHECK(mid(i) == doctest::Approx(want).epsilon(1e-15));
  }
  CHECK(mid(0) == doctest::Approx(0.125));
  CHECK(mid(1) == doctest::Approx(0.375));

  const auto last = basis_eval(k, 3, 1.0);
  CHECK(last(3) == 1.0);
  CHECK_THROWS_AS(basis_eval(k, 3, 1.5), Error);
  CHECK_THROWS_AS(basis_eval(k, 3, -0.1), Error);
}

TEST_CASE("property: Bezier case matches Bernstein polynomials") {
  std::mt19937_64 rng(21);
  for (int p = 0; p <= 6; ++p) {
    const auto k = knot_vector(p, p + 1);
    for (int trial = 0; trial < 50; ++trial) {
      const double u = testing::random_vector(rng, 1, 0, 1)(0);
      const auto b = basis_eval(k, p, u);
      for (int i = 0; i <= p; ++i) {
        CHECK(b(i) == doctest::Approx(binomial(p, i) * std::pow(u, i) * std::pow(1 - u, p - i)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("property: basis matches the naive recursion") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = testing::random_int(rng, 0, 4);
    const int n = testing::random_int(rng, p + 1, 16);
    const auto k = knot_vector(p, n);
    for (const double u : {0.0, 1.0, testing::random_vector(rng, 1, 0, 1)(0), 0.5}) {
      const auto b = basis_eval(k, p, u);
      for (int i = 0; i < n; ++i) CHECK(std::abs(b(i) - naive_basis(k, i, p, u)) <= 1e-13);
    }
  }
}

TEST_CASE("design matrix examples") {
  const auto d = design_matrix(0, 10, 10);
  for (int t = 0; t < 10; ++t) {
    CHECK(d.phi.row(t).sum() == 1.0);
    CHECK(d.phi.row(t).maxCoeff() == 1.0);
  }
  CHECK(d.phi.colwise().sum().minCoeff() == 1.0);  // one sample per span

  const auto b = design_matrix(3, 4, 3);
  Matrix want(3, 4);
  want << 1, 0, 0, 0, 0.125, 0.375, 0.375, 0.125, 0, 0, 0, 1;
  CHECK((b.phi - want).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(b.grid(1) == 0.5);
  CHECK_THROWS_AS(design_matrix(3, 8, 1), Error);
}

TEST_CASE("property: partition of unity, range and clamped rows") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = testing::random_int(rng, 0, 5);
    const int n = testing::random_int(rng, p + 1, 32);
    const int steps = testing::random_int(rng, 2, 200);
    const auto d = design_matrix(p, n, steps);
    CHECK(d.phi.rows() == steps);
    CHECK(d.phi.cols() == n);
    CHECK(d.phi.minCoeff() >= 0.0);
    CHECK(d.phi.maxCoeff() <= 1.0);
    for (int t = 0; t < steps; ++t) CHECK(std::abs(d.phi.row(t).sum() - 1.0) <= 1e-12);
    CHECK(std::abs(d.phi(0, 0) - 1.0) <= 1e-12);
    CHECK(std::abs(d.phi(steps - 1, n - 1) - 1.0) <= 1e-12);
  }
}

TEST_CASE("ridge fit examples") {
  const auto d = design_matrix(3, 8, 30);
  const Vector c = ridge_fit(d.phi, Vector::Constant(30, 0.7), 0.0);
  CHECK((c.array() - 0.7).abs().maxCoeff() <= 1e-12);

  std::mt19937_64 rng(24);
  const auto sq = design_matrix(3, 4, 4);
  const Vector a = testing::random_vector(rng, 4);
  CHECK((sq.phi * ridge_fit(sq.phi, a, 0.0) - a).cwiseAbs().maxCoeff() <= 1e-10);

  Vector cubic(30);
  for (int t = 0; t < 30; ++t) cubic(t) = std::pow(d.grid(t), 3);
  const Vector cc = ridge_fit(d.phi, cubic, 0.0);
  CHECK((d.phi * cc - cubic).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((cc - dense_ridge(d.phi, cubic, 0.0)).cwiseAbs().maxCoeff() <= 1e-10);

  // Finer grid reproduces the same polynomial.
  const auto fine = design_matrix(3, 8, 97);
  Vector fine_cubic(97);
  for (int t = 0; t < 97; ++t) fine_cubic(t) = std::pow(fine.grid(t), 3);
  CHECK((reconstruct(fine.phi, Matrix(cc)) - fine_cubic).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("ridge fit errors") {
  // 3 samples cannot determine 8 control points without regularization.
  const auto d = design_matrix(3, 8, 3);
  CHECK_THROWS_AS(ridge_fit(d.phi, Vector::Zero(3), 0.0), Error);
  CHECK_NOTHROW(ridge_fit(d.phi, Vector::Zero(3), 1e-3));
  CHECK_THROWS_AS(ridge_fit(d.phi, Vector::Zero(3), -1.0), Error);
  Vector bad = Vector::Zero(3);
  bad(1) = std::nan("");
  CHECK_THROWS_AS(ridge_fit(d.phi, bad, 1e-3), Error);
}

TEST_CASE("property: ridge fit matches the dense closed form") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = testing::random_int(rng, 0, 4);
    const int n = testing::random_int(rng, p + 1, 12);
    const int steps = testing::random_int(rng, n, 60);
    const double lambda = std::pow(10.0, testing::random_vector(rng, 1, -4, 0)(0));
    const auto d = design_matrix(p, n, steps);
    const Vector a = testing::random_vector(rng, steps);
    const Vector got = ridge_fit(d.phi, a, lambda);
    const Vector want = dense_ridge(d.phi, a, lambda);
    CHECK((got - want).norm() <= 1e-8 * want.norm());
  }
}

TEST_CASE("property: control-point norm shrinks as lambda grows") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = testing::random_int(rng, 4, 10);
    const int steps = testing::random_int(rng, n, 50);
    const auto d = design_matrix(3, n, steps);
    const Matrix a = testing::random_matrix(rng, steps, 3);
    double lo = std::pow(10.0, testing::random_vector(rng, 1, -5, 0)(0));
    double hi = lo * (1.0 + testing::random_vector(rng, 1, 0.01, 10)(0));
    const double n_lo = RidgeSolver(d.phi, lo).solve(a).norm();
    const double n_hi = RidgeSolver(d.phi, hi).solve(a).norm();
    CHECK(n_hi <= n_lo + 1e-12);
  }
}

TEST_CASE("property: square interpolation reproduces endpoint control values") {
  std::mt19937_64 rng(27);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = testing::random_int(rng, 1, 3);
    const int n = testing::random_int(rng, p + 1, 12);
    const auto d = design_matrix(p, n, n);
    const Vector a = testing::random_vector(rng, n);
    const Vector c = ridge_fit(d.phi, a, 0.0);
    const Vector y = d.phi * c;
    CHECK(std::abs(y(0) - c(0)) <= 1e-12);
    CHECK(std::abs(y(n - 1) - c(n - 1)) <= 1e-12);
    CHECK((y - a).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("per-role fitting and reconstruction") {
  SplineConfig cfg;
  const std::vector<PartRole> roles{PartRole::position, PartRole::gripper};
  Matrix chunk(30, 2);
  for (int t = 0; t < 30; ++t) {
    chunk(t, 0) = std::sin(t / 10.0);
    chunk(t, 1) = t < 15 ? -1.0 : 1.0;
  }
  const Matrix c = fit_control_points(chunk, roles, cfg);
  CHECK(c.rows() == 8);
  CHECK(c.cols() == 2);
  const Matrix r = reconstruct(c, roles, cfg, 30);
  CHECK((r.col(0) - chunk.col(0)).cwiseAbs().maxCoeff() < 1e-2);
  // Degree 0 reconstruction is piecewise constant.
  const Matrix r_grip = reconstruct(c.col(1), std::vector<PartRole>{PartRole::gripper}, cfg, 30);
  CHECK(r_grip.col(0).isApprox(r.col(1)));
  CHECK(reconstruct(Matrix::Zero(8, 2), roles, cfg, 17).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(fit_control_points(chunk, std::vector<PartRole>{PartRole::position}, cfg), Error);
  CHECK_THROWS_AS(reconstruct(Matrix::Zero(7, 2), roles, cfg, 30), Error);

  SplineConfig bad;
  bad.n_control = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("design cache is shared and thread-safe") {
  std::vector<std::shared_ptr<const DesignMatrix>> got(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&got, i] { got[static_cast<std::size_t>(i)] = cached_design(3, 8, 41); });
  }
  for (auto& t : threads) t.join();
  for (const auto& g : got) {
    CHECK(g == got[0]);
  }
  CHECK(got[0]->phi == design_matrix(3, 8, 41).phi);
  CHECK(cached_solver(3, 8, 41, 1e-3) == cached_solver(3, 8, 41, 1e-3));
}
