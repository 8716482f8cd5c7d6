#include "omnisat/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace omnisat {

void SplineConfig::validate() const {
  if (degree_pos_rot < 0 || degree_grip < 0) throw Error("spline degree must be >= 0");
  if (n_control < degree_pos_rot + 1 || n_control < degree_grip + 1) {
    throw Error("n_control = " + std::to_string(n_control) + " is below degree + 1");
  }
  if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda)) {
    throw Error("ridge_lambda must be a finite non-negative number");
  }
}

std::vector<double> knot_vector(int degree, int n_control) {
  if (degree < 0) throw Error("knot_vector: negative degree");
  if (n_control < degree + 1) {
    throw Error("knot_vector: n_control = " + std::to_string(n_control) +
                " < degree + 1 = " + std::to_string(degree + 1));
  }
  const int interior = n_control - degree - 1;
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(n_control + degree + 1));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), 0.0);
  for (int i = 1; i <= interior; ++i) {
    knots.push_back(static_cast<double>(i) / static_cast<double>(interior + 1));
  }
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), 1.0);
  return knots;
}

std::size_t find_span(std::span<const double> knots, int degree, double u) {
  const std::size_t n = knots.size() - static_cast<std::size_t>(degree) - 1;  // n_control
  const auto p = static_cast<std::size_t>(degree);
  if (u >= knots[n]) return n - 1;
  if (u <= knots[p]) return p;
  // First knot strictly greater than u, minus one.
  const auto it = std::upper_bound(knots.begin() + static_cast<std::ptrdiff_t>(p),
                                   knots.begin() + static_cast<std::ptrdiff_t>(n) + 1, u);
  return static_cast<std::size_t>(it - knots.begin()) - 1;
}

Vector basis_eval(std::span<const double> knots, int degree, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw Error("basis_eval: u outside [0, 1]");
  if (degree < 0 || knots.size() < static_cast<std::size_t>(2 * degree + 2)) {
    throw Error("basis_eval: knot vector too short for degree");
  }
  const auto p = static_cast<std::size_t>(degree);
  const std::size_t n = knots.size() - p - 1;
  const std::size_t span = find_span(knots, degree, u);

  // Nonzero functions N_{span-p..span, p}(u).
  std::vector<double> local(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
  local[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = u - knots[span + 1 - j];
    right[j] = knots[span + j] - u;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom == 0.0 ? 0.0 : local[r] / denom;
      local[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    local[j] = saved;
  }

  Vector values = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j <= p; ++j) {
    values(static_cast<Eigen::Index>(span - p + j)) = local[j];
  }
  return values;
}

DesignMatrix design_matrix(int degree, int n_control, int steps) {
  if (steps < 2) throw Error("design_matrix: need at least 2 steps");
  DesignMatrix dm;
  dm.degree = degree;
  dm.knots = knot_vector(degree, n_control);
  dm.grid.resize(steps);
  dm.phi.resize(steps, n_control);
  for (int t = 0; t < steps; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(steps - 1);
    dm.grid(t) = u;
    dm.phi.row(t) = basis_eval(dm.knots, degree, u).transpose();
  }
  return dm;
}

RidgeSolver::RidgeSolver(Matrix phi, double lambda) : phi_(std::move(phi)), lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error("ridge lambda must be finite and non-negative");
  }
  if (!phi_.allFinite()) throw Error("ridge design matrix has non-finite entries");
  const auto n = phi_.cols();
  Matrix gram = phi_.transpose() * phi_;
  gram.diagonal().array() += lambda;
  llt_.compute(gram);
  if (llt_.info() != Eigen::Success) throw Error("ridge system is not positive definite");
  if (lambda == 0.0) {
    // Rank-deficient Gram matrices can still factor with round-off pivots.
    const Vector diag = Matrix(llt_.matrixL()).diagonal();
    const double hi = diag.cwiseAbs().maxCoeff();
    const double lo = diag.cwiseAbs().minCoeff();
    if (n > 0 && !(lo > 1e-7 * hi)) {
      throw Error("ridge system is singular at lambda = 0 (more control points than "
                  "independent samples)");
    }
  }
}

Matrix RidgeSolver::solve(const Matrix& samples) const {
  if (samples.rows() != phi_.rows()) {
    throw Error("ridge_fit: " + std::to_string(samples.rows()) + " samples for a " +
                std::to_string(phi_.rows()) + "-row design matrix");
  }
  if (!samples.allFinite()) throw Error("ridge_fit: non-finite samples");
  return llt_.solve(phi_.transpose() * samples);
}

std::shared_ptr<const DesignMatrix> cached_design(int degree, int n_control, int steps) {
  using Key = std::tuple<int, int, int>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const DesignMatrix>> cache;

  const Key key{degree, n_control, steps};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto dm = std::make_shared<const DesignMatrix>(design_matrix(degree, n_control, steps));
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(dm)).first->second;
}

std::shared_ptr<const RidgeSolver> cached_solver(int degree, int n_control, int steps,
                                                 double lambda) {
  using Key = std::tuple<int, int, int, double>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const RidgeSolver>> cache;

  const Key key{degree, n_control, steps, lambda};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto solver =
      std::make_shared<const RidgeSolver>(cached_design(degree, n_control, steps)->phi, lambda);
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(solver)).first->second;
}

Vector ridge_fit(const Matrix& phi, const Vector& samples, double lambda) {
  return RidgeSolver(phi, lambda).solve(samples);
}

namespace {

void check_roles(const Matrix& m, std::span<const PartRole> roles, const char* what) {
  if (static_cast<std::size_t>(m.cols()) != roles.size()) {
    throw Error(std::string(what) + ": " + std::to_string(m.cols()) + " columns for " +
                std::to_string(roles.size()) + " channel roles");
  }
}

}  // namespace

Matrix fit_control_points(const Matrix& chunk, std::span<const PartRole> roles,
                          const SplineConfig& cfg) {
  check_roles(chunk, roles, "fit_control_points");
  const int steps = static_cast<int>(chunk.rows());
  Matrix controls(cfg.n_control, chunk.cols());
  for (Eigen::Index c = 0; c < chunk.cols(); ++c) {
    const auto solver =
        cached_solver(cfg.degree_for(roles[c]), cfg.n_control, steps, cfg.ridge_lambda);
    controls.col(c) = solver->solve(chunk.col(c));
  }
  return controls;
}

Matrix reconstruct(const Matrix& phi, const Matrix& controls) {
  if (phi.cols() != controls.rows()) {
    throw Error("reconstruct: design matrix has " + std::to_string(phi.cols()) +
                " columns but control points have " + std::to_string(controls.rows()) + " rows");
  }
  return phi * controls;
}

Matrix reconstruct(const Matrix& controls, std::span<const PartRole> roles,
                   const SplineConfig& cfg, int steps) {
  check_roles(controls, roles, "reconstruct");
  if (controls.rows() != cfg.n_control) {
    throw Error("reconstruct: expected " + std::to_string(cfg.n_control) + " control points");
  }
  Matrix out(steps, controls.cols());
  for (Eigen::Index c = 0; c < controls.cols(); ++c) {
    const auto dm = cached_design(cfg.degree_for(roles[c]), cfg.n_control, steps);
    out.col(c) = dm->phi * controls.col(c);
  }
  return out;
}

}  // namespace omnisat
