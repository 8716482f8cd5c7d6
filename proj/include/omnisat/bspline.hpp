#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "omnisat/core.hpp"

namespace omnisat {

struct SplineConfig {
  int degree_pos_rot = 3;
  int degree_grip = 0;
  int n_control = 8;
  double ridge_lambda = 1e-3;

  int degree_for(PartRole role) const {
    return role == PartRole::gripper ? degree_grip : degree_pos_rot;
  }
  void validate() const;

  bool operator==(const SplineConfig&) const = default;
};

/// Clamped uniform knots on [0, 1]; end values repeated degree + 1 times.
std::vector<double> knot_vector(int degree, int n_control);

/// Index i of the knot span [u_i, u_{i+1}) holding u. The last non-empty span
/// is treated as closed so that u = 1 is covered.
std::size_t find_span(std::span<const double> knots, int degree, double u);

/// All n_control basis values N_{i,p}(u), via the triangular Cox-de Boor scheme.
Vector basis_eval(std::span<const double> knots, int degree, double u);

struct DesignMatrix {
  int degree = 0;
  std::vector<double> knots;
  Vector grid;  // u_t = t / (steps - 1)
  Matrix phi;   // steps x n_control
};

DesignMatrix design_matrix(int degree, int n_control, int steps);
inline DesignMatrix design_matrix(const SplineConfig& cfg, int degree, int steps) {
  return design_matrix(degree, cfg.n_control, steps);
}

/// Cholesky-factored (Phi^T Phi + lambda I) for one design matrix.
class RidgeSolver {
 public:
  RidgeSolver(Matrix phi, double lambda);

  /// Columns of `samples` are fitted independently; returns n_control x cols.
  Matrix solve(const Matrix& samples) const;

  const Matrix& phi() const { return phi_; }
  double lambda() const { return lambda_; }

 private:
  Matrix phi_;
  double lambda_;
  Eigen::LLT<Matrix> llt_;
};

/// Shared design matrix keyed by (degree, n_control, steps). Thread-safe.
std::shared_ptr<const DesignMatrix> cached_design(int degree, int n_control, int steps);

/// Shared solver keyed by (degree, n_control, steps, lambda). Thread-safe.
std::shared_ptr<const RidgeSolver> cached_solver(int degree, int n_control, int steps,
                                                 double lambda);

Vector ridge_fit(const Matrix& phi, const Vector& samples, double lambda);

/// Fits a steps x d normalized chunk to n_control x d control points, one DoF
/// per column, with the degree chosen by each channel's part role.
Matrix fit_control_points(const Matrix& chunk, std::span<const PartRole> roles,
                          const SplineConfig& cfg);

/// phi * controls.
Matrix reconstruct(const Matrix& phi, const Matrix& controls);

/// Inverse of fit_control_points at an arbitrary number of steps.
Matrix reconstruct(const Matrix& controls, std::span<const PartRole> roles,
                   const SplineConfig& cfg, int steps);

}  // namespace omnisat
