#pragma once

#include <string>
#include <vector>

#include "mfg/measures.hpp"

namespace mfg {

// Polynomial feature basis over the variables (x in R^d, theta in R^n,
// mean(mu) in R^d, second raw moment of mu in R^d): all monomials of total
// degree <= degree, enumerated in graded lexicographic order.
struct FeatureBasis {
  int dim_x = 1;
  int dim_theta = 1;
  int degree = 2;
  std::vector<std::vector<int>> exps;  // one exponent vector per feature

  static FeatureBasis make(int dim_x, int dim_theta, int degree);

  int n_vars() const { return 3 * dim_x + dim_theta; }
  int size() const { return static_cast<int>(exps.size()); }

  // Feature matrix (K x n_features) for a batch of points sharing (theta, mu
  // moments); X is d x K.
  MatrixXd features(const MatrixXd& X, const VectorXd& theta, const VectorXd& m1,
                    const VectorXd& m2) const;
};

// Time-indexed regression representation of the field W(t, x, theta, mu):
// coefficients over the feature basis at grid times k*dt, linearly
// interpolated in t.
struct FieldApprox {
  FeatureBasis basis;
  Domain domain = Domain::euclidean;
  double period = 1.0;
  double dt = 0.0;                  // grid spacing (0 allowed when single-level)
  std::vector<MatrixXd> coef;       // per level: n_features x d
  std::vector<double> fit_residual; // regression rms residual per level

  int levels() const { return static_cast<int>(coef.size()); }
  double t_max() const { return coef.size() <= 1 ? 0.0 : dt * (levels() - 1); }

  // Evaluate at a batch of points sharing (theta, mu); returns d x K.
  MatrixXd eval_batch(double t, const MatrixXd& X, const VectorXd& theta,
                      const EmpiricalMeasure& mu) const;
  VectorXd eval(double t, const VectorXd& x, const VectorXd& theta,
                const EmpiricalMeasure& mu) const;

  // A field constant in (t, x, theta, mu).
  static FieldApprox constant(const FeatureBasis& basis, const VectorXd& value,
                              Domain domain = Domain::euclidean, double period = 1.0);

  std::string to_json() const;
  static FieldApprox from_json(const std::string& text);
};

// Ridge-regularized least-squares fit of targets (d x K) against the basis
// features (K x n_features); returns n_features x d coefficients and stores
// the fit rms residual in *residual when given.
MatrixXd ridge_fit(const MatrixXd& Phi, const MatrixXd& targets, double lambda = 1e-9,
                   double* residual = nullptr);

}  // namespace mfg
