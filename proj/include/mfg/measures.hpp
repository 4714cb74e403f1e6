#pragma once

#include <string>
#include <vector>

#include "mfg/common.hpp"

namespace mfg {

// Uniform-weight particle cloud on R^d or the torus [0, L)^d.
struct EmpiricalMeasure {
  MatrixXd pts;  // d x N, one particle per column
  Domain domain = Domain::euclidean;
  double period = 1.0;

  EmpiricalMeasure() = default;
  EmpiricalMeasure(MatrixXd points, Domain dom = Domain::euclidean, double L = 1.0)
      : pts(std::move(points)), domain(dom), period(L) {
    if (pts.cols() < 1) throw std::invalid_argument("EmpiricalMeasure: need at least one particle");
    if (domain == Domain::torus) wrap_in_place(pts, period);
  }

  int dim() const { return static_cast<int>(pts.rows()); }
  int size() const { return static_cast<int>(pts.cols()); }

  VectorXd mean() const { return pts.rowwise().mean(); }
  // Per-axis raw second moment (1/N) sum x_i^2.
  VectorXd second_moment() const { return pts.array().square().rowwise().mean(); }
};

// Uniform coupling: K pairs (x_i, y_i), weight 1/K each.
struct Coupling {
  MatrixXd x, y;  // d x K each
  Domain domain = Domain::euclidean;
  double period = 1.0;

  int dim() const { return static_cast<int>(x.rows()); }
  int size() const { return static_cast<int>(x.cols()); }

  EmpiricalMeasure first() const { return EmpiricalMeasure(x, domain, period); }
  EmpiricalMeasure second() const { return EmpiricalMeasure(y, domain, period); }

  // Signed displacement x_i - y_i (wrapped per axis on the torus).
  MatrixXd displacement() const {
    MatrixXd d = x - y;
    if (domain == Domain::torus)
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, j) = wrap_diff(d(i, j), period);
    return d;
  }

  // ((1/K) sum |x_i - y_i|^q)^(1/q)
  double cost(double q) const;
};

// Exact minimum-cost assignment (square cost matrix), O(n^3) augmenting paths.
std::vector<int> min_cost_assignment(const MatrixXd& cost);

// Exact Wasserstein-q distance between uniform clouds.  d=1 euclidean uses
// sort-matching; otherwise an exact assignment solve (particle count <= cap).
// Unequal counts are replicated to their lcm when it does not exceed cap.
double wasserstein_distance(double q, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            int cap = 256);

// A coupling achieving the wasserstein_distance optimum (pairs in mu order).
Coupling optimal_coupling(double q, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          int cap = 256);

// Pushforward of mu by x -> x + theta (re-reduced on the torus).
EmpiricalMeasure pushforward_shift(const EmpiricalMeasure& mu, const VectorXd& theta);

// ((1/N) sum |x_i|^q)^(1/q)
double moment(const EmpiricalMeasure& mu, double q);

// CSV (one particle per row, comma-separated coordinates) and JSON
// array-of-arrays serialization; formats documented in the README.
std::string measure_to_csv(const EmpiricalMeasure& mu);
EmpiricalMeasure measure_from_csv(const std::string& csv, Domain domain = Domain::euclidean,
                                  double period = 1.0);
std::string measure_to_json(const EmpiricalMeasure& mu);
EmpiricalMeasure measure_from_json(const std::string& text, Domain domain = Domain::euclidean,
                                   double period = 1.0);

}  // namespace mfg
