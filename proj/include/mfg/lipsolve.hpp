#pragma once

#include <map>
#include <utility>

#include "mfg/characteristics.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// Linear problem solved by the psi operator.  The characteristics are
//   dX = -A(t - s, X, theta, m) ds + sqrt(2 sigma_x) dB
//   dtheta = -B(t - s, theta, m) ds + sqrt(2 sigma_theta) dB^theta
// and psi(t, x, theta, mu) averages V0 at the endpoint plus the running
// source E along the path (left-endpoint Riemann sum on the dt grid).
// ---------------------------------------------------------------------------
using LinearCoef = std::function<MatrixXd(double t, const MatrixXd& X, const VectorXd& theta,
                                          const EmpiricalMeasure& mu)>;
using LinearTheta =
    std::function<VectorXd(double t, const VectorXd& theta, const EmpiricalMeasure& mu)>;

struct LinearProblem {
  int dim_x = 1;
  int dim_theta = 1;
  Domain domain = Domain::euclidean;
  double period = 1.0;
  double sigma_x = 0.0;
  VectorXd sigma_theta;
  LinearCoef A;   // drift coefficient (applied with a minus sign)
  LinearTheta B;  // theta drift coefficient (applied with a minus sign)
  LinearCoef E;   // running source
  InitFn V0;      // initial condition
};

// Fixed evaluation sample: n_groups shared (theta, cloud) environments, each
// carrying a few x probe points.  Drawn once and reused across iterations.
// On the torus x_spread and cloud_spread are fractions of a quarter period
// (clustered clouds keep the representative statistics informative); cloud
// spreads additionally vary by a uniform factor in [0.5, 1.5] across groups.
struct AuditSpec {
  int n_groups = 16;
  int pts_per_group = 4;
  double x_spread = 1.0;
  double theta_spread = 1.0;
  double cloud_spread = 0.5;
  std::uint64_t seed = 2024;
};

struct AuditSample {
  std::vector<VectorXd> theta;       // per group
  std::vector<EmpiricalMeasure> mu;  // per group, n_particles each
  std::vector<MatrixXd> x;           // per group: d x pts_per_group

  int n_groups() const { return static_cast<int>(theta.size()); }
  int total_points() const;
  // Gaussian x/theta and Gaussian clouds on R^d; uniform on the torus.
  static AuditSample draw(const ModelSpec& model, int n_particles, const AuditSpec& spec = {});
};

// Linear Feynman-Kac solve: returns the regression field on the dt grid of
// [0, cfg.horizon], fitted level by level through the one-step dynamic
// programming recursion V_k(x) = dt E(t_k, x) + E[V_{k-1}(X_dt, theta_dt,
// m_dt)] (the exact semigroup recursion of the linear equation; the level-0
// fit reproduces V0 within the recorded residual).  Throws BlowUpError when a
// simulated coordinate leaves the guard region.
//
// ridge_lambda regularizes every level fit.  The audit design is
// near-degenerate in the measure block whenever clouds are tight relative to
// the spread of their centers (on the torus this is unavoidable: seam-safe
// clusters cap the per-group variance far below the range of the squared
// mean, so the raw second moment tracks the squared mean almost exactly); the
// standardized penalty stops Monte-Carlo target noise from being amplified
// along those directions and compounding level to level.  Pass a tiny value
// to recover a near-interpolating fit on well-conditioned designs.
FieldApprox apply_psi(const LinearProblem& prob, const AuditSample& audit, const SimConfig& cfg,
                      const FeatureBasis& basis, double ridge_lambda = 1e-5);

struct PicardOptions {
  double damping = 0.5;
  double tol = 1e-5;
  int max_iters = 100;
  double ridge_lambda = 1e-5;  // level-fit regularization, see apply_psi
};

enum class SolveStatus { converged, max_iters, blow_up };

struct SolveReport {
  std::vector<double> changes;  // sup-norm change over the audit sample per iteration
  std::vector<double> times;    // grid times of the final iterate
  std::vector<std::map<std::string, double>> lipschitz;  // per time: keys x, theta, measure
  SolveStatus status = SolveStatus::max_iters;
  int iterations = 0;
  double blow_up_time = -1.0;
  double blow_up_estimate = 0.0;
  std::string blow_up_variable;
  double damping = 0.5;
  double tol = 1e-5;
  int max_iters = 100;

  std::string summary() const;
};

// Damped Picard iteration W <- (1 - damping) W + damping psi(F(.,W), b[W],
// G(.,W), W0) from the constant-in-time lift of W0; stops on sup-change <=
// tol over the audit sample, max_iters, or the Lipschitz blow-up guard
// (per-variable estimate > 1e3 or growth factor > 10 between consecutive
// grid times).  Blow-up is a status, not an exception.
std::pair<FieldApprox, SolveReport> fixed_point_solve(const ModelSpec& model, double T,
                                                      const SimConfig& cfg,
                                                      const PicardOptions& picard = {},
                                                      const AuditSpec& audit_spec = {});

struct LipProbeSpec {
  int n_probes = 32;
  int cloud_size = 32;
  double x_spread = 1.0;
  double theta_spread = 1.0;
  double q = 2.0;  // Wasserstein order for the measure quotient
  std::uint64_t seed = 17;
};

// Sampled per-variable difference-quotient estimates of the field's Lipschitz
// constants at time t; keys "x", "theta", "measure".
std::map<std::string, double> estimate_field_lipschitz(const FieldApprox& field, double t,
                                                       const LipProbeSpec& probe = {});

// Monte-Carlo value U(t, x, theta, mu) = E[U0(x + sqrt(2 sigma_x) B_t,
// theta_t, m_t) - int_0^t H(X_s, theta_s, m_s, W(t-s, X_s, theta_s, m_s)) ds]
// with (theta_s, m_s) simulated independently of B.  The batch variant shares
// the (theta, m) flow across the probe columns (one point per column).
RowVectorXd reconstruct_value_batch(const ModelSpec& model, const FieldApprox& field, double t,
                                    const MatrixXd& X, const VectorXd& theta,
                                    const EmpiricalMeasure& mu, const SimConfig& cfg,
                                    RowVectorXd* stderr_out = nullptr);
double reconstruct_value(const ModelSpec& model, const FieldApprox& field, double t,
                         const VectorXd& x, const VectorXd& theta, const EmpiricalMeasure& mu,
                         const SimConfig& cfg, double* stderr_out = nullptr);

// Heat-kernel representation of grad_x U: MC average of W0(x + sqrt(2 sigma_x)
// B_t, theta_t, m_t) minus the running H term weighted by B_s / (sqrt(2
// sigma_x) max(s, dt)), with the x-frozen H value subtracted as a zero-mean
// control variate.  Requires sigma_x > 0 (use finite differences of
// reconstruct_value otherwise).
VectorXd gradient_heat_kernel(const ModelSpec& model, const FieldApprox& field, double t,
                              const VectorXd& x, const VectorXd& theta, const EmpiricalMeasure& mu,
                              const SimConfig& cfg, VectorXd* stderr_out = nullptr);

// Dynamic programming residual |W(t, x, theta, mu) - E[W(s, X_{t-s},
// theta_{t-s}, m_{t-s}) + int_0^{t-s} G du]| (Euclidean norm over components).
double check_dpp(const ModelSpec& model, const FieldApprox& field, double t, double s,
                 const VectorXd& x, const VectorXd& theta, const EmpiricalMeasure& mu,
                 const SimConfig& cfg, double* stderr_out = nullptr);

// Mean-constancy martingale check: max over grid times of |mean(M_t) -
// mean(M_0)| where M_t = W(T - t, X_t, theta_t, m_t) + int_0^t G ds.
double martingale_residual(const ModelSpec& model, const FieldApprox& field, double T,
                           const SimInit& init, const SimConfig& cfg,
                           double* stderr_out = nullptr);

struct ValueProbe {
  double t = 0.0;
  VectorXd x;
  VectorXd theta;
  EmpiricalMeasure mu;
};

// Max over the sample of |central difference of reconstruct_value in x -
// field|, with step h = 1e-3 (1 + |x|); where sigma_x > 0 the heat-kernel
// gradient route is cross-checked against the field under the same budget.
double check_gradient_consistency(const ModelSpec& model, const FieldApprox& field,
                                  const std::vector<ValueProbe>& sample, const SimConfig& cfg);

}  // namespace mfg
