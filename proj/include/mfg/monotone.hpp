#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfg/lipsolve.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// Monotonicity functionals on particle measures and couplings, the Z-family
// evaluators with time-dependent weight beta(t), joint-monotonicity
// certificates with penalization matrix A = a I_n, co-coercivity probes and
// the doubled-system value inequality check.
// ---------------------------------------------------------------------------

// <g(.,theta,mu) - g(.,theta,nu), mu - nu> as particle sums:
// mean_mu[g(.,mu) - g(.,nu)] - mean_nu[g(.,mu) - g(.,nu)].
double flat_deficit(const ScalarFn& g, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                    const VectorXd& theta);

// <f(.,theta,mu) - f(.,theta_t,nu), mu - nu> + (b(theta,mu) - b(theta_t,nu))
// . A (theta - theta_t); A must be symmetric n x n.
using ThetaDriftFn = std::function<VectorXd(const VectorXd& theta, const EmpiricalMeasure& mu)>;
double joint_flat_deficit(const ScalarFn& f, const ThetaDriftFn& b, const MatrixXd& A,
                          const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          const VectorXd& theta, const VectorXd& theta_t);

// Z-family evaluator on a coupling gamma with marginals (mu, nu):
//   [1/2 (theta - theta_t) . A (theta - theta_t)]            (when A given)
//   + (1/K) sum (W(x_i,theta,mu) - W(y_i,theta_t,nu)) . (x_i - y_i)
//   - beta (1/K) sum |W(x_i,theta,mu) - W(y_i,theta_t,nu)|^2.
// beta = 0, no A, theta = theta_t recovers the plain Z functional.
double l2_deficit(const InitFn& W_eval, const Coupling& gamma, const VectorXd& theta,
                  const VectorXd& theta_t, double beta = 0.0,
                  const std::optional<MatrixXd>& A = std::nullopt);

// l2_deficit of a supplied gradient with beta = 0 and no A-term.
double displacement_deficit(const InitFn& grad, const Coupling& gamma, const VectorXd& theta);

// beta(t) = beta0 e^{-kappa t} with beta0 = alpha and kappa = 1 + 4 g_lip.
std::function<double(double)> beta_schedule(double alpha, double g_lip);

struct MonotoneProbe {
  std::string id;        // probe kind / coupling preset
  double t = 0.0;        // evaluation time (0 for static probes)
  double deficit = 0.0;  // signed deficit (>= -tol means pass)
  double stderr_ = 0.0;  // MC / fit standard error, 0 when exact
  Coupling gamma;        // recorded inputs for replay
  VectorXd theta, theta_t;
};

struct CertificateResult {
  bool feasible = false;
  double a_lo = 0.0;  // open feasibility interval for a (a_hi may be inf)
  double a_hi = 0.0;
  double a_mid = 0.0;        // tested witness value
  bool blocks_positive = false;  // both 2x2 sufficiency blocks PD at a_mid
  MatrixXd A;                // a_mid * I_n witness (empty when infeasible)
};

struct MonotoneReport {
  std::vector<MonotoneProbe> probes;
  double min_deficit = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::uint64_t seed = 0;
  std::optional<CertificateResult> certificate;

  std::string to_json() const;
  // Failing probes only (deficit < -tolerance), for replay.
  std::string witnesses_to_csv() const;
};

struct ZProbeSpec {
  int n_probes = 50;
  int coupling_size = 32;
  double cluster_spread = 0.15;  // within-cluster scatter relative to spread
  double x_spread = 1.0;
  double theta_spread = 0.5;
  std::uint64_t seed = 97;
};

struct ZProbe {
  double t = 0.0;
  Coupling gamma;
  VectorXd theta, theta_t;
};

// Clustered coupling / theta-pair / time-grid probes for the Z_beta sweep.
std::vector<ZProbe> draw_zbeta_probes(const ModelSpec& model, double T, const ZProbeSpec& spec);

// Evaluates Z_beta (Z^A_beta when model.A is present) at each probe with beta
// from beta_schedule(model.mono_alpha, sampled Lipschitz constant of G);
// verdict pass iff min >= -(1e-6 + 3 se).
MonotoneReport zbeta_propagation_probe(const ModelSpec& model, const FieldApprox& field, double T,
                                       const std::vector<ZProbe>& probes, const SimConfig& cfg);
MonotoneReport zbeta_propagation_probe(const ModelSpec& model, const FieldApprox& field, double T,
                                       const SimConfig& cfg, const ZProbeSpec& spec = {});

struct InequalityCheck {
  double lhs = 0.0;  // [A-term +] <U(t,.,theta,mu) - U(t,.,theta_t,nu), mu - nu>
  double rhs = 0.0;  // alpha_H MC[int_0^t int |W^mu - W^nu|^2 (mu_s + nu_s)(dx) ds]
  double margin = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
};

// Doubled-system value inequality: lhs via value reconstruction on the
// particles with common random numbers across the four evaluations, rhs via
// the doubled characteristics; margin = lhs - rhs.
InequalityCheck monotonicity_inequality_check(const ModelSpec& model, const FieldApprox& field,
                                              double t, const EmpiricalMeasure& mu,
                                              const EmpiricalMeasure& nu, const VectorXd& theta,
                                              const VectorXd& theta_t, const SimConfig& cfg);

// Closed-form joint-monotonicity certificate for the strongly monotone
// separated family: feasible iff 4 alpha_G alpha_F alpha_b^2 >
// dthetaG_bound^2 b_lip^2 (strict); the open interval for a is
// (dthetaG_bound^2 / (2 alpha_G alpha_b), 2 alpha_F alpha_b / b_lip^2) and the
// midpoint witness is checked positive definite on both 2x2 blocks
//   [alpha_G, -dthetaG/2; -dthetaG/2, a alpha_b / 2] and
//   [alpha_F, -a b_lip/2; -a b_lip/2, a alpha_b / 2].
CertificateResult joint_certificate_search(double alpha_G, double alpha_F, double alpha_b,
                                           double dthetaG_bound, double b_lip, int dim_theta = 1);

// Min over sampled pairs of (grad(x) - grad(y)).(x - y) - (1/L)|grad(x) -
// grad(y)|^2 (co-coercivity with constant 1/L).
double cocoercivity_check(const std::function<VectorXd(const VectorXd&)>& grad, double L,
                          const std::vector<std::pair<VectorXd, VectorXd>>& samples);

struct AuditSpecM {
  int budget = 64;
  int cloud_size = 16;
  double x_spread = 1.0;
  double theta_spread = 0.5;
  double w_spread = 1.0;
  double tolerance = 1e-9;
  std::uint64_t seed = 11;
};

// Sampled audit of the hypotheses the model claims: D_x H growth ratios, the
// lambda-grid minimized (F, G[, Ab]) monotonicity inequality on random and
// adversarial couplings, and the [A-penalized] W0 monotonicity deficit.
MonotoneReport hypothesis_audit(const ModelSpec& model, int budget, const AuditSpecM& spec = {});

}  // namespace mfg
