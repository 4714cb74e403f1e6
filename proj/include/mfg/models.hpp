#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "mfg/measures.hpp"

namespace mfg {

// Coefficient callables are batched: X and W hold one point per column
// (d x K); the per-point signatures of the problem data are the K = 1 case.
using CoefFn = std::function<MatrixXd(const MatrixXd& X, const VectorXd& theta,
                                      const EmpiricalMeasure& mu, const MatrixXd& W)>;
using InitFn = std::function<MatrixXd(const MatrixXd& X, const VectorXd& theta,
                                      const EmpiricalMeasure& mu)>;
using ScalarFn = std::function<RowVectorXd(const MatrixXd& X, const VectorXd& theta,
                                           const EmpiricalMeasure& mu)>;
using HamiltonianFn = std::function<RowVectorXd(const MatrixXd& X, const VectorXd& theta,
                                                const EmpiricalMeasure& mu, const MatrixXd& P)>;
// Noise drift b(theta, mu, f): the functional argument is the field sampled at
// the particles of mu (column i pairs with mu.pts.col(i)).
using NoiseDriftFn = std::function<VectorXd(const VectorXd& theta, const EmpiricalMeasure& mu,
                                            const MatrixXd& field_samples)>;

// Problem data for the master-equation fixed point.
struct ModelSpec {
  std::string name;
  int dim_x = 1;
  int dim_theta = 1;
  Domain domain = Domain::euclidean;
  double period = 1.0;

  CoefFn F;    // drift of characteristics (= D_pH in the MFG case)
  CoefFn G;    // source (= -D_xH in the MFG case)
  InitFn W0;   // initial condition (= grad_x U0 in the MFG case)
  ScalarFn U0;       // optional terminal cost, for value reconstruction
  HamiltonianFn H;   // optional Hamiltonian, for value reconstruction
  NoiseDriftFn b;    // noise-process drift

  double sigma_x = 0.0;
  VectorXd sigma_theta;   // per-component theta diffusion, size dim_theta
  double beta_cn = 0.0;   // additive common-noise intensity

  // Convexity constant of the Hamiltonian in p, normalized so that
  //   H(x,th,mu,p) - H(x,th,mu,q) - grad_p H(x,th,mu,q).(p-q) >= alpha_H |p-q|^2;
  // a Hamiltonian with p-Hessian k*I gets alpha_H = k/2.
  std::optional<double> alpha_H;
  std::optional<double> mono_alpha;  // claimed monotonicity certificate constant
  std::optional<MatrixXd> A;         // symmetric penalization matrix (n x n)

  bool has_value_data() const { return static_cast<bool>(U0) && static_cast<bool>(H); }
  void validate() const;
};

// Parameters of the linear-quadratic built-in:
//   H  = p^2/2 + c_xp x p - (c_f/2) x^2 - c_fm x mean(mu)
//   U0 = (u2/2) x^2 + u_m x mean(mu)
//   b  = r_b theta
struct LqParams {
  double c_f = 1.0;
  double c_xp = 0.0;
  double c_fm = 0.5;
  double u2 = 0.8;
  double u_m = 0.25;
  double r_b = 0.5;
  double sigma_x = 0.25;
  double sigma_theta = 0.1;
  double beta_cn = 0.0;
};

// Built-in problem data; params is a flat key -> value table overriding the
// defaults of the named model (unknown keys rejected).
ModelSpec builtin_model(const std::string& name,
                        const std::map<std::string, double>& params = {});

// Riccati coefficients of the affine ansatz W(t,x,mu) = a(t) x + c(t) mean(mu)
// + e(t) obtained by substituting the ansatz into the transport system:
//   a' = c_f - 2 c_xp a - a^2,          a(0) = u2
//   c' = c_fm - 2 (a + c_xp) c - c^2,   c(0) = u_m
//   e' = -(a + c + c_xp) e,             e(0) = 0
// integrated by an adaptive Dormand-Prince 5(4) scheme.
struct LqCoeffs {
  double a, c, e;
};
LqCoeffs lq_riccati_coeffs(const LqParams& p, double t, double tol = 1e-10);

// Closed-form oracle W(t, x, mu) for the lq built-in (d = 1; theta autonomous,
// ignored).  Throws on finite-time Riccati blow-up inside [0, t].
double lq_riccati_oracle(const LqParams& p, double t, double x, double mean_mu);

struct LipschitzSampler {
  std::uint64_t seed = 1;
  int cloud_size = 16;
  double x_spread = 1.0;
  double theta_spread = 1.0;
  double w_spread = 1.0;
};

// Sampled lower bounds on per-coefficient Lipschitz constants; keys
// "F", "G", "W0", "b".  For b the functional slot is compared through the
// optimal coupling of the two sampled clouds.
std::map<std::string, double> estimate_lipschitz_constants(const ModelSpec& model,
                                                           const LipschitzSampler& sampler,
                                                           int budget);

}  // namespace mfg
