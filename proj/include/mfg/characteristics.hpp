#pragma once

#include <functional>
#include <optional>
#include <stdexcept>

#include "mfg/field.hpp"
#include "mfg/models.hpp"
#include "mfg/noise.hpp"

namespace mfg {

// Euler-Maruyama configuration for the coupled characteristics.
struct SimConfig {
  double dt = 0.01;
  int n_particles = 100;     // cloud size N
  int n_paths = 100;         // outer Monte-Carlo paths M
  std::uint64_t seed = 1;
  double horizon = 1.0;
  int threads = 1;
  std::int64_t step_offset = 0;  // global index of the first step in the noise addressing

  int n_steps() const;
  void validate() const;  // dt > 0; N, M >= 1; horizon >= 0 and an integer multiple of dt
};

// A particle coordinate left the numerical guard region: the path aborted.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(double time_, double value_);
  double time;
  double value;
};

// State of one path at a grid point: the self-consistent cloud (d x N), the
// tagged particles (d x M, possibly zero columns) and the noise variable.
struct SysState {
  MatrixXd cloud;
  MatrixXd tagged;
  VectorXd theta;
};

// One realized path on the dt grid.  Increment histories keep the scaled
// Gaussian terms actually added at each step for the tagged particles, theta
// and the common shift; cloud increments are not stored (they are exactly
// reproducible from the NoiseBank addresses seed/step_offset).
struct PathTrajectory {
  std::vector<VectorXd> theta;        // grid of R^n, K+1 entries
  std::vector<MatrixXd> cloud;        // grid of d x N
  std::vector<MatrixXd> tagged;       // grid of d x M
  std::vector<VectorXd> theta_incr;   // K entries
  std::vector<MatrixXd> tagged_incr;  // K entries
  std::vector<VectorXd> common_incr;  // K entries (empty vectors when no common noise)
};

struct PathBundle {
  double dt = 0.0;
  Domain domain = Domain::euclidean;
  double period = 1.0;
  std::uint64_t seed = 0;
  std::int64_t step_offset = 0;
  std::vector<PathTrajectory> paths;

  EmpiricalMeasure cloud_measure(int path, int step) const;
  // Long-format export: path,step,entity,index,comp,value.
  std::string to_csv() const;
};

// Initial condition: tagged start points (d x M), theta, and the cloud.
struct SimInit {
  MatrixXd tagged;
  VectorXd theta;
  EmpiricalMeasure mu;
};

// Generic dynamics driver.  x_drift applies to cloud and tagged particles
// alike (batched, one point per column); theta_drift sees the current cloud.
// joint_cov, when present, is the (n + d) x (n + d) covariance of the
// stacked (theta-noise, common-noise) standard increments (identity when
// absent); it must be symmetric positive semi-definite.
struct Dynamics {
  int dim_x = 1;
  int dim_theta = 1;
  Domain domain = Domain::euclidean;
  double period = 1.0;
  double sigma_x = 0.0;
  VectorXd sigma_theta;
  double beta_cn = 0.0;
  std::function<MatrixXd(double s, const MatrixXd& X, const VectorXd& theta,
                         const EmpiricalMeasure& mu)>
      x_drift;
  std::function<VectorXd(double s, const VectorXd& theta, const EmpiricalMeasure& mu)> theta_drift;
  // Optional override for the tagged particles' drift (defaults to x_drift);
  // lets a tagged probe follow pure Brownian motion alongside the full cloud.
  std::function<MatrixXd(double s, const MatrixXd& X, const VectorXd& theta,
                         const EmpiricalMeasure& mu)>
      tagged_drift;
  std::optional<MatrixXd> joint_cov;
};

// Invoked at every grid index 0..K with elapsed time s = k*dt and the state at
// that grid point (index 0 carries the initial condition unchanged).  Called
// concurrently for distinct paths; calls within one path are ordered.
using StepCallback = std::function<void(int path, int step, double s, const SysState& state)>;

// Core integrator.  Bitwise deterministic in the thread count: every Gaussian
// increment is addressed by (seed, path, lane, step_offset + step, role).
// Either argument of (on_step, out) may be empty/null.
void simulate_stream(const Dynamics& dyn, const SimInit& init, const SimConfig& cfg,
                     const StepCallback& on_step, PathBundle* out = nullptr);

// Dynamics of the model driven by a field: x-drift -F(x, theta, mu, W(t-s)),
// theta-drift -b(theta, mu, W(t-s) sampled at the cloud), with t = target_time.
Dynamics dynamics_from(const ModelSpec& model, const FieldApprox& field, double target_time);

// Forward characteristics (X_s, theta_s, m_s) over [0, cfg.horizon]; the field
// is read at time horizon - s.
PathBundle simulate_forward(const ModelSpec& model, const FieldApprox& field, const SimInit& init,
                            const SimConfig& cfg);

// Two systems driven by identical idiosyncratic and theta increments, started
// from the two marginals of gamma0 with paired particles (pairing preserved:
// particle i of either cloud keeps the same partner for all times).
struct DoubledBundle {
  PathBundle first;
  PathBundle second;
  Coupling evolved_coupling(int path, int step) const;
};
DoubledBundle simulate_doubled(const ModelSpec& model, const FieldApprox& field,
                               const Coupling& gamma0, const VectorXd& theta1,
                               const VectorXd& theta2, const SimConfig& cfg,
                               const MatrixXd& tagged1 = MatrixXd(),
                               const MatrixXd& tagged2 = MatrixXd());

struct CommonNoiseOptions {
  // Covariance of the stacked (theta, common) standard increments; identity
  // when absent.  Validated symmetric positive semi-definite.
  std::optional<MatrixXd> joint_cov;
};

// Adds the shared increment sqrt(2 beta) dB^c to every particle of the cloud
// and to the tagged particles; beta = model.beta_cn.  With beta = 0 and no
// correlation the output is identical to simulate_forward under the same seed.
PathBundle simulate_common_noise(const ModelSpec& model, const FieldApprox& field,
                                 const SimInit& init, const SimConfig& cfg,
                                 const CommonNoiseOptions& opts = {});

// Static-chunk parallel map over [0, n); rethrows the lowest-index exception.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

}  // namespace mfg
