#include "mfg/noisetransform.hpp"

#include "mfg/monotone.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace mfg {
namespace {

MatrixXd shift_points(const MatrixXd& X, const VectorXd& s, Domain domain, double period) {
  MatrixXd out = X.colwise() + s;
  if (domain == Domain::torus) wrap_in_place(out, period);
  return out;
}

}  // namespace

TransformedModel transform_model(const ModelSpec& base, bool allow_theta_concat) {
  base.validate();
  if (!(base.beta_cn > 0.0))
    throw std::invalid_argument("transform_model: base model has no common noise (beta_cn = 0)");
  if (base.dim_theta != 0 && !allow_theta_concat)
    throw std::invalid_argument(
        "transform_model: base model carries an endogenous theta; opt into the concatenated "
        "theta block with allow_theta_concat");

  const int d = base.dim_x;
  const int n = base.dim_theta;
  const Domain domain = base.domain;
  const double period = base.period;

  TransformedModel tm;
  tm.base = base;
  tm.base_dim_theta = n;
  tm.shift_dim = d;

  ModelSpec m = base;
  m.name = base.name + "+shift";
  m.dim_theta = n + d;
  m.beta_cn = 0.0;
  m.sigma_theta = VectorXd(n + d);
  m.sigma_theta.head(n) = base.sigma_theta;
  m.sigma_theta.tail(d).setConstant(base.beta_cn);

  auto split_shift = [n, d](const VectorXd& th) { return VectorXd(th.tail(d)); };
  auto split_base = [n](const VectorXd& th) { return VectorXd(th.head(n)); };

  m.F = [f = base.F, split_shift, split_base, domain, period](
            const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu,
            const MatrixXd& W) {
    const VectorXd s = split_shift(th);
    return f(shift_points(X, s, domain, period), split_base(th), pushforward_shift(mu, s), W);
  };
  m.G = [g = base.G, split_shift, split_base, domain, period](
            const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu,
            const MatrixXd& W) {
    const VectorXd s = split_shift(th);
    return g(shift_points(X, s, domain, period), split_base(th), pushforward_shift(mu, s), W);
  };
  m.W0 = [w0 = base.W0, split_shift, split_base, domain, period](
             const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu) {
    const VectorXd s = split_shift(th);
    return w0(shift_points(X, s, domain, period), split_base(th), pushforward_shift(mu, s));
  };
  if (base.U0) {
    m.U0 = [u0 = base.U0, split_shift, split_base, domain, period](
               const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu) {
      const VectorXd s = split_shift(th);
      return u0(shift_points(X, s, domain, period), split_base(th), pushforward_shift(mu, s));
    };
  }
  if (base.H) {
    m.H = [h = base.H, split_shift, split_base, domain, period](
              const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu,
              const MatrixXd& P) {
      const VectorXd s = split_shift(th);
      return h(shift_points(X, s, domain, period), split_base(th), pushforward_shift(mu, s), P);
    };
  }
  // The shift block is driftless: b' = [b_base; 0].
  m.b = [b = base.b, split_shift, split_base, n, d](const VectorXd& th, const EmpiricalMeasure& mu,
                                                    const MatrixXd& fs) {
    VectorXd out = VectorXd::Zero(n + d);
    if (n > 0 && b) out.head(n) = b(split_base(th), pushforward_shift(mu, split_shift(th)), fs);
    return out;
  };
  if (base.A) {
    MatrixXd Ap = MatrixXd::Zero(n + d, n + d);
    Ap.topLeftCorner(n, n) = *base.A;
    m.A = Ap;
  }

  tm.derived = std::move(m);
  tm.derived.validate();
  return tm;
}

VectorXd lift_theta(const TransformedModel& tm, const VectorXd& theta_base) {
  if (theta_base.size() != tm.base_dim_theta)
    throw std::invalid_argument("lift_theta: theta has the wrong dimension");
  VectorXd out = VectorXd::Zero(tm.base_dim_theta + tm.shift_dim);
  out.head(tm.base_dim_theta) = theta_base;
  return out;
}

double shift_invariance_residual(const FieldApprox& field_derived, const TransformedModel& tm,
                                 double t, const VectorXd& y, const VectorXd& theta,
                                 const EmpiricalMeasure& mu) {
  const int n = tm.base_dim_theta;
  const int d = tm.shift_dim;
  if (theta.size() != n + d)
    throw std::invalid_argument("shift_invariance_residual: theta has the wrong dimension");
  const VectorXd s = theta.tail(d);
  const VectorXd left = field_derived.eval(t, y, theta, mu);
  MatrixXd ys = shift_points(y, s, tm.base.domain, tm.base.period);
  const VectorXd right =
      field_derived.eval(t, ys.col(0), lift_theta(tm, theta.head(n)), pushforward_shift(mu, s));
  return (left - right).norm();
}

EquivalenceReport common_noise_equivalence_check(const ModelSpec& base, double T,
                                                 const SimConfig& cfg,
                                                 const PicardOptions& picard, int n_probes) {
  if (n_probes < 1) throw std::invalid_argument("common_noise_equivalence_check: n_probes >= 1");
  const TransformedModel tm = transform_model(base, /*allow_theta_concat=*/true);

  EquivalenceReport rep;
  // theta and the measure moments are shared within an audit group, so the
  // group count must dominate the number of degree-2 group-level monomials or
  // the fit is underdetermined in those variables (the transform enlarges
  // theta, so the default audit is too small here).
  const int group_vars = tm.derived.dim_theta + 2 * base.dim_x;
  AuditSpec solve_audit;
  solve_audit.n_groups = std::max(16, 2 * (group_vars + 1) * (group_vars + 2));
  auto solved = fixed_point_solve(tm.derived, T, cfg, picard, solve_audit);
  rep.solve = solved.second;
  if (rep.solve.status == SolveStatus::blow_up)
    throw BlowUpError(rep.solve.blow_up_time, rep.solve.blow_up_estimate);
  rep.field = solved.first;
  const FieldApprox& Wd = rep.field;

  const int d = base.dim_x;
  const int n = base.dim_theta;

  // Section field in base coordinates: the derived field read at shift 0.
  auto section = [&](double tau, const MatrixXd& X, const VectorXd& th,
                     const EmpiricalMeasure& mu) {
    return Wd.eval_batch(tau, X, lift_theta(tm, th), mu);
  };

  AuditSpec aspec;
  aspec.n_groups = n_probes;
  aspec.pts_per_group = 1;
  aspec.seed = cfg.seed ^ 0x5eedc0ffeeULL;
  const AuditSample audit = AuditSample::draw(base, cfg.n_particles, aspec);

  Dynamics dyn;
  dyn.dim_x = d;
  dyn.dim_theta = n;
  dyn.domain = base.domain;
  dyn.period = base.period;
  dyn.sigma_x = base.sigma_x;
  dyn.sigma_theta = base.sigma_theta;
  dyn.beta_cn = base.beta_cn;
  dyn.x_drift = [&](double s, const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu) {
    return (-base.F(X, th, mu, section(T - s, X, th, mu))).eval();
  };
  dyn.theta_drift = [&](double s, const VectorXd& th, const EmpiricalMeasure& mu) {
    if (n == 0 || !base.b) return VectorXd(n);
    return VectorXd(-base.b(th, mu, section(T - s, mu.pts, th, mu)));
  };

  SimConfig mc = cfg;
  mc.horizon = T;
  const int K = mc.n_steps();
  const int M = mc.n_paths;

  for (int g = 0; g < audit.n_groups(); ++g) {
    const VectorXd x = audit.x[g].col(0);
    const VectorXd theta = audit.theta[g];
    const EmpiricalMeasure& mu = audit.mu[g];
    const VectorXd left = Wd.eval(T, x, lift_theta(tm, theta), mu);

    SimInit init;
    init.tagged = x;
    init.theta = theta;
    init.mu = mu;
    mc.seed = cfg.seed + 7919u * static_cast<std::uint64_t>(g + 1);

    MatrixXd acc = MatrixXd::Zero(d, M);
    MatrixXd vals = MatrixXd::Zero(d, M);
    simulate_stream(dyn, init, mc,
                    [&](int path, int step, double s, const SysState& st) {
                      EmpiricalMeasure m(st.cloud, base.domain, base.period);
                      if (step < K) {
                        acc.col(path) +=
                            mc.dt *
                            base.G(st.tagged, st.theta, m, section(T - s, st.tagged, st.theta, m))
                                .col(0);
                      } else {
                        vals.col(path) = base.W0(st.tagged, st.theta, m).col(0) + acc.col(path);
                      }
                    });

    const VectorXd right = vals.rowwise().mean();
    VectorXd var = (vals.colwise() - right).array().square().rowwise().mean();
    const double se = std::sqrt(var.maxCoeff() / static_cast<double>(M));
    rep.max_se = std::max(rep.max_se, se);
    rep.max_abs = std::max(rep.max_abs, (left - right).cwiseAbs().maxCoeff());
    rep.ref_scale = std::max(rep.ref_scale, left.cwiseAbs().maxCoeff());
  }
  rep.residual = rep.max_abs / std::max(1e-8, rep.ref_scale);
  return rep;
}

double monotonicity_preservation_check(const ScalarFn& g,
                                       const std::vector<ShiftSample>& samples) {
  if (!g) throw std::invalid_argument("monotonicity_preservation_check: empty function");
  if (samples.empty())
    throw std::invalid_argument("monotonicity_preservation_check: need at least one sample");
  double worst = 0.0;
  for (const auto& sm : samples) {
    if (sm.theta.size() != sm.mu.dim() || sm.mu.dim() != sm.nu.dim())
      throw std::invalid_argument("monotonicity_preservation_check: dimension mismatch");
    const Domain domain = sm.mu.domain;
    const double period = sm.mu.period;
    const VectorXd zero = VectorXd::Zero(sm.theta.size());
    ScalarFn shifted = [&](const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu) {
      return g(shift_points(X, sm.theta, domain, period), th, pushforward_shift(mu, sm.theta));
    };
    const double a = flat_deficit(shifted, sm.mu, sm.nu, zero);
    const double b =
        flat_deficit(g, pushforward_shift(sm.mu, sm.theta), pushforward_shift(sm.nu, sm.theta), zero);
    worst = std::max(worst, std::abs(a - b));
  }
  return worst;
}

}  // namespace mfg
