#include "mfg/lipsolve.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace mfg {

namespace {

void guard_matrix(const MatrixXd& m, double time) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!(std::abs(m(i, j)) <= 1e6)) throw BlowUpError(time, m(i, j));
}

double wrapped_norm(const VectorXd& a, const VectorXd& b, Domain dom, double period) {
  VectorXd d = a - b;
  if (dom == Domain::torus)
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = wrap_diff(d(i), period);
  return d.norm();
}

}  // namespace

int AuditSample::total_points() const {
  int total = 0;
  for (const auto& g : x) total += static_cast<int>(g.cols());
  return total;
}

AuditSample AuditSample::draw(const ModelSpec& model, int n_particles, const AuditSpec& spec) {
  if (spec.n_groups < 1 || spec.pts_per_group < 1)
    throw std::invalid_argument("AuditSample: need at least one group and point");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int d = model.dim_x, n = model.dim_theta;
  const bool torus = model.domain == Domain::torus;
  AuditSample s;
  std::uniform_real_distribution<double> spread_factor(0.5, 1.5);
  // On the torus the spreads are relative to the period and cluster centers
  // stay away from the wrap seam: a cluster straddling the seam has a bimodal
  // set of representatives whose mean is a high-leverage outlier in feature
  // space, which destabilizes the level fits.
  const double x_unit = torus ? model.period / 4.0 : 1.0;
  const double cloud_unit = torus ? model.period / 8.0 : 1.0;
  std::uniform_real_distribution<double> center_dist(0.2 * model.period, 0.8 * model.period);
  for (int k = 0; k < spec.n_groups; ++k) {
    VectorXd th(n);
    for (int i = 0; i < n; ++i) th(i) = spec.theta_spread * g(rng);
    VectorXd center(d);
    for (int i = 0; i < d; ++i) center(i) = torus ? center_dist(rng) : g(rng);
    // Spread varies per group so the cloud second moment carries information
    // beyond the squared mean and the group features stay well conditioned.
    const double spread = cloud_unit * spec.cloud_spread * spread_factor(rng);
    MatrixXd cloud(d, n_particles);
    for (int j = 0; j < n_particles; ++j)
      for (int i = 0; i < d; ++i) {
        double v = center(i) + spread * g(rng);
        cloud(i, j) = torus ? wrap_point(v, model.period) : v;
      }
    MatrixXd xs(d, spec.pts_per_group);
    for (int j = 0; j < spec.pts_per_group; ++j)
      for (int i = 0; i < d; ++i) {
        double v = center(i) + x_unit * spec.x_spread * g(rng);
        xs(i, j) = torus ? wrap_point(v, model.period) : v;
      }
    s.theta.push_back(th);
    s.mu.emplace_back(cloud, model.domain, model.period);
    s.x.push_back(xs);
  }
  return s;
}

namespace {

// Feature rows of every audit point (fixed across levels and iterations).
MatrixXd audit_features(const AuditSample& audit, const FeatureBasis& basis) {
  MatrixXd Phi(audit.total_points(), basis.size());
  int row = 0;
  for (int g = 0; g < audit.n_groups(); ++g) {
    int pg = static_cast<int>(audit.x[g].cols());
    Phi.middleRows(row, pg) = basis.features(audit.x[g], audit.theta[g], audit.mu[g].mean(),
                                             audit.mu[g].second_moment());
    row += pg;
  }
  return Phi;
}

}  // namespace

FieldApprox apply_psi(const LinearProblem& prob, const AuditSample& audit, const SimConfig& cfg,
                      const FeatureBasis& basis, double ridge_lambda) {
  cfg.validate();
  if (!prob.A || !prob.B || !prob.E || !prob.V0)
    throw std::invalid_argument("apply_psi: all four coefficient functions must be set");
  if (prob.sigma_theta.size() != prob.dim_theta)
    throw std::invalid_argument("apply_psi: sigma_theta must have dim_theta components");
  const int d = prob.dim_x;
  const int n = prob.dim_theta;
  const int N = cfg.n_particles;
  const int M = cfg.n_paths;
  const int K = cfg.n_steps();
  const double dt = cfg.dt;
  const int G = audit.n_groups();
  for (int g = 0; g < G; ++g)
    if (audit.mu[g].size() != N)
      throw std::invalid_argument("apply_psi: audit clouds must have cfg.n_particles particles");

  const int total = audit.total_points();
  std::vector<int> row0(G);
  {
    int row = 0;
    for (int g = 0; g < G; ++g) {
      row0[g] = row;
      row += static_cast<int>(audit.x[g].cols());
    }
  }
  MatrixXd Phi = audit_features(audit, basis);

  FieldApprox f;
  f.basis = basis;
  f.domain = prob.domain;
  f.period = prob.period;
  f.dt = dt;

  MatrixXd targets(d, total);
  for (int g = 0; g < G; ++g)
    targets.middleCols(row0[g], audit.x[g].cols()) =
        prob.V0(audit.x[g], audit.theta[g], audit.mu[g]);
  double resid = 0.0;
  f.coef.push_back(ridge_fit(Phi, targets, ridge_lambda, &resid));
  f.fit_residual.push_back(resid);

  const NoiseBank bank{cfg.seed};
  const double sqx = std::sqrt(2.0 * prob.sigma_x * dt);
  VectorXd sqth(n);
  for (int j = 0; j < n; ++j) sqth(j) = std::sqrt(2.0 * prob.sigma_theta(j) * dt);

  for (int k = 1; k <= K; ++k) {
    const double tk = k * dt;
    const std::uint64_t gstep = static_cast<std::uint64_t>(cfg.step_offset + k - 1);
    const MatrixXd& C = f.coef[k - 1];
    parallel_for(G, cfg.threads, [&](int g) {
      const EmpiricalMeasure& mu = audit.mu[g];
      const VectorXd& th = audit.theta[g];
      const MatrixXd& xg = audit.x[g];
      const int pg = static_cast<int>(xg.cols());
      MatrixXd base_cloud = mu.pts - dt * prob.A(tk, mu.pts, th, mu);
      MatrixXd base_x = xg - dt * prob.A(tk, xg, th, mu);
      VectorXd base_th = th - dt * prob.B(tk, th, mu);
      MatrixXd Eg = prob.E(tk, xg, th, mu);
      MatrixXd acc = MatrixXd::Zero(d, pg);
      MatrixXd zc(d, N), zx(d, pg);
      for (int p = 0; p < M; ++p) {
        const std::uint64_t path = static_cast<std::uint64_t>(g) * M + p;
        MatrixXd c2 = base_cloud;
        MatrixXd x2 = base_x;
        if (sqx > 0.0) {
          // Lanes are particle*d + component, i.e. contiguous in the
          // column-major layout of the increment matrices.
          bank.gaussian_fill(path, 0, gstep, NoiseRole::idio, zc.data(),
                             static_cast<std::uint64_t>(N) * d);
          bank.gaussian_fill(path, static_cast<std::uint64_t>(N) * d, gstep, NoiseRole::idio,
                             zx.data(), static_cast<std::uint64_t>(pg) * d);
          c2.noalias() += sqx * zc;
          x2.noalias() += sqx * zx;
        }
        VectorXd th2 = base_th;
        for (int j = 0; j < n; ++j)
          th2(j) += sqth(j) * bank.gaussian(path, j, gstep, NoiseRole::theta);
        if (prob.domain == Domain::torus) {
          wrap_in_place(c2, prob.period);
          wrap_in_place(x2, prob.period);
        }
        guard_matrix(c2, tk);
        guard_matrix(x2, tk);
        guard_matrix(th2, tk);
        EmpiricalMeasure m2(std::move(c2), prob.domain, prob.period);
        acc.noalias() +=
            (basis.features(x2, th2, m2.mean(), m2.second_moment()) * C).transpose();
      }
      targets.middleCols(row0[g], pg) = dt * Eg + acc / M;
    });
    f.coef.push_back(ridge_fit(Phi, targets, ridge_lambda, &resid));
    f.fit_residual.push_back(resid);
  }
  return f;
}

namespace {

LinearProblem linearize(const ModelSpec& model, const FieldApprox& W) {
  LinearProblem lp;
  lp.dim_x = model.dim_x;
  lp.dim_theta = model.dim_theta;
  lp.domain = model.domain;
  lp.period = model.period;
  lp.sigma_x = model.sigma_x;
  lp.sigma_theta = model.sigma_theta;
  lp.A = [model, W](double t, const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu) {
    return MatrixXd(model.F(X, th, mu, W.eval_batch(t, X, th, mu)));
  };
  lp.B = [model, W](double t, const VectorXd& th, const EmpiricalMeasure& mu) {
    return VectorXd(model.b(th, mu, W.eval_batch(t, mu.pts, th, mu)));
  };
  lp.E = [model, W](double t, const MatrixXd& X, const VectorXd& th, const EmpiricalMeasure& mu) {
    return MatrixXd(model.G(X, th, mu, W.eval_batch(t, X, th, mu)));
  };
  lp.V0 = model.W0;
  return lp;
}

}  // namespace

std::map<std::string, double> estimate_field_lipschitz(const FieldApprox& field, double t,
                                                       const LipProbeSpec& probe) {
  const int d = field.basis.dim_x, n = field.basis.dim_theta;
  const Domain dom = field.domain;
  const double L = field.period;
  const bool torus = dom == Domain::torus;
  std::mt19937_64 rng(probe.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, L);
  auto draw_x = [&] {
    VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = torus ? u(rng) : probe.x_spread * g(rng);
    return x;
  };
  auto draw_theta = [&] {
    VectorXd th(n);
    for (int i = 0; i < n; ++i) th(i) = probe.theta_spread * g(rng);
    return th;
  };
  double lx = 0, lth = 0, lm = 0;
  for (int it = 0; it < probe.n_probes; ++it) {
    MatrixXd cloud(d, probe.cloud_size);
    VectorXd center = draw_x();
    for (int j = 0; j < probe.cloud_size; ++j)
      for (int i = 0; i < d; ++i) {
        double v = center(i) + 0.4 * probe.x_spread * g(rng);
        cloud(i, j) = torus ? wrap_point(v, L) : v;
      }
    EmpiricalMeasure mu(cloud, dom, L);
    VectorXd th = draw_theta();
    VectorXd x1 = draw_x(), x2 = draw_x();
    double dist = wrapped_norm(x1, x2, dom, L);
    if (dist > 1e-12)
      lx = std::max(lx, (field.eval(t, x1, th, mu) - field.eval(t, x2, th, mu)).norm() / dist);
    VectorXd th2 = draw_theta();
    double dth = (th - th2).norm();
    if (dth > 1e-12)
      lth = std::max(lth, (field.eval(t, x1, th, mu) - field.eval(t, x1, th2, mu)).norm() / dth);
    MatrixXd jitter = cloud;
    for (int j = 0; j < probe.cloud_size; ++j)
      for (int i = 0; i < d; ++i) {
        double v = jitter(i, j) + 0.2 * probe.x_spread * g(rng);
        jitter(i, j) = torus ? wrap_point(v, L) : v;
      }
    EmpiricalMeasure nu(jitter, dom, L);
    double dw = wasserstein_distance(probe.q, mu, nu);
    if (dw > 1e-12)
      lm = std::max(lm, (field.eval(t, x1, th, mu) - field.eval(t, x1, th, nu)).norm() / dw);
  }
  return {{"x", lx}, {"theta", lth}, {"measure", lm}};
}

std::pair<FieldApprox, SolveReport> fixed_point_solve(const ModelSpec& model, double T,
                                                      const SimConfig& cfg,
                                                      const PicardOptions& picard,
                                                      const AuditSpec& audit_spec) {
  if (!(T > 0)) throw std::invalid_argument("fixed_point_solve: T must be positive");
  model.validate();
  SimConfig scfg = cfg;
  scfg.horizon = T;
  scfg.validate();
  const int K = scfg.n_steps();

  AuditSample audit = AuditSample::draw(model, scfg.n_particles, audit_spec);
  FeatureBasis basis = FeatureBasis::make(model.dim_x, model.dim_theta, 2);
  MatrixXd Phi = audit_features(audit, basis);

  SolveReport rep;
  rep.damping = picard.damping;
  rep.tol = picard.tol;
  rep.max_iters = picard.max_iters;

  // constant-in-time lift of W0
  FieldApprox W;
  W.basis = basis;
  W.domain = model.domain;
  W.period = model.period;
  W.dt = scfg.dt;
  {
    MatrixXd targets(model.dim_x, audit.total_points());
    int row = 0;
    for (int g = 0; g < audit.n_groups(); ++g) {
      targets.middleCols(row, audit.x[g].cols()) =
          model.W0(audit.x[g], audit.theta[g], audit.mu[g]);
      row += static_cast<int>(audit.x[g].cols());
    }
    double resid = 0.0;
    MatrixXd C0 = ridge_fit(Phi, targets, picard.ridge_lambda, &resid);
    W.coef.assign(K + 1, C0);
    W.fit_residual.assign(K + 1, resid);
  }

  LipProbeSpec guard_probe;
  guard_probe.n_probes = 8;
  guard_probe.cloud_size = 16;
  if (model.domain == Domain::torus) guard_probe.x_spread = model.period / 4.0;
  auto guarded = [&](const FieldApprox& field) -> bool {
    std::map<std::string, double> prev;
    for (int k = 0; k <= K; ++k) {
      double tk = k * scfg.dt;
      auto est = estimate_field_lipschitz(field, tk, guard_probe);
      for (const auto& [key, v] : est) {
        bool trip = v > 1e3;
        if (!prev.empty() && v > 10.0 * std::max(prev[key], 0.5)) trip = true;
        if (trip) {
          rep.status = SolveStatus::blow_up;
          rep.blow_up_time = tk;
          rep.blow_up_estimate = v;
          rep.blow_up_variable = key;
          return true;
        }
      }
      prev = est;
    }
    return false;
  };

  rep.status = SolveStatus::max_iters;
  for (int iter = 0; iter < picard.max_iters; ++iter) {
    FieldApprox Wnew;
    try {
      Wnew = apply_psi(linearize(model, W), audit, scfg, basis, picard.ridge_lambda);
    } catch (const BlowUpError& e) {
      rep.status = SolveStatus::blow_up;
      rep.blow_up_time = e.time;
      rep.blow_up_estimate = e.value;
      rep.blow_up_variable = "particle";
      break;
    }
    double change = 0.0;
    for (int k = 0; k <= K; ++k) {
      MatrixXd blended = (1.0 - picard.damping) * W.coef[k] + picard.damping * Wnew.coef[k];
      change = std::max(change, (Phi * (blended - W.coef[k])).cwiseAbs().maxCoeff());
      W.coef[k] = blended;
      W.fit_residual[k] = Wnew.fit_residual[k];
    }
    rep.changes.push_back(change);
    rep.iterations = iter + 1;
    if (guarded(W)) break;
    if (change <= picard.tol) {
      rep.status = SolveStatus::converged;
      break;
    }
  }

  LipProbeSpec report_probe;
  if (model.domain == Domain::torus) report_probe.x_spread = model.period / 4.0;
  for (int k = 0; k <= K; ++k) {
    double tk = k * scfg.dt;
    rep.times.push_back(tk);
    rep.lipschitz.push_back(estimate_field_lipschitz(W, tk, report_probe));
  }
  return {std::move(W), std::move(rep)};
}

std::string SolveReport::summary() const {
  std::string out;
  char buf[160];
  const char* st = status == SolveStatus::converged  ? "converged"
                   : status == SolveStatus::max_iters ? "max_iters"
                                                      : "blow_up";
  std::snprintf(buf, sizeof(buf), "status: %s after %d iterations (damping %g, tol %g)\n", st,
                iterations, damping, tol);
  out += buf;
  for (size_t i = 0; i < changes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "  iter %zu: sup change %.6e\n", i + 1, changes[i]);
    out += buf;
  }
  if (status == SolveStatus::blow_up) {
    std::snprintf(buf, sizeof(buf), "  blow-up guard: %s estimate %.6e at t=%.4f\n",
                  blow_up_variable.c_str(), blow_up_estimate, blow_up_time);
    out += buf;
  }
  if (!times.empty()) {
    std::snprintf(buf, sizeof(buf),
                  "  final Lipschitz estimates at t=%.4f: x %.4g, theta %.4g, measure %.4g\n",
                  times.back(), lipschitz.back().at("x"), lipschitz.back().at("theta"),
                  lipschitz.back().at("measure"));
    out += buf;
  }
  return out;
}

RowVectorXd reconstruct_value_batch(const ModelSpec& model, const FieldApprox& field, double t,
                                    const MatrixXd& X, const VectorXd& theta,
                                    const EmpiricalMeasure& mu, const SimConfig& cfg,
                                    RowVectorXd* stderr_out) {
  if (!model.has_value_data())
    throw std::invalid_argument("reconstruct_value: model lacks U0/H value data");
  const int P = static_cast<int>(X.cols());
  SimConfig scfg = cfg;
  scfg.horizon = t;
  scfg.n_particles = mu.size();
  scfg.validate();
  const int K = scfg.n_steps();
  Dynamics dyn = dynamics_from(model, field, t);
  dyn.beta_cn = 0.0;
  dyn.tagged_drift = [](double, const MatrixXd& Xt, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(MatrixXd::Zero(Xt.rows(), Xt.cols()));
  };
  MatrixXd vals(scfg.n_paths, P);
  std::vector<RowVectorXd> acc(scfg.n_paths, RowVectorXd::Zero(P));
  simulate_stream(
      dyn, SimInit{X, theta, mu}, scfg,
      [&](int path, int step, double s, const SysState& st) {
        EmpiricalMeasure m(st.cloud, model.domain, model.period);
        if (step < K) {
          MatrixXd W = field.eval_batch(t - s, st.tagged, st.theta, m);
          acc[path] += scfg.dt * model.H(st.tagged, st.theta, m, W);
        }
        if (step == K) vals.row(path) = model.U0(st.tagged, st.theta, m) - acc[path];
      },
      nullptr);
  RowVectorXd mean = vals.colwise().mean();
  if (stderr_out) {
    RowVectorXd var =
        (vals.rowwise() - mean).array().square().colwise().sum() / std::max(1, scfg.n_paths - 1);
    *stderr_out = (var / scfg.n_paths).cwiseSqrt();
  }
  return mean;
}

double reconstruct_value(const ModelSpec& model, const FieldApprox& field, double t,
                         const VectorXd& x, const VectorXd& theta, const EmpiricalMeasure& mu,
                         const SimConfig& cfg, double* stderr_out) {
  RowVectorXd se;
  RowVectorXd v = reconstruct_value_batch(model, field, t, x, theta, mu, cfg,
                                          stderr_out ? &se : nullptr);
  if (stderr_out) *stderr_out = se(0);
  return v(0);
}

VectorXd gradient_heat_kernel(const ModelSpec& model, const FieldApprox& field, double t,
                              const VectorXd& x, const VectorXd& theta, const EmpiricalMeasure& mu,
                              const SimConfig& cfg, VectorXd* stderr_out) {
  if (!model.has_value_data())
    throw std::invalid_argument("gradient_heat_kernel: model lacks U0/H value data");
  if (!(model.sigma_x > 0.0))
    throw std::invalid_argument(
        "gradient_heat_kernel: sigma_x = 0 makes the heat-kernel weight undefined; use finite "
        "differences of reconstruct_value instead");
  const int d = model.dim_x;
  SimConfig scfg = cfg;
  scfg.horizon = t;
  scfg.n_particles = mu.size();
  scfg.validate();
  const int K = scfg.n_steps();
  const double sq = std::sqrt(2.0 * model.sigma_x);
  Dynamics dyn = dynamics_from(model, field, t);
  dyn.beta_cn = 0.0;
  dyn.tagged_drift = [](double, const MatrixXd& Xt, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(MatrixXd::Zero(Xt.rows(), Xt.cols()));
  };
  MatrixXd vals(d, scfg.n_paths);
  std::vector<VectorXd> acc(scfg.n_paths, VectorXd::Zero(d));
  std::vector<VectorXd> brown(scfg.n_paths, VectorXd::Zero(d));
  std::vector<VectorXd> prev(scfg.n_paths, x);
  simulate_stream(
      dyn, SimInit{x, theta, mu}, scfg,
      [&](int path, int step, double s, const SysState& st) {
        EmpiricalMeasure m(st.cloud, model.domain, model.period);
        VectorXd pos = st.tagged.col(0);
        if (step > 0) {
          VectorXd inc = pos - prev[path];
          if (model.domain == Domain::torus)
            for (int i = 0; i < d; ++i) inc(i) = wrap_diff(inc(i), model.period);
          brown[path] += inc / sq;
          prev[path] = pos;
        }
        if (step > 0 && step < K) {
          double tau = t - s;
          MatrixXd pts(d, 2);
          pts.col(0) = pos;
          pts.col(1) = x;
          MatrixXd W = field.eval_batch(tau, pts, st.theta, m);
          RowVectorXd h = model.H(pts, st.theta, m, W);
          VectorXd weight = brown[path] / (sq * std::max(s, scfg.dt));
          acc[path] += scfg.dt * (h(0) - h(1)) * weight;
        }
        if (step == K)
          vals.col(path) = model.W0(st.tagged.leftCols(1), st.theta, m).col(0) - acc[path];
      },
      nullptr);
  VectorXd mean = vals.rowwise().mean();
  if (stderr_out) {
    VectorXd var = (vals.colwise() - mean).array().square().rowwise().sum() /
                   std::max(1, scfg.n_paths - 1);
    *stderr_out = (var / scfg.n_paths).cwiseSqrt();
  }
  return mean;
}

double check_dpp(const ModelSpec& model, const FieldApprox& field, double t, double s,
                 const VectorXd& x, const VectorXd& theta, const EmpiricalMeasure& mu,
                 const SimConfig& cfg, double* stderr_out) {
  if (!(0.0 <= s && s <= t)) throw std::invalid_argument("check_dpp: need 0 <= s <= t");
  if (s == t) {  // zero-length window: both sides are the same evaluation
    if (stderr_out) *stderr_out = 0.0;
    return 0.0;
  }
  VectorXd left = field.eval(t, x, theta, mu);
  SimConfig scfg = cfg;
  scfg.horizon = t - s;
  scfg.n_particles = mu.size();
  scfg.validate();
  const int K = scfg.n_steps();
  Dynamics dyn = dynamics_from(model, field, t);
  dyn.beta_cn = 0.0;
  const int d = model.dim_x;
  MatrixXd vals(d, scfg.n_paths);
  std::vector<VectorXd> acc(scfg.n_paths, VectorXd::Zero(d));
  simulate_stream(
      dyn, SimInit{x, theta, mu}, scfg,
      [&](int path, int step, double u, const SysState& st) {
        EmpiricalMeasure m(st.cloud, model.domain, model.period);
        if (step < K) {
          MatrixXd W = field.eval_batch(t - u, st.tagged, st.theta, m);
          acc[path] += scfg.dt * model.G(st.tagged, st.theta, m, W).col(0);
        }
        if (step == K)
          vals.col(path) = field.eval_batch(s, st.tagged, st.theta, m).col(0) + acc[path];
      },
      nullptr);
  VectorXd mean = vals.rowwise().mean();
  if (stderr_out) {
    VectorXd var = (vals.colwise() - mean).array().square().rowwise().sum() /
                   std::max(1, scfg.n_paths - 1);
    *stderr_out = (var / scfg.n_paths).cwiseSqrt().norm();
  }
  return (left - mean).norm();
}

double martingale_residual(const ModelSpec& model, const FieldApprox& field, double T,
                           const SimInit& init, const SimConfig& cfg, double* stderr_out) {
  if (init.tagged.cols() < 1)
    throw std::invalid_argument("martingale_residual: need at least one tagged particle");
  SimConfig scfg = cfg;
  scfg.horizon = T;
  scfg.n_particles = init.mu.size();
  scfg.validate();
  const int K = scfg.n_steps();
  const int d = model.dim_x;
  Dynamics dyn = dynamics_from(model, field, T);
  dyn.beta_cn = 0.0;
  std::vector<MatrixXd> marts(scfg.n_paths, MatrixXd::Zero(d, K + 1));
  std::vector<VectorXd> acc(scfg.n_paths, VectorXd::Zero(d));
  simulate_stream(
      dyn, init, scfg,
      [&](int path, int step, double u, const SysState& st) {
        EmpiricalMeasure m(st.cloud, model.domain, model.period);
        MatrixXd W = field.eval_batch(T - u, st.tagged.leftCols(1), st.theta, m);
        marts[path].col(step) = W.col(0) + acc[path];
        if (step < K) acc[path] += scfg.dt * model.G(st.tagged.leftCols(1), st.theta, m, W).col(0);
      },
      nullptr);
  double worst = 0.0, worst_se = 0.0;
  MatrixXd mean0 = MatrixXd::Zero(d, 1);
  for (int k = 0; k <= K; ++k) {
    MatrixXd samples(d, scfg.n_paths);
    for (int p = 0; p < scfg.n_paths; ++p) samples.col(p) = marts[p].col(k);
    VectorXd mean = samples.rowwise().mean();
    if (k == 0) mean0 = mean;
    double r = (mean - mean0.col(0)).norm();
    if (r > worst) {
      worst = r;
      VectorXd var = (samples.colwise() - mean).array().square().rowwise().sum() /
                     std::max(1, scfg.n_paths - 1);
      worst_se = (var / scfg.n_paths).cwiseSqrt().norm();
    }
  }
  if (stderr_out) *stderr_out = worst_se;
  return worst;
}

double check_gradient_consistency(const ModelSpec& model, const FieldApprox& field,
                                  const std::vector<ValueProbe>& sample, const SimConfig& cfg) {
  if (!model.has_value_data())
    throw std::invalid_argument("check_gradient_consistency: model lacks U0/H value data");
  const int d = model.dim_x;
  double worst = 0.0;
  for (const ValueProbe& probe : sample) {
    const double h = 1e-3 * (1.0 + probe.x.norm());
    // The tagged particle is driftless, so the +/-h values share one simulated
    // path (evaluated at translates); the common noise cancels in the central
    // difference.
    MatrixXd offsets = MatrixXd::Zero(d, 2 * d);
    for (int c = 0; c < d; ++c) {
      offsets(c, 2 * c) = h;
      offsets(c, 2 * c + 1) = -h;
    }
    RowVectorXd vals;
    if (probe.t == 0.0) {
      MatrixXd pts = offsets.colwise() + probe.x;
      vals = model.U0(pts, probe.theta, probe.mu);
    } else {
      SimConfig scfg = cfg;
      scfg.horizon = probe.t;
      scfg.n_particles = probe.mu.size();
      scfg.validate();
      const int K = scfg.n_steps();
      Dynamics dyn = dynamics_from(model, field, probe.t);
      dyn.beta_cn = 0.0;
      dyn.tagged_drift = [](double, const MatrixXd& Xt, const VectorXd&,
                            const EmpiricalMeasure&) {
        return MatrixXd(MatrixXd::Zero(Xt.rows(), Xt.cols()));
      };
      MatrixXd pathvals(scfg.n_paths, 2 * d);
      std::vector<RowVectorXd> acc(scfg.n_paths, RowVectorXd::Zero(2 * d));
      simulate_stream(
          dyn, SimInit{probe.x, probe.theta, probe.mu}, scfg,
          [&](int path, int step, double s, const SysState& st) {
            EmpiricalMeasure m(st.cloud, model.domain, model.period);
            MatrixXd pts = offsets.colwise() + st.tagged.col(0);
            if (model.domain == Domain::torus) wrap_in_place(pts, model.period);
            if (step < K) {
              MatrixXd W = field.eval_batch(probe.t - s, pts, st.theta, m);
              acc[path] += scfg.dt * model.H(pts, st.theta, m, W);
            }
            if (step == K) pathvals.row(path) = model.U0(pts, st.theta, m) - acc[path];
          },
          nullptr);
      vals = pathvals.colwise().mean();
    }
    VectorXd fd(d);
    for (int c = 0; c < d; ++c) fd(c) = (vals(2 * c) - vals(2 * c + 1)) / (2.0 * h);
    VectorXd ref = field.eval(probe.t, probe.x, probe.theta, probe.mu);
    worst = std::max(worst, (fd - ref).cwiseAbs().maxCoeff());
    if (model.sigma_x > 0.0) {
      VectorXd gh =
          gradient_heat_kernel(model, field, probe.t, probe.x, probe.theta, probe.mu, cfg);
      worst = std::max(worst, (gh - ref).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace mfg
