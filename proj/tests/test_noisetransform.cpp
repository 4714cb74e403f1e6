#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mfg/noisetransform.hpp"

using namespace mfg;

namespace {

int feat_index(const FeatureBasis& b, const std::vector<int>& e) {
  for (int i = 0; i < b.size(); ++i)
    if (b.exps[i] == e) return i;
  REQUIRE(false);
  return -1;
}

EmpiricalMeasure gaussian_cloud(std::mt19937_64& rng, int d, int n, double center, double spread) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd p(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) p(i, j) = center + spread * g(rng);
  return EmpiricalMeasure(p);
}

VectorXd scal(double v) {
  VectorXd x(1);
  x(0) = v;
  return x;
}

// d = 1, theta-free base with additive common noise and trivial transport:
// W0 = x + mean(mu), F = G = 0.
ModelSpec drift_free_base(double beta) {
  ModelSpec m;
  m.name = "drift_free";
  m.dim_x = 1;
  m.dim_theta = 0;
  m.sigma_x = 0.2;
  m.sigma_theta = VectorXd(0);
  m.beta_cn = beta;
  m.F = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd&) {
    return MatrixXd::Zero(X.rows(), X.cols()).eval();
  };
  m.G = m.F;
  m.W0 = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    return MatrixXd((X.array() + mu.mean()(0)).matrix());
  };
  m.b = [](const VectorXd&, const EmpiricalMeasure&, const MatrixXd&) { return VectorXd(0); };
  return m;
}

}  // namespace

TEST_CASE("transform_model: guards and dimension layout") {
  ModelSpec lq0 = builtin_model("lq");
  CHECK_THROWS_AS(transform_model(lq0), std::invalid_argument);  // no common noise

  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  CHECK_THROWS_AS(transform_model(lq), std::invalid_argument);  // endogenous theta, no opt-in

  TransformedModel tm = transform_model(lq, true);
  CHECK(tm.base_dim_theta == 1);
  CHECK(tm.shift_dim == 1);
  CHECK(tm.derived.dim_theta == 2);
  CHECK(tm.derived.beta_cn == 0.0);
  REQUIRE(tm.derived.sigma_theta.size() == 2);
  CHECK(tm.derived.sigma_theta(0) == lq.sigma_theta(0));
  CHECK(tm.derived.sigma_theta(1) == 0.1);  // shift block diffuses with beta_cn

  // theta-free base: derived theta block is just the shift.
  TransformedModel tf = transform_model(drift_free_base(0.3));
  CHECK(tf.base_dim_theta == 0);
  CHECK(tf.derived.dim_theta == 1);
  CHECK(tf.derived.sigma_theta(0) == 0.3);
}

TEST_CASE("transform_model: zero-shift section coincides with the base exactly") {
  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  TransformedModel tm = transform_model(lq, true);
  std::mt19937_64 rng(5);
  EmpiricalMeasure mu = gaussian_cloud(rng, 1, 12, 0.4, 0.7);
  MatrixXd X(1, 5);
  X << -1.2, -0.3, 0.0, 0.8, 2.1;
  MatrixXd W = 0.5 * X;
  VectorXd thb = scal(0.6);
  VectorXd th = lift_theta(tm, thb);

  CHECK((tm.derived.F(X, th, mu, W) - lq.F(X, thb, mu, W)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tm.derived.G(X, th, mu, W) - lq.G(X, thb, mu, W)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tm.derived.W0(X, th, mu) - lq.W0(X, thb, mu)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tm.derived.U0(X, th, mu) - lq.U0(X, thb, mu)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tm.derived.H(X, th, mu, W) - lq.H(X, thb, mu, W)).cwiseAbs().maxCoeff() == 0.0);
  VectorXd bd = tm.derived.b(th, mu, W.leftCols(1).replicate(1, mu.size()));
  CHECK(bd(0) == lq.b(thb, mu, W.leftCols(1).replicate(1, mu.size()))(0));
  CHECK(bd(1) == 0.0);
}

TEST_CASE("transform_model: coefficients carry the shift into state and measure") {
  // Closed-form oracle for the lq initial data under a shift s:
  // W0(y, [theta; s], mu) = u2 (y + s) + u_m (mean(mu) + s).
  LqParams p;
  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  TransformedModel tm = transform_model(lq, true);
  std::mt19937_64 rng(6);
  EmpiricalMeasure mu = gaussian_cloud(rng, 1, 9, -0.2, 0.5);
  const double y = 0.7, s = -0.9;
  VectorXd th(2);
  th << 0.3, s;
  MatrixXd X(1, 1);
  X(0, 0) = y;
  double got = tm.derived.W0(X, th, mu)(0, 0);
  double want = p.u2 * (y + s) + p.u_m * (mu.mean()(0) + s);
  CHECK(got == doctest::Approx(want).epsilon(1e-13));

  // U0 oracle: (u2/2)(y+s)^2 + u_m (y+s)(mean + s).
  double u0 = tm.derived.U0(X, th, mu)(0);
  double u0_want = 0.5 * p.u2 * (y + s) * (y + s) + p.u_m * (y + s) * (mu.mean()(0) + s);
  CHECK(u0 == doctest::Approx(u0_want).epsilon(1e-13));

  // The noise drift reads only the base block: b = r_b theta, shift row zero.
  VectorXd bd = tm.derived.b(th, mu, MatrixXd::Zero(1, mu.size()));
  CHECK(bd(0) == doctest::Approx(p.r_b * 0.3).epsilon(1e-14));
  CHECK(bd(1) == 0.0);
}

TEST_CASE("transform_model: torus shifts wrap state and measure consistently") {
  ModelSpec torus = builtin_model("torus_monotone");
  ModelSpec base = torus;
  base.beta_cn = 0.05;
  TransformedModel tm = transform_model(base, true);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd pts(1, 8);
  for (int j = 0; j < 8; ++j) pts(0, j) = u(rng);
  EmpiricalMeasure mu(pts, Domain::torus, base.period);
  MatrixXd X(1, 3);
  X << 0.1, 0.55, 0.93;
  VectorXd th(2);
  th << 0.4, 0.8;  // shift 0.8 wraps most points past the seam
  MatrixXd W = MatrixXd::Ones(1, 3);

  MatrixXd Xs = X.array() + 0.8;
  wrap_in_place(Xs, base.period);
  EmpiricalMeasure mus = pushforward_shift(mu, scal(0.8));
  CHECK((tm.derived.G(X, th, mu, W) - base.G(Xs, scal(0.4), mus, W)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((tm.derived.W0(X, th, mu) - base.W0(Xs, scal(0.4), mus)).cwiseAbs().maxCoeff() == 0.0);

  // Zero shift on wrapped inputs is the identity.
  VectorXd th0 = lift_theta(tm, scal(0.4));
  CHECK((tm.derived.W0(X, th0, mu) - base.W0(X, scal(0.4), mu)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shift_invariance_residual: exact on a hand-built invariant field") {
  // W(t, y, [theta; s], mu) = a (y + s) + c (mean + s) + e is invariant under
  // (y, s, mu) -> (y + s, 0, (id + s)# mu) by construction.
  const double a = 0.7, c = -0.4, e = 0.2;
  FeatureBasis basis = FeatureBasis::make(1, 2, 1);
  FieldApprox f;
  f.basis = basis;
  MatrixXd C = MatrixXd::Zero(basis.size(), 1);
  C(feat_index(basis, {0, 0, 0, 0, 0}), 0) = e;
  C(feat_index(basis, {1, 0, 0, 0, 0}), 0) = a;        // y
  C(feat_index(basis, {0, 0, 1, 0, 0}), 0) = a + c;    // shift block of theta
  C(feat_index(basis, {0, 0, 0, 1, 0}), 0) = c;        // mean
  f.coef.push_back(C);
  f.fit_residual.push_back(0.0);

  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  TransformedModel tm = transform_model(lq, true);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    EmpiricalMeasure mu = gaussian_cloud(rng, 1, 10, g(rng), 0.6);
    VectorXd th(2);
    th << g(rng), g(rng);
    CHECK(shift_invariance_residual(f, tm, 0.4, scal(g(rng)), th, mu) <= 1e-13);
  }

  // A field reading the shift block directly is not invariant.
  FieldApprox bad = f;
  bad.coef[0](feat_index(basis, {0, 0, 1, 0, 0}), 0) = a + c + 1.0;
  VectorXd th(2);
  th << 0.0, 0.5;
  CHECK(shift_invariance_residual(bad, tm, 0.0, scal(0.3), th,
                                  gaussian_cloud(rng, 1, 10, 0.0, 0.5)) > 0.1);
}

TEST_CASE("derived lq solve: shift invariance and the Riccati section oracle") {
  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  TransformedModel tm = transform_model(lq, true);
  const double T = 0.3;
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.n_particles = 32;
  cfg.n_paths = 64;
  cfg.seed = 13;
  cfg.threads = 2;
  PicardOptions picard;
  picard.tol = 1e-4;
  picard.ridge_lambda = 1e-9;  // interpolating fits keep the t=0 section exact
  AuditSpec audit;
  audit.n_groups = 64;  // theta gains the shift block; see the solver audit note
  auto [field, rep] = fixed_point_solve(tm.derived, T, cfg, picard, audit);
  REQUIRE(rep.status == SolveStatus::converged);

  // The affine ansatz solves the derived equation with any common-noise
  // intensity, so the zero-shift section must match the Riccati coefficients.
  LqParams p;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0, scale = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    EmpiricalMeasure mu = gaussian_cloud(rng, 1, 32, 0.5 * g(rng), 0.6);
    VectorXd x = scal(g(rng));
    double got = field.eval(T, x, lift_theta(tm, scal(0.3 * g(rng))), mu)(0);
    double want = lq_riccati_oracle(p, T, x(0), mu.mean()(0));
    worst = std::max(worst, std::abs(got - want));
    scale = std::max(scale, std::abs(want));
  }
  CHECK(worst <= 0.05 * std::max(1.0, scale));

  // Shift invariance of the solved field, at t = 0 and at the horizon.
  double w0 = 0.0, wT = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    EmpiricalMeasure mu = gaussian_cloud(rng, 1, 32, 0.4 * g(rng), 0.5);
    VectorXd th(2);
    th << 0.3 * g(rng), 0.6 * g(rng);
    VectorXd y = scal(g(rng));
    w0 = std::max(w0, shift_invariance_residual(field, tm, 0.0, y, th, mu));
    wT = std::max(wT, shift_invariance_residual(field, tm, T, y, th, mu));
  }
  CHECK(w0 <= 1e-6);  // the level-0 fit of affine data is exact up to ridge bias
  CHECK(wT <= 0.05);
}

TEST_CASE("common_noise_equivalence_check: drift-free base agrees within MC error") {
  ModelSpec base = drift_free_base(0.3);
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.n_particles = 24;
  cfg.n_paths = 200;
  cfg.seed = 21;
  cfg.threads = 2;
  PicardOptions picard;
  picard.tol = 1e-4;
  EquivalenceReport rep = common_noise_equivalence_check(base, 0.3, cfg, picard, 4);
  CHECK(rep.solve.status == SolveStatus::converged);
  CHECK(rep.max_abs <= 3.0 * rep.max_se + 0.01);
  CHECK(rep.residual <= 0.05);
}

TEST_CASE("common_noise_equivalence_check: lq with beta = 0.1") {
  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.n_particles = 32;
  cfg.n_paths = 128;
  cfg.seed = 33;
  cfg.threads = 2;
  PicardOptions picard;
  picard.tol = 1e-4;
  EquivalenceReport rep = common_noise_equivalence_check(lq, 0.3, cfg, picard, 4);
  CHECK(rep.solve.status == SolveStatus::converged);
  CHECK(rep.residual <= 0.05);
  CHECK(rep.ref_scale > 0.1);  // the probes see a nontrivial field
}

TEST_CASE("common_noise_equivalence_check: propagates solver blow-up") {
  ModelSpec bad = builtin_model("blowup_nonmonotone");
  bad.beta_cn = 0.2;
  SimConfig cfg;
  cfg.dt = 0.05;
  cfg.n_particles = 16;
  cfg.n_paths = 24;
  cfg.seed = 3;
  PicardOptions picard;
  picard.max_iters = 30;
  CHECK_THROWS_AS(common_noise_equivalence_check(bad, 2.0, cfg, picard, 2), BlowUpError);
}

TEST_CASE("monotonicity_preservation_check: shifts preserve the deficit exactly") {
  // Nonlinear in both the state and the measure, so agreement is the
  // re-indexing identity and not linearity.
  ScalarFn g = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    double m = mu.mean()(0);
    return RowVectorXd((X.row(0).array().sin() + m * X.row(0).array() + m * m).matrix());
  };
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<ShiftSample> samples;
  for (int i = 0; i < 6; ++i) {
    ShiftSample s;
    s.theta = scal(2.0 * n01(rng));
    s.mu = gaussian_cloud(rng, 1, 14, n01(rng), 0.8);
    s.nu = gaussian_cloud(rng, 1, 14, n01(rng), 0.8);
    samples.push_back(std::move(s));
  }
  CHECK(monotonicity_preservation_check(g, samples) <= 1e-12);

  // Torus clouds: both routes wrap identically.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd a(1, 10), b(1, 10);
  for (int j = 0; j < 10; ++j) {
    a(0, j) = u(rng);
    b(0, j) = u(rng);
  }
  ScalarFn gt = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    return RowVectorXd(((2 * M_PI * X.row(0)).array().cos() * mu.mean()(0)).matrix());
  };
  std::vector<ShiftSample> ts(1);
  ts[0].theta = scal(0.7);
  ts[0].mu = EmpiricalMeasure(a, Domain::torus, 1.0);
  ts[0].nu = EmpiricalMeasure(b, Domain::torus, 1.0);
  CHECK(monotonicity_preservation_check(gt, ts) <= 1e-12);

  CHECK_THROWS_AS(monotonicity_preservation_check(g, {}), std::invalid_argument);
  ShiftSample badsm;
  badsm.theta = VectorXd::Zero(2);
  badsm.mu = gaussian_cloud(rng, 1, 4, 0.0, 1.0);
  badsm.nu = badsm.mu;
  CHECK_THROWS_AS(monotonicity_preservation_check(g, {badsm}), std::invalid_argument);
}

TEST_CASE("average pairwise distance is invariant under shifts") {
  auto avg_dist = [](const EmpiricalMeasure& m) {
    double s = 0.0;
    for (int i = 0; i < m.size(); ++i)
      for (int j = 0; j < m.size(); ++j) s += (m.pts.col(i) - m.pts.col(j)).norm();
    return s / (static_cast<double>(m.size()) * m.size());
  };
  std::mt19937_64 rng(55);
  EmpiricalMeasure mu = gaussian_cloud(rng, 2, 12, 0.3, 0.9);
  const double base = avg_dist(mu);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd th(2);
    th << n01(rng), n01(rng);
    CHECK(std::abs(avg_dist(pushforward_shift(mu, th)) - base) <= 1e-12);
  }
}

TEST_CASE("correlated theta/common increments on a common-noise base") {
  ModelSpec lq = builtin_model("lq", {{"beta_cn", 0.1}});
  FeatureBasis basis = FeatureBasis::make(1, 1, 2);
  FieldApprox zero = FieldApprox::constant(basis, VectorXd::Zero(1));
  SimInit init;
  init.tagged = MatrixXd::Zero(1, 1);
  init.theta = scal(0.2);
  std::mt19937_64 rng(77);
  init.mu = gaussian_cloud(rng, 1, 8, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = 0.05;
  cfg.horizon = 0.2;
  cfg.n_particles = 8;
  cfg.n_paths = 4;

  CommonNoiseOptions opts;
  MatrixXd cov(2, 2);
  cov << 1.0, 0.5, 0.5, 1.0;
  opts.joint_cov = cov;
  PathBundle pb = simulate_common_noise(lq, zero, init, cfg, opts);
  CHECK(static_cast<int>(pb.paths.size()) == 4);
  CHECK(pb.paths[0].common_incr.size() == 4);

  MatrixXd badcov(2, 2);
  badcov << 1.0, 2.0, 2.0, 1.0;
  opts.joint_cov = badcov;
  CHECK_THROWS_AS(simulate_common_noise(lq, zero, init, cfg, opts), std::invalid_argument);
}
