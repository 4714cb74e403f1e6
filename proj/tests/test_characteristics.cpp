#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mfg/characteristics.hpp"

using namespace mfg;

namespace {

int feat_index(const FeatureBasis& b, const std::vector<int>& e) {
  for (int i = 0; i < b.size(); ++i)
    if (b.exps[i] == e) return i;
  REQUIRE(false);
  return -1;
}

// Field carrying the closed-form affine solution a(t) x + c(t) mean(mu) + e(t)
// of the linear-quadratic built-in, sampled on the dt grid.
FieldApprox lq_oracle_field(const LqParams& p, double T, double dt) {
  FeatureBasis basis = FeatureBasis::make(1, 1, 2);
  int i_const = feat_index(basis, {0, 0, 0, 0});
  int i_x = feat_index(basis, {1, 0, 0, 0});
  int i_m = feat_index(basis, {0, 0, 1, 0});
  FieldApprox f;
  f.basis = basis;
  f.dt = dt;
  int K = static_cast<int>(std::llround(T / dt));
  for (int k = 0; k <= K; ++k) {
    auto c = lq_riccati_coeffs(p, k * dt);
    MatrixXd C = MatrixXd::Zero(basis.size(), 1);
    C(i_const, 0) = c.e;
    C(i_x, 0) = c.a;
    C(i_m, 0) = c.c;
    f.coef.push_back(C);
    f.fit_residual.push_back(0.0);
  }
  return f;
}

EmpiricalMeasure gaussian_cloud(std::mt19937_64& rng, int d, int n, double center, double spread,
                                Domain dom = Domain::euclidean, double period = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd p(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) p(i, j) = center + spread * g(rng);
  return EmpiricalMeasure(p, dom, period);
}

bool bundles_identical(const PathBundle& a, const PathBundle& b) {
  if (a.paths.size() != b.paths.size()) return false;
  for (size_t p = 0; p < a.paths.size(); ++p) {
    const auto &ta = a.paths[p], &tb = b.paths[p];
    if (ta.theta.size() != tb.theta.size()) return false;
    for (size_t k = 0; k < ta.theta.size(); ++k) {
      if (ta.theta[k] != tb.theta[k]) return false;
      if (ta.cloud[k] != tb.cloud[k]) return false;
      if (ta.tagged[k].size() != tb.tagged[k].size()) return false;
      if (ta.tagged[k].size() && ta.tagged[k] != tb.tagged[k]) return false;
    }
  }
  return true;
}

Dynamics plain_dynamics(int d, int n, double sigma_x, double sigma_theta) {
  Dynamics dyn;
  dyn.dim_x = d;
  dyn.dim_theta = n;
  dyn.sigma_x = sigma_x;
  dyn.sigma_theta = VectorXd::Constant(n, sigma_theta);
  return dyn;
}

}  // namespace

TEST_CASE("feature basis: size, graded order, constant-first") {
  auto b = FeatureBasis::make(1, 1, 2);
  CHECK(b.n_vars() == 4);
  CHECK(b.size() == 15);  // binomial(4 + 2, 2)
  int prev = 0;
  for (const auto& e : b.exps) {
    int deg = 0;
    for (int v : e) deg += v;
    CHECK(deg >= prev);
    prev = deg;
  }
  for (int v : b.exps[0]) CHECK(v == 0);

  auto b2 = FeatureBasis::make(2, 1, 2);
  CHECK(b2.n_vars() == 7);
  CHECK(b2.size() == 36);  // binomial(7 + 2, 2)
}

TEST_CASE("ridge_fit recovers an affine field exactly") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  auto basis = FeatureBasis::make(1, 1, 2);
  const int K = 80;
  MatrixXd Phi(K, basis.size());
  MatrixXd targets(1, K);
  for (int k = 0; k < K; ++k) {
    MatrixXd X(1, 1);
    X(0, 0) = g(rng);
    VectorXd th(1), m1(1), m2(1);
    th(0) = g(rng);
    m1(0) = g(rng);
    m2(0) = m1(0) * m1(0) + std::abs(g(rng));
    Phi.row(k) = basis.features(X, th, m1, m2).row(0);
    targets(0, k) = 0.7 * X(0, 0) + 0.3 * m1(0) - 0.2;
  }
  double resid = -1;
  MatrixXd C = ridge_fit(Phi, targets, 1e-9, &resid);
  CHECK(resid <= 1e-7);
  CHECK(C(feat_index(basis, {1, 0, 0, 0}), 0) == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(C(feat_index(basis, {0, 0, 1, 0}), 0) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(C(feat_index(basis, {0, 0, 0, 0}), 0) == doctest::Approx(-0.2).epsilon(1e-6));
}

TEST_CASE("FieldApprox: constant, interpolation, support, round trip") {
  auto basis = FeatureBasis::make(1, 1, 2);
  VectorXd v(1);
  v(0) = 3.25;
  auto f = FieldApprox::constant(basis, v);
  std::mt19937_64 rng(7);
  auto mu = gaussian_cloud(rng, 1, 5, 0.0, 1.0);
  VectorXd x(1), th(1);
  x(0) = 1.7;
  th(0) = -0.4;
  CHECK(f.eval(0.0, x, th, mu)(0) == 3.25);

  // two levels: constants 1 and 3, linear in time in between
  FieldApprox g;
  g.basis = basis;
  g.dt = 0.5;
  VectorXd one = VectorXd::Constant(1, 1.0), three = VectorXd::Constant(1, 3.0);
  g.coef = {FieldApprox::constant(basis, one).coef[0], FieldApprox::constant(basis, three).coef[0]};
  g.fit_residual = {0.0, 0.0};
  CHECK(g.eval(0.25, x, th, mu)(0) == doctest::Approx(2.0));
  CHECK(g.eval(0.5, x, th, mu)(0) == doctest::Approx(3.0));
  CHECK_THROWS(g.eval(0.6, x, th, mu));
  CHECK_THROWS(g.eval(-0.1, x, th, mu));

  auto h = FieldApprox::from_json(g.to_json());
  CHECK(h.coef.size() == 2);
  CHECK(h.coef[0] == g.coef[0]);
  CHECK(h.coef[1] == g.coef[1]);
  CHECK(h.dt == g.dt);
}

TEST_CASE("oracle field evaluates the closed-form solution") {
  LqParams p;
  auto f = lq_oracle_field(p, 0.5, 0.01);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int it = 0; it < 20; ++it) {
    double t = 0.01 * (it % 51);
    auto mu = gaussian_cloud(rng, 1, 8, 0.3, 0.5);
    VectorXd x(1), th(1);
    x(0) = g(rng);
    th(0) = g(rng);
    CHECK(f.eval(t, x, th, mu)(0) ==
          doctest::Approx(lq_riccati_oracle(p, t, x(0), mu.mean()(0))).epsilon(1e-9));
  }
}

TEST_CASE("SimConfig validation") {
  SimConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.dt = 0.03;
  cfg.horizon = 0.1;  // not an integer multiple
  CHECK_THROWS(cfg.validate());
  cfg.dt = -0.01;
  CHECK_THROWS(cfg.validate());
  cfg = SimConfig{};
  cfg.n_paths = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("frozen dynamics: all trajectories constant, initial entries exact") {
  std::mt19937_64 rng(13);
  auto mu = gaussian_cloud(rng, 2, 6, 0.0, 1.0);
  Dynamics dyn = plain_dynamics(2, 1, 0.0, 0.0);
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 0.5;
  cfg.n_particles = 6;
  cfg.n_paths = 3;
  SimInit init{MatrixXd::Constant(2, 2, 0.7), VectorXd::Constant(1, -0.3), mu};
  PathBundle b;
  simulate_stream(dyn, init, cfg, nullptr, &b);
  for (const auto& tr : b.paths) {
    REQUIRE(tr.cloud.size() == 6);
    CHECK(tr.cloud.front() == mu.pts);
    CHECK(tr.tagged.front() == init.tagged);
    CHECK(tr.theta.front() == init.theta);
    for (size_t k = 1; k < tr.cloud.size(); ++k) {
      CHECK(tr.cloud[k] == mu.pts);
      CHECK(tr.tagged[k] == init.tagged);
      CHECK(tr.theta[k] == init.theta);
    }
  }
}

TEST_CASE("driftless diffusion: tagged mean is a martingale") {
  std::mt19937_64 rng(17);
  auto mu = gaussian_cloud(rng, 1, 4, 0.0, 1.0);
  const double sigma_x = 0.3, T = 0.5;
  Dynamics dyn = plain_dynamics(1, 1, sigma_x, 0.0);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = T;
  cfg.n_particles = 4;
  cfg.n_paths = 4000;
  cfg.seed = 99;
  SimInit init{MatrixXd::Constant(1, 1, 1.25), VectorXd::Zero(1), mu};
  PathBundle b;
  simulate_stream(dyn, init, cfg, nullptr, &b);
  double mean = 0;
  for (const auto& tr : b.paths) mean += tr.tagged.back()(0, 0);
  mean /= cfg.n_paths;
  double tol = 3.0 * std::sqrt(2.0 * sigma_x * T / cfg.n_paths);
  CHECK(std::abs(mean - 1.25) <= tol);
}

TEST_CASE("lq model with oracle field: cloud mean follows the mean-field ODE") {
  LqParams p;  // defaults; F = W, b = r_b theta (theta does not feed back on x)
  const double T = 0.5, dt = 0.005;
  auto model = builtin_model("lq");
  auto field = lq_oracle_field(p, T, dt);
  std::mt19937_64 rng(23);
  auto mu = gaussian_cloud(rng, 1, 400, 0.5, 0.3);
  SimConfig cfg;
  cfg.dt = dt;
  cfg.horizon = T;
  cfg.n_particles = 400;
  cfg.n_paths = 50;
  cfg.seed = 3;
  SimInit init{MatrixXd(), VectorXd::Constant(1, 0.2), mu};
  PathBundle b = simulate_forward(model, field, init, cfg);

  // independent RK4 on mbar' = -((a + c)(T - s) mbar + e(T - s))
  double mbar = mu.mean()(0);
  const int steps = 2000;
  double h = T / steps;
  auto rhs = [&](double s, double m) {
    auto c = lq_riccati_coeffs(p, T - s);
    return -((c.a + c.c) * m + c.e);
  };
  for (int k = 0; k < steps; ++k) {
    double s = k * h;
    double k1 = rhs(s, mbar), k2 = rhs(s + h / 2, mbar + h / 2 * k1),
           k3 = rhs(s + h / 2, mbar + h / 2 * k2), k4 = rhs(s + h, mbar + h * k3);
    mbar += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  double sim_mean = 0;
  for (const auto& tr : b.paths) sim_mean += tr.cloud.back().mean();
  sim_mean /= cfg.n_paths;
  CHECK(std::abs(sim_mean - mbar) <= 0.02);
}

TEST_CASE("determinism: bundles bitwise identical across thread counts") {
  auto model = builtin_model("lq");
  auto field = lq_oracle_field(LqParams{}, 0.2, 0.02);
  std::mt19937_64 rng(29);
  auto mu = gaussian_cloud(rng, 1, 30, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.horizon = 0.2;
  cfg.n_particles = 30;
  cfg.n_paths = 7;
  cfg.seed = 12;
  SimInit init{MatrixXd::Constant(1, 2, 0.1), VectorXd::Constant(1, 0.4), mu};
  cfg.threads = 1;
  PathBundle b1 = simulate_forward(model, field, init, cfg);
  cfg.threads = 4;
  PathBundle b4 = simulate_forward(model, field, init, cfg);
  CHECK(bundles_identical(b1, b4));
}

TEST_CASE("flow property: restart at a grid point reproduces the tail bitwise") {
  auto model = builtin_model("lq");
  const double T = 0.4, dt = 0.02;
  auto field = lq_oracle_field(LqParams{}, T, dt);
  std::mt19937_64 rng(31);
  auto mu = gaussian_cloud(rng, 1, 20, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = dt;
  cfg.horizon = T;
  cfg.n_particles = 20;
  cfg.n_paths = 1;
  cfg.seed = 77;
  SimInit init{MatrixXd::Constant(1, 1, -0.6), VectorXd::Constant(1, 0.3), mu};
  PathBundle full = simulate_forward(model, field, init, cfg);

  const int k0 = 10;
  const auto& tr = full.paths[0];
  SimConfig cfg2 = cfg;
  cfg2.horizon = T - k0 * dt;
  cfg2.step_offset = k0;
  SimInit init2{tr.tagged[k0], tr.theta[k0],
                EmpiricalMeasure(tr.cloud[k0], model.domain, model.period)};
  PathBundle tail = simulate_forward(model, field, init2, cfg2);
  const auto& tt = tail.paths[0];
  for (size_t k = 0; k < tt.cloud.size(); ++k) {
    CHECK(tt.cloud[k] == tr.cloud[k0 + k]);
    CHECK(tt.tagged[k] == tr.tagged[k0 + k]);
    CHECK(tt.theta[k] == tr.theta[k0 + k]);
  }
}

TEST_CASE("doubled system: identical initials give bitwise-identical bundles") {
  auto model = builtin_model("lq");
  auto field = lq_oracle_field(LqParams{}, 0.2, 0.02);
  std::mt19937_64 rng(37);
  auto mu = gaussian_cloud(rng, 1, 16, 0.0, 0.5);
  Coupling g;
  g.x = mu.pts;
  g.y = mu.pts;
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.horizon = 0.2;
  cfg.n_particles = 16;
  cfg.n_paths = 4;
  VectorXd th = VectorXd::Constant(1, 0.1);
  auto db = simulate_doubled(model, field, g, th, th, cfg);
  CHECK(bundles_identical(db.first, db.second));
}

TEST_CASE("doubled system: zero drift keeps pair displacements constant") {
  // Shared idiosyncratic increments cancel in X - Y when drifts vanish.
  ModelSpec model = builtin_model("lq");
  model.F = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd&) {
    return MatrixXd(MatrixXd::Zero(X.rows(), X.cols()));
  };
  model.b = [](const VectorXd& th, const EmpiricalMeasure&, const MatrixXd&) {
    return VectorXd(VectorXd::Zero(th.size()));
  };
  auto field = lq_oracle_field(LqParams{}, 0.2, 0.02);
  std::mt19937_64 rng(41);
  auto mu = gaussian_cloud(rng, 1, 12, 0.0, 0.5);
  auto nu = gaussian_cloud(rng, 1, 12, 1.0, 0.5);
  Coupling g;
  g.x = mu.pts;
  g.y = nu.pts;
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.horizon = 0.2;
  cfg.n_particles = 12;
  cfg.n_paths = 3;
  auto db = simulate_doubled(model, field, g, VectorXd::Zero(1), VectorXd::Zero(1), cfg);
  MatrixXd d0 = g.x - g.y;
  for (int p = 0; p < cfg.n_paths; ++p)
    for (int k = 0; k <= cfg.n_steps(); ++k) {
      auto ev = db.evolved_coupling(p, k);
      CHECK((ev.x - ev.y - d0).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("common noise: beta = 0 reproduces simulate_forward bitwise") {
  auto model = builtin_model("lq");  // beta_cn = 0 by default
  auto field = lq_oracle_field(LqParams{}, 0.2, 0.02);
  std::mt19937_64 rng(43);
  auto mu = gaussian_cloud(rng, 1, 10, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.horizon = 0.2;
  cfg.n_particles = 10;
  cfg.n_paths = 3;
  SimInit init{MatrixXd::Constant(1, 1, 0.2), VectorXd::Constant(1, 0.1), mu};
  PathBundle a = simulate_forward(model, field, init, cfg);
  PathBundle b = simulate_common_noise(model, field, init, cfg);
  CHECK(bundles_identical(a, b));
}

TEST_CASE("common noise: pure common shift translates the cloud rigidly") {
  ModelSpec model = builtin_model("lq", {{"sigma_x", 0.0}, {"beta_cn", 0.3}});
  model.F = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd&) {
    return MatrixXd(MatrixXd::Zero(X.rows(), X.cols()));
  };
  auto field = lq_oracle_field(LqParams{}, 0.2, 0.02);
  std::mt19937_64 rng(47);
  auto mu = gaussian_cloud(rng, 1, 8, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = 0.02;
  cfg.horizon = 0.2;
  cfg.n_particles = 8;
  cfg.n_paths = 4;
  SimInit init{MatrixXd(), VectorXd::Zero(1), mu};
  PathBundle b = simulate_common_noise(model, field, init, cfg);
  for (const auto& tr : b.paths) {
    VectorXd shift = VectorXd::Zero(1);
    for (size_t k = 0; k < tr.common_incr.size(); ++k) {
      shift += tr.common_incr[k];
      MatrixXd expect = mu.pts;
      expect.colwise() += shift;
      CHECK((tr.cloud[k + 1] - expect).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("common noise: variance of the cloud mean matches 2 beta t") {
  const double beta = 0.2, T = 0.5;
  ModelSpec model = builtin_model("lq", {{"sigma_x", 0.0}, {"beta_cn", beta}});
  model.F = [](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd&) {
    return MatrixXd(MatrixXd::Zero(X.rows(), X.cols()));
  };
  auto field = lq_oracle_field(LqParams{}, T, 0.01);
  std::mt19937_64 rng(53);
  auto mu = gaussian_cloud(rng, 1, 4, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = T;
  cfg.n_particles = 4;
  cfg.n_paths = 4000;
  cfg.seed = 5;
  SimInit init{MatrixXd(), VectorXd::Zero(1), mu};
  PathBundle b = simulate_common_noise(model, field, init, cfg);
  double m1 = 0, m2 = 0;
  for (const auto& tr : b.paths) {
    double v = tr.cloud.back().mean();
    m1 += v;
    m2 += v * v;
  }
  m1 /= cfg.n_paths;
  m2 /= cfg.n_paths;
  double var = m2 - m1 * m1;
  // chi-square spread of a variance estimate over M paths
  CHECK(std::abs(var - 2 * beta * T) <= 2 * beta * T * 3.0 * std::sqrt(2.0 / cfg.n_paths));
}

TEST_CASE("correlated joint covariance: identity reduces to independent; non-PSD rejected") {
  ModelSpec model = builtin_model("lq", {{"beta_cn", 0.1}});
  auto field = lq_oracle_field(LqParams{}, 0.1, 0.01);
  std::mt19937_64 rng(59);
  auto mu = gaussian_cloud(rng, 1, 6, 0.0, 0.5);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 0.1;
  cfg.n_particles = 6;
  cfg.n_paths = 2;
  SimInit init{MatrixXd(), VectorXd::Constant(1, 0.2), mu};
  PathBundle a = simulate_common_noise(model, field, init, cfg);
  CommonNoiseOptions opts;
  opts.joint_cov = MatrixXd::Identity(2, 2);
  PathBundle b = simulate_common_noise(model, field, init, cfg, opts);
  CHECK(bundles_identical(a, b));

  MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  opts.joint_cov = bad;
  CHECK_THROWS(simulate_common_noise(model, field, init, cfg, opts));
  opts.joint_cov = MatrixXd::Identity(3, 3);  // wrong size
  CHECK_THROWS(simulate_common_noise(model, field, init, cfg, opts));
}

TEST_CASE("conditional-law consistency: tagged statistics match the cloud") {
  // All particles start at the same point and follow iid diffusions, so a
  // tagged particle is a statistical copy of any cloud member.
  const double sigma_x = 0.25, T = 0.4;
  Dynamics dyn = plain_dynamics(1, 1, sigma_x, 0.0);
  MatrixXd start = MatrixXd::Constant(1, 64, 0.3);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = T;
  cfg.n_particles = 64;
  cfg.n_paths = 400;
  cfg.seed = 21;
  SimInit init{MatrixXd::Constant(1, 1, 0.3), VectorXd::Zero(1), EmpiricalMeasure(start)};
  PathBundle b;
  simulate_stream(dyn, init, cfg, nullptr, &b);
  double tagged_stat = 0, cloud_stat = 0;
  for (const auto& tr : b.paths) {
    tagged_stat += tr.tagged.back()(0, 0) * tr.tagged.back()(0, 0);
    cloud_stat += tr.cloud.back().array().square().mean();
  }
  tagged_stat /= cfg.n_paths;
  cloud_stat /= cfg.n_paths;
  // var of x_T^2 ~ E x^4 - (E x^2)^2 with x ~ N(0.3, 2 sigma T): bound by 3 se
  double v = 2 * sigma_x * T;
  double var_stat = 2 * v * v + 4 * 0.09 * v;
  CHECK(std::abs(tagged_stat - cloud_stat) <= 3.0 * std::sqrt(var_stat / cfg.n_paths));
}

TEST_CASE("Wasserstein stability in the drift field") {
  // Same noise, Lipschitz drifts differing by delta: the distance between the
  // two clouds stays below the integral bound with a uniform constant.
  std::mt19937_64 rng(61);
  auto mu = gaussian_cloud(rng, 1, 40, 0.0, 1.0);
  for (double delta : {0.2, 0.5, 1.0}) {
    for (double q : {1.0, 2.0}) {
      auto make_dyn = [&](double shift) {
        Dynamics dyn = plain_dynamics(1, 1, 0.2, 0.0);
        dyn.x_drift = [shift](double, const MatrixXd& X, const VectorXd&,
                              const EmpiricalMeasure&) { return MatrixXd(-X.array() + shift); };
        return dyn;
      };
      SimConfig cfg;
      cfg.dt = 0.02;
      cfg.horizon = 1.0;
      cfg.n_particles = 40;
      cfg.n_paths = 1;
      cfg.seed = 101;
      SimInit init{MatrixXd(), VectorXd::Zero(1), mu};
      PathBundle b1, b2;
      simulate_stream(make_dyn(0.0), init, cfg, nullptr, &b1);
      simulate_stream(make_dyn(delta), init, cfg, nullptr, &b2);
      for (int k = 1; k <= cfg.n_steps(); ++k) {
        double t = k * cfg.dt;
        double w = wasserstein_distance(q, EmpiricalMeasure(b1.paths[0].cloud[k]),
                                        EmpiricalMeasure(b2.paths[0].cloud[k]));
        double bound = delta * std::pow(t, 1.0 / q);  // (int ||c1-c2||^q ds)^(1/q)
        CHECK(w <= 2.0 * bound);
      }
    }
  }
}

TEST_CASE("blow-up guard aborts exploding paths with the offending time") {
  Dynamics dyn = plain_dynamics(1, 1, 0.0, 0.0);
  dyn.x_drift = [](double, const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(X.array().square() * X.array().sign());
  };
  MatrixXd start = MatrixXd::Constant(1, 2, 3.0);
  SimConfig cfg;
  cfg.dt = 0.05;
  cfg.horizon = 5.0;
  cfg.n_particles = 2;
  cfg.n_paths = 2;
  SimInit init{MatrixXd(), VectorXd::Zero(1), EmpiricalMeasure(start)};
  PathBundle b;
  bool threw = false;
  try {
    simulate_stream(dyn, init, cfg, nullptr, &b);
  } catch (const BlowUpError& e) {
    threw = true;
    CHECK(e.time > 0.0);
    CHECK(e.time <= 5.0);
    CHECK(std::abs(e.value) > 1e6);
  }
  CHECK(threw);
}

TEST_CASE("torus domain wraps the cloud after every step") {
  Dynamics dyn = plain_dynamics(1, 1, 0.0, 0.0);
  dyn.domain = Domain::torus;
  dyn.period = 1.0;
  dyn.x_drift = [](double, const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(MatrixXd::Constant(X.rows(), X.cols(), 1.0));
  };
  MatrixXd start = MatrixXd::Constant(1, 3, 0.95);
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 0.3;
  cfg.n_particles = 3;
  cfg.n_paths = 1;
  SimInit init{MatrixXd(), VectorXd::Zero(1), EmpiricalMeasure(start, Domain::torus, 1.0)};
  PathBundle b;
  simulate_stream(dyn, init, cfg, nullptr, &b);
  for (const auto& cl : b.paths[0].cloud) {
    CHECK(cl.minCoeff() >= 0.0);
    CHECK(cl.maxCoeff() < 1.0);
  }
  CHECK(b.paths[0].cloud.back()(0, 0) == doctest::Approx(0.25));  // 0.95 + 0.3 wrapped
}

TEST_CASE("CSV export: long format with one row per component") {
  Dynamics dyn = plain_dynamics(1, 1, 0.0, 0.0);
  MatrixXd start = MatrixXd::Constant(1, 2, 0.5);
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 0.2;
  cfg.n_particles = 2;
  cfg.n_paths = 2;
  SimInit init{MatrixXd::Constant(1, 1, 0.1), VectorXd::Zero(1), EmpiricalMeasure(start)};
  PathBundle b;
  simulate_stream(dyn, init, cfg, nullptr, &b);
  std::string csv = b.to_csv();
  CHECK(csv.rfind("path,step,entity,index,comp,value\n", 0) == 0);
  // 2 paths x 3 grid points x (1 theta + 2 cloud + 1 tagged) rows
  int rows = 0;
  for (char c : csv) rows += (c == '\n');
  CHECK(rows == 1 + 2 * 3 * 4);
}
