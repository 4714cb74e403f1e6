#include "mfg/models.hpp"

#include <cmath>
#include <random>

namespace mfg {

void ModelSpec::validate() const {
  if (dim_x < 1 || dim_x > 3 || dim_theta < 0 || dim_theta > 6)
    throw std::invalid_argument("ModelSpec: unsupported dimensions");
  if (sigma_x < 0 || beta_cn < 0) throw std::invalid_argument("ModelSpec: negative diffusion");
  if (sigma_theta.size() != dim_theta)
    throw std::invalid_argument("ModelSpec: sigma_theta size mismatch");
  if ((sigma_theta.array() < 0).any())
    throw std::invalid_argument("ModelSpec: negative theta diffusion");
  if (A) {
    if (A->rows() != dim_theta || A->cols() != dim_theta)
      throw std::invalid_argument("ModelSpec: A dimension mismatch");
    if ((*A - A->transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("ModelSpec: A not symmetric");
  }
  if (!F || !G || !W0 || !b) throw std::invalid_argument("ModelSpec: missing coefficient");
}

namespace {

// Pull known keys out of `params`, erroring on leftovers.
struct ParamReader {
  std::map<std::string, double> params;
  explicit ParamReader(std::map<std::string, double> p) : params(std::move(p)) {}
  double take(const std::string& key, double dflt) {
    auto it = params.find(key);
    if (it == params.end()) return dflt;
    double v = it->second;
    params.erase(it);
    return v;
  }
  void finish(const std::string& model) const {
    if (!params.empty())
      throw std::invalid_argument("builtin_model(" + model + "): unknown parameter '" +
                                  params.begin()->first + "'");
  }
};

RowVectorXd quadratic_u0(const MatrixXd& X, double half_x2, double xm, double mean) {
  return half_x2 * X.row(0).array().square() + xm * mean * X.row(0).array();
}

ModelSpec make_lq(const LqParams& p) {
  ModelSpec m;
  m.name = "lq";
  m.sigma_x = p.sigma_x;
  m.sigma_theta = VectorXd::Constant(1, p.sigma_theta);
  m.beta_cn = p.beta_cn;
  m.alpha_H = 0.5;
  m.mono_alpha = 0.5;
  m.F = [p](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd& W) {
    return MatrixXd(W + p.c_xp * X);
  };
  m.G = [p](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu, const MatrixXd& W) {
    double mean = mu.mean()(0);
    return MatrixXd(-p.c_xp * W + p.c_f * X +
                    MatrixXd::Constant(X.rows(), X.cols(), p.c_fm * mean));
  };
  m.W0 = [p](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    double mean = mu.mean()(0);
    return MatrixXd(p.u2 * X + MatrixXd::Constant(X.rows(), X.cols(), p.u_m * mean));
  };
  m.U0 = [p](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    return quadratic_u0(X, 0.5 * p.u2, p.u_m, mu.mean()(0));
  };
  m.H = [p](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu, const MatrixXd& P) {
    double mean = mu.mean()(0);
    return RowVectorXd(0.5 * P.row(0).array().square() +
                       p.c_xp * X.row(0).array() * P.row(0).array() -
                       0.5 * p.c_f * X.row(0).array().square() -
                       p.c_fm * mean * X.row(0).array());
  };
  m.b = [p](const VectorXd& theta, const EmpiricalMeasure&, const MatrixXd&) {
    return VectorXd(p.r_b * theta);
  };
  return m;
}

LqParams lq_params_from(ParamReader& r) {
  LqParams p;
  p.c_f = r.take("c_f", p.c_f);
  p.c_xp = r.take("c_xp", p.c_xp);
  p.c_fm = r.take("c_fm", p.c_fm);
  p.u2 = r.take("u2", p.u2);
  p.u_m = r.take("u_m", p.u_m);
  p.r_b = r.take("r_b", p.r_b);
  p.sigma_x = r.take("sigma_x", p.sigma_x);
  p.sigma_theta = r.take("sigma_theta", p.sigma_theta);
  p.beta_cn = r.take("beta_cn", p.beta_cn);
  return p;
}

ModelSpec make_price_production(ParamReader& r) {
  double rr = r.take("r", 1.0);
  double alpha_p = r.take("alpha", 1.0);
  double c2 = r.take("c2", 1.0);
  double u0 = r.take("u0", 0.5);
  double sx = r.take("sigma_x", 0.2);
  double st = r.take("sigma_theta", 0.2);
  if (alpha_p <= 0) throw std::invalid_argument("price_production: alpha must be > 0");
  ModelSpec m;
  m.name = "price_production";
  m.sigma_x = sx;
  m.sigma_theta = VectorXd::Constant(1, st);
  m.alpha_H = 0.5;
  m.A = MatrixXd::Constant(1, 1, 1.0 / alpha_p);
  m.F = [](const MatrixXd&, const VectorXd&, const EmpiricalMeasure&, const MatrixXd& W) {
    return W;
  };
  m.G = [c2](const MatrixXd& X, const VectorXd& theta, const EmpiricalMeasure&,
             const MatrixXd&) {
    return MatrixXd(MatrixXd::Constant(X.rows(), X.cols(), theta(0)) - c2 * X);
  };
  m.W0 = [u0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(u0 * X);
  };
  m.U0 = [u0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return quadratic_u0(X, 0.5 * u0, 0.0, 0.0);
  };
  m.H = [c2](const MatrixXd& X, const VectorXd& theta, const EmpiricalMeasure&,
             const MatrixXd& P) {
    return RowVectorXd(0.5 * P.row(0).array().square() - X.row(0).array() * theta(0) +
                       0.5 * c2 * X.row(0).array().square());
  };
  m.b = [rr, alpha_p](const VectorXd& theta, const EmpiricalMeasure& mu, const MatrixXd&) {
    return VectorXd(rr * theta - VectorXd::Constant(1, alpha_p * mu.mean()(0)));
  };
  return m;
}

ModelSpec make_torus_monotone(ParamReader& r) {
  double kf = r.take("kappa_f", 0.5);
  double k0 = r.take("kappa0", 0.5);
  double rt = r.take("r_theta", 0.5);
  double sx = r.take("sigma_x", 0.05);
  double st = r.take("sigma_theta", 0.2);
  ModelSpec m;
  m.name = "torus_monotone";
  m.domain = Domain::torus;
  m.period = 1.0;
  m.sigma_x = sx;
  m.sigma_theta = VectorXd::Constant(1, st);
  m.alpha_H = 0.5;
  m.mono_alpha = 0.5;
  m.F = [](const MatrixXd&, const VectorXd&, const EmpiricalMeasure&, const MatrixXd& W) {
    return W;
  };
  m.G = [kf](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu, const MatrixXd&) {
    return MatrixXd(MatrixXd::Constant(X.rows(), X.cols(), kf * mu.mean()(0)));
  };
  m.W0 = [k0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    return MatrixXd(MatrixXd::Constant(X.rows(), X.cols(), k0 * mu.mean()(0)));
  };
  m.U0 = [k0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu) {
    return quadratic_u0(X, 0.0, k0, mu.mean()(0));
  };
  m.H = [kf](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure& mu, const MatrixXd& P) {
    return RowVectorXd(0.5 * P.row(0).array().square() -
                       kf * mu.mean()(0) * X.row(0).array());
  };
  m.b = [rt](const VectorXd& theta, const EmpiricalMeasure&, const MatrixXd&) {
    return VectorXd(rt * theta);
  };
  return m;
}

ModelSpec make_blowup(ParamReader& r) {
  double gamma = r.take("gamma", 1.0);
  double w0 = r.take("w0", 1.0);
  double sx = r.take("sigma_x", 0.2);
  double st = r.take("sigma_theta", 0.1);
  ModelSpec m;
  m.name = "blowup_nonmonotone";
  m.sigma_x = sx;
  m.sigma_theta = VectorXd::Constant(1, st);
  m.alpha_H = 0.5;
  m.F = [](const MatrixXd&, const VectorXd&, const EmpiricalMeasure&, const MatrixXd& W) {
    return W;
  };
  m.G = [gamma](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd&) {
    return MatrixXd(-gamma * X);
  };
  m.W0 = [w0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(-w0 * X);
  };
  m.U0 = [w0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return quadratic_u0(X, -0.5 * w0, 0.0, 0.0);
  };
  m.H = [gamma](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&, const MatrixXd& P) {
    return RowVectorXd(0.5 * P.row(0).array().square() +
                       0.5 * gamma * X.row(0).array().square());
  };
  m.b = [](const VectorXd& theta, const EmpiricalMeasure&, const MatrixXd&) {
    return VectorXd(0.5 * theta);
  };
  return m;
}

ModelSpec make_quadratic_certified(ParamReader& r) {
  double aF = r.take("alpha_F", 1.0);
  double aG = r.take("alpha_G", 1.0);
  double gt = r.take("g_theta", 1.0);
  double ab = r.take("alpha_b", 1.0);
  double kb = r.take("k_b", 1.0);
  double w0 = r.take("w0", 0.8);
  double sx = r.take("sigma_x", 0.2);
  double st = r.take("sigma_theta", 0.2);
  double a_pen = r.take("a", 1.25);
  ModelSpec m;
  m.name = "quadratic_certified";
  m.sigma_x = sx;
  m.sigma_theta = VectorXd::Constant(1, st);
  m.alpha_H = 0.5 * aF;
  m.mono_alpha = 0.1;
  m.A = MatrixXd::Constant(1, 1, a_pen);
  m.F = [aF](const MatrixXd&, const VectorXd&, const EmpiricalMeasure&, const MatrixXd& W) {
    return MatrixXd(aF * W);
  };
  m.G = [aG, gt](const MatrixXd& X, const VectorXd& theta, const EmpiricalMeasure&,
                 const MatrixXd&) {
    return MatrixXd(aG * X + MatrixXd::Constant(X.rows(), X.cols(), gt * theta(0)));
  };
  m.W0 = [w0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return MatrixXd(w0 * X);
  };
  m.U0 = [w0](const MatrixXd& X, const VectorXd&, const EmpiricalMeasure&) {
    return quadratic_u0(X, 0.5 * w0, 0.0, 0.0);
  };
  m.H = [aF, aG, gt](const MatrixXd& X, const VectorXd& theta, const EmpiricalMeasure&,
                     const MatrixXd& P) {
    return RowVectorXd(0.5 * aF * P.row(0).array().square() -
                       0.5 * aG * X.row(0).array().square() -
                       gt * theta(0) * X.row(0).array());
  };
  m.b = [ab, kb](const VectorXd& theta, const EmpiricalMeasure&, const MatrixXd& f) {
    return VectorXd(ab * theta + VectorXd::Constant(1, kb * f.row(0).mean()));
  };
  return m;
}

}  // namespace

ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& params) {
  ParamReader r(params);
  ModelSpec m;
  if (name == "lq") {
    m = make_lq(lq_params_from(r));
  } else if (name == "price_production") {
    m = make_price_production(r);
  } else if (name == "torus_monotone") {
    m = make_torus_monotone(r);
  } else if (name == "blowup_nonmonotone") {
    m = make_blowup(r);
  } else if (name == "quadratic_certified") {
    m = make_quadratic_certified(r);
  } else {
    throw std::invalid_argument("builtin_model: unknown name '" + name + "'");
  }
  r.finish(name);
  m.validate();
  return m;
}

namespace {

// Dormand-Prince 5(4) step on the 3-dim Riccati system.
struct Rhs {
  LqParams p;
  Eigen::Vector3d operator()(const Eigen::Vector3d& y) const {
    double a = y(0), c = y(1), e = y(2);
    return {p.c_f - 2 * p.c_xp * a - a * a, p.c_fm - 2 * (a + p.c_xp) * c - c * c,
            -(a + c + p.c_xp) * e};
  }
};

}  // namespace

LqCoeffs lq_riccati_coeffs(const LqParams& p, double t, double tol) {
  if (t < 0) throw std::invalid_argument("lq_riccati_coeffs: negative time");
  Rhs f{p};
  Eigen::Vector3d y(p.u2, p.u_m, 0.0);
  double s = 0.0, h = std::min(1e-2, t > 0 ? t : 1e-2);
  while (t - s > 1e-14 * std::max(1.0, t)) {
    h = std::min(h, t - s);
    Eigen::Vector3d k1 = f(y);
    Eigen::Vector3d k2 = f(y + h * (k1 / 5));
    Eigen::Vector3d k3 = f(y + h * (3 * k1 + 9 * k2) / 40);
    Eigen::Vector3d k4 = f(y + h * (44 * k1 / 45 - 56 * k2 / 15 + 32 * k3 / 9));
    Eigen::Vector3d k5 =
        f(y + h * (19372 * k1 / 6561 - 25360 * k2 / 2187 + 64448 * k3 / 6561 - 212 * k4 / 729));
    Eigen::Vector3d k6 = f(y + h * (9017 * k1 / 3168 - 355 * k2 / 33 + 46732 * k3 / 5247 +
                                    49 * k4 / 176 - 5103 * k5 / 18656));
    Eigen::Vector3d y5 = y + h * (35 * k1 / 384 + 500 * k3 / 1113 + 125 * k4 / 192 -
                                  2187 * k5 / 6784 + 11 * k6 / 84);
    Eigen::Vector3d k7 = f(y5);
    Eigen::Vector3d y4 = y + h * (5179 * k1 / 57600 + 7571 * k3 / 16695 + 393 * k4 / 640 -
                                  92097 * k5 / 339200 + 187 * k6 / 2100 + k7 / 40);
    double err = (y5 - y4).cwiseAbs().maxCoeff() / std::max(1.0, y.cwiseAbs().maxCoeff());
    if (err <= tol) {
      s += h;
      y = y5;
      if (y.cwiseAbs().maxCoeff() > 1e8)
        throw std::runtime_error("lq_riccati_coeffs: finite-time blow-up near t=" +
                                 std::to_string(s));
    }
    double scale = err > 0 ? 0.9 * std::pow(tol / err, 0.2) : 5.0;
    h *= std::clamp(scale, 0.2, 5.0);
    if (h < 1e-13)
      throw std::runtime_error("lq_riccati_coeffs: step underflow (blow-up) near t=" +
                               std::to_string(s));
  }
  return {y(0), y(1), y(2)};
}

double lq_riccati_oracle(const LqParams& p, double t, double x, double mean_mu) {
  LqCoeffs c = lq_riccati_coeffs(p, t);
  return c.a * x + c.c * mean_mu + c.e;
}

std::map<std::string, double> estimate_lipschitz_constants(const ModelSpec& model,
                                                           const LipschitzSampler& sampler,
                                                           int budget) {
  if (budget < 2) throw std::invalid_argument("estimate_lipschitz_constants: budget >= 2");
  std::mt19937_64 rng(sampler.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int d = model.dim_x, n = model.dim_theta, K = sampler.cloud_size;
  auto draw_x = [&] {
    VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = sampler.x_spread * g(rng);
    if (model.domain == Domain::torus)
      for (int i = 0; i < d; ++i) x(i) = wrap_point(0.5 + 0.2 * x(i), model.period);
    return x;
  };
  auto draw_cloud = [&] {
    MatrixXd p(d, K);
    for (int j = 0; j < K; ++j) p.col(j) = draw_x();
    return EmpiricalMeasure(p, model.domain, model.period);
  };
  auto draw_theta = [&] {
    VectorXd t(n);
    for (int i = 0; i < n; ++i) t(i) = sampler.theta_spread * g(rng);
    return t;
  };
  auto draw_w = [&] {
    MatrixXd w(d, 1);
    for (int i = 0; i < d; ++i) w(i) = sampler.w_spread * g(rng);
    return w;
  };
  std::map<std::string, double> out{{"F", 0.0}, {"G", 0.0}, {"W0", 0.0}, {"b", 0.0}};
  for (int it = 0; it < budget; ++it) {
    VectorXd x1 = draw_x(), x2 = draw_x(), t1 = draw_theta(), t2 = draw_theta();
    EmpiricalMeasure mu = draw_cloud(), nu = draw_cloud();
    MatrixXd w1 = draw_w(), w2 = draw_w();
    double wdist = wasserstein_distance(2, mu, nu);
    double dx = (x1 - x2).norm(), dth = (t1 - t2).norm(), dw = (w1 - w2).norm();
    double denom = dx + dth + wdist + dw;
    if (denom > 1e-12) {
      double dF = (model.F(x1, t1, mu, w1) - model.F(x2, t2, nu, w2)).norm();
      double dG = (model.G(x1, t1, mu, w1) - model.G(x2, t2, nu, w2)).norm();
      out["F"] = std::max(out["F"], dF / denom);
      out["G"] = std::max(out["G"], dG / denom);
    }
    double denom0 = dx + dth + wdist;
    if (denom0 > 1e-12) {
      double dW0 = (model.W0(x1, t1, mu) - model.W0(x2, t2, nu)).norm();
      out["W0"] = std::max(out["W0"], dW0 / denom0);
    }
    // b's functional slot: two sampled affine fields compared through the
    // optimal coupling of (mu, nu).
    Coupling gam = optimal_coupling(2, mu, nu);
    MatrixXd slope1(d, d), slope2(d, d);
    VectorXd off1(d), off2(d);
    for (int i = 0; i < d; ++i) {
      off1(i) = g(rng);
      off2(i) = g(rng);
      for (int j = 0; j < d; ++j) {
        slope1(i, j) = g(rng);
        slope2(i, j) = g(rng);
      }
    }
    MatrixXd f1 = (slope1 * mu.pts).colwise() + off1;
    MatrixXd f2 = (slope2 * nu.pts).colwise() + off2;
    MatrixXd f1_on_coupling = (slope1 * gam.x).colwise() + off1;
    MatrixXd f2_on_coupling = (slope2 * gam.y).colwise() + off2;
    double field_gap =
        std::sqrt((f1_on_coupling - f2_on_coupling).array().square().colwise().sum().mean());
    double denb = dth + wdist + field_gap;
    if (denb > 1e-12) {
      double db = (model.b(t1, mu, f1) - model.b(t2, nu, f2)).norm();
      out["b"] = std::max(out["b"], db / denb);
    }
  }
  return out;
}

}  // namespace mfg
