#include "mfg/characteristics.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

namespace mfg {

int SimConfig::n_steps() const {
  return static_cast<int>(std::llround(horizon / dt));
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be positive");
  if (n_particles < 1 || n_paths < 1) throw std::invalid_argument("SimConfig: N, M must be >= 1");
  if (horizon < 0.0) throw std::invalid_argument("SimConfig: horizon must be nonnegative");
  if (threads < 1) throw std::invalid_argument("SimConfig: threads must be >= 1");
  double k = horizon / dt;
  if (std::abs(k - std::llround(k)) > 1e-9 * std::max(1.0, k))
    throw std::invalid_argument("SimConfig: horizon must be an integer multiple of dt");
}

BlowUpError::BlowUpError(double time_, double value_)
    : std::runtime_error("particle blow-up: coordinate " + std::to_string(value_) + " at time " +
                         std::to_string(time_)),
      time(time_),
      value(value_) {}

EmpiricalMeasure PathBundle::cloud_measure(int path, int step) const {
  return EmpiricalMeasure(paths.at(path).cloud.at(step), domain, period);
}

std::string PathBundle::to_csv() const {
  std::string out = "path,step,entity,index,comp,value\n";
  char buf[96];
  auto emit = [&](int p, int k, const char* entity, int idx, int c, double v) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%s,%d,%d,%.17g\n", p, k, entity, idx, c, v);
    out += buf;
  };
  for (int p = 0; p < static_cast<int>(paths.size()); ++p) {
    const PathTrajectory& tr = paths[p];
    for (int k = 0; k < static_cast<int>(tr.theta.size()); ++k) {
      for (int c = 0; c < tr.theta[k].size(); ++c) emit(p, k, "theta", 0, c, tr.theta[k](c));
      for (int i = 0; i < tr.cloud[k].cols(); ++i)
        for (int c = 0; c < tr.cloud[k].rows(); ++c) emit(p, k, "cloud", i, c, tr.cloud[k](c, i));
      for (int j = 0; j < tr.tagged[k].cols(); ++j)
        for (int c = 0; c < tr.tagged[k].rows(); ++c)
          emit(p, k, "tagged", j, c, tr.tagged[k](c, j));
    }
  }
  return out;
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> excs(threads, nullptr);
  std::vector<int> exc_index(threads, -1);
  for (int t = 0; t < threads; ++t) {
    int lo = static_cast<int>(static_cast<long long>(n) * t / threads);
    int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
    pool.emplace_back([&, t, lo, hi]() {
      for (int i = lo; i < hi; ++i) {
        try {
          body(i);
        } catch (...) {
          excs[t] = std::current_exception();
          exc_index[t] = i;
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  int best = -1;
  for (int t = 0; t < threads; ++t)
    if (excs[t] && (best < 0 || exc_index[t] < exc_index[best])) best = t;
  if (best >= 0) std::rethrow_exception(excs[best]);
}

namespace {

// Symmetric PSD square root factor L with L L^T = cov (tolerant of
// semi-definite inputs; rejects indefinite or non-symmetric ones).
MatrixXd psd_factor(const MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("joint covariance must be square");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("joint covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw std::invalid_argument("joint covariance must be positive semi-definite");
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

void guard_state(const SysState& st, double time) {
  auto check = [&](const MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (!(std::abs(m(i, j)) <= 1e6)) throw BlowUpError(time, m(i, j));
  };
  check(st.cloud);
  if (st.tagged.size()) check(st.tagged);
  check(st.theta);
}

}  // namespace

void simulate_stream(const Dynamics& dyn, const SimInit& init, const SimConfig& cfg,
                     const StepCallback& on_step, PathBundle* out) {
  cfg.validate();
  const int d = dyn.dim_x, n = dyn.dim_theta;
  if (init.mu.dim() != d) throw std::invalid_argument("simulate: cloud dimension mismatch");
  if (init.mu.size() != cfg.n_particles)
    throw std::invalid_argument("simulate: cloud size must equal cfg.n_particles");
  if (init.theta.size() != n) throw std::invalid_argument("simulate: theta dimension mismatch");
  if (init.tagged.size() && init.tagged.rows() != d)
    throw std::invalid_argument("simulate: tagged dimension mismatch");
  if (dyn.sigma_theta.size() != n)
    throw std::invalid_argument("simulate: sigma_theta must have dim_theta components");
  const int N = cfg.n_particles;
  const int M = static_cast<int>(init.tagged.cols());
  const int K = cfg.n_steps();
  const double dt = cfg.dt;

  const bool correlated = dyn.joint_cov.has_value();
  MatrixXd L;
  if (correlated) {
    if (dyn.joint_cov->rows() != n + d)
      throw std::invalid_argument("simulate: joint covariance must be (n + d) x (n + d)");
    L = psd_factor(*dyn.joint_cov);
  }
  const bool common_shift = dyn.beta_cn > 0.0;
  const bool draw_common = common_shift || correlated;

  const double sqx = std::sqrt(2.0 * dyn.sigma_x * dt);
  VectorXd sqth(n);
  for (int j = 0; j < n; ++j) sqth(j) = std::sqrt(2.0 * dyn.sigma_theta(j) * dt);
  const double sqc = std::sqrt(2.0 * dyn.beta_cn * dt);

  if (out) {
    out->dt = dt;
    out->domain = dyn.domain;
    out->period = dyn.period;
    out->seed = cfg.seed;
    out->step_offset = cfg.step_offset;
    out->paths.assign(cfg.n_paths, PathTrajectory{});
  }
  const NoiseBank bank{cfg.seed};

  parallel_for(cfg.n_paths, cfg.threads, [&](int p) {
    SysState st{init.mu.pts, init.tagged, init.theta};
    PathTrajectory* traj = out ? &out->paths[p] : nullptr;
    auto record = [&]() {
      if (!traj) return;
      traj->theta.push_back(st.theta);
      traj->cloud.push_back(st.cloud);
      traj->tagged.push_back(st.tagged);
    };
    record();
    if (on_step) on_step(p, 0, 0.0, st);
    for (int k = 0; k < K; ++k) {
      const double s = k * dt;
      const std::uint64_t gstep = static_cast<std::uint64_t>(cfg.step_offset + k);
      EmpiricalMeasure mu(st.cloud, dyn.domain, dyn.period);
      MatrixXd dc = dyn.x_drift ? dyn.x_drift(s, st.cloud, st.theta, mu) : MatrixXd::Zero(d, N);
      const auto& tag_drift = dyn.tagged_drift ? dyn.tagged_drift : dyn.x_drift;
      MatrixXd dtg = M > 0 ? (tag_drift ? tag_drift(s, st.tagged, st.theta, mu)
                                        : MatrixXd::Zero(d, M))
                           : MatrixXd();
      VectorXd dth = dyn.theta_drift ? dyn.theta_drift(s, st.theta, mu) : VectorXd::Zero(n);

      VectorXd zth(n), zc = VectorXd::Zero(d);
      for (int j = 0; j < n; ++j) zth(j) = bank.gaussian(p, j, gstep, NoiseRole::theta);
      if (draw_common)
        for (int c = 0; c < d; ++c) zc(c) = bank.gaussian(p, c, gstep, NoiseRole::common);
      if (correlated) {
        VectorXd z(n + d);
        z << zth, zc;
        VectorXd w = L * z;
        zth = w.head(n);
        zc = w.tail(d);
      }
      VectorXd thinc = sqth.cwiseProduct(zth);
      VectorXd cinc = common_shift ? VectorXd(sqc * zc) : VectorXd::Zero(d);

      st.cloud.noalias() += dt * dc;
      if (sqx > 0.0) {
        // Lanes are particle*d + component: contiguous in column-major order.
        MatrixXd zi(d, N);
        bank.gaussian_fill(p, 0, gstep, NoiseRole::idio, zi.data(),
                           static_cast<std::uint64_t>(N) * d);
        st.cloud.noalias() += sqx * zi;
      }
      if (common_shift) st.cloud.colwise() += cinc;

      MatrixXd tginc = MatrixXd::Zero(d, M);
      if (M > 0) {
        st.tagged.noalias() += dt * dtg;
        if (sqx > 0.0) {
          bank.gaussian_fill(p, static_cast<std::uint64_t>(N) * d, gstep, NoiseRole::idio,
                             tginc.data(), static_cast<std::uint64_t>(M) * d);
          tginc *= sqx;
        }
        st.tagged += tginc;
        if (common_shift) st.tagged.colwise() += cinc;
      }
      st.theta += dt * dth + thinc;

      if (dyn.domain == Domain::torus) {
        wrap_in_place(st.cloud, dyn.period);
        if (M > 0) wrap_in_place(st.tagged, dyn.period);
      }
      guard_state(st, s + dt);

      if (traj) {
        traj->theta_incr.push_back(thinc);
        traj->tagged_incr.push_back(tginc);
        traj->common_incr.push_back(common_shift ? cinc : VectorXd());
      }
      record();
      if (on_step) on_step(p, k + 1, s + dt, st);
    }
  });
}

Dynamics dynamics_from(const ModelSpec& model, const FieldApprox& field, double target_time) {
  Dynamics dyn;
  dyn.dim_x = model.dim_x;
  dyn.dim_theta = model.dim_theta;
  dyn.domain = model.domain;
  dyn.period = model.period;
  dyn.sigma_x = model.sigma_x;
  dyn.sigma_theta = model.sigma_theta;
  dyn.beta_cn = model.beta_cn;
  dyn.x_drift = [model, field, target_time](double s, const MatrixXd& X, const VectorXd& theta,
                                            const EmpiricalMeasure& mu) {
    MatrixXd W = field.eval_batch(target_time - s, X, theta, mu);
    return MatrixXd(-model.F(X, theta, mu, W));
  };
  dyn.theta_drift = [model, field, target_time](double s, const VectorXd& theta,
                                                const EmpiricalMeasure& mu) {
    MatrixXd W = field.eval_batch(target_time - s, mu.pts, theta, mu);
    return VectorXd(-model.b(theta, mu, W));
  };
  return dyn;
}

PathBundle simulate_forward(const ModelSpec& model, const FieldApprox& field, const SimInit& init,
                            const SimConfig& cfg) {
  Dynamics dyn = dynamics_from(model, field, cfg.horizon);
  dyn.beta_cn = 0.0;
  PathBundle out;
  simulate_stream(dyn, init, cfg, nullptr, &out);
  return out;
}

DoubledBundle simulate_doubled(const ModelSpec& model, const FieldApprox& field,
                               const Coupling& gamma0, const VectorXd& theta1,
                               const VectorXd& theta2, const SimConfig& cfg,
                               const MatrixXd& tagged1, const MatrixXd& tagged2) {
  if (gamma0.size() != cfg.n_particles)
    throw std::invalid_argument("simulate_doubled: coupling pairs count must equal n_particles");
  Dynamics dyn = dynamics_from(model, field, cfg.horizon);
  dyn.beta_cn = 0.0;
  DoubledBundle out;
  simulate_stream(dyn, SimInit{tagged1, theta1, gamma0.first()}, cfg, nullptr, &out.first);
  simulate_stream(dyn, SimInit{tagged2, theta2, gamma0.second()}, cfg, nullptr, &out.second);
  return out;
}

Coupling DoubledBundle::evolved_coupling(int path, int step) const {
  Coupling g;
  g.x = first.paths.at(path).cloud.at(step);
  g.y = second.paths.at(path).cloud.at(step);
  g.domain = first.domain;
  g.period = first.period;
  return g;
}

PathBundle simulate_common_noise(const ModelSpec& model, const FieldApprox& field,
                                 const SimInit& init, const SimConfig& cfg,
                                 const CommonNoiseOptions& opts) {
  Dynamics dyn = dynamics_from(model, field, cfg.horizon);
  dyn.joint_cov = opts.joint_cov;
  PathBundle out;
  simulate_stream(dyn, init, cfg, nullptr, &out);
  return out;
}

}  // namespace mfg
