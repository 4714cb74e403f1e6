#include "mfg/field.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace mfg {

namespace {

void enumerate_exps(int n_vars, int degree, std::vector<int>& cur, int var, int remaining,
                    std::vector<std::vector<int>>& out) {
  if (var == n_vars) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    cur[var] = e;
    enumerate_exps(n_vars, degree, cur, var + 1, remaining - e, out);
  }
  cur[var] = 0;
}

}  // namespace

FeatureBasis FeatureBasis::make(int dim_x, int dim_theta, int degree) {
  FeatureBasis b;
  b.dim_x = dim_x;
  b.dim_theta = dim_theta;
  b.degree = degree;
  std::vector<std::vector<int>> all;
  std::vector<int> cur(b.n_vars(), 0);
  enumerate_exps(b.n_vars(), degree, cur, 0, degree, all);
  // graded lexicographic: sort by total degree, then lexicographic
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& bb) {
    int sa = 0, sb = 0;
    for (int v : a) sa += v;
    for (int v : bb) sb += v;
    if (sa != sb) return sa < sb;
    return a < bb;
  });
  b.exps = std::move(all);
  return b;
}

MatrixXd FeatureBasis::features(const MatrixXd& X, const VectorXd& theta, const VectorXd& m1,
                                const VectorXd& m2) const {
  const int d = dim_x, n = dim_theta;
  const Eigen::Index K = X.cols();
  if (X.rows() != d || theta.size() != n || m1.size() != d || m2.size() != d)
    throw std::invalid_argument("FeatureBasis::features: dimension mismatch");
  // Power tables for the x-variables (vary per point) and scalars.
  std::vector<std::vector<Eigen::ArrayXd>> powx(d);
  for (int i = 0; i < d; ++i) {
    powx[i].resize(degree + 1);
    powx[i][0] = Eigen::ArrayXd::Ones(K);
    for (int e = 1; e <= degree; ++e)
      powx[i][e] = powx[i][e - 1] * X.row(i).transpose().array();
  }
  MatrixXd Phi(K, size());
  for (int f = 0; f < size(); ++f) {
    const auto& ex = exps[f];
    double cf = 1.0;
    for (int v = d; v < n_vars(); ++v) {
      if (ex[v] == 0) continue;
      double val = (v < d + n) ? theta(v - d) : (v < 2 * d + n ? m1(v - d - n) : m2(v - 2 * d - n));
      for (int e = 0; e < ex[v]; ++e) cf *= val;
    }
    Eigen::ArrayXd col = Eigen::ArrayXd::Constant(K, cf);
    for (int i = 0; i < d; ++i)
      if (ex[i] > 0) col *= powx[i][ex[i]];
    Phi.col(f) = col;
  }
  return Phi;
}

MatrixXd FieldApprox::eval_batch(double t, const MatrixXd& X, const VectorXd& theta,
                                 const EmpiricalMeasure& mu) const {
  if (coef.empty()) throw std::logic_error("FieldApprox: empty field");
  MatrixXd Phi = basis.features(X, theta, mu.mean(), mu.second_moment());
  if (coef.size() == 1) return (Phi * coef[0]).transpose();
  const double tol = 1e-9 * std::max(1.0, t_max());
  if (t < -tol || t > t_max() + tol)
    throw std::out_of_range("FieldApprox: evaluation outside time support");
  double s = std::clamp(t / dt, 0.0, static_cast<double>(levels() - 1));
  int k0 = std::min(static_cast<int>(s), levels() - 2);
  double w = s - k0;
  MatrixXd C = (1.0 - w) * coef[k0] + w * coef[k0 + 1];
  return (Phi * C).transpose();
}

VectorXd FieldApprox::eval(double t, const VectorXd& x, const VectorXd& theta,
                           const EmpiricalMeasure& mu) const {
  return eval_batch(t, x, theta, mu).col(0);
}

FieldApprox FieldApprox::constant(const FeatureBasis& basis, const VectorXd& value, Domain domain,
                                  double period) {
  FieldApprox f;
  f.basis = basis;
  f.domain = domain;
  f.period = period;
  MatrixXd C = MatrixXd::Zero(basis.size(), value.size());
  C.row(0) = value.transpose();  // first feature is the constant monomial
  f.coef = {C};
  f.fit_residual = {0.0};
  return f;
}

MatrixXd ridge_fit(const MatrixXd& Phi, const MatrixXd& targets, double lambda, double* residual) {
  if (Phi.rows() != targets.cols())
    throw std::invalid_argument("ridge_fit: sample count mismatch");
  const Eigen::Index K = Phi.rows(), F = Phi.cols();
  MatrixXd Y = targets.transpose();  // K x d
  // Standardize columns so the penalty is scale-free and constant targets are
  // absorbed exactly by the intercept; columns constant over the sample drop
  // out of the fit.
  RowVectorXd mean = Phi.colwise().mean();
  MatrixXd Phic = Phi.rowwise() - mean;
  RowVectorXd scale = (Phic.array().square().colwise().mean()).sqrt();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < F; ++j)
    if (scale(j) > 1e-12 * std::max(1.0, std::abs(mean(j)))) active.push_back(j);
  RowVectorXd ymean = Y.colwise().mean();
  MatrixXd Yc = Y.rowwise() - ymean;
  MatrixXd C = MatrixXd::Zero(F, Y.cols());
  MatrixXd R = -Yc;
  if (!active.empty()) {
    MatrixXd Z(K, static_cast<Eigen::Index>(active.size()));
    for (size_t a = 0; a < active.size(); ++a) Z.col(a) = Phic.col(active[a]) / scale(active[a]);
    MatrixXd A = Z.transpose() * Z;
    A.diagonal().array() += lambda * static_cast<double>(K);
    MatrixXd Cz = A.ldlt().solve(Z.transpose() * Yc);
    for (size_t a = 0; a < active.size(); ++a) C.row(active[a]) = Cz.row(a) / scale(active[a]);
    R = Z * Cz - Yc;
  }
  // intercept: first column of an all-degree-<=k basis is the constant feature
  RowVectorXd intercept = ymean - mean * C;
  if (std::abs(Phi.col(0).maxCoeff() - 1.0) > 1e-12 ||
      std::abs(Phi.col(0).minCoeff() - 1.0) > 1e-12)
    throw std::invalid_argument("ridge_fit: first feature column must be the constant 1");
  C.row(0) += intercept;
  if (residual) *residual = std::sqrt(R.array().square().mean());
  return C;
}

std::string FieldApprox::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["dim_x"] = basis.dim_x;
  j["dim_theta"] = basis.dim_theta;
  j["degree"] = basis.degree;
  j["domain"] = domain == Domain::torus ? "torus" : "euclidean";
  j["period"] = period;
  j["dt"] = dt;
  j["fit_residual"] = fit_residual;
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& C : coef) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < C.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < C.cols(); ++c) row.push_back(C(r, c));
      rows.push_back(row);
    }
    levels.push_back(rows);
  }
  j["coefficients"] = levels;
  return j.dump(2);
}

FieldApprox FieldApprox::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("FieldApprox: unsupported schema version");
  FieldApprox f;
  f.basis = FeatureBasis::make(j.at("dim_x").get<int>(), j.at("dim_theta").get<int>(),
                               j.at("degree").get<int>());
  f.domain = j.at("domain").get<std::string>() == "torus" ? Domain::torus : Domain::euclidean;
  f.period = j.at("period").get<double>();
  f.dt = j.at("dt").get<double>();
  f.fit_residual = j.at("fit_residual").get<std::vector<double>>();
  for (const auto& rows : j.at("coefficients")) {
    MatrixXd C(rows.size(), rows[0].size());
    for (size_t r = 0; r < rows.size(); ++r)
      for (size_t c = 0; c < rows[r].size(); ++c) C(r, c) = rows[r][c].get<double>();
    f.coef.push_back(std::move(C));
  }
  return f;
}

}  // namespace mfg
