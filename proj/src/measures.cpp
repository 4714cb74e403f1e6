#include "mfg/measures.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace mfg {

namespace {

double pair_dist(const MatrixXd& a, int i, const MatrixXd& b, int j, Domain dom, double L) {
  double s = 0;
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    double d = a(k, i) - b(k, j);
    if (dom == Domain::torus) d = wrap_diff(d, L);
    s += d * d;
  }
  return std::sqrt(s);
}

void check_compatible(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) throw std::invalid_argument("wasserstein: dimension mismatch");
  if (mu.domain != nu.domain) throw std::invalid_argument("wasserstein: domain mismatch");
  if (mu.domain == Domain::torus && mu.period != nu.period)
    throw std::invalid_argument("wasserstein: period mismatch");
}

// Replicate columns so both clouds have lcm(N, M) particles.
MatrixXd replicate_to(const MatrixXd& pts, int target) {
  int n = static_cast<int>(pts.cols());
  int rep = target / n;
  MatrixXd out(pts.rows(), target);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < rep; ++r) out.col(i * rep + r) = pts.col(i);
  return out;
}

struct Matched {
  MatrixXd x, y;  // equal column counts, x in mu order
};

// Common assignment backend: returns matched pairs minimizing sum |x - y|^q.
Matched match(double q, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int cap) {
  check_compatible(mu, nu);
  if (q < 1) throw std::invalid_argument("wasserstein: order q must be >= 1");
  MatrixXd a = mu.pts, b = nu.pts;
  if (mu.size() != nu.size()) {
    long l = std::lcm<long>(mu.size(), nu.size());
    if (l > cap)
      throw std::invalid_argument("wasserstein: particle counts need a common multiple <= cap");
    a = replicate_to(a, static_cast<int>(l));
    b = replicate_to(b, static_cast<int>(l));
  }
  const int n = static_cast<int>(a.cols());
  if (mu.dim() == 1 && mu.domain == Domain::euclidean) {
    // Sort-matching is exact for all q >= 1 in one euclidean dimension.
    std::vector<int> pa(n), pb(n);
    std::iota(pa.begin(), pa.end(), 0);
    std::iota(pb.begin(), pb.end(), 0);
    std::stable_sort(pa.begin(), pa.end(), [&](int i, int j) { return a(0, i) < a(0, j); });
    std::stable_sort(pb.begin(), pb.end(), [&](int i, int j) { return b(0, i) < b(0, j); });
    Matched m{MatrixXd(1, n), MatrixXd(1, n)};
    for (int r = 0; r < n; ++r) {
      m.x(0, pa[r]) = a(0, pa[r]);
      m.y(0, pa[r]) = b(0, pb[r]);
    }
    return m;
  }
  if (n > cap) throw std::invalid_argument("wasserstein: particle count exceeds assignment cap");
  MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = std::pow(pair_dist(a, i, b, j, mu.domain, mu.period), q);
  std::vector<int> sigma = min_cost_assignment(cost);
  Matched m{MatrixXd(a.rows(), n), MatrixXd(a.rows(), n)};
  for (int i = 0; i < n; ++i) {
    m.x.col(i) = a.col(i);
    m.y.col(i) = b.col(sigma[i]);
  }
  return m;
}

}  // namespace

double Coupling::cost(double q) const {
  MatrixXd d = displacement();
  double s = 0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) s += std::pow(d.col(j).norm(), q);
  return std::pow(s / static_cast<double>(d.cols()), 1.0 / q);
}

std::vector<int> min_cost_assignment(const MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("assignment: square matrix required");
  const int n = static_cast<int>(cost.rows());
  const double INF = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), INF);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = INF;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {  // strict: ties resolved to the lowest index
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double wasserstein_distance(double q, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            int cap) {
  Matched m = match(q, mu, nu, cap);
  double s = 0;
  for (Eigen::Index j = 0; j < m.x.cols(); ++j)
    s += std::pow(pair_dist(m.x, static_cast<int>(j), m.y, static_cast<int>(j), mu.domain,
                            mu.period),
                  q);
  return std::pow(s / static_cast<double>(m.x.cols()), 1.0 / q);
}

Coupling optimal_coupling(double q, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          int cap) {
  Matched m = match(q, mu, nu, cap);
  Coupling g;
  g.x = m.x;
  g.y = m.y;
  g.domain = mu.domain;
  g.period = mu.period;
  return g;
}

EmpiricalMeasure pushforward_shift(const EmpiricalMeasure& mu, const VectorXd& theta) {
  if (theta.size() != mu.dim())
    throw std::invalid_argument("pushforward_shift: dimension mismatch");
  MatrixXd pts = mu.pts.colwise() + theta;
  return EmpiricalMeasure(pts, mu.domain, mu.period);
}

double moment(const EmpiricalMeasure& mu, double q) {
  if (q < 1) throw std::invalid_argument("moment: order q must be >= 1");
  double s = 0;
  for (int j = 0; j < mu.size(); ++j) s += std::pow(mu.pts.col(j).norm(), q);
  return std::pow(s / mu.size(), 1.0 / q);
}

std::string measure_to_csv(const EmpiricalMeasure& mu) {
  std::string out;
  char buf[64];
  for (int j = 0; j < mu.size(); ++j) {
    for (int i = 0; i < mu.dim(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", mu.pts(i, j));
      out += buf;
      out += (i + 1 < mu.dim()) ? ',' : '\n';
    }
  }
  return out;
}

EmpiricalMeasure measure_from_csv(const std::string& csv, Domain domain, double period) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("measure_from_csv: empty input");
  MatrixXd pts(rows[0].size(), rows.size());
  for (size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != rows[0].size())
      throw std::invalid_argument("measure_from_csv: ragged rows");
    for (size_t i = 0; i < rows[j].size(); ++i) pts(i, j) = rows[j][i];
  }
  return EmpiricalMeasure(pts, domain, period);
}

std::string measure_to_json(const EmpiricalMeasure& mu) {
  nlohmann::json arr = nlohmann::json::array();
  for (int j = 0; j < mu.size(); ++j) {
    nlohmann::json pt = nlohmann::json::array();
    for (int i = 0; i < mu.dim(); ++i) pt.push_back(mu.pts(i, j));
    arr.push_back(pt);
  }
  return arr.dump();
}

EmpiricalMeasure measure_from_json(const std::string& text, Domain domain, double period) {
  nlohmann::json arr = nlohmann::json::parse(text);
  if (!arr.is_array() || arr.empty())
    throw std::invalid_argument("measure_from_json: expected nonempty array");
  const size_t d = arr[0].size();
  MatrixXd pts(d, arr.size());
  for (size_t j = 0; j < arr.size(); ++j) {
    if (arr[j].size() != d) throw std::invalid_argument("measure_from_json: ragged arrays");
    for (size_t i = 0; i < d; ++i) pts(i, j) = arr[j][i].get<double>();
  }
  return EmpiricalMeasure(pts, domain, period);
}

}  // namespace mfg
