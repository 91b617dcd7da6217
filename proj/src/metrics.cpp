#include "srcfda/metrics.hpp"

#include "srcfda/errors.hpp"

#include <cmath>
#include <map>

namespace srcfda {

namespace {

void check_pair(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ConfigError("labelings differ in length");
  if (a.size() < 2) throw ConfigError("agreement indices need at least two items");
}

double choose2(double n) { return 0.5 * n * (n - 1.0); }

}  // namespace

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  check_pair(a, b);
  // Counting form: agreements = C(n,2) + 2 sum C(n_ij,2) - sum C(a_i,2) - sum C(b_j,2).
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t t = 0; t < a.size(); ++t) {
    nij[{a[t], b[t]}] += 1.0;
    ai[a[t]] += 1.0;
    bj[b[t]] += 1.0;
  }
  double sij = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : nij) sij += choose2(v);
  for (const auto& [k, v] : ai) sa += choose2(v);
  for (const auto& [k, v] : bj) sb += choose2(v);
  const double total = choose2(static_cast<double>(a.size()));
  return (total + 2.0 * sij - sa - sb) / total;
}

AriResult adjusted_rand_index_detailed(const std::vector<int>& a, const std::vector<int>& b) {
  check_pair(a, b);
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t t = 0; t < a.size(); ++t) {
    nij[{a[t], b[t]}] += 1.0;
    ai[a[t]] += 1.0;
    bj[b[t]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : nij) index += choose2(v);
  for (const auto& [k, v] : ai) sa += choose2(v);
  for (const auto& [k, v] : bj) sb += choose2(v);
  const double total = choose2(static_cast<double>(a.size()));
  const double expected = sa * sb / total;
  const double max_index = 0.5 * (sa + sb);
  AriResult r;
  if (std::abs(max_index - expected) < 1e-12) {
    r.degenerate = true;
    r.value = rand_index(a, b) == 1.0 ? 1.0 : 0.0;
    return r;
  }
  r.value = (index - expected) / (max_index - expected);
  return r;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  return adjusted_rand_index_detailed(a, b).value;
}

double rase(const Eigen::MatrixXd& mu_hat, const Eigen::MatrixXd& mu) {
  if (mu_hat.rows() != mu.rows() || mu_hat.cols() != mu.cols())
    throw ConfigError("rase needs curves on the same grid and dimension");
  if (mu.cols() == 0) throw ConfigError("rase needs at least one time point");
  return std::sqrt((mu_hat - mu).squaredNorm() / static_cast<double>(mu.cols()));
}

}  // namespace srcfda
