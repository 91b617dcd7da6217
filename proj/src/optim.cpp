#include "srcfda/optim.hpp"

#include "srcfda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace srcfda {

OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper, const NelderMeadOptions& opt) {
  const auto n = x0.size();
  if (lower.size() != n || upper.size() != n) throw ConfigError("bound vectors have wrong size");
  auto project = [&](Eigen::VectorXd x) { return x.cwiseMax(lower).cwiseMin(upper); };
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(project(x0));
  vals.push_back(eval(pts[0]));
  OptimResult res;
  res.f_start = vals[0];
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd p = pts[0];
    double step = opt.initial_step;
    if (p[j] + step > upper[j]) step = -step;
    p[j] += step;
    p = project(p);
    pts.push_back(p);
    vals.push_back(eval(p));
  }

  std::vector<std::size_t> idx(static_cast<std::size_t>(n + 1));
  while (evals < opt.max_evals && n > 0) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const auto best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    const double spread = std::abs(vals[worst] - vals[best]);
    double diam = 0.0;
    for (const auto& p : pts) diam = std::max(diam, (p - pts[best]).lpNorm<Eigen::Infinity>());
    if ((spread <= opt.ftol * (std::abs(vals[best]) + 1e-300) && diam <= opt.xtol * 1e3) ||
        diam <= opt.xtol)
      break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (auto k : idx)
      if (k != worst) centroid += pts[k];
    centroid /= static_cast<double>(n);

    Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]));
    const double fr = eval(xr);
    if (fr < vals[best]) {
      Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    Eigen::VectorXd xc = outside ? project(centroid + 0.5 * (xr - centroid))
                                 : project(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (auto k : idx) {
      if (k == best) continue;
      pts[k] = project(pts[best] + 0.5 * (pts[k] - pts[best]));
      vals[k] = eval(pts[k]);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[best];
  res.f = vals[best];
  res.evals = evals;
  res.improved = res.f < res.f_start;
  return res;
}

}  // namespace srcfda
