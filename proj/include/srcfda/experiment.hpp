#pragma once

#include "srcfda/baselines.hpp"
#include "srcfda/emfit.hpp"
#include "srcfda/simgen.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace srcfda {

/// Method names accepted by the harness and the command line.
inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m{"src", "src-f", "kmeans-f", "kmeans-s"};
  return m;
}

struct ExperimentConfig {
  EmConfig em;
  KmeansFConfig kmeans_f;
  KmeansSConfig kmeans_s;
  std::vector<std::string> methods = all_methods();
  bool compute_rase = false;
};

struct MethodOutcome {
  std::vector<int> assignments;
  double ri = 0.0;
  double ari = 0.0;
  double rase = std::numeric_limits<double>::quiet_NaN();  // matched recovery error, when requested
  double seconds = 0.0;
  bool ok = false;
  std::string error;
  std::vector<double> loglik_trace;  // EM methods only
  double loglik = std::numeric_limits<double>::quiet_NaN();  // log-likelihood of the returned fit
  int ascent_violations = 0;
};

struct ReplicationOutcome {
  std::uint64_t data_seed = 0;
  std::map<std::string, MethodOutcome> methods;
};

/// Registered cluster patterns of each group compared with the true means: the
/// cluster-to-group matching minimizing the mean rase is used.
double matched_rase(const std::vector<Eigen::MatrixXd>& patterns, const GroundTruth& truth);

/// Fits every requested method to one simulated data set; all methods share `fit_seed`.
ReplicationOutcome run_replication(const Simulation& sim, const ExperimentConfig& config,
                                   std::uint64_t fit_seed);

/// Replication r uses data seed `seed + r` and fit seed `seed + r` as well. Replications
/// run on up to `threads` workers; results are in replication order.
std::vector<ReplicationOutcome> run_scenario(const ScenarioConfig& scenario, int reps,
                                             std::uint64_t seed, const ExperimentConfig& config,
                                             int threads = 1);

/// Worker count from SRC_FDA_THREADS (default 1).
int thread_count_from_env();

struct MethodSummary {
  double mean_ri = 0.0, mean_ari = 0.0, mean_rase = 0.0;
  int ok = 0, failed = 0;
};
std::map<std::string, MethodSummary> summarize(const std::vector<ReplicationOutcome>& reps);

}  // namespace srcfda
