#pragma once

/*
 * Inference for the aggregated ATT, clustered at the region level.
 *
 * Three procedures with very different small-sample behavior:
 *
 *  - asymptotic: plug-in variance of the aggregated influence function with
 *    a normal reference. Cheap, but blind to designs where a cohort is a
 *    single cluster (that cluster's influence sum is identically zero).
 *  - multiplier bootstrap: cluster-constant Mammen weights on the influence
 *    function, percentile confidence interval.
 *  - cluster jackknife: delete one cluster, re-estimate, CV3 variance with a
 *    t(H-1) reference. Conservative where the first two over-reject.
 *
 * A zero variance is reported, not thrown: se = 0, statistic = 0,
 * p_value = 0 and the degenerate flag set. The statistic/p-value relation is
 * deliberately bypassed in that case.
 */

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "didkit/aggregate.hpp"
#include "didkit/estimator.hpp"
#include "didkit/panel.hpp"
#include "didkit/rng.hpp"

namespace didkit {

enum class Method { asymptotic, bootstrap, jackknife };

const char* to_string(Method method);

struct InferenceResult {
  Method method = Method::asymptotic;
  double estimate = 0.0;
  double se = 0.0;
  double statistic = 0.0;
  double p_value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha = 0.05;
  // "standard_normal" or "student_t"; df is H-1 for the jackknife, 0 else.
  std::string reference = "standard_normal";
  long df = 0;
  bool degenerate = false;
};

// Plug-in variance: aggregate the influence matrix with the cell weights,
// sum within clusters, var = (1/n^2) sum_h S_h^2. cluster_of maps each unit
// (psi row) to a cluster id in [0, H).
InferenceResult asymptotic_inference(const AttResult& att, const InfluenceMatrix& psi,
                                     std::span<const int> cluster_of, double alpha);

enum class WeightLaw { mammen, rademacher };

const char* to_string(WeightLaw law);

// Mammen two-point weight (mean 0, variance 1, third moment 1) from one
// uniform draw; the Rademacher variant is exposed for sensitivity checks.
double multiplier_weight(double u, WeightLaw law);

struct BootstrapDetail {
  long B = 0;
  std::uint64_t seed = 0;
  WeightLaw law = WeightLaw::mammen;
  std::vector<double> draws;  // bootstrap ATT draws, in draw order
};

struct BootstrapResult {
  InferenceResult inference;
  BootstrapDetail detail;
};

// Multiplier bootstrap: draw b is estimate + (1/n) sum_h V_{b,h} S_h with
// cluster-constant weights. se is the sample sd of the draws; the CI is the
// percentile interval (type-7 quantiles); the p-value uses estimate/se
// against a normal reference. B must be at least 99.
BootstrapResult multiplier_bootstrap(const AttResult& att, const InfluenceMatrix& psi,
                                     std::span<const int> cluster_of, long B,
                                     std::uint64_t seed, double alpha,
                                     WeightLaw law = WeightLaw::mammen, int threads = 1);

struct LooCluster {
  std::string region;
  double estimate = 0.0;     // ATT with this cluster deleted
  long size = 0;             // observations (rows) in the cluster
  bool treated = false;      // cluster adopts at some point
  std::vector<std::pair<long, long>> dropped_cells;  // raw (g, t) labels
  bool flagged = false;      // sign flip or move beyond k * se
};

struct JackknifeDetail {
  int H = 0;
  double full_estimate = 0.0;
  double cv3_se = 0.0;
  double k_threshold = 0.0;
  std::vector<LooCluster> clusters;  // region index order
};

struct JackknifeResult {
  InferenceResult inference;
  JackknifeDetail detail;
};

// CV3 variance from leave-one-out estimates, centered at the full-sample
// estimate: ((H-1)/H) * sum_h (att_h - att_full)^2.
double cv3_from_loo(std::span<const double> loo, double full_estimate);

// Delete-one-cluster jackknife with per-replicate re-estimation. Replicate
// weights follow the aggregation scheme over the cells that survive; strict
// mode refuses any replicate that loses cells. A replicate with an empty
// feasible set aborts in both modes, naming the cluster.
JackknifeResult cluster_jackknife(const Panel& panel, const CohortMap& cohorts,
                                  const EstimationSpec& spec, double alpha,
                                  bool strict = false, int threads = 1,
                                  double k_threshold = 3.0);

// The leave-one-out diagnostic on its own: per-cluster estimates, sizes,
// treated tags and dropped cells, with influence flags (sign flip or a move
// beyond k * cv3_se). Same abort behavior as cluster_jackknife.
JackknifeDetail loo_profile(const Panel& panel, const CohortMap& cohorts,
                            const EstimationSpec& spec, double k_threshold = 3.0,
                            int threads = 1);

}  // namespace didkit
