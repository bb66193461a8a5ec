#include "didkit/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <optional>

#include "didkit/detail/parallel.hpp"
#include "didkit/errors.hpp"

namespace didkit {

namespace {

void check_alignment(const AttResult& att, const InfluenceMatrix& psi,
                     std::span<const int> cluster_of) {
  if (psi.cols != static_cast<long>(att.cells.size())) {
    throw ValidationError("inference: influence matrix has " + std::to_string(psi.cols) +
                          " columns but the aggregate has " +
                          std::to_string(att.cells.size()) + " cells");
  }
  if (psi.rows != static_cast<long>(cluster_of.size())) {
    throw ValidationError("inference: cluster map covers " +
                          std::to_string(cluster_of.size()) + " units, expected " +
                          std::to_string(psi.rows));
  }
}

// Aggregated influence per unit, then summed within clusters. Returns the
// cluster sums; H is one past the largest cluster id.
std::vector<double> cluster_sums(const AttResult& att, const InfluenceMatrix& psi,
                                 std::span<const int> cluster_of) {
  int H = 0;
  for (int h : cluster_of) {
    if (h < 0) throw ValidationError("inference: negative cluster id");
    H = std::max(H, h + 1);
  }
  std::vector<double> sums(H, 0.0);
  for (long i = 0; i < psi.rows; ++i) {
    double agg = 0.0;
    for (long j = 0; j < psi.cols; ++j) agg += att.weights[j] * psi.at(i, j);
    sums[cluster_of[i]] += agg;
  }
  return sums;
}

void validate_alpha(double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw ValidationError("inference: alpha must be in (0, 1]");
  }
}

// Fills statistic, p-value and CI from se and a reference distribution.
// df <= 0 selects the normal.
void finish_result(InferenceResult* res, long df) {
  if (res->se <= 0.0) {
    res->se = 0.0;
    res->statistic = 0.0;
    res->p_value = 0.0;
    res->ci_lower = res->estimate;
    res->ci_upper = res->estimate;
    res->degenerate = true;
    return;
  }
  res->statistic = res->estimate / res->se;
  double crit;
  if (df > 0) {
    boost::math::students_t_distribution<double> dist(static_cast<double>(df));
    res->p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res->statistic)));
    crit = boost::math::quantile(dist, 1.0 - res->alpha / 2.0);
  } else {
    boost::math::normal_distribution<double> dist;
    res->p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res->statistic)));
    crit = boost::math::quantile(dist, 1.0 - res->alpha / 2.0);
  }
  res->ci_lower = res->estimate - crit * res->se;
  res->ci_upper = res->estimate + crit * res->se;
}

// Type-7 quantile (linear interpolation) of an ascending sample.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::asymptotic:
      return "asymptotic";
    case Method::bootstrap:
      return "bootstrap";
    case Method::jackknife:
      return "jackknife";
  }
  return "?";
}

const char* to_string(WeightLaw law) {
  return law == WeightLaw::mammen ? "mammen" : "rademacher";
}

InferenceResult asymptotic_inference(const AttResult& att, const InfluenceMatrix& psi,
                                     std::span<const int> cluster_of, double alpha) {
  validate_alpha(alpha);
  check_alignment(att, psi, cluster_of);
  const auto sums = cluster_sums(att, psi, cluster_of);

  double var = 0.0;
  for (double s : sums) var += s * s;
  const double n = static_cast<double>(psi.rows);
  var /= n * n;

  InferenceResult res;
  res.method = Method::asymptotic;
  res.estimate = att.value;
  res.alpha = alpha;
  res.se = std::sqrt(var);
  res.reference = "standard_normal";
  finish_result(&res, 0);
  return res;
}

double multiplier_weight(double u, WeightLaw law) {
  if (law == WeightLaw::rademacher) return u < 0.5 ? -1.0 : 1.0;
  // Mammen's two-point law: -(sqrt(5)-1)/2 with probability
  // (sqrt(5)+1)/(2 sqrt(5)), else (sqrt(5)+1)/2.
  static const double sqrt5 = std::sqrt(5.0);
  static const double p_neg = (sqrt5 + 1.0) / (2.0 * sqrt5);
  static const double v_neg = -(sqrt5 - 1.0) / 2.0;
  static const double v_pos = (sqrt5 + 1.0) / 2.0;
  return u < p_neg ? v_neg : v_pos;
}

BootstrapResult multiplier_bootstrap(const AttResult& att, const InfluenceMatrix& psi,
                                     std::span<const int> cluster_of, long B,
                                     std::uint64_t seed, double alpha, WeightLaw law,
                                     int threads) {
  validate_alpha(alpha);
  check_alignment(att, psi, cluster_of);
  if (B < 99) {
    throw ValidationError("bootstrap: B must be at least 99, got " + std::to_string(B));
  }
  const auto sums = cluster_sums(att, psi, cluster_of);
  const long H = static_cast<long>(sums.size());
  const double n = static_cast<double>(psi.rows);

  BootstrapResult out;
  out.detail.B = B;
  out.detail.seed = seed;
  out.detail.law = law;
  out.detail.draws.assign(B, 0.0);

  const CounterRng root = CounterRng::keyed({seed, 0xb007});
  detail::parallel_for(B, threads, [&](long b) {
    const CounterRng stream = root.derive(static_cast<std::uint64_t>(b));
    double acc = 0.0;
    for (long h = 0; h < H; ++h) {
      acc += multiplier_weight(stream.uniform_at(static_cast<std::uint64_t>(h)), law) * sums[h];
    }
    out.detail.draws[b] = att.value + acc / n;
  });

  double mean = 0.0;
  for (double d : out.detail.draws) mean += d;
  mean /= static_cast<double>(B);
  double ss = 0.0;
  for (double d : out.detail.draws) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(B - 1));

  InferenceResult& res = out.inference;
  res.method = Method::bootstrap;
  res.estimate = att.value;
  res.alpha = alpha;
  res.se = sd;
  res.reference = "standard_normal";
  finish_result(&res, 0);
  if (!res.degenerate) {
    // Percentile interval overrides the symmetric one.
    std::vector<double> sorted = out.detail.draws;
    std::sort(sorted.begin(), sorted.end());
    res.ci_lower = quantile_sorted(sorted, alpha / 2.0);
    res.ci_upper = quantile_sorted(sorted, 1.0 - alpha / 2.0);
  }
  return out;
}

double cv3_from_loo(std::span<const double> loo, double full_estimate) {
  const double H = static_cast<double>(loo.size());
  if (loo.size() < 2) {
    throw InfeasibleError("cv3: need at least two clusters");
  }
  double ss = 0.0;
  for (double v : loo) ss += (v - full_estimate) * (v - full_estimate);
  return (H - 1.0) / H * ss;
}

namespace {

struct Replicates {
  double full_estimate = 0.0;
  std::vector<LooCluster> clusters;
};

// Shared by cluster_jackknife and loo_profile: the full-sample fit plus one
// re-estimation per deleted cluster. Aborts (InfeasibleError) when any
// replicate has an empty feasible set; strict mode also aborts when a
// replicate loses cells.
Replicates jackknife_replicates(const Panel& panel, const CohortMap& cohorts,
                                const EstimationSpec& spec, bool strict, int threads) {
  const int H = panel.num_regions();
  if (H < 2) {
    throw InfeasibleError("jackknife: need at least two clusters, have " + std::to_string(H));
  }

  Replicates out;
  const Estimation full = estimate_att(panel, cohorts, spec);
  out.full_estimate = full.att.value;

  std::vector<std::pair<long, long>> full_cells;
  full_cells.reserve(full.plan.cells.size());
  for (const auto& c : full.plan.cells) full_cells.emplace_back(c.g, c.t);

  out.clusters.assign(H, LooCluster{});
  std::vector<std::string> failures(H);
  detail::parallel_for(H, threads, [&](long h) {
    const int r = static_cast<int>(h);
    LooCluster& row = out.clusters[h];
    row.region = panel.regions()[r];
    row.size = panel.region_obs_count(r);
    row.treated = cohorts.first_treat[r] != 0;

    const Panel sub = panel.without_region(r);
    std::map<std::string, long> gv;
    for (int q = 0; q < panel.num_regions(); ++q) {
      if (q != r) gv[panel.regions()[q]] = cohorts.first_treat_raw[q];
    }
    try {
      const CohortMap sub_cohorts = assign_cohorts(sub, gv);
      const Estimation est = estimate_att(sub, sub_cohorts, spec);
      row.estimate = est.att.value;
      // Any cell of the full plan missing from the replicate was dropped.
      size_t k = 0;
      for (const auto& c : est.plan.cells) {
        while (k < full_cells.size() && full_cells[k] < std::pair{c.g, c.t}) {
          row.dropped_cells.emplace_back(panel.period_label(static_cast<int>(full_cells[k].first)),
                                         panel.period_label(static_cast<int>(full_cells[k].second)));
          ++k;
        }
        if (k < full_cells.size() && full_cells[k] == std::pair{c.g, c.t}) ++k;
      }
      for (; k < full_cells.size(); ++k) {
        row.dropped_cells.emplace_back(panel.period_label(static_cast<int>(full_cells[k].first)),
                                       panel.period_label(static_cast<int>(full_cells[k].second)));
      }
    } catch (const InfeasibleError& e) {
      failures[h] = e.what();
    }
  });

  for (int h = 0; h < H; ++h) {
    if (!failures[h].empty()) {
      throw InfeasibleError(
          "jackknife: no ATT cell can be estimated when cluster '" +
          panel.regions()[h] + "' is dropped (" + failures[h] +
          "); the cluster jackknife is undefined for this design. Consider "
          "not_yet_treated controls, pooling clusters, or a different method.");
    }
  }
  if (strict) {
    for (const auto& row : out.clusters) {
      if (!row.dropped_cells.empty()) {
        std::string cells;
        for (const auto& [g, t] : row.dropped_cells) {
          cells += (cells.empty() ? "" : ", ") + ("(" + std::to_string(g) + "," +
                                                  std::to_string(t) + ")");
        }
        throw InfeasibleError("jackknife: strict mode, dropping cluster '" + row.region +
                              "' loses cells " + cells);
      }
    }
  }
  return out;
}

void apply_flags(JackknifeDetail* detail) {
  for (auto& row : detail->clusters) {
    const bool sign_flip = row.estimate * detail->full_estimate < 0.0;
    const bool big_move = detail->cv3_se > 0.0 &&
                          std::abs(row.estimate - detail->full_estimate) >
                              detail->k_threshold * detail->cv3_se;
    row.flagged = sign_flip || big_move;
  }
}

JackknifeDetail build_detail(Replicates reps, double k_threshold) {
  JackknifeDetail detail;
  detail.H = static_cast<int>(reps.clusters.size());
  detail.full_estimate = reps.full_estimate;
  detail.k_threshold = k_threshold;
  detail.clusters = std::move(reps.clusters);
  std::vector<double> loo;
  loo.reserve(detail.clusters.size());
  for (const auto& row : detail.clusters) loo.push_back(row.estimate);
  detail.cv3_se = std::sqrt(cv3_from_loo(loo, detail.full_estimate));
  apply_flags(&detail);
  return detail;
}

}  // namespace

JackknifeResult cluster_jackknife(const Panel& panel, const CohortMap& cohorts,
                                  const EstimationSpec& spec, double alpha, bool strict,
                                  int threads, double k_threshold) {
  validate_alpha(alpha);
  JackknifeResult out;
  out.detail = build_detail(jackknife_replicates(panel, cohorts, spec, strict, threads),
                            k_threshold);

  InferenceResult& res = out.inference;
  res.method = Method::jackknife;
  res.estimate = out.detail.full_estimate;
  res.alpha = alpha;
  res.se = out.detail.cv3_se;
  res.reference = "student_t";
  res.df = out.detail.H - 1;
  finish_result(&res, res.df);
  return out;
}

JackknifeDetail loo_profile(const Panel& panel, const CohortMap& cohorts,
                            const EstimationSpec& spec, double k_threshold, int threads) {
  return build_detail(jackknife_replicates(panel, cohorts, spec, /*strict=*/false, threads),
                      k_threshold);
}

}  // namespace didkit
