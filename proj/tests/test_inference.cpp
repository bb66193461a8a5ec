#include <doctest.h>

#include <cmath>
#include <numeric>

#include "didkit/aggregate.hpp"
#include "didkit/errors.hpp"
#include "didkit/inference.hpp"
#include "didkit/montecarlo.hpp"
#include "test_helpers.hpp"

using namespace didkit;
using didtest::topo1;
using didtest::topo2;

namespace {

struct Fitted {
  Panel panel;
  CohortMap cohorts;
  Estimation est;
  InfluenceMatrix psi;
  std::vector<int> by_region;  // cluster map: unit -> region
  std::vector<int> by_unit;    // cluster map: unit -> itself
};

Fitted fit(const didtest::Topology& topo, std::uint64_t seed,
           ControlMode mode = ControlMode::never_treated,
           Scheme scheme = Scheme::simple) {
  Fitted f;
  f.panel = didtest::random_panel(topo, seed);
  f.cohorts = assign_cohorts(f.panel, topo.gvar);
  f.est = estimate_att(f.panel, f.cohorts, {mode, scheme});
  f.psi = influence_contributions(f.panel, f.cohorts, f.est.plan.cells);
  f.by_region.resize(f.panel.num_units());
  f.by_unit.resize(f.panel.num_units());
  for (int u = 0; u < f.panel.num_units(); ++u) {
    f.by_region[u] = f.panel.region_of(u);
    f.by_unit[u] = u;
  }
  return f;
}

// A bigger seeded panel for bootstrap-vs-asymptotic agreement: 16 regions,
// two 4-region cohorts, 8 never-treated, 6 periods, several units each.
Fitted fit_sixteen(std::uint64_t seed) {
  didtest::Topology topo;
  topo.T = 6;
  for (int r = 0; r < 16; ++r) {
    char name[8];
    std::snprintf(name, sizeof(name), "r%02d", r + 1);
    topo.regions.push_back(name);
    topo.gvar[name] = r < 4 ? 3 : (r < 8 ? 5 : 0);
  }
  return fit(topo, seed);
}

}  // namespace

TEST_CASE("asymptotic variance matches the two-sample oracle on one cell") {
  // One feasible cell and per-unit clusters: the influence variance must be
  // exactly the two-sample formula.
  didtest::Topology topo = topo1();
  topo.T = 2;
  topo.gvar = {{"A", 2}, {"B", 0}, {"C", 0}};
  const Fitted f = fit(topo, 301);
  REQUIRE(f.est.plan.cells.size() == 1);

  const InferenceResult res = asymptotic_inference(f.est.att, f.psi, f.by_unit, 0.05);
  const double oracle =
      didtest::two_sample_variance_oracle(f.panel, f.cohorts, f.est.plan.cells[0]);
  CHECK(res.se * res.se == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(res.estimate == f.est.att.value);
}

TEST_CASE("p-values and CIs follow the normal reference") {
  const Fitted f = fit(topo2(), 302);
  const InferenceResult res = asymptotic_inference(f.est.att, f.psi, f.by_region, 0.05);
  REQUIRE(!res.degenerate);
  REQUIRE(res.se > 0.0);
  CHECK(res.statistic == doctest::Approx(res.estimate / res.se).epsilon(1e-14));
  // Independent p-value route through erfc.
  CHECK(res.p_value ==
        doctest::Approx(std::erfc(std::abs(res.statistic) / std::sqrt(2.0))).epsilon(1e-12));
  const double z975 = 1.959963984540054;
  CHECK(res.ci_upper - res.estimate == doctest::Approx(z975 * res.se).epsilon(1e-9));
  CHECK(res.estimate - res.ci_lower == doctest::Approx(z975 * res.se).epsilon(1e-9));
  CHECK(res.reference == "standard_normal");
}

TEST_CASE("doubling every cluster keeps the estimate and shrinks se by sqrt 2") {
  const Fitted f = fit(topo2(), 303);
  const InferenceResult base = asymptotic_inference(f.est.att, f.psi, f.by_unit, 0.05);

  // Duplicate every unit under a fresh id in the same region.
  std::vector<PanelRow> rows;
  for (int u = 0; u < f.panel.num_units(); ++u) {
    const std::string& region = f.panel.regions()[f.panel.region_of(u)];
    for (int t = 1; t <= f.panel.num_periods(); ++t) {
      rows.push_back({f.panel.units()[u], region, f.panel.period_label(t), f.panel.outcome(u, t)});
      rows.push_back({f.panel.units()[u] + "_copy", region, f.panel.period_label(t),
                      f.panel.outcome(u, t)});
    }
  }
  const Panel doubled = Panel::from_rows(rows);
  const CohortMap cm = assign_cohorts(doubled, topo2().gvar);
  const Estimation est = estimate_att(doubled, cm, {ControlMode::never_treated, Scheme::simple});
  const InfluenceMatrix psi = influence_contributions(doubled, cm, est.plan.cells);
  std::vector<int> by_unit(doubled.num_units());
  std::iota(by_unit.begin(), by_unit.end(), 0);
  const InferenceResult twice = asymptotic_inference(est.att, psi, by_unit, 0.05);

  CHECK(est.att.value == doctest::Approx(f.est.att.value).epsilon(1e-12));
  CHECK(twice.se == doctest::Approx(base.se / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("zero influence is reported as degenerate, never thrown") {
  // Outcomes linear in region and period make every long difference constant
  // within groups, so all influence contributions vanish.
  didtest::Topology topo = topo2();
  std::vector<PanelRow> rows;
  for (const auto& region : topo.regions) {
    for (int u = 0; u < 2; ++u) {
      for (int t = 1; t <= topo.T; ++t) {
        rows.push_back({region + std::to_string(u), region, t,
                        static_cast<double>(region[0] - 'A') + 2.0 * t});
      }
    }
  }
  const Panel p = Panel::from_rows(rows);
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  const Estimation est = estimate_att(p, cm, {ControlMode::never_treated, Scheme::simple});
  const InfluenceMatrix psi = influence_contributions(p, cm, est.plan.cells);
  std::vector<int> by_region(p.num_units());
  for (int u = 0; u < p.num_units(); ++u) by_region[u] = p.region_of(u);

  const InferenceResult res = asymptotic_inference(est.att, psi, by_region, 0.05);
  CHECK(res.degenerate);
  CHECK(res.se == 0.0);
  CHECK(res.statistic == 0.0);
  CHECK(res.p_value == 0.0);
  CHECK(res.ci_lower == res.estimate);
  CHECK(res.ci_upper == res.estimate);

  const BootstrapResult boot = multiplier_bootstrap(est.att, psi, by_region, 199, 1, 0.05);
  CHECK(boot.inference.degenerate);
  CHECK(boot.inference.p_value == 0.0);
}

TEST_CASE("alpha is validated across methods") {
  const Fitted f = fit(topo2(), 304);
  CHECK_THROWS_AS(asymptotic_inference(f.est.att, f.psi, f.by_region, 0.0), ValidationError);
  CHECK_THROWS_AS(asymptotic_inference(f.est.att, f.psi, f.by_region, 1.5), ValidationError);
  // alpha = 1 degenerates to a point interval at the estimate.
  const InferenceResult res = asymptotic_inference(f.est.att, f.psi, f.by_region, 1.0);
  CHECK(res.ci_lower == doctest::Approx(res.estimate).epsilon(1e-12));
}

TEST_CASE("misaligned influence matrices are rejected") {
  const Fitted f = fit(topo2(), 305);
  InfluenceMatrix bad = f.psi;
  bad.cols -= 1;
  CHECK_THROWS_AS(asymptotic_inference(f.est.att, bad, f.by_region, 0.05), ValidationError);
  std::vector<int> short_map(f.by_region.begin(), f.by_region.end() - 1);
  CHECK_THROWS_AS(asymptotic_inference(f.est.att, f.psi, short_map, 0.05), ValidationError);
}

TEST_CASE("multiplier weights have the advertised two-point laws") {
  const double sqrt5 = std::sqrt(5.0);
  const double v_neg = -(sqrt5 - 1.0) / 2.0;
  const double v_pos = (sqrt5 + 1.0) / 2.0;
  const double p_neg = (sqrt5 + 1.0) / (2.0 * sqrt5);
  CHECK(multiplier_weight(0.0, WeightLaw::mammen) == v_neg);
  CHECK(multiplier_weight(p_neg - 1e-12, WeightLaw::mammen) == v_neg);
  CHECK(multiplier_weight(p_neg + 1e-12, WeightLaw::mammen) == v_pos);
  CHECK(multiplier_weight(0.999999, WeightLaw::mammen) == v_pos);
  CHECK(multiplier_weight(0.2, WeightLaw::rademacher) == -1.0);
  CHECK(multiplier_weight(0.7, WeightLaw::rademacher) == 1.0);

  // Exact moments of the two-point law.
  CHECK(p_neg * v_neg + (1.0 - p_neg) * v_pos == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(p_neg * v_neg * v_neg + (1.0 - p_neg) * v_pos * v_pos ==
        doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bootstrap requires a minimally serious draw count") {
  const Fitted f = fit(topo2(), 306);
  CHECK_THROWS_AS(multiplier_bootstrap(f.est.att, f.psi, f.by_region, 98, 1, 0.05),
                  ValidationError);
  CHECK_NOTHROW(multiplier_bootstrap(f.est.att, f.psi, f.by_region, 99, 1, 0.05));
}

TEST_CASE("bootstrap draws are deterministic in the seed and thread count") {
  const Fitted f = fit(topo2(), 307);
  const BootstrapResult a = multiplier_bootstrap(f.est.att, f.psi, f.by_region, 501, 9, 0.05,
                                                 WeightLaw::mammen, 1);
  const BootstrapResult b = multiplier_bootstrap(f.est.att, f.psi, f.by_region, 501, 9, 0.05,
                                                 WeightLaw::mammen, 4);
  REQUIRE(a.detail.draws.size() == b.detail.draws.size());
  for (size_t k = 0; k < a.detail.draws.size(); ++k) {
    CHECK(a.detail.draws[k] == b.detail.draws[k]);
  }
  const BootstrapResult c = multiplier_bootstrap(f.est.att, f.psi, f.by_region, 501, 10, 0.05);
  CHECK(a.inference.se != c.inference.se);
}

TEST_CASE("bootstrap se approaches the asymptotic se") {
  const Fitted f = fit_sixteen(308);
  const InferenceResult asym = asymptotic_inference(f.est.att, f.psi, f.by_region, 0.05);
  const BootstrapResult boot =
      multiplier_bootstrap(f.est.att, f.psi, f.by_region, 2999, 11, 0.05);
  REQUIRE(asym.se > 0.0);
  CHECK(std::abs(boot.inference.se - asym.se) / asym.se < 0.10);
}

TEST_CASE("bootstrap CI is the percentile interval of the draws") {
  const Fitted f = fit(topo2(), 309);
  const BootstrapResult boot =
      multiplier_bootstrap(f.est.att, f.psi, f.by_region, 399, 12, 0.10);
  std::vector<double> sorted = boot.detail.draws;
  std::sort(sorted.begin(), sorted.end());
  auto type7 = [&](double prob) {
    const double pos = prob * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return lo + 1 >= sorted.size() ? sorted.back()
                                   : sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
  };
  CHECK(boot.inference.ci_lower == doctest::Approx(type7(0.05)).epsilon(1e-12));
  CHECK(boot.inference.ci_upper == doctest::Approx(type7(0.95)).epsilon(1e-12));
  CHECK(boot.inference.ci_lower <= boot.inference.ci_upper);
}

TEST_CASE("cv3 reproduces the hand oracle exactly") {
  const std::vector<double> loo = {1.0, 2.0, 3.0, 4.0};
  CHECK(cv3_from_loo(loo, 2.5) == 3.75);
  CHECK_THROWS_AS(cv3_from_loo(std::vector<double>{1.0}, 1.0), InfeasibleError);
}

TEST_CASE("cluster jackknife on topo2: H rows, finite se, manual replicate check") {
  const Fitted f = fit(topo2(), 310);
  const JackknifeResult jack =
      cluster_jackknife(f.panel, f.cohorts, {ControlMode::never_treated, Scheme::simple}, 0.05);
  CHECK(jack.detail.H == 6);
  REQUIRE(jack.detail.clusters.size() == 6);
  CHECK(jack.inference.se > 0.0);
  CHECK(std::isfinite(jack.inference.se));
  CHECK(jack.inference.df == 5);
  CHECK(jack.inference.reference == "student_t");
  CHECK(jack.inference.estimate == doctest::Approx(f.est.att.value).epsilon(1e-14));
  CHECK(jack.inference.p_value > 0.0);
  CHECK(jack.inference.p_value <= 1.0);
  CHECK(jack.inference.ci_lower <= jack.inference.estimate);
  CHECK(jack.inference.ci_upper >= jack.inference.estimate);

  // Replicate 'F' recomputed by hand.
  const Panel sub = f.panel.without_region(5);
  auto gvar = topo2().gvar;
  gvar.erase("F");
  const CohortMap cm = assign_cohorts(sub, gvar);
  const Estimation est = estimate_att(sub, cm, {ControlMode::never_treated, Scheme::simple});
  CHECK(jack.detail.clusters[5].estimate == doctest::Approx(est.att.value).epsilon(1e-14));
  CHECK(jack.detail.clusters[5].region == "F");
  CHECK(jack.detail.clusters[5].treated == false);
  CHECK(jack.detail.clusters[5].size == f.panel.region_obs_count(5));
  CHECK(jack.detail.clusters[0].treated == true);

  // CV3 recomputed from the reported loo estimates.
  std::vector<double> loo;
  for (const auto& row : jack.detail.clusters) loo.push_back(row.estimate);
  CHECK(jack.inference.se * jack.inference.se ==
        doctest::Approx(cv3_from_loo(loo, f.est.att.value)).epsilon(1e-12));

  // The t(H-1) p-value, reproduced through the normal-free identity:
  // p = 2 * (1 - F_t(|stat|)). Use the regularized incomplete beta the long
  // way via boost is what the library does; here just check monotone bounds.
  const double stat = std::abs(jack.inference.statistic);
  CHECK(jack.inference.statistic ==
        doctest::Approx(jack.inference.estimate / jack.inference.se).epsilon(1e-12));
  // t(5) has heavier tails than the normal: p_t > p_normal.
  CHECK(jack.inference.p_value > std::erfc(stat / std::sqrt(2.0)) - 1e-15);
}

TEST_CASE("jackknife aborts on topo1 naming the lone control") {
  const Fitted f = fit(topo1(), 311);
  try {
    cluster_jackknife(f.panel, f.cohorts, {ControlMode::never_treated, Scheme::simple}, 0.05);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'C'") != std::string::npos);
    CHECK(msg.find("jackknife") != std::string::npos);
  }
  CHECK_THROWS_AS(
      loo_profile(f.panel, f.cohorts, {ControlMode::never_treated, Scheme::simple}),
      InfeasibleError);
}

TEST_CASE("strict jackknife rejects replicates that lose cells") {
  // Cohort 2 has two members (A, D) so deleting either is harmless; B is the
  // only member of cohort 3, so deleting B loses the (3,3) cell.
  didtest::Topology topo;
  topo.regions = {"A", "B", "C", "D", "F"};
  topo.gvar = {{"A", 2}, {"B", 3}, {"C", 0}, {"D", 2}, {"F", 0}};
  topo.T = 3;
  const Panel p = didtest::random_panel(topo, 312);
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  const EstimationSpec spec{ControlMode::never_treated, Scheme::simple};

  // Non-strict: dropping B renormalizes over the surviving (2,t) cells.
  const JackknifeResult jack = cluster_jackknife(p, cm, spec, 0.05, /*strict=*/false);
  REQUIRE(jack.detail.H == 5);
  const auto& row_b = jack.detail.clusters[1];
  REQUIRE(row_b.region == "B");
  REQUIRE(row_b.dropped_cells.size() == 1);
  CHECK(row_b.dropped_cells[0] == std::pair<long, long>{3, 3});
  CHECK(jack.detail.clusters[0].dropped_cells.empty());
  // Its estimate is the mean of the surviving cells.
  const Panel sub = p.without_region(1);
  auto gvar = topo.gvar;
  gvar.erase("B");
  const Estimation est = estimate_att(sub, assign_cohorts(sub, gvar), spec);
  CHECK(est.att.cells.size() == 2);
  CHECK(row_b.estimate == doctest::Approx(est.att.value).epsilon(1e-14));

  // Strict: same design aborts, naming B and the lost cell.
  try {
    cluster_jackknife(p, cm, spec, 0.05, /*strict=*/true);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'B'") != std::string::npos);
    CHECK(msg.find("(3,3)") != std::string::npos);
  }
}

TEST_CASE("jackknife se is invariant to region relabeling") {
  const didtest::Topology topo = topo2();
  const Panel p = didtest::random_panel(topo, 313);
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  const EstimationSpec spec{ControlMode::never_treated, Scheme::simple};
  const JackknifeResult base = cluster_jackknife(p, cm, spec, 0.05);

  // Reverse the alphabet: A<->Z names, keeping the same gvar per region.
  std::map<std::string, std::string> rename = {{"A", "Z"}, {"B", "Y"}, {"C", "X"},
                                               {"D", "W"}, {"E", "V"}, {"F", "U"}};
  std::vector<PanelRow> rows;
  for (int u = 0; u < p.num_units(); ++u) {
    const std::string& region = p.regions()[p.region_of(u)];
    for (int t = 1; t <= p.num_periods(); ++t) {
      rows.push_back({rename[region] + "_" + p.units()[u], rename[region],
                      p.period_label(t), p.outcome(u, t)});
    }
  }
  const Panel q = Panel::from_rows(rows);
  std::map<std::string, long> gvar;
  for (const auto& [old_name, g] : topo.gvar) gvar[rename[old_name]] = g;
  const JackknifeResult renamed = cluster_jackknife(q, assign_cohorts(q, gvar), spec, 0.05);

  CHECK(renamed.inference.estimate == doctest::Approx(base.inference.estimate).epsilon(1e-12));
  CHECK(renamed.inference.se == doctest::Approx(base.inference.se).epsilon(1e-12));
}

TEST_CASE("jackknife threads do not change the result") {
  const Fitted f = fit(topo2(), 314);
  const EstimationSpec spec{ControlMode::never_treated, Scheme::simple};
  const JackknifeResult a = cluster_jackknife(f.panel, f.cohorts, spec, 0.05, false, 1);
  const JackknifeResult b = cluster_jackknife(f.panel, f.cohorts, spec, 0.05, false, 4);
  CHECK(a.inference.se == b.inference.se);
  for (size_t k = 0; k < a.detail.clusters.size(); ++k) {
    CHECK(a.detail.clusters[k].estimate == b.detail.clusters[k].estimate);
  }
}

TEST_CASE("a constant panel gives a degenerate jackknife") {
  didtest::Topology topo = topo2();
  const Panel p = didtest::tiny_panel(topo, {{"A", {0, 0, 0, 0}},
                                             {"B", {0, 0, 0, 0}},
                                             {"C", {0, 0, 0, 0}},
                                             {"D", {0, 0, 0, 0}},
                                             {"E", {0, 0, 0, 0}},
                                             {"F", {0, 0, 0, 0}}});
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  const JackknifeResult jack =
      cluster_jackknife(p, cm, {ControlMode::never_treated, Scheme::simple}, 0.05);
  CHECK(jack.inference.degenerate);
  CHECK(jack.inference.se == 0.0);
  CHECK(jack.inference.p_value == 0.0);
}

TEST_CASE("loo_profile flags a cluster that flips the sign") {
  // Two treated regions (so any single deletion stays feasible) and one
  // extreme control whose deletion flips the aggregate's sign.
  didtest::Topology topo;
  topo.regions = {"A", "B", "C", "D", "E"};
  topo.gvar = {{"A", 2}, {"B", 2}, {"C", 0}, {"D", 0}, {"E", 0}};
  topo.T = 2;
  // Long differences: treated +1 each; controls C, D: +2; E: -10.
  const Panel p = didtest::tiny_panel(topo, {{"A", {0, 1}},
                                             {"B", {0, 1}},
                                             {"C", {0, 2}},
                                             {"D", {0, 2}},
                                             {"E", {0, -10}}});
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  // Full: control mean = (2+2-10)/3 = -2, ATT = 3. Without E: 1 - 2 = -1.
  const JackknifeDetail detail =
      loo_profile(p, cm, {ControlMode::never_treated, Scheme::simple}, 3.0);
  CHECK(detail.full_estimate == doctest::Approx(3.0).epsilon(1e-14));
  const auto& row_e = detail.clusters[4];
  REQUIRE(row_e.region == "E");
  CHECK(row_e.estimate == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(row_e.flagged);
  // Deleting a treated region leaves the estimate at 3 exactly; deleting C
  // moves it to 5 but keeps the sign, well inside the k = 3 band.
  CHECK(detail.clusters[0].flagged == false);
  CHECK(detail.clusters[2].flagged == false);
  CHECK(detail.cv3_se > 0.0);
  CHECK(detail.k_threshold == 3.0);
}
