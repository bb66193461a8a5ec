#include <doctest.h>

#include <cmath>

#include "didkit/aggregate.hpp"
#include "didkit/errors.hpp"
#include "didkit/estimator.hpp"
#include "test_helpers.hpp"

using namespace didkit;
using didtest::topo1;
using didtest::topo2;
using didtest::topo5;

TEST_CASE("att_gt reproduces the hand-computed topo1 cells") {
  const Panel p = didtest::ex1_heterogeneous();
  const CohortMap cm = assign_cohorts(p, topo1().gvar);
  const auto cells = estimate_all_cells(p, cm, ControlMode::never_treated);
  REQUIRE(cells.size() == 3);
  CHECK(cells[0].att == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cells[1].att == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cells[2].att == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(cells[0].n_treated == 1);
  CHECK(cells[0].n_comparison == 1);

  // The same cells through the regression route.
  const CellPlan plan = feasible_cells(cm, p, ControlMode::never_treated);
  for (size_t k = 0; k < plan.cells.size(); ++k) {
    const CellEstimate ols = att_gt_ols(p, cm, plan.cells[k]);
    CHECK(ols.att == doctest::Approx(cells[k].att).epsilon(1e-12));
    CHECK(ols.n_treated == cells[k].n_treated);
    CHECK(ols.n_comparison == cells[k].n_comparison);
  }
}

TEST_CASE("att_gt equals att_gt_ols on seeded panels across topologies") {
  int cells_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto topo = seed % 3 == 0 ? topo1() : (seed % 3 == 1 ? topo2() : topo5());
    const Panel p = didtest::random_panel(topo, seed);
    const CohortMap cm = assign_cohorts(p, topo.gvar);
    for (ControlMode mode : {ControlMode::never_treated, ControlMode::not_yet_treated}) {
      if (mode == ControlMode::never_treated && cm.never_treated.empty()) continue;
      const CellPlan plan = feasible_cells(cm, p, mode);
      for (const auto& cell : plan.cells) {
        const double direct = att_gt(p, cm, cell).att;
        const double ols = att_gt_ols(p, cm, cell).att;
        CHECK(std::abs(direct - ols) <= 1e-10);
        ++cells_checked;
      }
    }
  }
  CHECK(cells_checked > 400);
}

TEST_CASE("att_gt is invariant to region and period level shifts") {
  const auto topo = topo2();
  const Panel p = didtest::random_panel(topo, 77);
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  const CellPlan plan = feasible_cells(cm, p, ControlMode::never_treated);
  const auto base = estimate_cells(p, cm, plan.cells);

  // Shift each region by its own constant and each period by a common one:
  // long differences remove the former, the comparison contrast the latter.
  std::vector<PanelRow> rows;
  for (int u = 0; u < p.num_units(); ++u) {
    const int r = p.region_of(u);
    for (int t = 1; t <= p.num_periods(); ++t) {
      rows.push_back({p.units()[u], p.regions()[r], p.period_label(t),
                      p.outcome(u, t) + 10.0 * (r + 1) + 3.5 * t});
    }
  }
  const Panel shifted = Panel::from_rows(rows);
  const auto after = estimate_cells(shifted, cm, plan.cells);
  for (size_t k = 0; k < base.size(); ++k) {
    CHECK(after[k].att == doctest::Approx(base[k].att).epsilon(1e-11));
  }
}

TEST_CASE("a cell only depends on its own groups and periods") {
  const auto topo = topo2();
  const Panel p = didtest::random_panel(topo, 78);
  const CohortMap cm = assign_cohorts(p, topo2().gvar);
  const CellPlan plan = feasible_cells(cm, p, ControlMode::never_treated);
  // Cell (2,2): cohort {A,D}, comparison {C,F}, periods 1 and 2. Mangling
  // B and E entirely, and other periods of A/D/C/F, must not move it.
  const CellEstimate before = att_gt(p, cm, plan.cells[0]);
  std::vector<PanelRow> rows;
  for (int u = 0; u < p.num_units(); ++u) {
    const int r = p.region_of(u);
    const std::string& region = p.regions()[r];
    for (int t = 1; t <= p.num_periods(); ++t) {
      double y = p.outcome(u, t);
      if (region == "B" || region == "E") y += 100.0 + u + t;
      if (t > 2) y -= 55.5;
      rows.push_back({p.units()[u], region, p.period_label(t), y});
    }
  }
  const Panel mangled = Panel::from_rows(rows);
  const CellEstimate after = att_gt(mangled, cm, plan.cells[0]);
  CHECK(after.att == before.att);
}

TEST_CASE("estimate_all_cells orders cells by (g, t)") {
  const Panel p = didtest::random_panel(topo2(), 79);
  const CohortMap cm = assign_cohorts(p, topo2().gvar);
  const auto cells = estimate_all_cells(p, cm, ControlMode::never_treated);
  REQUIRE(cells.size() == 5);  // (2,2) (2,3) (2,4) (3,3) (3,4)
  for (size_t k = 1; k < cells.size(); ++k) {
    CHECK((cells[k - 1].g < cells[k].g ||
           (cells[k - 1].g == cells[k].g && cells[k - 1].t < cells[k].t)));
  }
}

TEST_CASE("twfe_beta recovers a homogeneous effect exactly") {
  // Outcome = region level + period trend + tau * D with no noise: TWFE's
  // projection is exact and the coefficient is tau.
  const auto topo = topo2();
  const double tau = 1.25;
  std::vector<PanelRow> rows;
  for (const auto& region : topo.regions) {
    const long g = topo.gvar.at(region);
    for (int t = 1; t <= topo.T; ++t) {
      const double d = (g != 0 && t >= g) ? 1.0 : 0.0;
      rows.push_back({region + "1", region, t,
                      2.0 * static_cast<double>(region[0] - 'A') + 0.7 * t + tau * d});
    }
  }
  const Panel p = Panel::from_rows(rows);
  const CohortMap cm = assign_cohorts(p, topo.gvar);
  CHECK(twfe_beta(p, cm) == doctest::Approx(tau).epsilon(1e-10));
}

TEST_CASE("twfe_beta equals the dense dummy-variable oracle") {
  for (std::uint64_t seed : {5, 6, 7}) {
    const auto topo = seed == 6 ? topo1() : topo2();
    const Panel p = didtest::random_panel(topo, seed);
    const CohortMap cm = assign_cohorts(p, topo.gvar);
    const double via_demeaning = twfe_beta(p, cm);
    const double via_dummies = didtest::twfe_dense_oracle(p, cm);
    CHECK(via_demeaning == doctest::Approx(via_dummies).epsilon(1e-8));
  }
}

TEST_CASE("twfe_beta diverges from the cell average under heterogeneity") {
  const Panel p = didtest::ex1_heterogeneous();
  const CohortMap cm = assign_cohorts(p, topo1().gvar);
  const double beta = twfe_beta(p, cm);
  CHECK(beta == doctest::Approx(2.0).epsilon(1e-10));

  const auto cells = estimate_all_cells(p, cm, ControlMode::never_treated);
  const AttResult att = aggregate_att(cells, Scheme::simple, ControlMode::never_treated);
  CHECK(att.value == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  CHECK(std::abs(beta - att.value) > 1e-3);
}

TEST_CASE("twfe_beta refuses a constant treatment indicator") {
  const Panel p = didtest::random_panel(topo1(), 80);
  const CohortMap cm = assign_cohorts(p, {{"A", 0}, {"B", 0}, {"C", 0}});
  CHECK_THROWS_AS(twfe_beta(p, cm), InfeasibleError);
}

TEST_CASE("influence columns sum to zero") {
  const Panel p = didtest::random_panel(topo2(), 81);
  const CohortMap cm = assign_cohorts(p, topo2().gvar);
  const CellPlan plan = feasible_cells(cm, p, ControlMode::not_yet_treated);
  const InfluenceMatrix psi = influence_contributions(p, cm, plan.cells);
  REQUIRE(psi.rows == p.num_units());
  REQUIRE(psi.cols == static_cast<long>(plan.cells.size()));
  for (long j = 0; j < psi.cols; ++j) {
    double sum = 0.0;
    for (long i = 0; i < psi.rows; ++i) sum += psi.at(i, j);
    CHECK(std::abs(sum) <= 1e-10 * static_cast<double>(psi.rows));
  }
}

TEST_CASE("influence matches the two-sample variance oracle per cell") {
  const Panel p = didtest::random_panel(topo2(), 82);
  const CohortMap cm = assign_cohorts(p, topo2().gvar);
  const CellPlan plan = feasible_cells(cm, p, ControlMode::never_treated);
  const InfluenceMatrix psi = influence_contributions(p, cm, plan.cells);
  const double n = static_cast<double>(psi.rows);
  for (long j = 0; j < psi.cols; ++j) {
    double ss = 0.0;
    for (long i = 0; i < psi.rows; ++i) ss += psi.at(i, j) * psi.at(i, j);
    const double oracle = didtest::two_sample_variance_oracle(p, cm, plan.cells[j]);
    CHECK(ss / (n * n) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("a single treated cluster contributes nothing to the cell variance") {
  // Cohort 2 is just region A: its within-cluster influence sum cancels
  // exactly, which is the root of the few-treated-clusters pathology.
  const Panel p = didtest::random_panel(topo1(), 83);
  const CohortMap cm = assign_cohorts(p, topo1().gvar);
  const CellPlan plan = feasible_cells(cm, p, ControlMode::never_treated);
  const InfluenceMatrix psi = influence_contributions(p, cm, plan.cells);
  int cells_with_cohort_a = 0;
  for (long j = 0; j < psi.cols; ++j) {
    if (plan.cells[j].g != cm.first_treat[0]) continue;
    ++cells_with_cohort_a;
    double treated_sum = 0.0;
    for (int u = p.region_units_begin(0); u < p.region_units_end(0); ++u) {
      treated_sum += psi.at(u, j);
    }
    CHECK(std::abs(treated_sum) < 1e-12);
  }
  CHECK(cells_with_cohort_a == 2);  // (2,2) and (2,3)
}
