#pragma once

/*
 * Group-time treatment effect estimators.
 *
 * att_gt(g, t) is the difference in mean long differences Y_t - Y_{g-1}
 * between the cohort first treated in g and that cell's comparison regions.
 * att_gt_ols reproduces the same number through an explicit 2x2
 * regression and exists as an independent cross-check. twfe_beta is the
 * classic two-way fixed effects coefficient, kept as a baseline precisely
 * because it does not equal the cell averages under staggered adoption with
 * heterogeneous effects.
 *
 * All sums run in ascending unit index order, so results do not depend on
 * thread count or scheduling.
 */

#include <span>
#include <vector>

#include "didkit/panel.hpp"

namespace didkit {

struct CellEstimate {
  long g = 0;
  long t = 0;
  long base = 0;
  double att = 0.0;
  long n_treated = 0;      // units observed in period t in cohort g
  long n_comparison = 0;   // units observed in period t in the comparison set
};

// Difference in mean long differences for one cell.
CellEstimate att_gt(const Panel& panel, const CohortMap& cohorts, const CellSpec& cell);

// The same cell through an explicit OLS fit of
//   y ~ 1 + post + treat + post:treat
// on the two periods {g-1, t} and the cell's two groups; returns the
// interaction coefficient. Agrees with att_gt to floating-point accuracy.
CellEstimate att_gt_ols(const Panel& panel, const CohortMap& cohorts, const CellSpec& cell);

// att_gt over every cell in the plan, in plan order.
std::vector<CellEstimate> estimate_cells(const Panel& panel, const CohortMap& cohorts,
                                         std::span<const CellSpec> cells);

// Plans feasible cells and estimates all of them.
std::vector<CellEstimate> estimate_all_cells(const Panel& panel, const CohortMap& cohorts,
                                             ControlMode mode);

// Two-way fixed effects coefficient on the full panel: regression of the
// outcome on 1{t >= first_treat(region)} with unit-free region and period
// effects, computed by iterated within-demeaning to 1e-12.
double twfe_beta(const Panel& panel, const CohortMap& cohorts);

// Per-unit influence contributions, one column per cell:
//   psi_i = (n/N_gt) 1{i in cohort g} (dY_i - mean_treat)
//         - (n/N_comp) 1{i in comparison} (dY_i - mean_comp)
// with dY_i = Y_{i,t} - Y_{i,g-1} and n the number of units. Each column sums
// to zero; the scale factor n cancels in every downstream variance formula.
struct InfluenceMatrix {
  long rows = 0;  // units
  long cols = 0;  // cells
  std::vector<double> data;  // row-major

  double at(long i, long j) const { return data[static_cast<size_t>(i) * cols + j]; }
  double& at(long i, long j) { return data[static_cast<size_t>(i) * cols + j]; }
};

InfluenceMatrix influence_contributions(const Panel& panel, const CohortMap& cohorts,
                                        std::span<const CellSpec> cells);

}  // namespace didkit
