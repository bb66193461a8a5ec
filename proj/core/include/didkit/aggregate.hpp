#pragma once

/*
 * Aggregation of group-time cells into a single ATT.
 *
 * simple    equal weight on every feasible cell.
 * group     average cells within each cohort g, then average the cohort
 *           effects with equal weight.
 * calendar  average cells within each period t, then average the period
 *           effects with equal weight.
 *
 * Values are computed as nested arithmetic means; the equivalent per-cell
 * weights are reported alongside and always sum to one.
 */

#include <span>
#include <utility>
#include <vector>

#include "didkit/estimator.hpp"
#include "didkit/panel.hpp"

namespace didkit {

enum class Scheme { simple, group, calendar };

const char* to_string(Scheme scheme);

struct AttResult {
  double value = 0.0;
  Scheme scheme = Scheme::simple;
  ControlMode control = ControlMode::never_treated;
  std::vector<CellEstimate> cells;   // in (g, t) order
  std::vector<double> weights;       // aligned with cells, sums to 1
  // Intermediate level means: (g, ATT(g)) for group, (t, ATT(t)) for
  // calendar, empty for simple.
  std::vector<std::pair<long, double>> level_means;
};

// Aggregates estimated cells. The cell list must be nonempty and sorted by
// (g, t), as produced by estimate_cells.
AttResult aggregate_att(std::span<const CellEstimate> cells, Scheme scheme,
                        ControlMode control);

struct EstimationSpec {
  ControlMode control = ControlMode::never_treated;
  Scheme scheme = Scheme::simple;
};

struct Estimation {
  CellPlan plan;
  AttResult att;
};

// feasible_cells + estimate_cells + aggregate_att in one call.
Estimation estimate_att(const Panel& panel, const CohortMap& cohorts,
                        const EstimationSpec& spec);

}  // namespace didkit
