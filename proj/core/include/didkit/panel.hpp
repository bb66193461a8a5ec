#pragma once

/*
 * Balanced region-by-period panel with staggered treatment timing.
 *
 * Observations are unit-by-period outcomes; units nest inside regions
 * (clusters). Periods are normalized to 1..T internally so that "the period
 * before g" always means the previous observed period even when the raw
 * labels have gaps; raw labels are kept for display. Units are stored sorted
 * by (region name, unit name), which fixes a canonical observation order that
 * all estimators sum in.
 */

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace didkit {

struct PanelRow {
  std::string unit;
  std::string region;
  long period = 0;  // raw label
  double outcome = 0.0;
};

class Panel {
 public:
  Panel() = default;

  // Validating constructor used by the loaders. Throws ValidationError on
  // duplicate (unit, period) rows, a unit appearing in two regions, an
  // unbalanced panel, or (unless allow_gaps) non-consecutive period labels.
  static Panel from_rows(std::vector<PanelRow> rows, bool allow_gaps = false);

  // Fast constructor for simulation: region r owns units_per_region units,
  // outcomes[(u * T) + (t - 1)] is the outcome of global unit u in period t.
  // Region names must be distinct and already sorted.
  static Panel balanced(std::vector<std::string> region_names, long units_per_region,
                        std::vector<long> period_labels, std::vector<double> outcomes);

  int num_regions() const { return static_cast<int>(regions_.size()); }
  int num_units() const { return static_cast<int>(units_.size()); }
  int num_periods() const { return static_cast<int>(period_labels_.size()); }
  long num_obs() const { return static_cast<long>(units_.size()) * num_periods(); }

  const std::vector<std::string>& regions() const { return regions_; }
  const std::vector<std::string>& units() const { return units_; }
  const std::vector<long>& period_labels() const { return period_labels_; }

  int region_of(int unit) const { return unit_region_[unit]; }
  // Units of a region occupy the contiguous index range [first, last).
  int region_units_begin(int region) const { return region_begin_[region]; }
  int region_units_end(int region) const { return region_begin_[region + 1]; }
  long region_obs_count(int region) const {
    return static_cast<long>(region_units_end(region) - region_units_begin(region)) *
           num_periods();
  }

  // Outcome of a unit in normalized period t (1-based).
  double outcome(int unit, int period) const {
    return outcomes_[static_cast<size_t>(unit) * num_periods() + (period - 1)];
  }

  long period_label(int period) const { return period_labels_[period - 1]; }
  // Normalized period for a raw label, or 0 when the label is not observed.
  int period_of_label(long label) const;

  // Same panel with every outcome replaced by its deviation from the region
  // mean (taken over all units and periods of the region).
  Panel demeaned_by_region() const;

  // Copy without one region; remaining regions keep their relative order.
  Panel without_region(int region) const;

  // Copy restricted to the given region indices (ascending) and to the
  // normalized period window [first_period, first_period + window_len).
  // Periods are re-labeled 1..window_len.
  Panel subset(const std::vector<int>& region_indices, int first_period,
               int window_len) const;

 private:
  std::vector<std::string> regions_;      // sorted
  std::vector<std::string> units_;        // sorted by (region, unit)
  std::vector<int> unit_region_;          // per unit
  std::vector<int> region_begin_;         // size R + 1
  std::vector<long> period_labels_;       // ascending raw labels
  std::vector<double> outcomes_;          // unit-major, period-minor
};

struct PanelSchema {
  std::string unit_col = "unit";
  std::string region_col = "region";
  std::string time_col = "time";
  std::string outcome_col = "outcome";
  std::string gvar_col;  // empty: no adoption column in the file
  bool allow_gaps = false;
};

struct LoadedPanel {
  Panel panel;
  bool has_gvar = false;
  std::map<std::string, long> gvar;  // region name -> raw adoption label (0 = never)
};

// Reads a long-format CSV into a Panel. When schema.gvar_col is set the
// column must be constant within each region and is returned as the gvar map.
LoadedPanel load_panel(std::istream& in, const PanelSchema& schema);

// Reads a two-column region,gvar CSV (header required, names ignored).
std::map<std::string, long> load_gvar_file(std::istream& in);

Panel demean_by_region(const Panel& panel);

// Cohort structure implied by a gvar map: which regions adopt in which
// normalized period, and which never adopt.
struct CohortMap {
  std::vector<long> first_treat;       // per region, normalized period; 0 = never
  std::vector<long> first_treat_raw;   // per region, raw label; 0 = never
  std::vector<long> cohorts;           // distinct adoption periods, ascending
  std::vector<std::vector<int>> members;  // region indices per cohort, ascending
  std::vector<int> never_treated;      // region indices, ascending

  int cohort_index(long g) const;  // -1 if g is not a cohort
};

// Validates the gvar map against the panel and builds the cohort structure.
// Every region must be covered, every nonzero value must be an observed
// period, and no region may adopt in the first period (no base period).
CohortMap assign_cohorts(const Panel& panel, const std::map<std::string, long>& gvar);

enum class ControlMode { never_treated, not_yet_treated };

const char* to_string(ControlMode mode);

// One estimable group-time cell. g, t and base are normalized periods;
// comparison holds the control region indices for this cell.
struct CellSpec {
  long g = 0;
  long t = 0;
  long base = 0;  // g - 1
  ControlMode mode = ControlMode::never_treated;
  std::vector<int> comparison;
};

struct SkippedCell {
  long g = 0;
  long t = 0;
  std::string reason;
};

struct CellPlan {
  std::vector<CellSpec> cells;     // ascending (g, t)
  std::vector<SkippedCell> skipped;
};

// Enumerates every estimable (g, t) with g <= t <= T and a nonempty
// comparison group. Candidate cells with an empty comparison group are
// reported in `skipped`. Throws InfeasibleError when nothing is estimable.
CellPlan feasible_cells(const CohortMap& cohorts, const Panel& panel, ControlMode mode);

}  // namespace didkit
