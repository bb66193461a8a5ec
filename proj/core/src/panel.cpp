#include "didkit/panel.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <set>
#include <unordered_map>

#include "didkit/csv.hpp"
#include "didkit/errors.hpp"

namespace didkit {

namespace {

// Dense period index lookup plus gap validation.
std::vector<long> collect_periods(const std::vector<PanelRow>& rows, bool allow_gaps) {
  std::set<long> labels;
  for (const auto& r : rows) labels.insert(r.period);
  std::vector<long> out(labels.begin(), labels.end());
  if (out.empty()) throw ValidationError("panel: no rows");
  if (!allow_gaps) {
    for (size_t i = 1; i < out.size(); ++i) {
      if (out[i] != out[i - 1] + 1) {
        throw ValidationError(
            "panel: period labels jump from " + std::to_string(out[i - 1]) + " to " +
            std::to_string(out[i]) +
            "; pass allow_gaps to re-index non-consecutive periods");
      }
    }
  }
  return out;
}

}  // namespace

int Panel::period_of_label(long label) const {
  auto it = std::lower_bound(period_labels_.begin(), period_labels_.end(), label);
  if (it == period_labels_.end() || *it != label) return 0;
  return static_cast<int>(it - period_labels_.begin()) + 1;
}

Panel Panel::from_rows(std::vector<PanelRow> rows, bool allow_gaps) {
  if (rows.empty()) throw ValidationError("panel: no rows");

  Panel p;
  p.period_labels_ = collect_periods(rows, allow_gaps);
  const int T = static_cast<int>(p.period_labels_.size());

  // Unit -> region, rejecting units that move between regions.
  std::map<std::string, std::string> unit_region;
  for (const auto& r : rows) {
    auto [it, inserted] = unit_region.emplace(r.unit, r.region);
    if (!inserted && it->second != r.region) {
      throw ValidationError("panel: unit '" + r.unit + "' appears in regions '" +
                            it->second + "' and '" + r.region + "'");
    }
  }

  std::set<std::string> region_names;
  for (const auto& [u, reg] : unit_region) region_names.insert(reg);
  p.regions_.assign(region_names.begin(), region_names.end());

  std::unordered_map<std::string, int> region_index;
  for (int r = 0; r < p.num_regions(); ++r) region_index[p.regions_[r]] = r;

  // Canonical unit order: region name, then unit name.
  std::vector<std::pair<std::string, std::string>> keyed;  // (region, unit)
  keyed.reserve(unit_region.size());
  for (const auto& [u, reg] : unit_region) keyed.emplace_back(reg, u);
  std::sort(keyed.begin(), keyed.end());

  std::unordered_map<std::string, int> unit_index;
  p.units_.reserve(keyed.size());
  p.unit_region_.reserve(keyed.size());
  for (const auto& [reg, u] : keyed) {
    unit_index[u] = static_cast<int>(p.units_.size());
    p.units_.push_back(u);
    p.unit_region_.push_back(region_index[reg]);
  }
  p.region_begin_.assign(p.num_regions() + 1, 0);
  for (int r : p.unit_region_) ++p.region_begin_[r + 1];
  for (int r = 0; r < p.num_regions(); ++r) p.region_begin_[r + 1] += p.region_begin_[r];

  const size_t n = p.units_.size() * static_cast<size_t>(T);
  p.outcomes_.assign(n, 0.0);
  std::vector<char> seen(n, 0);
  for (const auto& r : rows) {
    const int u = unit_index[r.unit];
    const int t = p.period_of_label(r.period);
    const size_t k = static_cast<size_t>(u) * T + (t - 1);
    if (seen[k]) {
      throw ValidationError("panel: duplicate observation for unit '" + r.unit +
                            "' in period " + std::to_string(r.period));
    }
    seen[k] = 1;
    p.outcomes_[k] = r.outcome;
  }
  for (int u = 0; u < p.num_units(); ++u) {
    for (int t = 1; t <= T; ++t) {
      if (!seen[static_cast<size_t>(u) * T + (t - 1)]) {
        throw ValidationError("panel: unbalanced, unit '" + p.units_[u] +
                              "' is missing period " +
                              std::to_string(p.period_label(t)));
      }
    }
  }
  return p;
}

Panel Panel::balanced(std::vector<std::string> region_names, long units_per_region,
                      std::vector<long> period_labels, std::vector<double> outcomes) {
  Panel p;
  if (region_names.empty() || units_per_region <= 0 || period_labels.empty()) {
    throw ValidationError("panel: balanced() needs regions, units and periods");
  }
  if (!std::is_sorted(region_names.begin(), region_names.end()) ||
      std::adjacent_find(region_names.begin(), region_names.end()) != region_names.end()) {
    throw ValidationError("panel: balanced() region names must be sorted and distinct");
  }
  if (!std::is_sorted(period_labels.begin(), period_labels.end())) {
    throw ValidationError("panel: balanced() period labels must be ascending");
  }
  const size_t n_units = region_names.size() * static_cast<size_t>(units_per_region);
  if (outcomes.size() != n_units * period_labels.size()) {
    throw ValidationError("panel: balanced() outcome vector has wrong length");
  }
  p.regions_ = std::move(region_names);
  p.period_labels_ = std::move(period_labels);
  p.outcomes_ = std::move(outcomes);
  p.units_.reserve(n_units);
  p.unit_region_.reserve(n_units);
  p.region_begin_.assign(p.num_regions() + 1, 0);
  char buf[32];
  for (int r = 0; r < p.num_regions(); ++r) {
    p.region_begin_[r] = static_cast<int>(p.units_.size());
    for (long u = 0; u < units_per_region; ++u) {
      std::snprintf(buf, sizeof(buf), "_u%05ld", u);
      p.units_.push_back(p.regions_[r] + buf);
      p.unit_region_.push_back(r);
    }
  }
  p.region_begin_[p.num_regions()] = static_cast<int>(p.units_.size());
  return p;
}

Panel Panel::demeaned_by_region() const {
  Panel p = *this;
  const int T = num_periods();
  for (int r = 0; r < num_regions(); ++r) {
    double sum = 0.0;
    const int ub = region_units_begin(r), ue = region_units_end(r);
    for (int u = ub; u < ue; ++u) {
      for (int t = 0; t < T; ++t) sum += outcomes_[static_cast<size_t>(u) * T + t];
    }
    const double mean = sum / (static_cast<double>(ue - ub) * T);
    for (int u = ub; u < ue; ++u) {
      for (int t = 0; t < T; ++t) p.outcomes_[static_cast<size_t>(u) * T + t] -= mean;
    }
  }
  return p;
}

Panel demean_by_region(const Panel& panel) { return panel.demeaned_by_region(); }

Panel Panel::without_region(int region) const {
  std::vector<int> keep;
  keep.reserve(num_regions() - 1);
  for (int r = 0; r < num_regions(); ++r) {
    if (r != region) keep.push_back(r);
  }
  return subset(keep, 1, num_periods());
}

Panel Panel::subset(const std::vector<int>& region_indices, int first_period,
                    int window_len) const {
  Panel p;
  const int T = num_periods();
  if (first_period < 1 || window_len < 1 || first_period + window_len - 1 > T) {
    throw ValidationError("panel: subset window out of range");
  }
  p.period_labels_.resize(window_len);
  if (first_period == 1 && window_len == T) {
    p.period_labels_ = period_labels_;
  } else {
    // A proper window gets fresh consecutive labels 1..window_len.
    for (int t = 0; t < window_len; ++t) p.period_labels_[t] = t + 1;
  }
  p.regions_.reserve(region_indices.size());
  p.region_begin_.assign(region_indices.size() + 1, 0);
  int prev = -1;
  for (int r : region_indices) {
    if (r <= prev || r >= num_regions()) {
      throw ValidationError("panel: subset region indices must be ascending and in range");
    }
    prev = r;
    p.regions_.push_back(regions_[r]);
  }
  size_t n_units = 0;
  for (int r : region_indices) {
    n_units += static_cast<size_t>(region_units_end(r) - region_units_begin(r));
  }
  p.units_.reserve(n_units);
  p.unit_region_.reserve(n_units);
  p.outcomes_.reserve(n_units * window_len);
  for (size_t k = 0; k < region_indices.size(); ++k) {
    const int r = region_indices[k];
    p.region_begin_[k] = static_cast<int>(p.units_.size());
    for (int u = region_units_begin(r); u < region_units_end(r); ++u) {
      p.units_.push_back(units_[u]);
      p.unit_region_.push_back(static_cast<int>(k));
      const size_t base = static_cast<size_t>(u) * T + (first_period - 1);
      for (int t = 0; t < window_len; ++t) p.outcomes_.push_back(outcomes_[base + t]);
    }
  }
  p.region_begin_[region_indices.size()] = static_cast<int>(p.units_.size());
  return p;
}

LoadedPanel load_panel(std::istream& in, const PanelSchema& schema) {
  const CsvTable table = read_csv(in);
  const int c_unit = table.column(schema.unit_col);
  const int c_region = table.column(schema.region_col);
  const int c_time = table.column(schema.time_col);
  const int c_outcome = table.column(schema.outcome_col);
  for (const auto& [idx, name] :
       {std::pair{c_unit, schema.unit_col}, {c_region, schema.region_col},
        {c_time, schema.time_col}, {c_outcome, schema.outcome_col}}) {
    if (idx < 0) throw ValidationError("panel: input has no column '" + name + "'");
  }
  int c_gvar = -1;
  if (!schema.gvar_col.empty()) {
    c_gvar = table.column(schema.gvar_col);
    if (c_gvar < 0) {
      throw ValidationError("panel: input has no column '" + schema.gvar_col + "'");
    }
  }

  LoadedPanel out;
  std::vector<PanelRow> rows;
  rows.reserve(table.rows.size());
  size_t lineno = 1;
  for (const auto& rec : table.rows) {
    ++lineno;
    const std::string where = "row " + std::to_string(lineno);
    PanelRow row;
    row.unit = rec[c_unit];
    row.region = rec[c_region];
    row.period = parse_integer(rec[c_time], where + ", column '" + schema.time_col + "'");
    row.outcome =
        parse_real(rec[c_outcome], where + ", column '" + schema.outcome_col + "'");
    if (row.unit.empty() || row.region.empty()) {
      throw ValidationError("panel: " + where + " has an empty unit or region id");
    }
    if (c_gvar >= 0) {
      const long g =
          parse_integer(rec[c_gvar], where + ", column '" + schema.gvar_col + "'");
      auto [it, inserted] = out.gvar.emplace(row.region, g);
      if (!inserted && it->second != g) {
        throw ValidationError("panel: region '" + row.region +
                              "' has more than one value in column '" +
                              schema.gvar_col + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  out.has_gvar = (c_gvar >= 0);
  out.panel = Panel::from_rows(std::move(rows), schema.allow_gaps);
  return out;
}

std::map<std::string, long> load_gvar_file(std::istream& in) {
  const CsvTable table = read_csv(in);
  if (table.header.size() != 2) {
    throw ValidationError("gvar file: expected exactly two columns (region, adoption period)");
  }
  std::map<std::string, long> out;
  size_t lineno = 1;
  for (const auto& rec : table.rows) {
    ++lineno;
    const long g = parse_integer(rec[1], "gvar file row " + std::to_string(lineno));
    auto [it, inserted] = out.emplace(rec[0], g);
    if (!inserted && it->second != g) {
      throw ValidationError("gvar file: region '" + rec[0] + "' listed twice with different values");
    }
  }
  return out;
}

int CohortMap::cohort_index(long g) const {
  auto it = std::lower_bound(cohorts.begin(), cohorts.end(), g);
  if (it == cohorts.end() || *it != g) return -1;
  return static_cast<int>(it - cohorts.begin());
}

CohortMap assign_cohorts(const Panel& panel, const std::map<std::string, long>& gvar) {
  CohortMap cm;
  const int R = panel.num_regions();
  cm.first_treat.resize(R);
  cm.first_treat_raw.resize(R);

  for (const auto& [name, value] : gvar) {
    bool known = std::binary_search(panel.regions().begin(), panel.regions().end(), name);
    if (!known) {
      throw ValidationError("gvar: region '" + name + "' is not in the panel");
    }
  }

  std::map<long, std::vector<int>> by_cohort;
  for (int r = 0; r < R; ++r) {
    const std::string& name = panel.regions()[r];
    auto it = gvar.find(name);
    if (it == gvar.end()) {
      throw ValidationError("gvar: no adoption period for region '" + name + "'");
    }
    const long raw = it->second;
    cm.first_treat_raw[r] = raw;
    if (raw == 0) {
      cm.first_treat[r] = 0;
      cm.never_treated.push_back(r);
      continue;
    }
    const int g = panel.period_of_label(raw);
    if (g == 0) {
      throw ValidationError("gvar: region '" + name + "' adopts in period " +
                            std::to_string(raw) + ", which is not an observed period");
    }
    if (g == 1) {
      throw ValidationError("gvar: region '" + name + "' adopts in the first period " +
                            std::to_string(raw) + "; no base period exists");
    }
    cm.first_treat[r] = g;
    by_cohort[g].push_back(r);
  }
  for (auto& [g, members] : by_cohort) {
    cm.cohorts.push_back(g);
    cm.members.push_back(std::move(members));
  }
  return cm;
}

const char* to_string(ControlMode mode) {
  return mode == ControlMode::never_treated ? "never_treated" : "not_yet_treated";
}

CellPlan feasible_cells(const CohortMap& cohorts, const Panel& panel, ControlMode mode) {
  CellPlan plan;
  const long T = panel.num_periods();
  for (size_t ci = 0; ci < cohorts.cohorts.size(); ++ci) {
    const long g = cohorts.cohorts[ci];
    for (long t = g; t <= T; ++t) {
      CellSpec cell;
      cell.g = g;
      cell.t = t;
      cell.base = g - 1;
      cell.mode = mode;
      cell.comparison = cohorts.never_treated;
      if (mode == ControlMode::not_yet_treated) {
        // Merge in regions whose adoption is strictly after t, keeping the
        // index order ascending.
        std::vector<int> comp;
        for (int r = 0; r < panel.num_regions(); ++r) {
          const long s = cohorts.first_treat[r];
          if (s == 0 || s > t) comp.push_back(r);
        }
        cell.comparison = std::move(comp);
      }
      if (cell.comparison.empty()) {
        plan.skipped.push_back({g, t, "no comparison region"});
        continue;
      }
      // Balanced panel: a nonempty cohort and comparison set guarantees
      // observations in both t and the base period.
      plan.cells.push_back(std::move(cell));
    }
  }
  if (plan.cells.empty()) {
    if (cohorts.cohorts.empty()) {
      throw InfeasibleError("feasible_cells: no treated cohort, nothing to estimate");
    }
    if (mode == ControlMode::never_treated && cohorts.never_treated.empty()) {
      throw InfeasibleError(
          "feasible_cells: never-treated controls requested but every region adopts");
    }
    throw InfeasibleError("feasible_cells: every candidate (g,t) cell lacks a comparison group");
  }
  return plan;
}

}  // namespace didkit
