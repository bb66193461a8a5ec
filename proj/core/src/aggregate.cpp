#include "didkit/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "didkit/errors.hpp"

namespace didkit {

namespace {

// The reported weights must reproduce the nested-mean value and sum to one;
// a violation is an internal bug, not a data problem.
void check_invariants(const AttResult& res) {
  double wsum = 0.0, wvalue = 0.0;
  double lo = res.cells.front().att, hi = lo;
  for (size_t k = 0; k < res.cells.size(); ++k) {
    wsum += res.weights[k];
    wvalue += res.weights[k] * res.cells[k].att;
    lo = std::min(lo, res.cells[k].att);
    hi = std::max(hi, res.cells[k].att);
  }
  if (std::abs(wsum - 1.0) > 1e-12 || std::abs(wvalue - res.value) > 1e-12 ||
      res.value < lo - 1e-12 || res.value > hi + 1e-12) {
    throw std::logic_error("aggregate_att: weight invariants violated");
  }
}

}  // namespace

const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::simple:
      return "simple";
    case Scheme::group:
      return "group";
    case Scheme::calendar:
      return "calendar";
  }
  return "?";
}

AttResult aggregate_att(std::span<const CellEstimate> cells, Scheme scheme,
                        ControlMode control) {
  if (cells.empty()) {
    throw InfeasibleError("aggregate_att: no cells to aggregate");
  }
  AttResult res;
  res.scheme = scheme;
  res.control = control;
  res.cells.assign(cells.begin(), cells.end());
  res.weights.assign(cells.size(), 0.0);

  if (scheme == Scheme::simple) {
    double sum = 0.0;
    for (const auto& c : cells) sum += c.att;
    res.value = sum / static_cast<double>(cells.size());
    std::fill(res.weights.begin(), res.weights.end(), 1.0 / static_cast<double>(cells.size()));
  } else {
    // Level key: cohort for group, period for calendar.
    std::map<long, std::vector<size_t>> levels;
    for (size_t k = 0; k < cells.size(); ++k) {
      levels[scheme == Scheme::group ? cells[k].g : cells[k].t].push_back(k);
    }
    const double n_levels = static_cast<double>(levels.size());
    double outer = 0.0;
    for (const auto& [key, idx] : levels) {
      double inner = 0.0;
      for (size_t k : idx) inner += res.cells[k].att;
      inner /= static_cast<double>(idx.size());
      res.level_means.emplace_back(key, inner);
      outer += inner;
      for (size_t k : idx) {
        res.weights[k] = 1.0 / (n_levels * static_cast<double>(idx.size()));
      }
    }
    res.value = outer / n_levels;
  }
  check_invariants(res);
  return res;
}

Estimation estimate_att(const Panel& panel, const CohortMap& cohorts,
                        const EstimationSpec& spec) {
  Estimation out;
  out.plan = feasible_cells(cohorts, panel, spec.control);
  const auto cells = estimate_cells(panel, cohorts, out.plan.cells);
  out.att = aggregate_att(cells, spec.scheme, spec.control);
  return out;
}

}  // namespace didkit
