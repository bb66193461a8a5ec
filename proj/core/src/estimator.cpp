#include "didkit/estimator.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "didkit/errors.hpp"

namespace didkit {

namespace {

std::string cell_name(long g, long t) {
  return "(" + std::to_string(g) + "," + std::to_string(t) + ")";
}

// Sum of long differences over the units of one region, plus the unit count.
void accumulate_region(const Panel& panel, int region, long t, long base, double* sum,
                       long* count) {
  for (int u = panel.region_units_begin(region); u < panel.region_units_end(region); ++u) {
    *sum += panel.outcome(u, static_cast<int>(t)) - panel.outcome(u, static_cast<int>(base));
    ++*count;
  }
}

}  // namespace

CellEstimate att_gt(const Panel& panel, const CohortMap& cohorts, const CellSpec& cell) {
  CellEstimate est;
  est.g = cell.g;
  est.t = cell.t;
  est.base = cell.base;

  const int ci = cohorts.cohort_index(cell.g);
  if (ci < 0) throw InfeasibleError("att_gt: no cohort adopts in period " + std::to_string(cell.g));

  double treat_sum = 0.0, comp_sum = 0.0;
  for (int r : cohorts.members[ci]) {
    accumulate_region(panel, r, cell.t, cell.base, &treat_sum, &est.n_treated);
  }
  for (int r : cell.comparison) {
    accumulate_region(panel, r, cell.t, cell.base, &comp_sum, &est.n_comparison);
  }
  if (est.n_treated == 0 || est.n_comparison == 0) {
    throw InfeasibleError("att_gt: cell " + cell_name(cell.g, cell.t) +
                          " has an empty treated or comparison group");
  }
  est.att = treat_sum / est.n_treated - comp_sum / est.n_comparison;
  return est;
}

CellEstimate att_gt_ols(const Panel& panel, const CohortMap& cohorts, const CellSpec& cell) {
  const int ci = cohorts.cohort_index(cell.g);
  if (ci < 0) throw InfeasibleError("att_gt_ols: no cohort adopts in period " + std::to_string(cell.g));

  long n_treated = 0, n_comparison = 0;
  for (int r : cohorts.members[ci]) {
    n_treated += panel.region_units_end(r) - panel.region_units_begin(r);
  }
  for (int r : cell.comparison) {
    n_comparison += panel.region_units_end(r) - panel.region_units_begin(r);
  }
  if (n_treated == 0 || n_comparison == 0) {
    throw InfeasibleError("att_gt_ols: cell " + cell_name(cell.g, cell.t) +
                          " has an empty treated or comparison group");
  }

  const long m = 2 * (n_treated + n_comparison);
  Eigen::MatrixXd X(m, 4);
  Eigen::VectorXd y(m);
  long row = 0;
  auto add_group = [&](const std::vector<int>& group, double treat) {
    for (int r : group) {
      for (int u = panel.region_units_begin(r); u < panel.region_units_end(r); ++u) {
        for (double post : {0.0, 1.0}) {
          const long period = post > 0.5 ? cell.t : cell.base;
          X(row, 0) = 1.0;
          X(row, 1) = post;
          X(row, 2) = treat;
          X(row, 3) = post * treat;
          y(row) = panel.outcome(u, static_cast<int>(period));
          ++row;
        }
      }
    }
  };
  add_group(cohorts.members[ci], 1.0);
  add_group(cell.comparison, 0.0);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 4) {
    throw InfeasibleError("att_gt_ols: singular design for cell " + cell_name(cell.g, cell.t));
  }
  const Eigen::VectorXd beta = qr.solve(y);

  CellEstimate est;
  est.g = cell.g;
  est.t = cell.t;
  est.base = cell.base;
  est.att = beta(3);
  est.n_treated = n_treated;
  est.n_comparison = n_comparison;
  return est;
}

std::vector<CellEstimate> estimate_cells(const Panel& panel, const CohortMap& cohorts,
                                         std::span<const CellSpec> cells) {
  std::vector<CellEstimate> out;
  out.reserve(cells.size());
  for (const auto& cell : cells) out.push_back(att_gt(panel, cohorts, cell));
  return out;
}

std::vector<CellEstimate> estimate_all_cells(const Panel& panel, const CohortMap& cohorts,
                                             ControlMode mode) {
  const CellPlan plan = feasible_cells(cohorts, panel, mode);
  return estimate_cells(panel, cohorts, plan.cells);
}

double twfe_beta(const Panel& panel, const CohortMap& cohorts) {
  const int T = panel.num_periods();
  const int n_units = panel.num_units();
  const size_t n = static_cast<size_t>(n_units) * T;

  std::vector<double> y(n), d(n);
  bool any_treated = false, any_control = false;
  for (int u = 0; u < n_units; ++u) {
    const long s = cohorts.first_treat[panel.region_of(u)];
    for (int t = 1; t <= T; ++t) {
      const size_t k = static_cast<size_t>(u) * T + (t - 1);
      y[k] = panel.outcome(u, t);
      d[k] = (s != 0 && t >= s) ? 1.0 : 0.0;
      (d[k] > 0.5 ? any_treated : any_control) = true;
    }
  }
  if (!any_treated || !any_control) {
    throw InfeasibleError("twfe_beta: treatment indicator is constant; no within variation");
  }

  // Alternate region and period demeaning of both columns until the applied
  // corrections fall below 1e-12. Region groups partition the rows, so the
  // grand mean is absorbed as well.
  const int R = panel.num_regions();
  std::vector<double> mean_y(std::max(R, T)), mean_d(std::max(R, T));
  double shift = 1.0;
  for (int pass = 0; pass < 100000 && shift > 1e-12; ++pass) {
    shift = 0.0;
    for (int r = 0; r < R; ++r) {
      double sy = 0.0, sd = 0.0;
      const size_t b = static_cast<size_t>(panel.region_units_begin(r)) * T;
      const size_t e = static_cast<size_t>(panel.region_units_end(r)) * T;
      for (size_t k = b; k < e; ++k) {
        sy += y[k];
        sd += d[k];
      }
      const double cnt = static_cast<double>(e - b);
      mean_y[r] = sy / cnt;
      mean_d[r] = sd / cnt;
      shift = std::max({shift, std::abs(mean_y[r]), std::abs(mean_d[r])});
      for (size_t k = b; k < e; ++k) {
        y[k] -= mean_y[r];
        d[k] -= mean_d[r];
      }
    }
    for (int t = 0; t < T; ++t) {
      double sy = 0.0, sd = 0.0;
      for (size_t u = 0; u < static_cast<size_t>(n_units); ++u) {
        sy += y[u * T + t];
        sd += d[u * T + t];
      }
      mean_y[t] = sy / n_units;
      mean_d[t] = sd / n_units;
      shift = std::max({shift, std::abs(mean_y[t]), std::abs(mean_d[t])});
      for (size_t u = 0; u < static_cast<size_t>(n_units); ++u) {
        y[u * T + t] -= mean_y[t];
        d[u * T + t] -= mean_d[t];
      }
    }
  }

  double num = 0.0, den = 0.0;
  for (size_t k = 0; k < n; ++k) {
    num += d[k] * y[k];
    den += d[k] * d[k];
  }
  if (den <= 1e-12 * static_cast<double>(n)) {
    throw InfeasibleError("twfe_beta: treatment is collinear with the fixed effects");
  }
  return num / den;
}

InfluenceMatrix influence_contributions(const Panel& panel, const CohortMap& cohorts,
                                        std::span<const CellSpec> cells) {
  InfluenceMatrix psi;
  psi.rows = panel.num_units();
  psi.cols = static_cast<long>(cells.size());
  psi.data.assign(static_cast<size_t>(psi.rows) * psi.cols, 0.0);

  const double n = static_cast<double>(panel.num_units());
  for (long j = 0; j < psi.cols; ++j) {
    const CellSpec& cell = cells[j];
    const int ci = cohorts.cohort_index(cell.g);
    if (ci < 0) {
      throw InfeasibleError("influence_contributions: no cohort adopts in period " +
                            std::to_string(cell.g));
    }
    double treat_sum = 0.0, comp_sum = 0.0;
    long n_treat = 0, n_comp = 0;
    for (int r : cohorts.members[ci]) {
      accumulate_region(panel, r, cell.t, cell.base, &treat_sum, &n_treat);
    }
    for (int r : cell.comparison) {
      accumulate_region(panel, r, cell.t, cell.base, &comp_sum, &n_comp);
    }
    if (n_treat == 0 || n_comp == 0) {
      throw InfeasibleError("influence_contributions: cell " + cell_name(cell.g, cell.t) +
                            " has an empty treated or comparison group");
    }
    const double treat_mean = treat_sum / n_treat;
    const double comp_mean = comp_sum / n_comp;
    const double w_treat = n / static_cast<double>(n_treat);
    const double w_comp = n / static_cast<double>(n_comp);
    for (int r : cohorts.members[ci]) {
      for (int u = panel.region_units_begin(r); u < panel.region_units_end(r); ++u) {
        const double dy = panel.outcome(u, static_cast<int>(cell.t)) -
                          panel.outcome(u, static_cast<int>(cell.base));
        psi.at(u, j) = w_treat * (dy - treat_mean);
      }
    }
    for (int r : cell.comparison) {
      for (int u = panel.region_units_begin(r); u < panel.region_units_end(r); ++u) {
        const double dy = panel.outcome(u, static_cast<int>(cell.t)) -
                          panel.outcome(u, static_cast<int>(cell.base));
        psi.at(u, j) = -w_comp * (dy - comp_mean);
      }
    }
  }
  return psi;
}

}  // namespace didkit
