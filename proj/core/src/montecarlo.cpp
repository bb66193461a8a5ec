#include "didkit/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "didkit/detail/parallel.hpp"
#include "didkit/errors.hpp"
#include "didkit/inference.hpp"

namespace didkit {

namespace {

void validate_dgp(const DgpConfig& dgp) {
  if (dgp.units_per_region_period < 1) {
    throw ValidationError("dgp: units_per_region_period must be positive");
  }
  for (double sd : {dgp.region_effect_sd, dgp.period_effect_sd, dgp.cluster_shock_sd,
                    dgp.idiosyncratic_sd}) {
    if (!(sd >= 0.0)) throw ValidationError("dgp: standard deviations must be >= 0");
  }
  if (!(dgp.ar1_rho >= 0.0) || dgp.ar1_rho >= 1.0) {
    throw ValidationError("dgp: ar1_rho must lie in [0, 1)");
  }
}

std::string padded_name(const char* prefix, long i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*ld", prefix, width, i);
  return buf;
}

double fmt_freq_or_nan(const MethodCount& m) {
  return m.completed > 0 ? m.frequency() : std::nan("");
}

}  // namespace

double MethodCount::mc_se() const {
  if (completed <= 0) return 0.0;
  const double p = frequency();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(completed));
}

Panel synth_panel(const DgpConfig& dgp, int R, int T, const CounterRng& rng) {
  validate_dgp(dgp);
  if (R < 1 || T < 1) throw ValidationError("dgp: R and T must be positive");

  const CounterRng region_stream = rng.derive(1);
  const CounterRng period_stream = rng.derive(2);
  const CounterRng shock_stream = rng.derive(3);
  const CounterRng noise_stream = rng.derive(4);

  std::vector<double> lambda(R), delta(T);
  for (int r = 0; r < R; ++r) {
    lambda[r] = dgp.region_effect_sd * region_stream.normal_at(r);
  }
  for (int t = 0; t < T; ++t) {
    delta[t] = dgp.period_effect_sd * period_stream.normal_at(t);
  }

  // Region-period shock: stationary AR(1) with marginal sd cluster_shock_sd.
  std::vector<double> u(static_cast<size_t>(R) * T);
  const double rho = dgp.ar1_rho;
  const double innov = dgp.cluster_shock_sd * std::sqrt(1.0 - rho * rho);
  for (int r = 0; r < R; ++r) {
    double prev = dgp.cluster_shock_sd * shock_stream.normal_at(static_cast<size_t>(r) * T);
    u[static_cast<size_t>(r) * T] = prev;
    for (int t = 1; t < T; ++t) {
      prev = rho * prev + innov * shock_stream.normal_at(static_cast<size_t>(r) * T + t);
      u[static_cast<size_t>(r) * T + t] = prev;
    }
  }

  const long upr = dgp.units_per_region_period;
  std::vector<std::string> names;
  names.reserve(R);
  for (int r = 0; r < R; ++r) names.push_back(padded_name("r", r + 1, 4));

  std::vector<long> labels(T);
  std::iota(labels.begin(), labels.end(), 1);

  std::vector<double> y(static_cast<size_t>(R) * upr * T);
  size_t k = 0;
  for (int r = 0; r < R; ++r) {
    for (long i = 0; i < upr; ++i) {
      const std::uint64_t unit_base =
          (static_cast<std::uint64_t>(r) * upr + static_cast<std::uint64_t>(i)) * T;
      for (int t = 0; t < T; ++t, ++k) {
        y[k] = lambda[r] + delta[t] + u[static_cast<size_t>(r) * T + t] +
               dgp.idiosyncratic_sd * noise_stream.normal_at(unit_base + t);
      }
    }
  }
  return Panel::balanced(std::move(names), upr, std::move(labels), std::move(y));
}

std::map<std::string, long> placebo_assign(const std::vector<std::string>& regions, long J,
                                           long L, long early_year, long late_year,
                                           CounterRng rng) {
  const long R = static_cast<long>(regions.size());
  if (J < 0 || L < 0) throw ValidationError("placebo_assign: J and L must be >= 0");
  if (J + L > R - 1) {
    throw ValidationError("placebo_assign: J + L = " + std::to_string(J + L) +
                          " leaves no untreated region out of " + std::to_string(R));
  }
  // Partial Fisher-Yates: the first J+L slots are a uniform draw without
  // replacement.
  std::vector<long> idx(R);
  std::iota(idx.begin(), idx.end(), 0);
  for (long i = 0; i < J + L; ++i) {
    const long j = i + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(R - i)));
    std::swap(idx[i], idx[j]);
  }
  std::map<std::string, long> gvar;
  for (const auto& name : regions) gvar[name] = 0;
  for (long i = 0; i < J; ++i) gvar[regions[idx[i]]] = early_year;
  for (long i = J; i < J + L; ++i) gvar[regions[idx[i]]] = late_year;
  return gvar;
}

Panel subsample_window(const Panel& source, int window_len, int n_regions, CounterRng rng) {
  const int T = source.num_periods();
  const int R = source.num_regions();
  if (window_len < 1 || window_len > T) {
    throw ValidationError("subsample_window: source has " + std::to_string(T) +
                          " periods, cannot take a window of " + std::to_string(window_len));
  }
  if (n_regions < 1 || n_regions > R) {
    throw ValidationError("subsample_window: source has " + std::to_string(R) +
                          " regions, cannot sample " + std::to_string(n_regions));
  }
  const int start = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(T - window_len + 1)));
  std::vector<int> idx(R);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n_regions; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(R - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> chosen(idx.begin(), idx.begin() + n_regions);
  std::sort(chosen.begin(), chosen.end());
  return source.subset(chosen, start, window_len);
}

namespace {

struct RepOutcome {
  bool estimated = false;
  bool reject_asymptotic = false;
  bool reject_bootstrap = false;
  bool jackknife_done = false;
  bool reject_jackknife = false;
};

void validate_config(const McConfig& config, long L) {
  if (config.R < 2) throw ValidationError("simulate: R must be at least 2");
  if (config.J < 0 || L < 0) throw ValidationError("simulate: J and L must be >= 0");
  if (config.J + L >= config.R) {
    throw ValidationError("simulate: J + L = " + std::to_string(config.J + L) +
                          " must be smaller than R = " + std::to_string(config.R) +
                          " so untreated regions remain");
  }
  if (config.T < 2) throw ValidationError("simulate: T must be at least 2");
  if (config.early_year < 2) {
    throw ValidationError("simulate: early_year must be at least 2 (a base period must exist)");
  }
  if (config.late_year <= config.early_year || config.late_year > config.T) {
    throw ValidationError("simulate: need early_year < late_year <= T");
  }
  if (config.replications < 1) throw ValidationError("simulate: replications must be positive");
  if (!(config.level > 0.0) || config.level > 1.0) {
    throw ValidationError("simulate: level must be in (0, 1]");
  }
  if (config.source_panel) {
    if (config.source_panel->num_periods() < config.T) {
      throw ValidationError("simulate: source panel has fewer than T periods");
    }
    if (config.source_panel->num_regions() < config.R) {
      throw ValidationError("simulate: source panel has fewer than R regions");
    }
  } else {
    validate_dgp(config.dgp);
  }
}

}  // namespace

RejectionTable run_experiment(const McConfig& config) {
  const long L = config.L < 0 ? config.J : config.L;
  validate_config(config, L);

  const EstimationSpec spec{config.control, config.scheme};
  std::vector<RepOutcome> outcomes(config.replications);

  detail::parallel_for(config.replications, config.threads, [&](long rep) {
    const CounterRng rep_rng =
        CounterRng::keyed({config.seed, 0x5eed, static_cast<std::uint64_t>(rep)});
    RepOutcome& out = outcomes[rep];

    Panel panel = config.source_panel
                      ? subsample_window(*config.source_panel, config.T, config.R,
                                         rep_rng.derive(1))
                      : synth_panel(config.dgp, config.R, config.T, rep_rng.derive(1));
    const auto gvar = placebo_assign(panel.regions(), config.J, L, config.early_year,
                                     config.late_year, rep_rng.derive(2));
    if (config.demean) panel = panel.demeaned_by_region();

    const CohortMap cohorts = assign_cohorts(panel, gvar);
    Estimation est;
    try {
      est = estimate_att(panel, cohorts, spec);
    } catch (const InfeasibleError&) {
      return;  // recorded as estimation_failed
    }
    out.estimated = true;

    const InfluenceMatrix psi = influence_contributions(panel, cohorts, est.plan.cells);
    std::vector<int> cluster_of(panel.num_units());
    for (int u = 0; u < panel.num_units(); ++u) cluster_of[u] = panel.region_of(u);

    const InferenceResult asym =
        asymptotic_inference(est.att, psi, cluster_of, config.level);
    out.reject_asymptotic = asym.p_value <= config.level;

    const BootstrapResult boot = multiplier_bootstrap(
        est.att, psi, cluster_of, config.bootstrap_B,
        CounterRng::keyed({config.seed, 0xb00, static_cast<std::uint64_t>(rep)}).key(),
        config.level, WeightLaw::mammen, 1);
    out.reject_bootstrap =
        0.0 < boot.inference.ci_lower || 0.0 > boot.inference.ci_upper;

    try {
      const JackknifeResult jack =
          cluster_jackknife(panel, cohorts, spec, config.level, false, 1);
      out.jackknife_done = true;
      out.reject_jackknife = jack.inference.p_value <= config.level;
    } catch (const InfeasibleError&) {
      // counted as jackknife_failed
    }
  });

  RejectionRow row;
  row.R = config.R;
  row.J = config.J;
  row.L = static_cast<int>(L);
  row.replications = config.replications;
  for (const auto& out : outcomes) {
    if (!out.estimated) {
      ++row.estimation_failed;
      continue;
    }
    ++row.asymptotic.completed;
    row.asymptotic.rejections += out.reject_asymptotic ? 1 : 0;
    ++row.bootstrap.completed;
    row.bootstrap.rejections += out.reject_bootstrap ? 1 : 0;
    if (out.jackknife_done) {
      ++row.jackknife.completed;
      row.jackknife.rejections += out.reject_jackknife ? 1 : 0;
    } else {
      ++row.jackknife_failed;
    }
  }

  RejectionTable table;
  table.level = config.level;
  table.replications = config.replications;
  table.seed = config.seed;
  table.rows.push_back(row);
  return table;
}

RejectionTable run_grid(const McConfig& base,
                        const std::vector<std::tuple<int, int, int>>& rjl) {
  RejectionTable table;
  table.level = base.level;
  table.replications = base.replications;
  table.seed = base.seed;
  for (const auto& [R, J, L] : rjl) {
    McConfig config = base;
    config.R = R;
    config.J = J;
    config.L = L;
    const RejectionTable one = run_experiment(config);
    table.rows.push_back(one.rows.front());
  }
  return table;
}

std::vector<std::tuple<int, int, int>> standard_grid() {
  std::vector<std::tuple<int, int, int>> grid;
  const int region_counts[] = {8, 16, 24, 32};
  const int adopter_counts[] = {1, 2, 3, 4, 6, 8, 10, 12};
  for (int j : adopter_counts) {
    for (int r : region_counts) {
      if (2 * j >= r) continue;  // no controls would remain
      // The study grid thins out as J grows: drop (J, R) pairs below the
      // diagonal kept in the headline experiments.
      if (j == 4 && r < 16) continue;
      if ((j == 6 || j == 8) && r < 24) continue;
      if (j >= 10 && r < 32) continue;
      grid.emplace_back(r, j, j);
    }
  }
  return grid;
}

std::string RejectionTable::to_csv() const {
  std::string out =
      "R,J,L,replications,method,completed,rejections,frequency,mc_se,failed\n";
  char buf[256];
  for (const auto& row : rows) {
    const struct {
      const char* name;
      const MethodCount* m;
      long failed;
    } methods[] = {
        {"asymptotic", &row.asymptotic, row.estimation_failed},
        {"bootstrap", &row.bootstrap, row.estimation_failed},
        {"jackknife", &row.jackknife, row.estimation_failed + row.jackknife_failed},
    };
    for (const auto& entry : methods) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%ld,%s,%ld,%ld,%.6f,%.6f,%ld\n", row.R,
                    row.J, row.L, row.replications, entry.name, entry.m->completed,
                    entry.m->rejections, entry.m->frequency(), entry.m->mc_se(),
                    entry.failed);
      out += buf;
    }
  }
  return out;
}

std::string RejectionTable::to_text() const {
  // Panel layout: rows J=L, columns R, one panel per method.
  std::vector<int> r_values, j_values;
  for (const auto& row : rows) {
    if (std::find(r_values.begin(), r_values.end(), row.R) == r_values.end()) {
      r_values.push_back(row.R);
    }
    if (std::find(j_values.begin(), j_values.end(), row.J) == j_values.end()) {
      j_values.push_back(row.J);
    }
  }
  std::sort(r_values.begin(), r_values.end());
  std::sort(j_values.begin(), j_values.end());

  auto find_row = [&](int r, int j) -> const RejectionRow* {
    for (const auto& row : rows) {
      if (row.R == r && row.J == j) return &row;
    }
    return nullptr;
  };

  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "Rejection frequencies at level %.2f (%ld replications, seed %llu)\n", level,
                replications, static_cast<unsigned long long>(seed));
  out += buf;

  const struct {
    const char* title;
    const MethodCount RejectionRow::* member;
  } panels[] = {
      {"Panel A: asymptotic", &RejectionRow::asymptotic},
      {"Panel B: multiplier bootstrap", &RejectionRow::bootstrap},
      {"Panel C: cluster jackknife (CV3)", &RejectionRow::jackknife},
  };
  for (const auto& panel : panels) {
    out += "\n";
    out += panel.title;
    out += "\n      ";
    for (int r : r_values) {
      std::snprintf(buf, sizeof(buf), "    R=%-4d", r);
      out += buf;
    }
    out += "\n";
    for (int j : j_values) {
      std::snprintf(buf, sizeof(buf), "J=%-4d", j);
      out += buf;
      for (int r : r_values) {
        const RejectionRow* row = find_row(r, j);
        if (row == nullptr) {
          out += "         .";
        } else {
          const double f = fmt_freq_or_nan(row->*(panel.member));
          if (std::isnan(f)) {
            out += "         -";
          } else {
            std::snprintf(buf, sizeof(buf), "    %.4f", f);
            out += buf;
          }
        }
      }
      out += "\n";
    }
  }

  long total_failed = 0;
  for (const auto& row : rows) total_failed += row.jackknife_failed + row.estimation_failed;
  if (total_failed > 0) {
    out += "\nFailed replications (jackknife aborts + estimation failures)\n      ";
    for (int r : r_values) {
      std::snprintf(buf, sizeof(buf), "    R=%-4d", r);
      out += buf;
    }
    out += "\n";
    for (int j : j_values) {
      std::snprintf(buf, sizeof(buf), "J=%-4d", j);
      out += buf;
      for (int r : r_values) {
        const RejectionRow* row = find_row(r, j);
        if (row == nullptr) {
          out += "         .";
        } else {
          std::snprintf(buf, sizeof(buf), "    %6ld",
                        row->jackknife_failed + row->estimation_failed);
          out += buf;
        }
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace didkit
