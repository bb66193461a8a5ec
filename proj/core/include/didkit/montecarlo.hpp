#pragma once

/*
 * Placebo-law Monte Carlo harness.
 *
 * Each replication draws a panel (synthetic, or a subsample of a supplied
 * source panel), assigns J early and L late placebo adopters uniformly at
 * random, estimates the aggregated ATT, and tests ATT = 0 at the given level
 * with all three inference procedures. Because the laws are placebo, every
 * rejection is a false positive; the reported frequencies estimate each
 * procedure's true size.
 *
 * Replications are paired: replication k uses the same panel and assignment
 * draw for every method, so differences between columns are not Monte Carlo
 * noise. All randomness is counter-based on (seed, replication), making the
 * table invariant to the thread count.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "didkit/aggregate.hpp"
#include "didkit/panel.hpp"
#include "didkit/rng.hpp"

namespace didkit {

struct DgpConfig {
  long units_per_region_period = 40;
  double region_effect_sd = 0.5;   // lambda_r, constant within region
  double period_effect_sd = 0.5;   // delta_t, common across regions
  double cluster_shock_sd = 1.0;   // marginal sd of the AR(1) region-period shock
  double ar1_rho = 0.5;            // serial correlation of that shock
  double idiosyncratic_sd = 1.0;   // unit-period noise
};

// Y_{irt} = lambda_r + delta_t + u_{rt} + eps_{irt}, u an AR(1) within
// region with the stated marginal sd. Deterministic in (dgp, R, T, rng key).
Panel synth_panel(const DgpConfig& dgp, int R, int T, const CounterRng& rng);

// Draws J early and L late adopters uniformly without replacement and
// returns the full gvar map (every other region 0). Requires J + L <= R - 1.
std::map<std::string, long> placebo_assign(const std::vector<std::string>& regions, long J,
                                           long L, long early_year, long late_year,
                                           CounterRng rng);

// A uniformly chosen run of window_len consecutive periods and a uniform
// subset of n_regions regions from the source panel. Periods are re-labeled
// 1..window_len.
Panel subsample_window(const Panel& source, int window_len, int n_regions, CounterRng rng);

struct McConfig {
  int R = 8;   // regions per replication
  int J = 1;   // early adopters
  int L = -1;  // late adopters; negative means "same as J"
  int T = 8;
  long early_year = 4;
  long late_year = 6;
  long replications = 500;
  double level = 0.05;
  long bootstrap_B = 999;
  std::uint64_t seed = kDefaultSeed;
  bool demean = true;  // region-demean outcomes before estimating
  Scheme scheme = Scheme::simple;
  ControlMode control = ControlMode::never_treated;
  int threads = 1;
  // Synthetic DGP by default; set source_panel to subsample a real panel
  // instead (it must have at least T periods and R regions).
  DgpConfig dgp;
  std::optional<Panel> source_panel;
};

struct MethodCount {
  long rejections = 0;
  long completed = 0;
  double frequency() const {
    return completed > 0 ? static_cast<double>(rejections) / static_cast<double>(completed) : 0.0;
  }
  // Binomial Monte Carlo standard error of the frequency.
  double mc_se() const;
};

struct RejectionRow {
  int R = 0;
  int J = 0;
  int L = 0;
  long replications = 0;
  MethodCount asymptotic;
  MethodCount bootstrap;
  MethodCount jackknife;
  long jackknife_failed = 0;   // replications where the jackknife aborted
  long estimation_failed = 0;  // replications where estimation itself failed
};

struct RejectionTable {
  double level = 0.05;
  long replications = 0;
  std::uint64_t seed = kDefaultSeed;
  std::vector<RejectionRow> rows;

  std::string to_csv() const;
  // One panel of J-by-R rejection frequencies per method, plus a failure
  // panel when any replication aborted.
  std::string to_text() const;
};

// Runs one (R, J, L) configuration and returns a one-row table.
RejectionTable run_experiment(const McConfig& config);

// Runs several configurations that share level/replications/seed and stacks
// the rows.
RejectionTable run_grid(const McConfig& base, const std::vector<std::tuple<int, int, int>>& rjl);

// The (R, J) grid used by the headline size experiments: J = L, J ranging
// over 1..12 with the region count large enough to leave controls.
std::vector<std::tuple<int, int, int>> standard_grid();

}  // namespace didkit
