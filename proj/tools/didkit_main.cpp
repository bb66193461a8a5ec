/*
 * didkit: batch CLI for staggered-adoption difference-in-differences.
 *
 * Subcommands:
 *   estimate   group-time ATT cells and the aggregate, optional inference
 *   jackknife  cluster-jackknife (CV3) inference plus the loo table
 *   bootstrap  clustered multiplier-bootstrap inference
 *   diagnose   leave-one-cluster-out influence profile
 *   simulate   placebo-law Monte Carlo rejection-frequency tables
 *
 * Exit codes: 0 success, 1 bad input or configuration, 2 the request is
 * valid but infeasible on this design.
 */

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include "didkit/aggregate.hpp"
#include "didkit/errors.hpp"
#include "didkit/inference.hpp"
#include "didkit/montecarlo.hpp"
#include "didkit/panel.hpp"
#include "didkit/report.hpp"
#include "didkit/rng.hpp"

namespace {

using namespace didkit;

struct DataArgs {
  std::string input;
  std::string unit_col = "unit";
  std::string region_col = "region";
  std::string time_col = "time";
  std::string outcome_col = "outcome";
  std::string gvar_col;
  std::string gvar_file;
  bool allow_gaps = false;
  bool demean = false;
  std::string control = "never";
  std::string agg = "simple";
  std::string format = "table";
  double alpha = 0.05;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

void add_schema_options(CLI::App* cmd, DataArgs* a) {
  cmd->add_option("--unit-col", a->unit_col, "Unit id column")->capture_default_str();
  cmd->add_option("--region-col", a->region_col, "Region (cluster) column")
      ->capture_default_str();
  cmd->add_option("--time-col", a->time_col, "Period column (integer labels)")
      ->capture_default_str();
  cmd->add_option("--outcome-col", a->outcome_col, "Outcome column")->capture_default_str();
  cmd->add_flag("--allow-gaps", a->allow_gaps,
                "Accept non-consecutive period labels and re-index them order-preservingly");
}

void add_data_options(CLI::App* cmd, DataArgs* a) {
  cmd->add_option("--input", a->input, "Long-format CSV panel")->required();
  add_schema_options(cmd, a);
  auto* col = cmd->add_option("--gvar-col", a->gvar_col,
                              "Column with the region's first treated period (0 = never)");
  cmd->add_option("--gvar-file", a->gvar_file,
                  "Two-column CSV region,first-treated-period instead of --gvar-col")
      ->excludes(col);
  cmd->add_option("--control", a->control, "Comparison group")
      ->check(CLI::IsMember({"never", "notyet"}))
      ->capture_default_str();
  cmd->add_option("--agg", a->agg, "Aggregation scheme")
      ->check(CLI::IsMember({"simple", "group", "calendar"}))
      ->capture_default_str();
  cmd->add_option("--alpha", a->alpha, "Test level for confidence intervals")
      ->capture_default_str();
  cmd->add_option("--format", a->format, "Output format")
      ->check(CLI::IsMember({"table", "json", "csv"}))
      ->capture_default_str();
  cmd->add_flag("--demean", a->demean, "Subtract region means from the outcome first");
  cmd->add_option("--seed", a->seed, "RNG seed (all randomness derives from it)")
      ->capture_default_str();
  cmd->add_option("--threads", a->threads, "Worker cap; results do not depend on it")
      ->capture_default_str();
}

ControlMode parse_control(const std::string& s) {
  return s == "notyet" ? ControlMode::not_yet_treated : ControlMode::never_treated;
}

Scheme parse_scheme(const std::string& s) {
  if (s == "group") return Scheme::group;
  if (s == "calendar") return Scheme::calendar;
  return Scheme::simple;
}

struct Inputs {
  Panel panel;
  CohortMap cohorts;
};

Inputs load_inputs(const DataArgs& a) {
  if (a.gvar_col.empty() && a.gvar_file.empty()) {
    throw ValidationError("provide --gvar-col or --gvar-file");
  }
  std::ifstream in(a.input);
  if (!in) throw ValidationError("cannot open input file '" + a.input + "'");

  PanelSchema schema;
  schema.unit_col = a.unit_col;
  schema.region_col = a.region_col;
  schema.time_col = a.time_col;
  schema.outcome_col = a.outcome_col;
  schema.gvar_col = a.gvar_col;
  schema.allow_gaps = a.allow_gaps;

  LoadedPanel loaded = load_panel(in, schema);
  std::map<std::string, long> gvar;
  if (!a.gvar_file.empty()) {
    std::ifstream gin(a.gvar_file);
    if (!gin) throw ValidationError("cannot open gvar file '" + a.gvar_file + "'");
    gvar = load_gvar_file(gin);
  } else {
    gvar = loaded.gvar;
  }

  Inputs inputs;
  inputs.panel = a.demean ? loaded.panel.demeaned_by_region() : loaded.panel;
  inputs.cohorts = assign_cohorts(inputs.panel, gvar);
  return inputs;
}

std::vector<int> region_cluster_map(const Panel& panel) {
  std::vector<int> cluster_of(panel.num_units());
  for (int u = 0; u < panel.num_units(); ++u) cluster_of[u] = panel.region_of(u);
  return cluster_of;
}

void emit(const std::string& text) { std::fputs(text.c_str(), stdout); }

void emit_json(nlohmann::json j) {
  j["schema_version"] = kSchemaVersion;
  emit(j.dump(2) + "\n");
}

int cmd_estimate(const DataArgs& a, const std::string& method, long B,
                 const std::string& law, bool strict) {
  const Inputs in = load_inputs(a);
  const EstimationSpec spec{parse_control(a.control), parse_scheme(a.agg)};
  const Estimation est = estimate_att(in.panel, in.cohorts, spec);

  nlohmann::json j{{"command", "estimate"},
                   {"estimation", estimation_json(in.panel, est)},
                   {"inference", nullptr}};
  std::string text = estimation_text(in.panel, est);
  std::string csv = estimation_csv(in.panel, est);

  if (!method.empty()) {
    InferenceResult res;
    if (method == "jackknife") {
      const JackknifeResult jack =
          cluster_jackknife(in.panel, in.cohorts, spec, a.alpha, strict, a.threads);
      res = jack.inference;
      j["loo"] = loo_json(jack.detail);
    } else {
      const InfluenceMatrix psi =
          influence_contributions(in.panel, in.cohorts, est.plan.cells);
      const auto cluster_of = region_cluster_map(in.panel);
      if (method == "bootstrap") {
        const BootstrapResult boot =
            multiplier_bootstrap(est.att, psi, cluster_of, B, a.seed, a.alpha,
                                 law == "rademacher" ? WeightLaw::rademacher
                                                     : WeightLaw::mammen,
                                 a.threads);
        res = boot.inference;
        j["bootstrap"] = bootstrap_detail_json(boot.detail);
      } else {
        res = asymptotic_inference(est.att, psi, cluster_of, a.alpha);
      }
    }
    j["inference"] = inference_json(res);
    text += "\n" + inference_text(res);
    csv += "\n" + inference_csv(res);
  }

  if (a.format == "json") {
    emit_json(j);
  } else if (a.format == "csv") {
    emit(csv);
  } else {
    emit(text);
  }
  return 0;
}

int cmd_bootstrap(const DataArgs& a, long B, const std::string& law) {
  const Inputs in = load_inputs(a);
  const EstimationSpec spec{parse_control(a.control), parse_scheme(a.agg)};
  const Estimation est = estimate_att(in.panel, in.cohorts, spec);
  const InfluenceMatrix psi = influence_contributions(in.panel, in.cohorts, est.plan.cells);
  const BootstrapResult boot = multiplier_bootstrap(
      est.att, psi, region_cluster_map(in.panel), B, a.seed, a.alpha,
      law == "rademacher" ? WeightLaw::rademacher : WeightLaw::mammen, a.threads);

  if (a.format == "json") {
    emit_json({{"command", "bootstrap"},
               {"inference", inference_json(boot.inference)},
               {"bootstrap", bootstrap_detail_json(boot.detail)}});
  } else if (a.format == "csv") {
    emit(inference_csv(boot.inference));
  } else {
    emit(inference_text(boot.inference));
  }
  return 0;
}

int cmd_jackknife(const DataArgs& a, bool strict, double k) {
  const Inputs in = load_inputs(a);
  const EstimationSpec spec{parse_control(a.control), parse_scheme(a.agg)};
  const JackknifeResult jack =
      cluster_jackknife(in.panel, in.cohorts, spec, a.alpha, strict, a.threads, k);

  if (a.format == "json") {
    emit_json({{"command", "jackknife"},
               {"inference", inference_json(jack.inference)},
               {"loo", loo_json(jack.detail)}});
  } else if (a.format == "csv") {
    emit(inference_csv(jack.inference) + "\n" + loo_csv(jack.detail));
  } else {
    emit(inference_text(jack.inference) + "\n" + loo_text(jack.detail));
  }
  return 0;
}

int cmd_diagnose(const DataArgs& a, double k) {
  const Inputs in = load_inputs(a);
  const EstimationSpec spec{parse_control(a.control), parse_scheme(a.agg)};
  const JackknifeDetail detail = loo_profile(in.panel, in.cohorts, spec, k, a.threads);

  if (a.format == "json") {
    emit_json({{"command", "diagnose"}, {"loo", loo_json(detail)}});
  } else if (a.format == "csv") {
    emit(loo_csv(detail));
  } else {
    emit(loo_text(detail));
  }
  return 0;
}

struct SimArgs {
  McConfig config;
  std::string grid;
  std::string source;
  DataArgs schema;  // only the column/gap flags are used for --source
  std::string out = "rejection";
};

int cmd_simulate(SimArgs& s) {
  if (!s.source.empty()) {
    std::ifstream in(s.source);
    if (!in) throw ValidationError("cannot open source panel '" + s.source + "'");
    PanelSchema schema;
    schema.unit_col = s.schema.unit_col;
    schema.region_col = s.schema.region_col;
    schema.time_col = s.schema.time_col;
    schema.outcome_col = s.schema.outcome_col;
    schema.allow_gaps = s.schema.allow_gaps;
    s.config.source_panel = load_panel(in, schema).panel;
  }

  const RejectionTable table =
      s.grid.empty()
          ? run_experiment(s.config)
          : run_grid(s.config, standard_grid());

  const std::string csv_path = s.out + ".csv";
  const std::string txt_path = s.out + ".txt";
  const std::string text = table.to_text();
  std::ofstream csv(csv_path);
  std::ofstream txt(txt_path);
  if (!csv || !txt) {
    throw ValidationError("cannot write output files '" + csv_path + "' / '" + txt_path + "'");
  }
  csv << table.to_csv();
  txt << text;
  emit(text);
  std::fprintf(stdout, "\nWrote %s and %s\n", csv_path.c_str(), txt_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staggered-adoption difference-in-differences with design-honest inference"};
  app.require_subcommand(1);

  DataArgs est_args, jack_args, boot_args, diag_args;
  std::string est_method;
  long est_B = 999, boot_B = 999;
  std::string est_law = "mammen", boot_law = "mammen";
  bool est_strict = false, jack_strict = false;
  double jack_k = 3.0, diag_k = 3.0;

  CLI::App* estimate = app.add_subcommand(
      "estimate", "Group-time ATT cells and their aggregate, with optional inference");
  add_data_options(estimate, &est_args);
  estimate->add_option("--method", est_method, "Attach an inference method to the aggregate")
      ->check(CLI::IsMember({"asymptotic", "bootstrap", "jackknife"}));
  estimate->add_option("--B", est_B, "Bootstrap draws (with --method bootstrap)")
      ->capture_default_str();
  estimate->add_option("--weight-law", est_law, "Multiplier law (with --method bootstrap)")
      ->check(CLI::IsMember({"mammen", "rademacher"}))
      ->capture_default_str();
  estimate->add_flag("--strict", est_strict,
                     "With --method jackknife: refuse replicates that lose cells");

  CLI::App* jackknife =
      app.add_subcommand("jackknife", "Cluster-jackknife (CV3) inference and loo profile");
  add_data_options(jackknife, &jack_args);
  jackknife->add_flag("--strict", jack_strict,
                      "Abort when any leave-one-out replicate loses (g,t) cells");
  jackknife->add_option("--k", jack_k, "Influence flag threshold in CV3 se units")
      ->capture_default_str();

  CLI::App* bootstrap =
      app.add_subcommand("bootstrap", "Clustered multiplier-bootstrap inference");
  add_data_options(bootstrap, &boot_args);
  bootstrap->add_option("--B", boot_B, "Bootstrap draws")->capture_default_str();
  bootstrap->add_option("--weight-law", boot_law, "Multiplier law")
      ->check(CLI::IsMember({"mammen", "rademacher"}))
      ->capture_default_str();

  CLI::App* diagnose =
      app.add_subcommand("diagnose", "Leave-one-cluster-out influence profile");
  add_data_options(diagnose, &diag_args);
  diagnose->add_option("--k", diag_k, "Influence flag threshold in CV3 se units")
      ->capture_default_str();

  SimArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Placebo-law Monte Carlo: rejection frequencies for all three methods");
  simulate->add_option("--R", sim.config.R, "Regions per replication")->capture_default_str();
  simulate->add_option("--J", sim.config.J, "Early adopters")->capture_default_str();
  simulate->add_option("--L", sim.config.L, "Late adopters (default: same as J)");
  simulate->add_option("--T", sim.config.T, "Periods per replication")->capture_default_str();
  simulate->add_option("--early", sim.config.early_year, "Early adoption period")
      ->capture_default_str();
  simulate->add_option("--late", sim.config.late_year, "Late adoption period")
      ->capture_default_str();
  simulate->add_option("--reps", sim.config.replications, "Replications per cell")
      ->capture_default_str();
  simulate->add_option("--level", sim.config.level, "Test level")->capture_default_str();
  simulate->add_option("--B", sim.config.bootstrap_B, "Bootstrap draws per replication")
      ->capture_default_str();
  simulate->add_option("--seed", sim.config.seed, "RNG seed")->capture_default_str();
  simulate->add_option("--threads", sim.config.threads, "Worker cap; results do not depend on it")
      ->capture_default_str();
  simulate->add_option("--grid", sim.grid, "Run a preset (R, J=L) grid instead of one cell")
      ->check(CLI::IsMember({"paper"}));
  std::string sim_agg = "simple", sim_control = "never";
  simulate->add_option("--agg", sim_agg, "Aggregation scheme inside each replication")
      ->check(CLI::IsMember({"simple", "group", "calendar"}))
      ->capture_default_str();
  simulate->add_option("--control", sim_control, "Comparison group inside each replication")
      ->check(CLI::IsMember({"never", "notyet"}))
      ->capture_default_str();
  simulate->add_option("--units", sim.config.dgp.units_per_region_period,
                       "Units per region and period (synthetic DGP)")
      ->capture_default_str();
  simulate->add_option("--region-sd", sim.config.dgp.region_effect_sd, "Region effect sd")
      ->capture_default_str();
  simulate->add_option("--period-sd", sim.config.dgp.period_effect_sd, "Period effect sd")
      ->capture_default_str();
  simulate->add_option("--shock-sd", sim.config.dgp.cluster_shock_sd,
                       "Marginal sd of the AR(1) region-period shock")
      ->capture_default_str();
  simulate->add_option("--rho", sim.config.dgp.ar1_rho, "AR(1) serial correlation in [0,1)")
      ->capture_default_str();
  simulate->add_option("--idio-sd", sim.config.dgp.idiosyncratic_sd, "Unit-period noise sd")
      ->capture_default_str();
  simulate->add_option("--source", sim.source,
                       "Subsample replications from this CSV panel instead of the synthetic DGP");
  add_schema_options(simulate, &sim.schema);
  simulate->add_flag("--demean,!--no-demean", sim.config.demean,
                     "Region-demean outcomes before estimating (default on)");
  simulate->add_option("--out", sim.out, "Output path prefix for .csv and .txt files")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*estimate) {
      return cmd_estimate(est_args, est_method, est_B, est_law, est_strict);
    }
    if (*jackknife) return cmd_jackknife(jack_args, jack_strict, jack_k);
    if (*bootstrap) return cmd_bootstrap(boot_args, boot_B, boot_law);
    if (*diagnose) return cmd_diagnose(diag_args, diag_k);
    if (*simulate) {
      sim.config.scheme = parse_scheme(sim_agg);
      sim.config.control = parse_control(sim_control);
      return cmd_simulate(sim);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
