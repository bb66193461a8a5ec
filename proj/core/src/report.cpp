#include "didkit/report.hpp"

#include <cstdio>

namespace didkit {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fixed(double v, int width = 12, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%*.*f", width, prec, v);
  return buf;
}

std::string cells_suffix(const std::vector<std::pair<long, long>>& cells) {
  std::string out;
  for (const auto& [g, t] : cells) {
    out += (out.empty() ? "" : " ");
    out += "(" + std::to_string(g) + "," + std::to_string(t) + ")";
  }
  return out;
}

}  // namespace

std::string estimation_text(const Panel& panel, const Estimation& est) {
  const AttResult& att = est.att;
  std::string out = "Group-time ATT estimates (control: ";
  out += to_string(att.control);
  out += ", aggregation: ";
  out += to_string(att.scheme);
  out += ")\n\n";
  out += "       g       t    base          ATT    n_treated    n_comparison      weight\n";
  char buf[160];
  for (size_t k = 0; k < att.cells.size(); ++k) {
    const CellEstimate& c = att.cells[k];
    std::snprintf(buf, sizeof(buf), "%8ld%8ld%8ld %12.6f %12ld %15ld %11.6f\n",
                  panel.period_label(static_cast<int>(c.g)),
                  panel.period_label(static_cast<int>(c.t)),
                  panel.period_label(static_cast<int>(c.base)), c.att, c.n_treated,
                  c.n_comparison, att.weights[k]);
    out += buf;
  }
  if (!att.level_means.empty()) {
    out += "\n";
    out += att.scheme == Scheme::group ? "Cohort means\n" : "Period means\n";
    for (const auto& [key, mean] : att.level_means) {
      std::snprintf(buf, sizeof(buf), "%8ld %12.6f\n",
                    panel.period_label(static_cast<int>(key)), mean);
      out += buf;
    }
  }
  for (const auto& skip : est.plan.skipped) {
    std::snprintf(buf, sizeof(buf), "Skipped cell (%ld,%ld): %s\n",
                  panel.period_label(static_cast<int>(skip.g)),
                  panel.period_label(static_cast<int>(skip.t)), skip.reason.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "\nAggregate ATT: %.6f  (%zu cells)\n", att.value,
                att.cells.size());
  out += buf;
  return out;
}

std::string estimation_csv(const Panel& panel, const Estimation& est) {
  const AttResult& att = est.att;
  std::string out = "kind,g,t,base,att,n_treated,n_comparison,weight\n";
  for (size_t k = 0; k < att.cells.size(); ++k) {
    const CellEstimate& c = att.cells[k];
    out += "cell," + std::to_string(panel.period_label(static_cast<int>(c.g))) + "," +
           std::to_string(panel.period_label(static_cast<int>(c.t))) + "," +
           std::to_string(panel.period_label(static_cast<int>(c.base))) + "," +
           num(c.att) + "," + std::to_string(c.n_treated) + "," +
           std::to_string(c.n_comparison) + "," + num(att.weights[k]) + "\n";
  }
  out += "aggregate,,,," + num(att.value) + ",,,1\n";
  return out;
}

nlohmann::json estimation_json(const Panel& panel, const Estimation& est) {
  const AttResult& att = est.att;
  nlohmann::json cells = nlohmann::json::array();
  for (size_t k = 0; k < att.cells.size(); ++k) {
    const CellEstimate& c = att.cells[k];
    cells.push_back({{"g", panel.period_label(static_cast<int>(c.g))},
                     {"t", panel.period_label(static_cast<int>(c.t))},
                     {"base", panel.period_label(static_cast<int>(c.base))},
                     {"att", c.att},
                     {"n_treated", c.n_treated},
                     {"n_comparison", c.n_comparison},
                     {"weight", att.weights[k]}});
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& skip : est.plan.skipped) {
    skipped.push_back({{"g", panel.period_label(static_cast<int>(skip.g))},
                       {"t", panel.period_label(static_cast<int>(skip.t))},
                       {"reason", skip.reason}});
  }
  nlohmann::json level_means = nlohmann::json::array();
  for (const auto& [key, mean] : att.level_means) {
    level_means.push_back(
        {{att.scheme == Scheme::group ? "g" : "t", panel.period_label(static_cast<int>(key))},
         {"att", mean}});
  }
  return {{"control", to_string(att.control)},
          {"aggregation", to_string(att.scheme)},
          {"cells", cells},
          {"skipped", skipped},
          {"level_means", level_means},
          {"att", att.value}};
}

std::string inference_text(const InferenceResult& res) {
  std::string out =
      "Method             estimate           se    statistic      p_value     ci_lower"
      "     ci_upper\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-12s %12.6f %12.6f %12.6f %12.6f %12.6f %12.6f\n",
                to_string(res.method), res.estimate, res.se, res.statistic, res.p_value,
                res.ci_lower, res.ci_upper);
  out += buf;
  const std::string df_note = res.df > 0 ? "(" + std::to_string(res.df) + ")" : "";
  std::snprintf(buf, sizeof(buf), "Reference: %s%s, alpha = %g%s\n", res.reference.c_str(),
                df_note.c_str(), res.alpha,
                res.degenerate ? "  [degenerate: zero variance]" : "");
  out += buf;
  return out;
}

std::string inference_csv(const InferenceResult& res) {
  std::string out =
      "kind,method,estimate,se,statistic,p_value,ci_lower,ci_upper,reference,df,alpha,"
      "degenerate\n";
  out += std::string("inference,") + to_string(res.method) + "," + num(res.estimate) + "," +
         num(res.se) + "," + num(res.statistic) + "," + num(res.p_value) + "," +
         num(res.ci_lower) + "," + num(res.ci_upper) + "," + res.reference + "," +
         std::to_string(res.df) + "," + num(res.alpha) + "," +
         (res.degenerate ? "true" : "false") + "\n";
  return out;
}

nlohmann::json inference_json(const InferenceResult& res) {
  return {{"method", to_string(res.method)},
          {"estimate", res.estimate},
          {"se", res.se},
          {"statistic", res.statistic},
          {"p_value", res.p_value},
          {"ci_lower", res.ci_lower},
          {"ci_upper", res.ci_upper},
          {"alpha", res.alpha},
          {"reference", res.reference},
          {"df", res.df},
          {"degenerate", res.degenerate}};
}

std::string loo_text(const JackknifeDetail& detail) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "Leave-one-cluster-out profile (H = %d, full ATT = %.6f, k = %g)\n",
                detail.H, detail.full_estimate, detail.k_threshold);
  out += buf;
  out += "cluster                treated        size      loo_att   flag  dropped_cells\n";
  for (const auto& row : detail.clusters) {
    std::snprintf(buf, sizeof(buf), "%-22s %7s %11ld %s %6s  %s\n", row.region.c_str(),
                  row.treated ? "yes" : "no", row.size, fixed(row.estimate).c_str(),
                  row.flagged ? "FLAG" : "-", cells_suffix(row.dropped_cells).c_str());
    out += buf;
  }
  return out;
}

std::string loo_csv(const JackknifeDetail& detail) {
  std::string out = "kind,cluster,treated,size,loo_att,flagged,dropped_cells\n";
  for (const auto& row : detail.clusters) {
    std::string cells;
    for (const auto& [g, t] : row.dropped_cells) {
      cells += (cells.empty() ? "" : ";") + std::to_string(g) + ":" + std::to_string(t);
    }
    out += "loo," + row.region + "," + (row.treated ? "true" : "false") + "," +
           std::to_string(row.size) + "," + num(row.estimate) + "," +
           (row.flagged ? "true" : "false") + "," + cells + "\n";
  }
  return out;
}

nlohmann::json loo_json(const JackknifeDetail& detail) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& row : detail.clusters) {
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& [g, t] : row.dropped_cells) dropped.push_back({{"g", g}, {"t", t}});
    clusters.push_back({{"cluster", row.region},
                         {"treated", row.treated},
                         {"size", row.size},
                         {"loo_att", row.estimate},
                         {"flagged", row.flagged},
                         {"dropped_cells", dropped}});
  }
  return {{"H", detail.H},
          {"full_att", detail.full_estimate},
          {"cv3_se", detail.cv3_se},
          {"k_threshold", detail.k_threshold},
          {"clusters", clusters}};
}

nlohmann::json bootstrap_detail_json(const BootstrapDetail& detail) {
  return {{"B", detail.B},
          {"seed", detail.seed},
          {"law", to_string(detail.law)}};
}

}  // namespace didkit
