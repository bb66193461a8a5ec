#pragma once

/*
 * Rendering of estimation and inference results as text tables, CSV and
 * JSON. All numeric formatting is fixed-width printf-based so identical
 * results render to identical bytes.
 */

#include <nlohmann/json.hpp>
#include <string>

#include "didkit/aggregate.hpp"
#include "didkit/inference.hpp"
#include "didkit/panel.hpp"

namespace didkit {

inline constexpr int kSchemaVersion = 1;

// Group-time cells and the aggregate. The panel maps normalized periods back
// to their raw labels for display.
std::string estimation_text(const Panel& panel, const Estimation& est);
std::string estimation_csv(const Panel& panel, const Estimation& est);
nlohmann::json estimation_json(const Panel& panel, const Estimation& est);

std::string inference_text(const InferenceResult& res);
std::string inference_csv(const InferenceResult& res);
nlohmann::json inference_json(const InferenceResult& res);

std::string loo_text(const JackknifeDetail& detail);
std::string loo_csv(const JackknifeDetail& detail);
nlohmann::json loo_json(const JackknifeDetail& detail);

nlohmann::json bootstrap_detail_json(const BootstrapDetail& detail);

}  // namespace didkit
