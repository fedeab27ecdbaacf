#pragma once

// JSON, JSON Lines and CSV formats for models, traces, decisions and
// experiment configuration.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "enel/bell.hpp"
#include "enel/encoding.hpp"
#include "enel/harness.hpp"
#include "enel/model.hpp"

namespace enel {

using Json = nlohmann::json;

Json to_json(const AutoencoderParams& params);
AutoencoderParams autoencoder_from_json(const Json& j);

/// autoencoder_ref names the autoencoder file the contexts were built with.
Json to_json(const EnelModel& model, const std::string& autoencoder_ref = "");
EnelModel model_from_json(const Json& j);

/// {kind, theta} for parametric models, {kind, samples: [[s, runtime], ...]}
/// for nonparametric ones.
Json to_json(const BellModel& model);
BellModel bell_from_json(const Json& j);

Json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults. Throws ConfigError on bad values.
ExperimentConfig experiment_config_from_json(const Json& j);

Json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const Json& j);

Json to_json(const DecisionRecord& record);
DecisionRecord decision_from_json(const Json& j);

/// One record per task node.
void write_trace_jsonl(std::ostream& out, const JobExecution& job);
/// Rebuilds jobs from node records, grouped by run_id in order of first
/// appearance. Context vectors are not stored and come back empty.
std::vector<JobExecution> read_trace_jsonl(std::istream& in);

void write_loss_csv(std::ostream& out, std::span<const LossRecord> curve);

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace enel
