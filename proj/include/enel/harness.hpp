#pragma once

// Experiment protocol: profiling runs at a scale-out sweep, then adaptive
// runs under each configured controller, with optional failure phases.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "enel/controller.hpp"
#include "enel/encoding.hpp"
#include "enel/model.hpp"
#include "enel/simulator.hpp"

namespace enel {

enum class ControllerKind { enel, bell_baseline, fixed };

std::string_view to_string(ControllerKind kind);  // enel, bell-baseline, static
ControllerKind controller_kind_from_string(std::string_view name);

struct RunRange {
    int first = 1;  // 1-based, inclusive
    int last = 1;

    bool contains(int run) const { return run >= first && run <= last; }
    bool operator==(const RunRange&) const = default;
};

struct LearningConfig {
    std::size_t train_epochs = 300;
    std::size_t finetune_epochs = 20;  // after each completed run
    std::size_t history_cap = 10;      // recent adaptive runs trained on, besides the profiling runs
    std::size_t encoder_epochs = 1500;
    double learning_rate = 5e-3;
    double finetune_learning_rate = 1e-3;
    std::uint64_t model_seed = 1;
};

struct ExperimentConfig {
    std::string profile = "kmeans-like";
    double target = 0.0;  // seconds; 0 derives target_factor * noise-free optimum
    double target_factor = 1.25;
    int runs = 65;
    int profiling_runs = 10;
    int retrain_period = 5;
    int window = 11;
    std::vector<RunRange> failure_phases;
    std::vector<ControllerKind> controllers{ControllerKind::enel, ControllerKind::bell_baseline};
    int static_scaleout = 0;  // static controller's scale-out; 0 takes the Bell initial allocation
    std::uint64_t seed = 0;
    ClusterEnv env{.noise_level = 0.05};
    FailurePlan failures{.enabled = true};
    ScaleoutRange range;
    SafetyConfig safety;
    LearningConfig learning;
};

void validate(const ExperimentConfig& config);

/// round(min + i (max - min) / (count - 1)) for i in [0, count)
std::vector<int> profiling_scaleouts(const ScaleoutRange& range, int count);

/// Noise-free, failure-free total runtime at every scale-out in range.
std::map<int, double> noise_free_totals(const JobProfile& profile, const ClusterEnv& env, const ScaleoutRange& range);

/// target_factor * min over range of the noise-free total runtime.
double derive_target(const JobProfile& profile, const ClusterEnv& env, const ScaleoutRange& range, double factor);

struct CvcSummary {
    std::vector<int> flags;
    double mean = 0.0;
    double median = 0.0;
};

struct CvsSummary {
    std::vector<double> seconds;
    double mean = 0.0;  // seconds
    double median = 0.0;
};

struct Outcome {
    double actual = 0.0;
    double target = 0.0;
};

CvcSummary compute_cvc(std::span<const Outcome> runs);
CvsSummary compute_cvs(std::span<const Outcome> runs);

/// Median of a non-empty list; mean of the two middle values for even sizes.
double median(std::vector<double> values);

struct DecisionRecord {
    std::string run_id;
    std::string controller;
    int component = 0;  // next component; 0 is the initial allocation
    double elapsed_s = 0.0;
    std::map<int, double> candidates;
    int chosen = 0;
    std::string reason;

    bool operator==(const DecisionRecord&) const = default;
};

struct RunRecord {
    int run = 0;  // 1-based
    std::string run_id;
    std::string controller;
    bool profiling = false;
    bool failures = false;
    double runtime_s = 0.0;
    double target_s = 0.0;
    int cvc = 0;
    double cvs_s = 0.0;
    std::vector<int> scaleouts;  // nominal scale-out per component
    double fit_s = 0.0;          // summed over the run's requests and retraining
    double predict_s = 0.0;
    std::size_t requests = 0;
    std::optional<double> prediction_error;  // mean relative error of predicted remaining time

    bool operator==(const RunRecord&) const = default;
};

struct WindowRecord {
    std::string controller;
    int first_run = 0;
    int last_run = 0;
    double cvc_mean = 0.0;
    double cvc_median = 0.0;
    double cvs_mean_min = 0.0;
    double cvs_median_min = 0.0;
    std::optional<double> prediction_error;

    bool operator==(const WindowRecord&) const = default;
};

struct TimingRecord {
    std::string controller;
    int run = 0;
    int component = 0;
    double fit_s = 0.0;
    double predict_s = 0.0;

    bool operator==(const TimingRecord&) const = default;
};

struct ExperimentReport {
    std::string profile;
    std::uint64_t seed = 0;
    double target_s = 0.0;
    int profiling_runs = 0;
    std::vector<RunRecord> runs;
    std::vector<WindowRecord> windows;
    std::vector<TimingRecord> timings;

    std::vector<RunRecord> runs_of(std::string_view controller) const;
    bool operator==(const ExperimentReport&) const = default;
};

/// Windows of window_size adaptive runs per controller, the last one
/// possibly shorter.
std::vector<WindowRecord> make_windows(std::span<const RunRecord> runs, int window_size);

struct ExperimentArtifacts {
    ExperimentReport report;
    std::vector<JobExecution> executions;  // every run of every controller, in order
    std::vector<std::string> execution_controllers;
    std::vector<DecisionRecord> decisions;
    std::optional<EnelModel> model;              // final Enel model
    std::optional<AutoencoderParams> autoencoder;
    std::vector<LossRecord> last_training_curve;
};

ExperimentArtifacts run_experiment(const ExperimentConfig& config);

/// summary.json, runs.csv, windows.csv, timing.csv, decisions.jsonl,
/// traces.jsonl and, when present, model.json, autoencoder.json, loss.csv.
void emit_report(const ExperimentArtifacts& artifacts, const std::filesystem::path& dir);

ExperimentReport load_report(const std::filesystem::path& dir);

}  // namespace enel
