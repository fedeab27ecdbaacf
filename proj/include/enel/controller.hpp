#pragma once

// Scale-out selection against a runtime target.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string_view>

#include "enel/bell.hpp"
#include "enel/graph.hpp"
#include "enel/model.hpp"

namespace enel {

enum class DecisionReason { met_target, best_effort, no_change };

std::string_view to_string(DecisionReason reason);
DecisionReason decision_reason_from_string(std::string_view name);

struct ScaleoutRange {
    int min = 4;
    int max = 36;
};

void validate(const ScaleoutRange& range);

struct ScalingDecision {
    int chosen_scaleout = 0;
    double predicted_remaining = 0.0;
    std::map<int, double> candidates;  // scale-out -> predicted remaining seconds
    DecisionReason reason = DecisionReason::met_target;
};

struct SafetyConfig {
    int hysteresis_step = 1;             // suppress switches of at most this many executors
    double hysteresis_fraction = 0.05;   // ... or whose predicted change is below this share of the target
    double target_margin = 0.0;          // plan against target * (1 - margin)
    std::size_t finetune_epochs = 10;
    double finetune_learning_rate = 1e-3;
    nn::OptimizerKind finetune_optimizer = nn::OptimizerKind::gradient_descent;
    double finetune_budget_s = 5.0;
};

/// Smallest candidate with elapsed + remaining <= target (met-target), else
/// the candidate with the least remaining time (best-effort, smallest on
/// ties). When current is given and already meets the target, a switch that
/// hysteresis suppresses yields current with reason no-change.
ScalingDecision choose_scaleout(const std::map<int, double>& candidates, double elapsed, double target,
                                std::optional<int> current = std::nullopt, const SafetyConfig& safety = {});

/// First-component runtime model from the end scale-out and wall time of
/// component 0 in each historical run.
BellModel fit_first_component(std::span<const JobExecution> history);

/// total(s) = Bell(first component, s) + predicted runtime of components
/// 1..n-1 at s, for every s in range. job supplies structure and contexts.
ScalingDecision initial_scaleout(std::span<const JobExecution> history, const EnelModel& model,
                                 const JobExecution& job, double target, const ScaleoutRange& range,
                                 const SafetyConfig& safety = {}, const SummaryHistory* summaries = nullptr);

struct RescaleRecommendation {
    ScalingDecision decision;
    EnelModel tuned;
    double fit_seconds = 0.0;
    double predict_seconds = 0.0;
};

/// Fine-tunes a copy of model on the observed prefix of state (components
/// before next_component), then scores every s in range with forward().
RescaleRecommendation recommend_rescale(const JobExecution& state, std::size_t next_component,
                                        const EnelModel& model, double target, const ScaleoutRange& range,
                                        double elapsed, int current, const SafetyConfig& safety = {},
                                        const SummaryHistory* summaries = nullptr);

}  // namespace enel
