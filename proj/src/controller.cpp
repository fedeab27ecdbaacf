#include "enel/controller.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace enel {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_trained(const EnelModel& model) {
    if (model.trained_on_runs.empty()) throw std::invalid_argument("controller: model is untrained");
}

}  // namespace

std::string_view to_string(DecisionReason reason) {
    switch (reason) {
        case DecisionReason::met_target: return "met-target";
        case DecisionReason::best_effort: return "best-effort";
        case DecisionReason::no_change: return "no-change";
    }
    return "met-target";
}

DecisionReason decision_reason_from_string(std::string_view name) {
    if (name == "met-target") return DecisionReason::met_target;
    if (name == "best-effort") return DecisionReason::best_effort;
    if (name == "no-change") return DecisionReason::no_change;
    throw std::invalid_argument("unknown decision reason '" + std::string(name) + "'");
}

void validate(const ScaleoutRange& range) {
    if (range.min < 1 || range.max < range.min) {
        throw std::invalid_argument("scale-out range [" + std::to_string(range.min) + ", " +
                                    std::to_string(range.max) + "] is invalid");
    }
}

ScalingDecision choose_scaleout(const std::map<int, double>& candidates, double elapsed, double target,
                                std::optional<int> current, const SafetyConfig& safety) {
    if (candidates.empty()) throw std::invalid_argument("choose_scaleout: no candidates");
    if (elapsed < 0.0) throw std::invalid_argument("choose_scaleout: elapsed must be >= 0");
    const double budget = target * (1.0 - safety.target_margin);

    ScalingDecision d;
    d.candidates = candidates;
    std::optional<int> pick;
    for (const auto& [s, remaining] : candidates) {
        if (elapsed + remaining <= budget) {
            pick = s;
            break;
        }
    }
    if (pick) {
        d.reason = DecisionReason::met_target;
    } else {
        d.reason = DecisionReason::best_effort;
        pick = candidates.begin()->first;
        for (const auto& [s, remaining] : candidates) {
            if (remaining < candidates.at(*pick)) pick = s;
        }
    }

    if (current && *pick != *current) {
        const auto it = candidates.find(*current);
        if (it != candidates.end() && elapsed + it->second <= budget) {
            const bool small_step = std::abs(*pick - *current) <= safety.hysteresis_step;
            const bool small_change =
                std::abs(it->second - candidates.at(*pick)) < safety.hysteresis_fraction * target;
            if (small_step || small_change) {
                pick = *current;
                d.reason = DecisionReason::no_change;
            }
        }
    }
    d.chosen_scaleout = *pick;
    d.predicted_remaining = candidates.at(*pick);
    return d;
}

BellModel fit_first_component(std::span<const JobExecution> history) {
    if (history.empty()) throw std::invalid_argument("initial allocation: empty history");
    std::vector<ScaleoutSample> samples;
    for (const auto& run : history) {
        if (run.components.empty() || run.component_wall_times.empty() || !run.components.front().observed()) {
            continue;
        }
        const auto& nodes = run.components.front().nodes;
        samples.push_back({nodes.back().end_scaleout, run.component_wall_times.front()});
    }
    if (samples.empty()) throw std::invalid_argument("initial allocation: no observed first components");
    return select_model(samples);
}

ScalingDecision initial_scaleout(std::span<const JobExecution> history, const EnelModel& model,
                                 const JobExecution& job, double target, const ScaleoutRange& range,
                                 const SafetyConfig& safety, const SummaryHistory* summaries) {
    validate(range);
    check_trained(model);
    const BellModel first = fit_first_component(history);
    std::map<int, double> totals;
    for (int s = range.min; s <= range.max; ++s) {
        const double rest = job.components.size() > 1 ? forward(model, job, 1, s, summaries).remaining : 0.0;
        totals[s] = predict(first, s) + rest;
    }
    return choose_scaleout(totals, 0.0, target, std::nullopt, safety);
}

RescaleRecommendation recommend_rescale(const JobExecution& state, std::size_t next_component,
                                        const EnelModel& model, double target, const ScaleoutRange& range,
                                        double elapsed, int current, const SafetyConfig& safety,
                                        const SummaryHistory* summaries) {
    validate(range);
    check_trained(model);
    if (next_component < 1) throw std::invalid_argument("recommend_rescale: component index must be >= 1");
    if (elapsed < 0.0) throw std::invalid_argument("recommend_rescale: elapsed must be >= 0");

    RescaleRecommendation rec{{}, model, 0.0, 0.0};
    auto start = Clock::now();
    if (safety.finetune_epochs > 0) {
        JobExecution prefix = state;
        prefix.components.resize(next_component);
        TrainOptions options;
        options.epochs = safety.finetune_epochs;
        options.optimizer.kind = safety.finetune_optimizer;
        options.optimizer.learning_rate = safety.finetune_learning_rate;
        options.time_budget_s = safety.finetune_budget_s;
        options.prior = summaries;
        rec.tuned = fine_tune(model, std::span<const JobExecution>(&prefix, 1), options).model;
    }
    rec.fit_seconds = seconds_since(start);

    start = Clock::now();
    std::map<int, double> remaining;
    for (int s = range.min; s <= range.max; ++s) {
        remaining[s] = forward(rec.tuned, state, next_component, s, summaries).remaining;
    }
    rec.decision = choose_scaleout(remaining, elapsed, target, current, safety);
    rec.predict_seconds = seconds_since(start);
    return rec;
}

}  // namespace enel
