#include "enel/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "enel/io.hpp"

namespace enel {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t run_seed(std::uint64_t seed, int run) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

int component_scaleout(const ComponentGraph& g) {
    const auto order = topological_order(g);
    return g.nodes[order.back()].end_scaleout;
}

// Shared bookkeeping for the controllers below.
struct RunLog {
    std::string controller;
    int run = 0;
    std::vector<DecisionRecord>* decisions = nullptr;
    std::vector<TimingRecord>* timings = nullptr;
    std::vector<std::pair<double, double>> predictions;  // (elapsed, predicted remaining)
    std::vector<int> scaleouts;
    double fit_s = 0.0;
    double predict_s = 0.0;
    std::size_t requests = 0;

    void record(const std::string& run_id, int component, double elapsed, const ScalingDecision& d, double fit,
                double predict) {
        decisions->push_back({run_id, controller, component, elapsed, d.candidates, d.chosen_scaleout,
                              std::string(to_string(d.reason))});
        timings->push_back({controller, run, component, fit, predict});
        predictions.emplace_back(elapsed, d.predicted_remaining);
        fit_s += fit;
        predict_s += predict;
        ++requests;
    }
};

struct EnelState {
    ContextEncoder encoder;
    EnelModel model;
    SummaryHistory summaries;
};

class EnelPolicy final : public ScalingPolicy {
public:
    EnelPolicy(const EnelState& state, std::span<const JobExecution> history, const ExperimentConfig& config,
               double target, RunLog& log)
        : state_(state), history_(history), config_(config), target_(target), log_(log) {}

    int initial_scaleout(const JobExecution& job) override {
        const auto start = Clock::now();
        JobExecution annotated = job;
        state_.encoder.annotate(annotated);
        const auto d = enel::initial_scaleout(history_, state_.model, annotated, target_, config_.range,
                                              config_.safety, &state_.summaries);
        log_.record(job.run_id, 0, 0.0, d, 0.0, seconds_since(start));
        return d.chosen_scaleout;
    }

    int at_boundary(const JobExecution& job, std::size_t next, double elapsed, int current) override {
        JobExecution annotated = job;
        state_.encoder.annotate(annotated);
        auto rec = recommend_rescale(annotated, next, state_.model, target_, config_.range, elapsed, current,
                                     config_.safety, &state_.summaries);
        log_.record(job.run_id, static_cast<int>(next), elapsed, rec.decision, rec.fit_seconds, rec.predict_seconds);
        return rec.decision.chosen_scaleout;
    }

private:
    const EnelState& state_;
    std::span<const JobExecution> history_;
    const ExperimentConfig& config_;
    double target_;
    RunLog& log_;
};

// One Bell model per component, remaining time is the sum over the
// components still to run.
class BellPolicy final : public ScalingPolicy {
public:
    BellPolicy(std::span<const JobExecution> history, const ExperimentConfig& config, double target, RunLog& log,
               bool adaptive)
        : history_(history), config_(config), target_(target), log_(log), adaptive_(adaptive) {}

    int initial_scaleout(const JobExecution& job) override {
        auto start = Clock::now();
        models_.clear();
        for (std::size_t k = 0; k < job.components.size(); ++k) {
            std::vector<ScaleoutSample> samples;
            for (const auto& run : history_) {
                if (k < run.component_wall_times.size() && run.components[k].observed()) {
                    samples.push_back({component_scaleout(run.components[k]), run.component_wall_times[k]});
                }
            }
            models_.push_back(select_model(samples));
        }
        const double fit = seconds_since(start);
        start = Clock::now();
        const auto d = choose_scaleout(candidates(0), 0.0, target_, std::nullopt, config_.safety);
        log_.record(job.run_id, 0, 0.0, d, fit, seconds_since(start));
        return d.chosen_scaleout;
    }

    int at_boundary(const JobExecution& job, std::size_t next, double elapsed, int current) override {
        if (!adaptive_) return current;
        const auto start = Clock::now();
        const auto d = choose_scaleout(candidates(next), elapsed, target_, current, config_.safety);
        log_.record(job.run_id, static_cast<int>(next), elapsed, d, 0.0, seconds_since(start));
        return d.chosen_scaleout;
    }

private:
    std::map<int, double> candidates(std::size_t from) const {
        std::map<int, double> out;
        for (int s = config_.range.min; s <= config_.range.max; ++s) {
            double total = 0.0;
            for (std::size_t k = from; k < models_.size(); ++k) total += predict(models_[k], s);
            out[s] = total;
        }
        return out;
    }

    std::span<const JobExecution> history_;
    const ExperimentConfig& config_;
    double target_;
    RunLog& log_;
    bool adaptive_;
    std::vector<BellModel> models_;
};

// Records the nominal scale-out the simulator applies per component.
class RecordingPolicy final : public ScalingPolicy {
public:
    RecordingPolicy(ScalingPolicy& inner, const ScaleoutRange& range, std::vector<int>& out)
        : inner_(inner), range_(range), out_(out) {}

    int initial_scaleout(const JobExecution& job) override {
        out_.push_back(std::clamp(inner_.initial_scaleout(job), range_.min, range_.max));
        return out_.back();
    }
    int at_boundary(const JobExecution& job, std::size_t next, double elapsed, int current) override {
        out_.push_back(std::clamp(inner_.at_boundary(job, next, elapsed, current), range_.min, range_.max));
        return out_.back();
    }

private:
    ScalingPolicy& inner_;
    const ScaleoutRange& range_;
    std::vector<int>& out_;
};

// Profiling runs plus the most recent cap adaptive runs; the adaptive runs
// in between are returned separately.
std::pair<std::vector<JobExecution>, std::vector<JobExecution>> training_window(const std::vector<JobExecution>& history,
                                                                                 std::size_t profiling, std::size_t cap) {
    const std::size_t keep_from = history.size() - std::min(cap, history.size() - profiling);
    std::vector<JobExecution> window(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(profiling));
    window.insert(window.end(), history.begin() + static_cast<std::ptrdiff_t>(keep_from), history.end());
    std::vector<JobExecution> skipped(history.begin() + static_cast<std::ptrdiff_t>(profiling),
                                      history.begin() + static_cast<std::ptrdiff_t>(keep_from));
    return {std::move(window), std::move(skipped)};
}

SummaryHistory summaries_of(std::span<const JobExecution> runs) {
    SummaryHistory h;
    for (const auto& r : runs) h.add_run(r);
    return h;
}

TrainOptions train_options(const LearningConfig& learning, std::size_t epochs, double learning_rate,
                           const SummaryHistory* prior) {
    TrainOptions o;
    o.epochs = epochs;
    o.optimizer.learning_rate = learning_rate;
    o.seed = learning.model_seed;
    o.prior = prior;
    return o;
}

}  // namespace

std::string_view to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::enel: return "enel";
        case ControllerKind::bell_baseline: return "bell-baseline";
        case ControllerKind::fixed: return "static";
    }
    return "enel";
}

ControllerKind controller_kind_from_string(std::string_view name) {
    if (name == "enel") return ControllerKind::enel;
    if (name == "bell-baseline") return ControllerKind::bell_baseline;
    if (name == "static") return ControllerKind::fixed;
    throw std::invalid_argument("unknown controller '" + std::string(name) + "'");
}

void validate(const ExperimentConfig& c) {
    make_profile(c.profile);
    validate(c.env);
    validate(c.range);
    if (c.range.min < c.env.min_scaleout || c.range.max > c.env.max_scaleout) {
        throw std::invalid_argument("experiment: scale-out range exceeds the cluster limits");
    }
    if (c.profiling_runs < 1 || c.profiling_runs > c.runs) {
        throw std::invalid_argument("experiment: need 1 <= profiling_runs <= runs");
    }
    if (c.retrain_period < 1) throw std::invalid_argument("experiment: retrain_period must be >= 1");
    if (c.window < 1) throw std::invalid_argument("experiment: window must be >= 1");
    if (c.target < 0.0 || c.target_factor <= 0.0) throw std::invalid_argument("experiment: invalid target");
    if (c.controllers.empty()) throw std::invalid_argument("experiment: no controllers");
    if (c.static_scaleout != 0 && (c.static_scaleout < c.range.min || c.static_scaleout > c.range.max)) {
        throw std::invalid_argument("experiment: static scale-out outside the scale-out range");
    }
    for (const auto& p : c.failure_phases) {
        if (p.first < 1 || p.last < p.first || p.last > c.runs) {
            throw std::invalid_argument("experiment: failure phase [" + std::to_string(p.first) + ", " +
                                        std::to_string(p.last) + "] outside [1, runs]");
        }
    }
    if (c.safety.target_margin < 0.0 || c.safety.target_margin >= 1.0) {
        throw std::invalid_argument("experiment: target margin must be in [0, 1)");
    }
}

std::vector<int> profiling_scaleouts(const ScaleoutRange& range, int count) {
    validate(range);
    if (count < 1) throw std::invalid_argument("profiling_scaleouts: count must be >= 1");
    std::vector<int> out;
    for (int i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        out.push_back(static_cast<int>(std::lround(range.min + t * (range.max - range.min))));
    }
    return out;
}

std::map<int, double> noise_free_totals(const JobProfile& profile, const ClusterEnv& env, const ScaleoutRange& range) {
    validate(range);
    ClusterEnv clean = env;
    clean.noise_level = 0.0;
    std::map<int, double> out;
    for (int s = range.min; s <= range.max; ++s) {
        FixedScaleout policy(s);
        out[s] = simulate_run(profile, clean, policy, {}).trace.total_wall_time;
    }
    return out;
}

double derive_target(const JobProfile& profile, const ClusterEnv& env, const ScaleoutRange& range, double factor) {
    const auto totals = noise_free_totals(profile, env, range);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [s, t] : totals) best = std::min(best, t);
    return factor * best;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CvcSummary compute_cvc(std::span<const Outcome> runs) {
    CvcSummary out;
    std::vector<double> flags;
    for (const auto& r : runs) {
        out.flags.push_back(r.actual > r.target ? 1 : 0);
        flags.push_back(out.flags.back());
    }
    if (!flags.empty()) {
        double sum = 0.0;
        for (double f : flags) sum += f;
        out.mean = sum / static_cast<double>(flags.size());
        out.median = median(flags);
    }
    return out;
}

CvsSummary compute_cvs(std::span<const Outcome> runs) {
    CvsSummary out;
    for (const auto& r : runs) out.seconds.push_back(std::max(0.0, r.actual - r.target));
    if (!out.seconds.empty()) {
        double sum = 0.0;
        for (double v : out.seconds) sum += v;
        out.mean = sum / static_cast<double>(out.seconds.size());
        out.median = median(out.seconds);
    }
    return out;
}

std::vector<RunRecord> ExperimentReport::runs_of(std::string_view controller) const {
    std::vector<RunRecord> out;
    for (const auto& r : runs) {
        if (r.controller == controller) out.push_back(r);
    }
    return out;
}

std::vector<WindowRecord> make_windows(std::span<const RunRecord> runs, int window_size) {
    if (window_size < 1) throw std::invalid_argument("make_windows: window size must be >= 1");
    std::vector<std::string> controllers;
    for (const auto& r : runs) {
        if (std::find(controllers.begin(), controllers.end(), r.controller) == controllers.end()) {
            controllers.push_back(r.controller);
        }
    }
    std::vector<WindowRecord> out;
    for (const auto& c : controllers) {
        std::vector<const RunRecord*> adaptive;
        for (const auto& r : runs) {
            if (r.controller == c && !r.profiling) adaptive.push_back(&r);
        }
        for (std::size_t i = 0; i < adaptive.size(); i += static_cast<std::size_t>(window_size)) {
            const std::size_t end = std::min(adaptive.size(), i + static_cast<std::size_t>(window_size));
            std::vector<Outcome> outcomes;
            std::vector<double> errors;
            for (std::size_t j = i; j < end; ++j) {
                outcomes.push_back({adaptive[j]->runtime_s, adaptive[j]->target_s});
                if (adaptive[j]->prediction_error) errors.push_back(*adaptive[j]->prediction_error);
            }
            const auto cvc = compute_cvc(outcomes);
            const auto cvs = compute_cvs(outcomes);
            WindowRecord w{c, adaptive[i]->run, adaptive[end - 1]->run, cvc.mean, cvc.median, cvs.mean / 60.0,
                           cvs.median / 60.0, std::nullopt};
            if (!errors.empty()) {
                double sum = 0.0;
                for (double e : errors) sum += e;
                w.prediction_error = sum / static_cast<double>(errors.size());
            }
            out.push_back(w);
        }
    }
    return out;
}

ExperimentArtifacts run_experiment(const ExperimentConfig& config) {
    validate(config);
    const JobProfile profile = make_profile(config.profile);
    const double target =
        config.target > 0.0 ? config.target : derive_target(profile, config.env, config.range, config.target_factor);

    ExperimentArtifacts out;
    auto& report = out.report;
    report.profile = config.profile;
    report.seed = config.seed;
    report.target_s = target;
    report.profiling_runs = config.profiling_runs;

    auto options_for = [&](int run) {
        RunOptions o;
        o.run_id = "run-" + std::to_string(run);
        o.runtime_target = target;
        o.seed = run_seed(config.seed, run);
        o.failures = config.failures;
        o.failures.enabled = config.failures.enabled &&
                             std::any_of(config.failure_phases.begin(), config.failure_phases.end(),
                                         [&](const RunRange& p) { return p.contains(run); });
        return o;
    };
    auto make_record = [&](int run, const std::string& controller, const RunOptions& o, const SimulationResult& r) {
        RunRecord rec;
        rec.run = run;
        rec.run_id = o.run_id;
        rec.controller = controller;
        rec.profiling = run <= config.profiling_runs;
        rec.failures = o.failures.enabled;
        rec.runtime_s = r.trace.total_wall_time;
        rec.target_s = target;
        rec.cvc = rec.runtime_s > target ? 1 : 0;
        rec.cvs_s = std::max(0.0, rec.runtime_s - target);
        return rec;
    };

    const auto sweep = profiling_scaleouts(config.range, config.profiling_runs);
    std::vector<JobExecution> profiling;
    std::vector<RunRecord> profiling_records;
    for (int run = 1; run <= config.profiling_runs; ++run) {
        try {
            const auto o = options_for(run);
            FixedScaleout policy(sweep[static_cast<std::size_t>(run - 1)]);
            auto result = simulate_run(profile, config.env, policy, o);
            auto rec = make_record(run, "", o, result);
            rec.scaleouts.assign(result.job.components.size(), sweep[static_cast<std::size_t>(run - 1)]);
            profiling_records.push_back(rec);
            profiling.push_back(std::move(result.job));
        } catch (const std::exception& e) {
            throw std::runtime_error("profiling run " + std::to_string(run) + ": " + e.what());
        }
    }

    for (const auto kind : config.controllers) {
        const std::string name(to_string(kind));
        std::vector<JobExecution> history = profiling;
        for (std::size_t i = 0; i < profiling.size(); ++i) {
            auto rec = profiling_records[i];
            rec.controller = name;
            report.runs.push_back(rec);
            out.executions.push_back(profiling[i]);
            out.execution_controllers.push_back(name);
        }

        EnelState enel;
        if (kind == ControllerKind::enel) {
            enel.encoder = ContextEncoder::fit(history, kDefaultEmbeddingDim, config.learning.encoder_epochs);
            for (auto& job : history) enel.encoder.annotate(job);
            enel.summaries = summaries_of(history);
        }
        auto retrain = [&] {
            const auto [window, skipped] =
                training_window(history, static_cast<std::size_t>(config.profiling_runs), config.learning.history_cap);
            const auto prior = summaries_of(skipped);
            auto result = train(ModelConfig{}, window,
                                train_options(config.learning, config.learning.train_epochs,
                                              config.learning.learning_rate, &prior));
            enel.model = std::move(result.model);
            out.last_training_curve = std::move(result.curve);
        };
        if (kind == ControllerKind::enel && config.runs > config.profiling_runs) retrain();

        for (int run = config.profiling_runs + 1; run <= config.runs; ++run) {
            try {
                const auto o = options_for(run);
                RunLog log{name, run, &out.decisions, &report.timings, {}, {}, 0.0, 0.0, 0};
                std::optional<EnelPolicy> enel_policy;
                std::optional<BellPolicy> bell_policy;
                FixedScaleout fixed_policy(config.static_scaleout);
                ScalingPolicy* inner = nullptr;
                if (kind == ControllerKind::fixed && config.static_scaleout > 0) {
                    inner = &fixed_policy;
                } else if (kind == ControllerKind::enel) {
                    inner = &enel_policy.emplace(enel, history, config, target, log);
                } else {
                    inner = &bell_policy.emplace(history, config, target, log, kind == ControllerKind::bell_baseline);
                }
                RecordingPolicy policy(*inner, config.range, log.scaleouts);
                auto result = simulate_run(profile, config.env, policy, o);
                auto rec = make_record(run, name, o, result);
                rec.scaleouts = log.scaleouts;

                std::vector<double> errors;
                for (const auto& [elapsed, predicted] : log.predictions) {
                    const double actual = rec.runtime_s - elapsed;
                    if (actual > 0.0) errors.push_back(std::abs(predicted - actual) / actual);
                }
                if (!errors.empty()) {
                    double sum = 0.0;
                    for (double e : errors) sum += e;
                    rec.prediction_error = sum / static_cast<double>(errors.size());
                }

                JobExecution job = std::move(result.job);
                if (kind == ControllerKind::enel) {
                    enel.encoder.annotate(job);
                    const auto start = Clock::now();
                    history.push_back(job);
                    if ((run - config.profiling_runs) % config.retrain_period == 0) {
                        retrain();
                    } else {
                        auto tuned = fine_tune(enel.model, std::span<const JobExecution>(&job, 1),
                                               train_options(config.learning, config.learning.finetune_epochs,
                                                             config.learning.finetune_learning_rate, &enel.summaries));
                        enel.model = std::move(tuned.model);
                    }
                    enel.summaries.add_run(job);
                    log.fit_s += seconds_since(start);
                } else {
                    history.push_back(job);
                }
                rec.fit_s = log.fit_s;
                rec.predict_s = log.predict_s;
                rec.requests = log.requests;
                report.runs.push_back(rec);
                out.executions.push_back(std::move(job));
                out.execution_controllers.push_back(name);
            } catch (const std::exception& e) {
                throw std::runtime_error(name + " run " + std::to_string(run) + ": " + e.what());
            }
        }
        if (kind == ControllerKind::enel) {
            out.model = enel.model;
            out.autoencoder = enel.encoder.params();
        }
    }
    report.windows = make_windows(report.runs, config.window);
    return out;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    return out;
}

std::string join_scaleouts(const std::vector<int>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) s += ' ';
        s += std::to_string(values[i]);
    }
    return s;
}

std::string optional_cell(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream s;
    s.precision(17);
    s << *v;
    return s.str();
}

}  // namespace

void emit_report(const ExperimentArtifacts& artifacts, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    const auto& report = artifacts.report;
    write_json_file(dir / "summary.json", to_json(report));

    auto runs = open_output(dir / "runs.csv");
    runs << "run,controller,profiling,failures,runtime_s,target_s,cvc,cvs_s,scaleouts,fit_s,predict_s,requests,"
            "prediction_error\n";
    for (const auto& r : report.runs) {
        runs << r.run << ',' << r.controller << ',' << r.profiling << ',' << r.failures << ',' << r.runtime_s << ','
             << r.target_s << ',' << r.cvc << ',' << r.cvs_s << ',' << join_scaleouts(r.scaleouts) << ',' << r.fit_s
             << ',' << r.predict_s << ',' << r.requests << ',' << optional_cell(r.prediction_error) << '\n';
    }

    auto windows = open_output(dir / "windows.csv");
    windows << "controller,first_run,last_run,cvc_mean,cvc_median,cvs_mean_min,cvs_median_min,prediction_error\n";
    for (const auto& w : report.windows) {
        windows << w.controller << ',' << w.first_run << ',' << w.last_run << ',' << w.cvc_mean << ',' << w.cvc_median
                << ',' << w.cvs_mean_min << ',' << w.cvs_median_min << ',' << optional_cell(w.prediction_error)
                << '\n';
    }

    auto timing = open_output(dir / "timing.csv");
    timing << "controller,run,component,fit_s,predict_s\n";
    for (const auto& t : report.timings) {
        timing << t.controller << ',' << t.run << ',' << t.component << ',' << t.fit_s << ',' << t.predict_s << '\n';
    }

    auto decisions = open_output(dir / "decisions.jsonl");
    for (const auto& d : artifacts.decisions) decisions << to_json(d).dump() << '\n';

    auto traces = open_output(dir / "traces.jsonl");
    for (std::size_t i = 0; i < artifacts.executions.size(); ++i) {
        JobExecution job = artifacts.executions[i];
        job.run_id = artifacts.execution_controllers[i] + "/" + job.run_id;
        write_trace_jsonl(traces, job);
    }

    if (artifacts.autoencoder) write_json_file(dir / "autoencoder.json", to_json(*artifacts.autoencoder));
    if (artifacts.model) write_json_file(dir / "model.json", to_json(*artifacts.model, "autoencoder.json"));
    if (!artifacts.last_training_curve.empty()) {
        auto loss = open_output(dir / "loss.csv");
        write_loss_csv(loss, artifacts.last_training_curve);
    }
}

ExperimentReport load_report(const std::filesystem::path& dir) {
    return report_from_json(read_json_file(dir / "summary.json"));
}

}  // namespace enel
