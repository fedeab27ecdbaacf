#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "enel/harness.hpp"
#include "enel/io.hpp"
#include "enel/simulator.hpp"

namespace fs = std::filesystem;
using namespace enel;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

JobProfile profile_or_config_error(const std::string& name) {
    try {
        return make_profile(name);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

fs::path autoencoder_path_for(const fs::path& checkpoint) {
    fs::path p = checkpoint;
    p.replace_extension(".autoencoder.json");
    return p;
}

void print_windows(const ExperimentReport& report) {
    std::printf("profile %s  seed %llu  target %.1f s\n", report.profile.c_str(),
                static_cast<unsigned long long>(report.seed), report.target_s);
    std::printf("%-14s %9s %9s %9s %11s %11s %9s\n", "controller", "runs", "cvc_mean", "cvc_med", "cvs_mean_m",
                "cvs_med_m", "pred_err");
    for (const auto& w : report.windows) {
        const std::string runs = std::to_string(w.first_run) + "-" + std::to_string(w.last_run);
        std::printf("%-14s %9s %9.2f %9.2f %11.2f %11.2f %9s\n", w.controller.c_str(), runs.c_str(), w.cvc_mean,
                    w.cvc_median, w.cvs_mean_min, w.cvs_median_min,
                    w.prediction_error ? std::to_string(*w.prediction_error).substr(0, 6).c_str() : "-");
    }
}

std::vector<JobExecution> load_traces(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    auto jobs = read_trace_jsonl(in);
    if (jobs.empty()) throw ConfigError(path.string() + ": no trace records");
    return jobs;
}

std::vector<JobExecution> profiling_jobs(const std::string& profile_name, int runs, std::uint64_t seed,
                                         double noise) {
    const auto profile = profile_or_config_error(profile_name);
    ClusterEnv env;
    env.noise_level = noise;
    ScaleoutRange range{env.min_scaleout, env.max_scaleout};
    std::vector<JobExecution> jobs;
    const auto sweep = profiling_scaleouts(range, runs);
    for (int i = 0; i < runs; ++i) {
        FixedScaleout policy(sweep[static_cast<std::size_t>(i)]);
        RunOptions o;
        o.run_id = "run-" + std::to_string(i + 1);
        o.seed = seed * 1000 + static_cast<std::uint64_t>(i);
        jobs.push_back(simulate_run(profile, env, policy, o).job);
    }
    return jobs;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-aware dynamic scaling for iterative dataflow jobs"};
    app.require_subcommand(1);

    auto* experiment = app.add_subcommand("experiment", "Run or summarise an experiment");
    experiment->require_subcommand(1);
    auto* run = experiment->add_subcommand("run", "Run an experiment and write its report");
    std::string config_path, out_dir, in_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    run->add_option("--config", config_path, "Experiment config JSON")->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) {
        seed = s;
        seed_given = true;
    }, "Experiment seed (overrides the config)");
    auto* report = experiment->add_subcommand("report", "Print the windowed summary of a report directory");
    report->add_option("--in", in_dir, "Report directory")->required();

    auto* model = app.add_subcommand("model", "Train, fine-tune or inspect a model checkpoint");
    model->require_subcommand(1);
    std::string checkpoint, traces, profile_name = "kmeans-like";
    std::size_t epochs = 300;
    int runs = 10;
    double noise = 0.05;
    auto* train_cmd = model->add_subcommand("train", "Train a model from scratch");
    train_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to write")->required();
    train_cmd->add_option("--traces", traces, "Trace JSONL to train on (default: simulated profiling runs)");
    train_cmd->add_option("--profile", profile_name, "Job profile for simulated profiling runs");
    train_cmd->add_option("--runs", runs, "Number of simulated profiling runs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", epochs, "Training epochs");
    train_cmd->add_option("--seed", seed, "Seed");
    train_cmd->add_option("--noise", noise, "Relative noise of simulated runs")->check(CLI::NonNegativeNumber);
    auto* finetune_cmd = model->add_subcommand("finetune", "Fine-tune a checkpoint on recent traces");
    finetune_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to update in place")->required();
    finetune_cmd->add_option("--traces", traces, "Trace JSONL with recent runs")->required();
    finetune_cmd->add_option("--epochs", epochs, "Fine-tuning epochs");
    auto* inspect_cmd = model->add_subcommand("inspect", "Describe a checkpoint");
    inspect_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to read")->required();

    auto* simulate = app.add_subcommand("simulate", "Simulate one run at a fixed scale-out, trace JSONL on stdout");
    int scaleout = 0;
    bool failures = false;
    simulate->add_option("--profile", profile_name, "Job profile")->required();
    simulate->add_option("--scaleout", scaleout, "Executors")->required();
    simulate->add_option("--seed", seed, "Seed");
    simulate->add_option("--noise", noise, "Relative noise")->check(CLI::NonNegativeNumber);
    simulate->add_flag("--failures", failures, "Inject executor failures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    try {
        if (run->parsed()) {
            auto config = experiment_config_from_json(read_json_file(config_path));
            if (seed_given) config.seed = seed;
            const auto artifacts = run_experiment(config);
            emit_report(artifacts, out_dir);
            print_windows(artifacts.report);
        } else if (report->parsed()) {
            print_windows(load_report(in_dir));
        } else if (train_cmd->parsed()) {
            auto jobs = traces.empty() ? profiling_jobs(profile_name, runs, seed, noise) : load_traces(traces);
            const auto encoder = ContextEncoder::fit(jobs);
            for (auto& j : jobs) encoder.annotate(j);
            TrainOptions options;
            options.epochs = epochs;
            options.seed = seed;
            const auto result = train(ModelConfig{}, jobs, options);
            const fs::path ckpt(checkpoint);
            const fs::path ae = autoencoder_path_for(ckpt);
            write_json_file(ae, to_json(encoder.params()));
            write_json_file(ckpt, to_json(result.model, ae.filename().string()));
            fs::path loss = ckpt;
            loss.replace_extension(".loss.csv");
            std::ofstream loss_out(loss);
            write_loss_csv(loss_out, result.curve);
            std::printf("trained on %zu runs in %.2f s, final loss %.6f\n", jobs.size(), result.wall_seconds,
                        result.curve.back().loss.total);
        } else if (finetune_cmd->parsed()) {
            const fs::path ckpt(checkpoint);
            const auto j = read_json_file(ckpt);
            EnelModel m = model_from_json(j);
            const auto ref = j.value("autoencoder_ref", std::string());
            if (ref.empty()) throw ConfigError("checkpoint has no autoencoder_ref");
            const ContextEncoder encoder(autoencoder_from_json(read_json_file(ckpt.parent_path() / ref)));
            auto jobs = load_traces(traces);
            for (auto& job : jobs) encoder.annotate(job);
            TrainOptions options;
            options.epochs = epochs;
            const auto result = fine_tune(m, jobs, options);
            write_json_file(ckpt, to_json(result.model, ref));
            std::printf("fine-tuned on %zu runs in %.2f s, loss %.6f -> %.6f\n", jobs.size(), result.wall_seconds,
                        result.curve.empty() ? 0.0 : result.curve.front().loss.total,
                        result.curve.empty() ? 0.0 : result.curve.back().loss.total);
        } else if (inspect_cmd->parsed()) {
            const auto j = read_json_file(checkpoint);
            const EnelModel m = model_from_json(j);
            std::printf("parameters      %zu\n", count_parameters(m));
            std::printf("hidden width    %zu\n", m.config.hidden_width);
            std::printf("embedding dim   %zu\n", m.config.embedding_dim);
            std::printf("runtime scale   %.4f s\n", m.config.runtime_scale);
            std::printf("transition r    %.4f\n", m.config.transition_time_fraction);
            std::printf("autoencoder     %s\n", j.value("autoencoder_ref", std::string("-")).c_str());
            std::printf("trained on      %zu runs\n", m.trained_on_runs.size());
        } else if (simulate->parsed()) {
            const auto profile = profile_or_config_error(profile_name);
            ClusterEnv env;
            env.noise_level = noise;
            if (scaleout < env.min_scaleout || scaleout > env.max_scaleout) {
                throw ConfigError("scale-out must be within [" + std::to_string(env.min_scaleout) + ", " +
                                  std::to_string(env.max_scaleout) + "]");
            }
            FixedScaleout policy(scaleout);
            RunOptions o;
            o.run_id = profile_name + "-s" + std::to_string(scaleout);
            o.seed = seed;
            o.failures.enabled = failures;
            const auto result = simulate_run(profile, env, policy, o);
            write_trace_jsonl(std::cout, result.job);
            std::fprintf(stderr, "total %.3f s over %zu components, %zu failures\n", result.trace.total_wall_time,
                         result.job.components.size(), result.trace.failures.size());
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeError;
    }
    return 0;
}
