// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "enel/bell.hpp"
#include "enel/controller.hpp"
#include "enel/encoding.hpp"
#include "enel/harness.hpp"
#include "enel/io.hpp"
#include "enel/model.hpp"
#include "enel/simulator.hpp"
#include "fixtures.hpp"

using namespace enel;
using namespace enel::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

bool gradient_matches(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    return diff <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) || diff < 1e-9;
}

Verdict propagation_oracle() {
    const auto start = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(1, 8);
    std::uniform_real_distribution<double> density(0.1, 0.9);
    std::uniform_real_distribution<double> runtime(0.0, 500.0);
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = random_dag(rng, size(rng), density(rng));
        std::vector<double> t(g.nodes.size());
        for (double& v : t) v = runtime(rng);
        if (accumulate_runtimes(g, t) != longest_paths_by_enumeration(g, t)) ++mismatches;
    }
    const double elapsed = seconds_since(start);
    return {mismatches == 0 && elapsed < 5.0, format("200 DAGs, %d mismatches, %.3f s", mismatches, elapsed)};
}

Verdict attention_normalisation() {
    const ModelConfig cfg;
    const auto model = EnelModel::create(cfg, 77);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> preds(1, 6), scale(1, 36);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    auto random_x = [&] {
        std::vector<double> c(cfg.context_dim());
        for (double& v : c) v = g(rng);
        return node_input(cfg, scale(rng), c, scale(rng));
    };
    double worst_sum = 0.0, worst_shift = 0.0, min_weight = 1.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto xi = random_x();
        std::vector<Eigen::VectorXd> xs;
        const int n = preds(rng);
        for (int j = 0; j < n; ++j) xs.push_back(random_x());
        const auto w = edge_weights(model, xi, xs);
        double sum = 0.0;
        for (double v : w) {
            sum += v;
            min_weight = std::min(min_weight, v);
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        auto scores = edge_scores(model, xi, xs);
        const double c = shift(rng);
        for (double& s : scores) s += c;
        const auto shifted = softmax_weights(scores);
        for (std::size_t j = 0; j < w.size(); ++j) worst_shift = std::max(worst_shift, std::abs(shifted[j] - w[j]));
    }
    return {worst_sum <= 1e-9 && worst_shift <= 1e-9 && min_weight >= 0.0,
            format("max |sum - 1| = %.2e, max shift deviation = %.2e", worst_sum, worst_shift)};
}

Verdict gradient_check() {
    const auto start = Clock::now();
    const auto cfg = toy_config();
    auto model = EnelModel::create(cfg, 9);
    auto first = toy_job(cfg, "first");
    auto second = toy_job(cfg, "second");
    for (auto& n : second.components[1].nodes) *n.runtime *= 1.3;
    const std::vector<JobExecution> runs{first, second};
    const auto set = build_training_set(cfg, runs);

    EnelModel grad = model.zeros_like();
    loss_and_gradient(model, set, &grad);
    auto params = model.tensors();
    auto grads = grad.tensors();
    const char* groups[] = {"f1", "f2", "f3", "f4"};
    std::size_t failures = 0, checked = 0;
    std::string failed_groups;
    const double h = 1e-5;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double saved = params[t][i];
            params[t][i] = saved + h;
            const double up = loss_and_gradient(model, set, nullptr).total;
            params[t][i] = saved - h;
            const double down = loss_and_gradient(model, set, nullptr).total;
            params[t][i] = saved;
            ++checked;
            if (!gradient_matches(grads[t][i], (up - down) / (2 * h))) {
                ++failures;
                failed_groups += std::string(t < 16 ? groups[t / 4] : "attention") + " ";
            }
        }
    }

    std::vector<Eigen::VectorXd> data;
    for (const char* text : {"spark 3.1.1", "kmeans", "10 GB", "executor"}) {
        const auto flat = encode_property(std::string(text), 9).flat();
        data.emplace_back(Eigen::Map<const Eigen::VectorXd>(flat.data(), 9));
    }
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    AutoencoderParams p(9, 3);
    for (Eigen::Index i = 0; i < p.enc_w.size(); ++i) p.enc_w.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < p.dec_w.size(); ++i) p.dec_w.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < p.enc_b.size(); ++i) p.enc_b[i] = u(rng);
    for (Eigen::Index i = 0; i < p.dec_b.size(); ++i) p.dec_b[i] = u(rng);
    const auto ag = autoencoder_loss_and_gradient(p, data);
    auto check = [&](double* values, const double* analytic, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = autoencoder_loss_and_gradient(p, data).loss;
            values[i] = saved - h;
            const double down = autoencoder_loss_and_gradient(p, data).loss;
            values[i] = saved;
            ++checked;
            if (!gradient_matches(analytic[i], (up - down) / (2 * h))) {
                ++failures;
                failed_groups += "autoencoder ";
            }
        }
    };
    check(p.enc_w.data(), ag.grad.enc_w.data(), p.enc_w.size());
    check(p.enc_b.data(), ag.grad.enc_b.data(), p.enc_b.size());
    check(p.dec_w.data(), ag.grad.dec_w.data(), p.dec_w.size());
    check(p.dec_b.data(), ag.grad.dec_b.data(), p.dec_b.size());

    const double elapsed = seconds_since(start);
    return {failures == 0 && elapsed < 60.0,
            format("%zu parameters checked, %zu mismatches %s(%.2f s)", checked, failures, failed_groups.c_str(),
                   elapsed)};
}

Verdict bell_recovery() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.5, 800.0);
    std::bernoulli_distribution keep(0.75);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        ErnestCoefficients theta{};
        for (double& t : theta) t = keep(rng) ? u(rng) : 0.0;
        if (theta == ErnestCoefficients{}) theta[1] = 300.0;
        std::vector<ScaleoutSample> samples;
        for (int s : {4, 8, 12, 16, 20, 24, 28, 32, 36}) samples.push_back({s, evaluate_ernest(theta, s)});
        const auto fitted = fit_parametric(samples);
        for (int k = 0; k < 4; ++k) {
            const double err = theta[k] > 0.0 ? std::abs(fitted[k] - theta[k]) / theta[k] : std::abs(fitted[k]);
            worst = std::max(worst, err);
        }
    }
    int parametric = 0, nonparametric = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 r(seed + 1000);
        std::normal_distribution<double> noise(0.0, 0.005);
        std::uniform_real_distribution<double> coef(10.0, 600.0);
        const ErnestCoefficients theta{coef(r), coef(r) * 3, 0.0, coef(r) / 100};
        std::uniform_int_distribution<int> knee(10, 28);
        const int step_at = knee(r);
        std::vector<ScaleoutSample> ernest, step;
        for (int s = 4; s <= 36; s += 2) {
            ernest.push_back({s, evaluate_ernest(theta, s) * (1.0 + noise(r))});
            step.push_back({s, (s < step_at ? 400.0 : 150.0) * (1.0 + noise(r))});
        }
        if (select_model(ernest, 5, seed).kind == BellKind::parametric) ++parametric;
        if (select_model(step, 5, seed).kind == BellKind::nonparametric) ++nonparametric;
    }
    return {worst < 1e-6 && parametric >= 18 && nonparametric >= 18,
            format("max relative coefficient error %.2e, parametric %d/20, nonparametric %d/20", worst, parametric,
                   nonparametric)};
}

Verdict simulator_conservation() {
    const ClusterEnv env;
    int mismatches = 0, runs = 0;
    for (const auto& name : profile_names()) {
        const auto profile = make_profile(name);
        for (int s = 4; s <= 36; s += 4) {
            FixedScaleout policy(s);
            const auto r = simulate_run(profile, env, policy, RunOptions{});
            double expected = 0.0;
            for (const auto& c : profile.components) {
                ComponentGraph g;
                std::vector<double> durations;
                for (const auto& n : c.nodes) {
                    TaskNode t;
                    t.id = n.id;
                    g.nodes.push_back(t);
                    durations.push_back(evaluate_ernest(n.theta, s));
                }
                g.edges = c.edges;
                expected += critical_path(g, durations);
            }
            ++runs;
            if (r.trace.total_wall_time != expected) ++mismatches;
        }
    }

    auto replay = [](std::uint64_t seed) {
        ClusterEnv noisy;
        noisy.noise_level = 0.1;
        RunOptions options;
        options.seed = seed;
        options.failures.enabled = true;
        FixedScaleout policy(20);
        const auto r = simulate_run(make_profile("mpc-like"), noisy, policy, options);
        std::ostringstream out;
        out.precision(17);
        write_trace_jsonl(out, r.job);
        for (const auto& f : r.trace.failures) out << f.time << ' ' << f.executors_before << '\n';
        return out.str();
    };
    int replay_mismatches = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        if (replay(seed) != replay(seed)) ++replay_mismatches;
    }
    return {mismatches == 0 && replay_mismatches == 0,
            format("%d/%d runs off the critical-path sum, %d/5 replays differ", mismatches, runs, replay_mismatches)};
}

Verdict end_to_end_learning() {
    const auto start = Clock::now();
    ExperimentConfig config;
    config.profile = "kmeans-like";
    config.env.noise_level = 0.05;
    config.target_factor = 1.25;
    config.profiling_runs = 10;
    config.runs = 50;
    config.controllers = {ControllerKind::enel};
    config.seed = 1;
    const auto report = run_experiment(config).report;
    const auto runs = report.runs_of("enel");
    std::vector<double> cvc, cvs, errors;
    for (std::size_t i = runs.size() - 11; i < runs.size(); ++i) {
        cvc.push_back(runs[i].cvc);
        cvs.push_back(runs[i].cvs_s);
        if (runs[i].prediction_error) errors.push_back(*runs[i].prediction_error);
    }
    double mean_error = 0.0;
    for (double e : errors) mean_error += e;
    mean_error = errors.empty() ? 1.0 : mean_error / static_cast<double>(errors.size());
    const double elapsed = seconds_since(start);
    return {median(cvc) == 0.0 && median(cvs) == 0.0 && mean_error < 0.15 && elapsed < 600.0,
            format("last 11 runs: median CVC %.2f, median CVS %.1f s, mean prediction error %.1f%%, %.0f s",
                   median(cvc), median(cvs), 100 * mean_error, elapsed)};
}

Verdict failure_robustness() {
    std::string detail;
    bool pass = true;
    for (const char* profile : {"mpc-like", "kmeans-like"}) {
        double enel = 0.0, bell = 0.0;
        int enel_n = 0, bell_n = 0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            ExperimentConfig config;
            config.profile = profile;
            config.runs = 40;
            config.failure_phases = {{18, 25}, {31, 38}};
            config.seed = seed;
            const auto report = run_experiment(config).report;
            for (const auto& r : report.runs) {
                if (!r.failures || r.profiling) continue;
                if (r.controller == "enel") {
                    enel += r.cvs_s;
                    ++enel_n;
                } else if (r.controller == "bell-baseline") {
                    bell += r.cvs_s;
                    ++bell_n;
                }
            }
        }
        enel /= std::max(enel_n, 1);
        bell /= std::max(bell_n, 1);
        pass = pass && enel_n > 0 && bell_n > 0 && enel <= bell;
        detail += format("%s: Enel %.1f s vs Bell %.1f s; ", profile, enel, bell);
    }
    detail.resize(detail.size() - 2);
    return {pass, "mean failure-phase CVS over 5 seeds, " + detail};
}

Verdict timing_envelope() {
    const auto profile = make_profile("gbt-like");
    ClusterEnv env;
    env.noise_level = 0.05;
    const auto history = fixed_runs(profile, env, profiling_scaleouts(ScaleoutRange{}, 10), 1);
    TrainOptions options;
    options.epochs = 300;
    const auto model = train(ModelConfig{}, history, options).model;
    SummaryHistory summaries;
    for (const auto& run : history) summaries.add_run(run);

    const auto& state = history[4];
    double worst_total = 0.0, worst_inference = 0.0;
    for (std::size_t next : {std::size_t{1}, state.components.size() / 2, state.components.size() - 1}) {
        const auto rec = recommend_rescale(state, next, model, 1e9, ScaleoutRange{}, 100.0,
                                           state.components[next - 1].nodes.back().end_scaleout, SafetyConfig{},
                                           &summaries);
        worst_total = std::max(worst_total, rec.fit_seconds + rec.predict_seconds);
        worst_inference = std::max(worst_inference, rec.predict_seconds);
    }
    return {worst_total <= 30.0 && worst_inference <= 1.0,
            format("%zu components: fine-tune + predict %.2f s, inference %.3f s", profile.components.size(),
                   worst_total, worst_inference)};
}

Verdict encoder_invariants() {
    std::mt19937_64 rng(10000);
    std::uniform_int_distribution<int> len(0, 40), ch(0, 255);
    int bad_norm = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string s(static_cast<std::size_t>(len(rng)), ' ');
        for (char& c : s) c = static_cast<char>(ch(rng));
        double sq = 0.0;
        for (double v : hash_encode(s, 32)) sq += v * v;
        if (!(sq == 0.0 || std::abs(std::sqrt(sq) - 1.0) < 1e-9)) ++bad_norm;
    }
    int bad_round_trip = 0;
    for (std::uint64_t n = 0; n < (1U << 16); ++n) {
        const auto bits = binarize(n, 16);
        std::uint64_t back = 0;
        for (std::size_t i = 0; i < bits.size(); ++i) back |= static_cast<std::uint64_t>(bits[i]) << i;
        if (back != n) ++bad_round_trip;
    }
    return {bad_norm == 0 && bad_round_trip == 0,
            format("%d/10000 hash vectors off the unit sphere, %d/65536 binarize round-trip failures", bad_norm,
                   bad_round_trip)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"propagation oracle", propagation_oracle},
        {"attention normalisation", attention_normalisation},
        {"gradient correctness", gradient_check},
        {"Bell recovery", bell_recovery},
        {"simulator conservation", simulator_conservation},
        {"end-to-end learning", end_to_end_learning},
        {"failure robustness", failure_robustness},
        {"timing envelope", timing_envelope},
        {"encoder invariants", encoder_invariants},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
