#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "enel/controller.hpp"
#include "fixtures.hpp"

using namespace enel;
using namespace enel::testing;

namespace {

/// Strictly decreasing remaining-time curve over [4, 36].
std::map<int, double> decreasing_curve(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> step(1.0, 40.0);
    std::map<int, double> out;
    double value = 2000.0;
    for (int s = 4; s <= 36; ++s) {
        out[s] = value;
        value -= step(rng);
    }
    return out;
}

/// Brute-force reference for the selection rule without hysteresis.
int reference_choice(const std::map<int, double>& candidates, double elapsed, double target) {
    for (const auto& [s, r] : candidates) {
        if (elapsed + r <= target) return s;
    }
    int best = candidates.begin()->first;
    for (const auto& [s, r] : candidates) {
        if (r < candidates.at(best)) best = s;
    }
    return best;
}

struct TrainedFixture {
    std::vector<JobExecution> history;
    EnelModel model;
};

const TrainedFixture& trained_fixture() {
    static const TrainedFixture fixture = [] {
        const auto profile = chain_profile(4, 2, {20, 300, 0, 0.5});
        TrainedFixture f;
        f.history = fixed_runs(profile, ClusterEnv{}, {4, 12, 24, 36}, 5);
        TrainOptions options;
        options.epochs = 150;
        f.model = train(ModelConfig{}, f.history, options).model;
        return f;
    }();
    return fixture;
}

}  // namespace

TEST_CASE("choose_scaleout picks the smallest scale-out meeting the target") {
    const std::map<int, double> totals{{4, 900}, {8, 500}, {12, 400}};
    const auto d = choose_scaleout(totals, 0.0, 520);
    CHECK(d.chosen_scaleout == 8);
    CHECK(d.predicted_remaining == 500);
    CHECK(d.reason == DecisionReason::met_target);

    const std::map<int, double> remaining{{4, 600}, {8, 310}, {16, 200}};
    CHECK(choose_scaleout(remaining, 100, 450).chosen_scaleout == 8);
}

TEST_CASE("choose_scaleout falls back to the fastest candidate") {
    const std::map<int, double> totals{{4, 900}, {8, 500}, {12, 400}};
    const auto d = choose_scaleout(totals, 0.0, 100);
    CHECK(d.chosen_scaleout == 12);
    CHECK(d.reason == DecisionReason::best_effort);

    const std::map<int, double> dip{{4, 900}, {8, 300}, {12, 300}, {16, 350}};
    CHECK(choose_scaleout(dip, 50, 200).chosen_scaleout == 8);
    CHECK_THROWS_AS(choose_scaleout({}, 0, 10), std::invalid_argument);
}

TEST_CASE("hysteresis keeps a current scale-out that already meets the target") {
    const std::map<int, double> remaining{{4, 600}, {8, 310}, {9, 300}, {16, 200}};
    // 9 meets the target; switching to 8 is a single-executor step.
    const auto near = choose_scaleout(remaining, 100, 450, 9);
    CHECK(near.chosen_scaleout == 9);
    CHECK(near.reason == DecisionReason::no_change);
    // 16 meets the target; the predicted change to 8 exceeds 5% of the target.
    const auto far = choose_scaleout(remaining, 100, 450, 16);
    CHECK(far.chosen_scaleout == 8);
    CHECK(far.reason == DecisionReason::met_target);
    // 4 misses the target, so it is not kept.
    CHECK(choose_scaleout(remaining, 100, 450, 4).chosen_scaleout == 8);
    // Switching from 16 to 8 saves only 10 s of a 1000 s target.
    const std::map<int, double> flat{{8, 500}, {16, 490}};
    const auto small = choose_scaleout(flat, 0, 1000, 16);
    CHECK(small.chosen_scaleout == 16);
    CHECK(small.reason == DecisionReason::no_change);
}

TEST_CASE("decisions do not depend on candidate insertion order") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(10.0, 1000.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::pair<int, double>> entries;
        for (int s = 4; s <= 36; s += 1 + trial % 3) entries.emplace_back(s, u(rng));
        const double target = u(rng);
        std::map<int, double> forward_map(entries.begin(), entries.end());
        std::shuffle(entries.begin(), entries.end(), rng);
        std::map<int, double> shuffled;
        for (const auto& [s, r] : entries) shuffled.emplace(s, r);
        const auto a = choose_scaleout(forward_map, 0.0, target);
        const auto b = choose_scaleout(shuffled, 0.0, target);
        REQUIRE(a.chosen_scaleout == b.chosen_scaleout);
        REQUIRE(a.chosen_scaleout == reference_choice(forward_map, 0.0, target));
        REQUIRE(a.predicted_remaining == forward_map.at(a.chosen_scaleout));
    }
}

TEST_CASE("the choice never exceeds a candidate that meets the target") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(10.0, 1000.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::map<int, double> candidates;
        for (int s = 4; s <= 36; ++s) candidates[s] = u(rng);
        const double elapsed = u(rng) / 4;
        const double target = u(rng);
        const auto d = choose_scaleout(candidates, elapsed, target, 4 + trial % 33);
        for (const auto& [s, r] : candidates) {
            if (elapsed + r <= target) {
                REQUIRE(d.chosen_scaleout <= std::max(s, 4 + trial % 33));
            }
        }
        if (d.reason != DecisionReason::no_change) {
            const auto plain = choose_scaleout(candidates, elapsed, target);
            REQUIRE(d.chosen_scaleout == plain.chosen_scaleout);
        }
    }
}

TEST_CASE("raising the target never raises the choice on decreasing curves") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(100.0, 2500.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto curve = decreasing_curve(rng);
        double lo = u(rng), hi = u(rng);
        if (lo > hi) std::swap(lo, hi);
        REQUIRE(choose_scaleout(curve, 0.0, hi).chosen_scaleout <= choose_scaleout(curve, 0.0, lo).chosen_scaleout);
    }
}

TEST_CASE("initial_scaleout uses the full range") {
    const auto& f = trained_fixture();
    const ScaleoutRange range;
    const auto& job = f.history.front();
    const auto relaxed = initial_scaleout(f.history, f.model, job, 1e9, range);
    CHECK(relaxed.chosen_scaleout == range.min);
    CHECK(relaxed.candidates.size() == static_cast<std::size_t>(range.max - range.min + 1));

    const auto impossible = initial_scaleout(f.history, f.model, job, 1.0, range);
    CHECK(impossible.reason == DecisionReason::best_effort);
    double best = impossible.candidates.begin()->second;
    for (const auto& [s, r] : impossible.candidates) best = std::min(best, r);
    CHECK(impossible.predicted_remaining == best);

    CHECK_THROWS_AS(initial_scaleout({}, f.model, job, 100, range), std::invalid_argument);
    CHECK_THROWS_AS(initial_scaleout(f.history, EnelModel::create(ModelConfig{}, 1), job, 100, range),
                    std::invalid_argument);
}

TEST_CASE("recommend_rescale scores every candidate and needs a trained model") {
    const auto& f = trained_fixture();
    const ScaleoutRange range{4, 12};
    const auto& run = f.history[1];
    const auto rec = recommend_rescale(run, 2, f.model, 1e9, range, 100.0, 12);
    CHECK(rec.decision.candidates.size() == 9);
    CHECK(rec.decision.chosen_scaleout >= range.min);
    CHECK(rec.decision.chosen_scaleout <= range.max);
    CHECK(rec.fit_seconds > 0.0);
    CHECK(rec.predict_seconds > 0.0);

    SafetyConfig frozen;
    frozen.finetune_epochs = 0;
    const auto plain = recommend_rescale(run, 2, f.model, 1e9, range, 100.0, 12, frozen);
    CHECK(plain.tuned.same_parameters(f.model));
    CHECK(plain.decision.candidates.at(8) == forward(f.model, run, 2, 8).remaining);

    CHECK_THROWS_AS(recommend_rescale(run, 2, EnelModel::create(ModelConfig{}, 1), 100, range, 0, 8),
                    std::invalid_argument);
    CHECK_THROWS_AS(recommend_rescale(run, 0, f.model, 100, range, 0, 8), std::invalid_argument);
}
