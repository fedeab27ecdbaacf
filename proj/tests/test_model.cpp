#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "enel/model.hpp"
#include "fixtures.hpp"

using namespace enel;
using namespace enel::testing;

namespace {

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t analytic_count(const ModelConfig& c) {
    const std::size_t h = c.hidden_width;
    return dense_count(c.overhead_input_dim(), h) + dense_count(h, 1) + dense_count(c.runtime_input_dim(), h) +
           dense_count(h, 1) + dense_count(c.pair_input_dim(), h) + dense_count(h, c.attention_dim) +
           dense_count(c.attention_dim + c.metric_dim, h) + dense_count(h, c.metric_dim) + c.attention_dim;
}

/// Makes f2 output exactly c seconds for every input.
EnelModel constant_runtime_model(const ModelConfig& cfg, double c) {
    EnelModel m = EnelModel::create(cfg, 3);
    m.f2.hidden.weight.setZero();
    m.f2.hidden.bias.setZero();
    m.f2.output.weight.setZero();
    m.f2.output.bias[0] = std::log(std::expm1(c / cfg.runtime_scale));
    m.trained_on_runs = {"mock"};
    return m;
}

JobExecution chain_components(const ModelConfig& cfg, const std::vector<int>& lengths) {
    JobExecution job;
    job.run_id = "chains";
    job.runtime_target = 100;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        ComponentGraph g;
        g.index = static_cast<int>(k);
        for (int i = 0; i < lengths[k]; ++i) {
            auto n = observed_node(cfg, "n" + std::to_string(i), 8, 8, 1.0, 5.0, 0.1 * i);
            if (k > 0) {
                n.runtime.reset();
                n.metrics.clear();
            }
            g.nodes.push_back(n);
            if (i > 0) g.edges.push_back({static_cast<std::size_t>(i - 1), static_cast<std::size_t>(i)});
        }
        job.components.push_back(g);
    }
    job.component_wall_times = {5.0 * lengths[0]};
    return job;
}

std::vector<std::vector<double>> flatten(EnelModel& m) {
    std::vector<std::vector<double>> out;
    for (auto t : m.tensors()) out.emplace_back(t.begin(), t.end());
    return out;
}

bool gradient_matches(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    return diff <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) || diff < 1e-9;
}

}  // namespace

TEST_CASE("count_parameters matches the analytic layer sum") {
    const ModelConfig cfg;
    const auto model = EnelModel::create(cfg, 1);
    CHECK(count_parameters(model) == analytic_count(cfg));
    CHECK(count_parameters(model) == 5703);

    ModelConfig wide = cfg;
    wide.hidden_width *= 2;
    CHECK(count_parameters(EnelModel::create(wide, 1)) > count_parameters(model));
    CHECK(model.f3.outputs() == static_cast<std::size_t>(model.attention.size()));
    CHECK(model.f4.inputs() == cfg.attention_dim + cfg.metric_dim);
}

TEST_CASE("node predictions are non-negative, pure and ignore the start scale-out") {
    const ModelConfig cfg;
    const auto model = EnelModel::create(cfg, 5);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> c(cfg.context_dim()), m(cfg.metric_dim);
        for (double& v : c) v = g(rng);
        for (double& v : m) v = std::abs(g(rng));
        const int a = 1 + trial % 36;
        const int z = 1 + (trial * 7) % 36;
        const double o = predict_overhead(model, c, m, enrich_scaleout(a), enrich_scaleout(z), 0.5);
        REQUIRE(o >= 0.0);
        REQUIRE(o == predict_overhead(model, c, m, enrich_scaleout(a), enrich_scaleout(z), 0.5));
        const double t = predict_runtime(model, c, m, enrich_scaleout(z), o);
        REQUIRE(t >= 0.0);
    }
    std::vector<double> short_context(3);
    std::vector<double> m(cfg.metric_dim);
    CHECK_THROWS_AS(predict_overhead(model, short_context, m, enrich_scaleout(4), enrich_scaleout(4), 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(predict_runtime(model, short_context, m, enrich_scaleout(4), 0.0), std::invalid_argument);
}

TEST_CASE("accumulate_runtimes follows the longest path") {
    ComponentGraph chain;
    for (int i = 0; i < 3; ++i) chain.nodes.push_back(named_node("n" + std::to_string(i)));
    chain.edges = {{0, 1}, {1, 2}};
    CHECK(accumulate_runtimes(chain, std::vector<double>{2, 3, 5}) == std::vector<double>{2, 5, 10});

    ComponentGraph diamond;
    for (int i = 1; i <= 4; ++i) diamond.nodes.push_back(named_node("n" + std::to_string(i)));
    diamond.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
    CHECK(accumulate_runtimes(diamond, std::vector<double>{1, 2, 7, 1})[3] == 9.0);

    ComponentGraph single;
    single.nodes = {named_node("n")};
    CHECK(accumulate_runtimes(single, std::vector<double>{4}) == std::vector<double>{4});

    ComponentGraph cycle = chain;
    cycle.edges.push_back({2, 0});
    CHECK_THROWS_AS(accumulate_runtimes(cycle, std::vector<double>{1, 1, 1}), std::invalid_argument);
}

TEST_CASE("accumulate_runtimes equals path enumeration on random DAGs") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> t(0.0, 50.0);
    std::uniform_int_distribution<int> size(1, 8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto g = random_dag(rng, size(rng), 0.4);
        std::vector<double> runtimes(g.nodes.size());
        for (double& v : runtimes) v = t(rng);
        REQUIRE(accumulate_runtimes(g, runtimes) == longest_paths_by_enumeration(g, runtimes));
    }
}

TEST_CASE("edge weights form a shift-invariant softmax") {
    const ModelConfig cfg;
    const auto model = EnelModel::create(cfg, 2);
    std::vector<double> c(cfg.context_dim(), 0.1);
    const auto xi = node_input(cfg, 4, c, 8);
    const auto xj = node_input(cfg, 8, c, 8);
    CHECK(node_input(cfg, 4, c, 8).size() == static_cast<Eigen::Index>(3 + cfg.context_dim() + 3));

    const std::vector<Eigen::VectorXd> one{xj};
    CHECK(edge_weights(model, xi, one) == std::vector<double>{1.0});
    const std::vector<Eigen::VectorXd> twins{xj, xj};
    const auto w = edge_weights(model, xi, twins);
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(edge_weights(model, xi, std::vector<Eigen::VectorXd>{}), std::invalid_argument);

    const std::vector<double> scores{1.0, -2.0, 0.5, 3.0};
    auto shifted = scores;
    for (double& s : shifted) s += 123.0;
    const auto a = softmax_weights(scores);
    const auto b = softmax_weights(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] >= 0.0);
        CHECK(std::abs(a[i] - b[i]) < 1e-12);
        sum += a[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("propagate_metrics with one or duplicated predecessors") {
    const ModelConfig cfg;
    const auto model = EnelModel::create(cfg, 4);
    std::vector<double> c(cfg.context_dim(), -0.2);
    const auto xi = node_input(cfg, 8, c, 8);
    const PredecessorInput p{node_input(cfg, 4, c, 8), Eigen::VectorXd::LinSpaced(5, 0.1, 0.9)};

    Eigen::VectorXd pair(xi.size() * 2);
    pair << xi, p.x;
    const Eigen::VectorXd transformed = model.f3.forward(pair);
    Eigen::VectorXd f4_in(transformed.size() + p.metrics.size());
    f4_in << transformed, p.metrics;
    const Eigen::VectorXd expected = model.f4.forward(f4_in);

    const std::vector<PredecessorInput> one{p};
    const Eigen::VectorXd single = propagate_metrics(model, xi, one);
    CHECK(single == expected);

    const std::vector<PredecessorInput> triple{p, p, p};
    const Eigen::VectorXd dup = propagate_metrics(model, xi, triple);
    for (Eigen::Index i = 0; i < dup.size(); ++i) {
        CHECK(dup[i] == doctest::Approx(single[i]).epsilon(1e-12));
        CHECK(dup[i] >= 0.0);
    }
    CHECK_THROWS_AS(propagate_metrics(model, xi, std::vector<PredecessorInput>{}), std::invalid_argument);
}

TEST_CASE("forward handles boundary components") {
    const auto cfg = toy_config();
    const auto model = EnelModel::create(cfg, 1);
    const auto job = toy_job(cfg);
    CHECK(forward(model, job, 2, 8).remaining == 0.0);
    CHECK_THROWS_AS(forward(model, job, 3, 8), std::out_of_range);
    CHECK_THROWS_AS(forward(model, job, 0, 8), std::out_of_range);

    auto single = chain_components(cfg, {1, 1});
    const auto r = forward(model, single, 1, 8);
    REQUIRE(r.components.size() == 1);
    CHECK(r.remaining == r.components[0][0].runtime);

    const auto a = forward(model, job, 1, 12);
    const auto b = forward(model, job, 1, 12);
    CHECK(a.remaining == b.remaining);
    CHECK(a.component_totals == b.component_totals);
}

TEST_CASE("forward with a constant runtime model sums chain lengths") {
    const auto cfg = toy_config();
    const double c = 7.5;
    const auto model = constant_runtime_model(cfg, c);
    const auto job = chain_components(cfg, {2, 3, 1, 4});
    for (int s : {4, 12, 36}) {
        const auto r = forward(model, job, 1, s);
        CHECK(r.remaining == doctest::Approx(c * (3 + 1 + 4)).epsilon(1e-12));
    }
}

TEST_CASE("loss gradient matches central finite differences") {
    const auto cfg = toy_config();
    auto model = EnelModel::create(cfg, 9);
    for (auto t : model.tensors()) {
        for (double& v : t) v *= 1.5;
    }
    auto first = toy_job(cfg, "first");
    auto second = toy_job(cfg, "second");
    for (auto& n : second.components[1].nodes) *n.runtime *= 1.3;
    const std::vector<JobExecution> runs{first, second};
    const auto set = build_training_set(cfg, runs);

    EnelModel grad = model.zeros_like();
    loss_and_gradient(model, set, &grad);
    const auto analytic = flatten(grad);
    auto params = model.tensors();
    const double h = 1e-5;
    std::size_t checked = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double saved = params[t][i];
            params[t][i] = saved + h;
            const double up = loss_and_gradient(model, set, nullptr).total;
            params[t][i] = saved - h;
            const double down = loss_and_gradient(model, set, nullptr).total;
            params[t][i] = saved;
            const double numeric = (up - down) / (2 * h);
            INFO("tensor " << t << " index " << i);
            REQUIRE(gradient_matches(analytic[t][i], numeric));
            ++checked;
        }
    }
    CHECK(checked == count_parameters(model));
}

TEST_CASE("autoencoder gradient matches central finite differences") {
    std::vector<Eigen::VectorXd> data;
    for (const char* text : {"spark 3.1.1", "kmeans", "10 GB"}) {
        const auto flat = encode_property(std::string(text), 9).flat();
        data.emplace_back(Eigen::Map<const Eigen::VectorXd>(flat.data(), 9));
    }
    const auto flat = encode_property(std::uint64_t{13}, 9).flat();
    data.emplace_back(Eigen::Map<const Eigen::VectorXd>(flat.data(), 9));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    AutoencoderParams p(9, 3);
    for (auto* m : {&p.enc_w, &p.dec_w}) {
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
    }
    for (auto* b : {&p.enc_b, &p.dec_b}) {
        for (Eigen::Index i = 0; i < b->size(); ++i) (*b)[i] = u(rng);
    }
    const auto g = autoencoder_loss_and_gradient(p, data);

    auto check = [&](Eigen::Ref<Eigen::VectorXd> values, const Eigen::Ref<const Eigen::VectorXd>& analytic) {
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + 1e-5;
            const double up = autoencoder_loss_and_gradient(p, data).loss;
            values[i] = saved - 1e-5;
            const double down = autoencoder_loss_and_gradient(p, data).loss;
            values[i] = saved;
            REQUIRE(gradient_matches(analytic[i], (up - down) / 2e-5));
        }
    };
    check(Eigen::Map<Eigen::VectorXd>(p.enc_w.data(), p.enc_w.size()),
          Eigen::Map<const Eigen::VectorXd>(g.grad.enc_w.data(), g.grad.enc_w.size()));
    check(p.enc_b, g.grad.enc_b);
    check(Eigen::Map<Eigen::VectorXd>(p.dec_w.data(), p.dec_w.size()),
          Eigen::Map<const Eigen::VectorXd>(g.grad.dec_w.data(), g.grad.dec_w.size()));
    check(p.dec_b, g.grad.dec_b);
}

TEST_CASE("training is deterministic and generalises to a held-out copy") {
    const auto profile = chain_profile(4, 2, {20, 300, 0, 0.5});
    ClusterEnv env;
    env.noise_level = 0.05;
    const auto runs = fixed_runs(profile, env, {4, 10, 20, 36}, 100);
    const auto held_out = fixed_runs(profile, env, {6, 16, 30}, 900);

    TrainOptions options;
    options.epochs = 150;
    const auto a = train(ModelConfig{}, runs, options);
    const auto b = train(ModelConfig{}, runs, options);
    CHECK(a.model.same_parameters(b.model));
    CHECK(a.model.trained_on_runs.size() == runs.size());

    const auto untrained = EnelModel::create(a.model.config, options.seed);
    const auto test_set = build_training_set(a.model.config, held_out);
    CHECK(loss_and_gradient(a.model, test_set, nullptr).total < loss_and_gradient(untrained, test_set, nullptr).total);
    CHECK_THROWS_AS(train(ModelConfig{}, std::vector<JobExecution>{}, options), std::invalid_argument);
}

TEST_CASE("trained model recovers a chain job's runtime curve") {
    const ErnestCoefficients theta{100, 600, 0, 0};
    const auto profile = chain_profile(5, 1, theta);
    const ClusterEnv env;
    const std::vector<int> scaleouts{4, 8, 12, 16, 24, 36};
    const auto runs = fixed_runs(profile, env, scaleouts, 1);
    TrainOptions options;
    options.epochs = 400;
    const auto model = train(ModelConfig{}, runs, options).model;

    for (std::size_t i = 0; i < runs.size(); ++i) {
        const int s = scaleouts[i];
        const double truth = 100.0 + 600.0 / s;
        const auto prediction = forward(model, runs[i], 1, s);
        for (const auto& component : prediction.components) {
            const auto& node = component.front();
            INFO("s = " << s);
            CHECK(std::abs(node.runtime - truth) < 0.1 * truth);
            CHECK(node.overhead >= 0.0);
            CHECK(node.overhead < 0.05 * node.runtime);
        }
    }
}

TEST_CASE("fine_tune keeps parameters at zero epochs and never raises the loss") {
    const auto profile = chain_profile(3, 2, {30, 400, 0, 0.3});
    ClusterEnv env;
    env.noise_level = 0.05;
    const auto runs = fixed_runs(profile, env, {4, 12, 24}, 7);
    TrainOptions options;
    options.epochs = 60;
    const auto base = train(ModelConfig{}, runs, options).model;

    TrainOptions none = options;
    none.epochs = 0;
    CHECK(fine_tune(base, runs, none).model.same_parameters(base));

    const auto set = build_training_set(base.config, runs);
    const double before = loss_and_gradient(base, set, nullptr).total;
    for (double lr : {1e-4, 5e-3, 0.5}) {
        TrainOptions ft = options;
        ft.epochs = 20;
        ft.optimizer.learning_rate = lr;
        const auto tuned = fine_tune(base, runs, ft).model;
        CHECK(loss_and_gradient(tuned, set, nullptr).total <= before + 1e-6);
    }
}

TEST_CASE("fine_tune respects its wall-time budget on a 20-component job") {
    const auto profile = make_profile("lr-like");
    REQUIRE(profile.components.size() >= 20);
    const auto runs = fixed_runs(profile, ClusterEnv{}, {8, 24}, 3);
    TrainOptions options;
    options.epochs = 20;
    const auto base = train(ModelConfig{}, runs, options).model;
    TrainOptions ft = options;
    ft.epochs = 1000000;
    ft.time_budget_s = 2.0;
    const auto tuned = fine_tune(base, std::span<const JobExecution>(&runs[0], 1), ft);
    CHECK(tuned.wall_seconds < ft.time_budget_s);
}
