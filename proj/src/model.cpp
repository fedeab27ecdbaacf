#include "enel/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

namespace enel {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
    return {v.data(), static_cast<Eigen::Index>(v.size())};
}

void check_size(std::span<const double> v, std::size_t expected, const char* what) {
    if (v.size() != expected) {
        throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(expected) + ", got " +
                                    std::to_string(v.size()));
    }
}

Eigen::VectorXd overhead_input(const ModelConfig& cfg, std::span<const double> context,
                               std::span<const double> metrics, const ScaleoutFeatures& start,
                               const ScaleoutFeatures& end, double time_fraction) {
    check_size(context, cfg.context_dim(), "context");
    check_size(metrics, cfg.metric_dim, "metrics");
    Eigen::VectorXd in(static_cast<Eigen::Index>(cfg.overhead_input_dim()));
    in << as_vector(context), as_vector(metrics), model_features(cfg, start), model_features(cfg, end), time_fraction;
    return in;
}

Eigen::VectorXd runtime_input(const ModelConfig& cfg, std::span<const double> context,
                              std::span<const double> metrics, const ScaleoutFeatures& end, double overhead_units) {
    check_size(context, cfg.context_dim(), "context");
    check_size(metrics, cfg.metric_dim, "metrics");
    Eigen::VectorXd in(static_cast<Eigen::Index>(cfg.runtime_input_dim()));
    in << as_vector(context), as_vector(metrics), model_features(cfg, end), overhead_units;
    return in;
}

Eigen::VectorXd pair_input(const Eigen::VectorXd& target, const Eigen::VectorXd& source) {
    Eigen::VectorXd in(target.size() + source.size());
    in << target, source;
    return in;
}

Eigen::VectorXd metric_transform_input(const Eigen::VectorXd& transformed, const Eigen::VectorXd& metrics) {
    Eigen::VectorXd in(transformed.size() + metrics.size());
    in << transformed, metrics;
    return in;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
    const double top = scores.maxCoeff();
    Eigen::VectorXd w = (scores.array() - top).exp();
    return w / w.sum();
}

}  // namespace

// ---------------------------------------------------------------------------

EnelModel EnelModel::create(const ModelConfig& config, std::uint64_t seed) {
    EnelModel m;
    m.config = config;
    m.f1 = nn::Mlp(config.overhead_input_dim(), config.hidden_width, 1, nn::Activation::softplus);
    m.f2 = nn::Mlp(config.runtime_input_dim(), config.hidden_width, 1, nn::Activation::softplus);
    m.f3 = nn::Mlp(config.pair_input_dim(), config.hidden_width, config.attention_dim, nn::Activation::identity);
    m.f4 = nn::Mlp(config.attention_dim + config.metric_dim, config.hidden_width, config.metric_dim,
                   nn::Activation::softplus);
    std::mt19937_64 rng(seed);
    for (nn::Mlp* f : {&m.f1, &m.f2, &m.f3, &m.f4}) f->initialize(rng);
    const double limit = std::sqrt(3.0 / static_cast<double>(config.attention_dim));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    m.attention = Eigen::VectorXd(static_cast<Eigen::Index>(config.attention_dim));
    for (Eigen::Index i = 0; i < m.attention.size(); ++i) m.attention[i] = uniform(rng);
    return m;
}

EnelModel EnelModel::zeros_like() const {
    EnelModel z;
    z.config = config;
    z.f1 = f1.zeros_like();
    z.f2 = f2.zeros_like();
    z.f3 = f3.zeros_like();
    z.f4 = f4.zeros_like();
    z.attention = Eigen::VectorXd::Zero(attention.size());
    return z;
}

std::vector<std::span<double>> EnelModel::tensors() {
    std::vector<std::span<double>> out;
    for (nn::Mlp* f : {&f1, &f2, &f3, &f4}) f->append_tensors(out);
    out.emplace_back(attention.data(), static_cast<std::size_t>(attention.size()));
    return out;
}

bool EnelModel::same_parameters(const EnelModel& other) const {
    return config == other.config && f1 == other.f1 && f2 == other.f2 && f3 == other.f3 && f4 == other.f4 &&
           attention == other.attention;
}

std::size_t count_parameters(const EnelModel& model) {
    return model.f1.parameter_count() + model.f2.parameter_count() + model.f3.parameter_count() +
           model.f4.parameter_count() + static_cast<std::size_t>(model.attention.size());
}

Eigen::Vector3d model_features(const ModelConfig& config, const ScaleoutFeatures& enriched) {
    return {enriched[0], enriched[1], enriched[2] / config.scaleout_scale};
}

Eigen::VectorXd node_input(const ModelConfig& config, int start_scaleout, std::span<const double> context,
                           int end_scaleout) {
    check_size(context, config.context_dim(), "context");
    Eigen::VectorXd x(static_cast<Eigen::Index>(config.node_input_dim()));
    x << model_features(config, enrich_scaleout(start_scaleout)), as_vector(context),
        model_features(config, enrich_scaleout(end_scaleout));
    return x;
}

double predict_overhead(const EnelModel& model, std::span<const double> context, std::span<const double> metrics,
                        const ScaleoutFeatures& start, const ScaleoutFeatures& end, double time_fraction) {
    const auto in = overhead_input(model.config, context, metrics, start, end, time_fraction);
    return model.config.runtime_scale * model.f1.forward(in)[0];
}

double predict_runtime(const EnelModel& model, std::span<const double> context, std::span<const double> metrics,
                       const ScaleoutFeatures& end, double overhead_seconds) {
    const auto in = runtime_input(model.config, context, metrics, end, overhead_seconds / model.config.runtime_scale);
    return model.config.runtime_scale * model.f2.forward(in)[0];
}

std::vector<double> accumulate_runtimes(const ComponentGraph& graph, std::span<const double> runtimes) {
    if (runtimes.size() != graph.nodes.size()) {
        throw std::invalid_argument("accumulate_runtimes: one runtime per node required");
    }
    const auto preds = graph.predecessors();
    std::vector<double> total(graph.nodes.size(), 0.0);
    for (std::size_t i : topological_order(graph)) {
        double longest = 0.0;
        for (std::size_t j : preds[i]) longest = std::max(longest, total[j]);
        total[i] = runtimes[i] + longest;
    }
    return total;
}

namespace {

Eigen::VectorXd attention_scores(const EnelModel& model, const Eigen::VectorXd& target,
                                 std::span<const Eigen::VectorXd> predecessors, std::vector<Eigen::VectorXd>* transformed) {
    Eigen::VectorXd scores(static_cast<Eigen::Index>(predecessors.size()));
    for (std::size_t j = 0; j < predecessors.size(); ++j) {
        Eigen::VectorXd u = model.f3.forward(pair_input(target, predecessors[j]));
        scores[static_cast<Eigen::Index>(j)] = model.attention.dot(u.array().tanh().matrix());
        if (transformed) transformed->push_back(std::move(u));
    }
    return scores;
}

}  // namespace

std::vector<double> edge_scores(const EnelModel& model, const Eigen::VectorXd& target,
                                std::span<const Eigen::VectorXd> predecessors) {
    const Eigen::VectorXd s = attention_scores(model, target, predecessors, nullptr);
    return {s.data(), s.data() + s.size()};
}

std::vector<double> softmax_weights(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("softmax_weights: no scores");
    const Eigen::VectorXd w = softmax(as_vector(scores));
    return {w.data(), w.data() + w.size()};
}

std::vector<double> edge_weights(const EnelModel& model, const Eigen::VectorXd& target,
                                 std::span<const Eigen::VectorXd> predecessors) {
    if (predecessors.empty()) throw std::invalid_argument("edge_weights: node has no predecessors");
    const Eigen::VectorXd w = softmax(attention_scores(model, target, predecessors, nullptr));
    return {w.data(), w.data() + w.size()};
}

Eigen::VectorXd propagate_metrics(const EnelModel& model, const Eigen::VectorXd& target,
                                  std::span<const PredecessorInput> predecessors) {
    if (predecessors.empty()) throw std::invalid_argument("propagate_metrics: node has no predecessors");
    std::vector<Eigen::VectorXd> xs;
    xs.reserve(predecessors.size());
    for (const auto& p : predecessors) xs.push_back(p.x);
    std::vector<Eigen::VectorXd> transformed;
    const Eigen::VectorXd w = softmax(attention_scores(model, target, xs, &transformed));
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.config.metric_dim));
    for (std::size_t j = 0; j < predecessors.size(); ++j) {
        out += w[static_cast<Eigen::Index>(j)] *
               model.f4.forward(metric_transform_input(transformed[j], predecessors[j].metrics));
    }
    return out;
}

ForwardResult forward(const EnelModel& model, const JobExecution& job, std::size_t from_component,
                      int assumed_scaleout, const SummaryHistory* history) {
    const std::size_t n = job.components.size();
    if (from_component > n) {
        throw std::out_of_range("forward: component " + std::to_string(from_component) + " out of range (job has " +
                                std::to_string(n) + ")");
    }
    if (assumed_scaleout < 1) throw std::invalid_argument("forward: scale-out must be >= 1");
    ForwardResult result;
    result.from_component = from_component;
    if (from_component == n) return result;
    if (from_component == 0) {
        throw std::out_of_range("forward: the first component has no predecessors to propagate from");
    }
    for (std::size_t k = 0; k + 1 < from_component; ++k) {
        if (!job.components[k].observed()) {
            throw std::invalid_argument("forward: component " + std::to_string(k) + " is not observed");
        }
    }

    const auto& cfg = model.config;
    const int s = assumed_scaleout;
    SummaryNode previous;
    int current_scaleout = s;
    const auto& last_observed = job.components[from_component - 1];
    if (last_observed.observed()) {
        previous = make_summary_p(last_observed);
        current_scaleout = previous.end_scaleout;
    } else {
        auto h = history ? history->historical(static_cast<int>(from_component - 1), s, cfg.beta) : std::nullopt;
        if (!h) {
            throw std::invalid_argument("forward: component " + std::to_string(from_component - 1) +
                                        " is neither observed nor covered by history");
        }
        previous = *h;
        previous.start_scaleout = s;
        previous.end_scaleout = s;
        if (previous.context.empty()) previous.context = std::vector<double>(cfg.context_dim(), 0.0);
    }

    for (std::size_t k = from_component; k < n; ++k) {
        const auto& g = job.components[k];
        const auto preds = g.predecessors();
        const auto order = topological_order(g);

        std::vector<PredecessorInput> summary_inputs;
        auto add_summary = [&](const SummaryNode& node) {
            summary_inputs.push_back({node_input(cfg, node.start_scaleout, node.context, node.end_scaleout),
                                      as_vector(node.metrics)});
        };
        add_summary(previous);
        if (history) {
            if (auto h = history->historical(static_cast<int>(k) - 1, s, cfg.beta)) add_summary(*h);
        }

        std::vector<NodePrediction> predictions(g.nodes.size());
        std::vector<Eigen::VectorXd> xs(g.nodes.size());
        std::vector<double> runtimes(g.nodes.size(), 0.0);
        for (std::size_t i : order) {
            const auto& node = g.nodes[i];
            const bool root = preds[i].empty();
            const int a = (k == from_component && root) ? current_scaleout : s;
            const double r = (a == s) ? 1.0 : cfg.transition_time_fraction;
            xs[i] = node_input(cfg, a, node.context, s);

            std::vector<PredecessorInput> inputs;
            if (root) {
                inputs = summary_inputs;
            } else {
                for (std::size_t j : preds[i]) {
                    inputs.push_back({xs[j], as_vector(predictions[j].metrics)});
                }
            }
            const Eigen::VectorXd m = propagate_metrics(model, xs[i], inputs);
            auto& p = predictions[i];
            p.metrics.assign(m.data(), m.data() + m.size());
            const auto a_feat = enrich_scaleout(a);
            const auto z_feat = enrich_scaleout(s);
            p.overhead = predict_overhead(model, node.context, p.metrics, a_feat, z_feat, r);
            p.runtime = predict_runtime(model, node.context, p.metrics, z_feat, p.overhead);
            runtimes[i] = p.runtime;
        }
        const auto accumulated = accumulate_runtimes(g, runtimes);
        double total = 0.0;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            predictions[i].accumulated = accumulated[i];
            total = std::max(total, accumulated[i]);
        }

        // P node of the predicted component feeds the next one.
        SummaryNode next;
        next.kind = SummaryKind::current;
        next.source_component = static_cast<int>(k);
        next.start_scaleout = (k == from_component) ? current_scaleout : s;
        next.end_scaleout = s;
        next.context.assign(cfg.context_dim(), 0.0);
        next.metrics.assign(cfg.metric_dim, 0.0);
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            for (std::size_t d = 0; d < cfg.context_dim(); ++d) next.context[d] += g.nodes[i].context[d];
            for (std::size_t d = 0; d < cfg.metric_dim; ++d) next.metrics[d] += predictions[i].metrics[d];
        }
        const double inv = 1.0 / static_cast<double>(g.nodes.size());
        for (double& v : next.context) v *= inv;
        for (double& v : next.metrics) v *= inv;
        previous = std::move(next);

        result.components.push_back(std::move(predictions));
        result.component_totals.push_back(total);
        result.remaining += total;
    }
    return result;
}

// ---------------------------------------------------------------------------

TrainingSet build_training_set(const ModelConfig& config, std::span<const JobExecution> runs,
                               const SummaryHistory* prior) {
    TrainingSet set;
    SummaryHistory history = prior ? *prior : SummaryHistory{};
    for (const auto& run : runs) {
        set.run_ids.push_back(run.run_id);
        for (std::size_t k = 0; k < run.components.size(); ++k) {
            const auto& g = run.components[k];
            if (!g.observed()) break;
            const auto preds = g.predecessors();

            std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> summaries;  // (x, metrics)
            if (k > 0) {
                const SummaryNode p = make_summary_p(run.components[k - 1]);
                auto add = [&](const SummaryNode& s) {
                    summaries.emplace_back(node_input(config, s.start_scaleout, s.context, s.end_scaleout),
                                           as_vector(s.metrics));
                };
                add(p);
                if (auto h = history.historical(static_cast<int>(k) - 1, p.end_scaleout, config.beta)) add(*h);
            }

            std::vector<Eigen::VectorXd> xs(g.nodes.size());
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                const auto& node = g.nodes[i];
                xs[i] = node_input(config, node.start_scaleout, node.context, node.end_scaleout);
            }
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                const auto& node = g.nodes[i];
                NodeSample sample;
                const auto a = enrich_scaleout(node.start_scaleout);
                const auto z = enrich_scaleout(node.end_scaleout);
                sample.overhead_input = overhead_input(config, node.context, node.metrics, a, z, node.time_fraction);
                sample.runtime_input = runtime_input(config, node.context, node.metrics, z, 0.0);
                sample.metrics = as_vector(node.metrics);
                sample.runtime = *node.runtime;
                sample.rescaled = node.start_scaleout != node.end_scaleout;
                if (preds[i].empty()) {
                    for (const auto& [x, m] : summaries) sample.predecessors.push_back({pair_input(xs[i], x), m});
                } else {
                    for (std::size_t j : preds[i]) {
                        sample.predecessors.push_back({pair_input(xs[i], xs[j]), as_vector(g.nodes[j].metrics)});
                    }
                }
                set.nodes.push_back(std::move(sample));
            }
        }
        history.add_run(run);
    }
    return set;
}

LossBreakdown loss_and_gradient(const EnelModel& model, const TrainingSet& set, EnelModel* grad) {
    const auto& cfg = model.config;
    const double scale = cfg.runtime_scale;
    if (grad) {
        // zero in place so that spans held by an optimizer stay valid
        if (grad->attention.size() != model.attention.size() || grad->f1.inputs() != model.f1.inputs()) {
            *grad = model.zeros_like();
        } else {
            for (auto t : grad->tensors()) std::fill(t.begin(), t.end(), 0.0);
        }
    }

    std::size_t with_metrics = 0;
    std::size_t unscaled = 0;
    for (const auto& s : set.nodes) {
        if (!s.predecessors.empty()) ++with_metrics;
        if (!s.rescaled) ++unscaled;
    }
    const double n_runtime = static_cast<double>(std::max<std::size_t>(set.nodes.size(), 1));
    const double n_metric = static_cast<double>(std::max<std::size_t>(with_metrics, 1)) * static_cast<double>(cfg.metric_dim);
    const double n_reg = static_cast<double>(std::max<std::size_t>(unscaled, 1));

    LossBreakdown loss;
    nn::Mlp::Cache c1, c2;
    std::vector<nn::Mlp::Cache> c3, c4;
    std::vector<Eigen::VectorXd> u, th, y;
    for (const auto& s : set.nodes) {
        // Metric propagation
        const std::size_t np = s.predecessors.size();
        if (np > 0) {
            c3.resize(np);
            c4.resize(np);
            u.resize(np);
            th.resize(np);
            y.resize(np);
            Eigen::VectorXd scores(static_cast<Eigen::Index>(np));
            for (std::size_t j = 0; j < np; ++j) {
                u[j] = model.f3.forward(s.predecessors[j].pair_input, c3[j]);
                th[j] = u[j].array().tanh();
                scores[static_cast<Eigen::Index>(j)] = model.attention.dot(th[j]);
                y[j] = model.f4.forward(metric_transform_input(u[j], s.predecessors[j].metrics), c4[j]);
            }
            const Eigen::VectorXd w = softmax(scores);
            Eigen::VectorXd m_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.metric_dim));
            for (std::size_t j = 0; j < np; ++j) m_hat += w[static_cast<Eigen::Index>(j)] * y[j];
            const Eigen::VectorXd diff = m_hat - s.metrics;
            loss.metric_mse += diff.squaredNorm() / n_metric;

            if (grad) {
                const Eigen::VectorXd g = 2.0 / n_metric * diff;
                Eigen::VectorXd d_w(static_cast<Eigen::Index>(np));
                for (std::size_t j = 0; j < np; ++j) d_w[static_cast<Eigen::Index>(j)] = g.dot(y[j]);
                const double mean_dw = w.dot(d_w);
                for (std::size_t j = 0; j < np; ++j) {
                    const auto jj = static_cast<Eigen::Index>(j);
                    const double d_score = w[jj] * (d_w[jj] - mean_dw);
                    grad->attention += d_score * th[j];
                    const Eigen::VectorXd d_in4 = model.f4.backward(c4[j], w[jj] * g, grad->f4);
                    Eigen::VectorXd d_u = d_in4.head(u[j].size());
                    d_u.array() += d_score * model.attention.array() * (1.0 - th[j].array().square());
                    model.f3.backward(c3[j], d_u, grad->f3);
                }
            }
        }

        // Overhead and runtime
        const double o_units = model.f1.forward(s.overhead_input, c1)[0];
        Eigen::VectorXd rin = s.runtime_input;
        rin[rin.size() - 1] = o_units;
        const double t_units = model.f2.forward(rin, c2)[0];
        const double t_err = t_units - s.runtime / scale;
        loss.runtime_mse += t_err * t_err / n_runtime;
        if (!s.rescaled) loss.overhead_reg += o_units * o_units / n_reg;

        if (grad) {
            Eigen::VectorXd d_t(1);
            d_t[0] = 2.0 * t_err / n_runtime;
            const Eigen::VectorXd d_rin = model.f2.backward(c2, d_t, grad->f2);
            Eigen::VectorXd d_o(1);
            d_o[0] = d_rin[d_rin.size() - 1];
            if (!s.rescaled) d_o[0] += cfg.overhead_weight * 2.0 * o_units / n_reg;
            model.f1.backward(c1, d_o, grad->f1);
        }
    }
    loss.total = loss.runtime_mse + loss.metric_mse + cfg.overhead_weight * loss.overhead_reg;
    return loss;
}

namespace {

double mean_runtime(std::span<const JobExecution> dataset) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& job : dataset) {
        for (const auto& g : job.components) {
            for (const auto& n : g.nodes) {
                if (n.runtime) {
                    sum += *n.runtime;
                    ++count;
                }
            }
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

double mean_transition_fraction(std::span<const JobExecution> dataset, double fallback) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& job : dataset) {
        for (const auto& g : job.components) {
            for (const auto& n : g.nodes) {
                if (n.observed() && n.start_scaleout != n.end_scaleout) {
                    sum += n.time_fraction;
                    ++count;
                }
            }
        }
    }
    return count ? sum / static_cast<double>(count) : fallback;
}

std::vector<std::string> run_ids(std::span<const JobExecution> dataset) {
    std::vector<std::string> ids;
    for (const auto& job : dataset) ids.push_back(job.run_id);
    return ids;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared optimisation loop. Keeps the best parameters when keep_best is set.
void optimise(EnelModel& model, const TrainingSet& set, const TrainOptions& options, bool keep_best,
              TrainResult& result, Clock::time_point start) {
    nn::Optimizer optimizer(options.optimizer);
    EnelModel grad = model.zeros_like();
    auto params = model.tensors();
    auto grads = grad.tensors();

    std::optional<EnelModel> best;
    double best_loss = std::numeric_limits<double>::infinity();
    double epoch_seconds = 0.0;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        // Stop early when another epoch plus the final evaluation would overrun the budget.
        if (options.time_budget_s > 0.0 && epoch > 0 &&
            seconds_since(start) + 2.0 * epoch_seconds > options.time_budget_s) {
            break;
        }
        const auto epoch_start = Clock::now();
        const LossBreakdown loss = loss_and_gradient(model, set, &grad);
        result.curve.push_back({epoch, loss});
        if (keep_best && loss.total < best_loss) {
            best_loss = loss.total;
            best = model;
        }
        optimizer.step(params, grads);
        epoch_seconds = seconds_since(epoch_start);
    }
    const LossBreakdown final_loss = loss_and_gradient(model, set, nullptr);
    result.curve.push_back({result.curve.size(), final_loss});
    if (keep_best && best && best_loss < final_loss.total) model = std::move(*best);
}

}  // namespace

TrainResult train(const ModelConfig& config, std::span<const JobExecution> dataset, const TrainOptions& options) {
    if (dataset.empty()) throw std::invalid_argument("train: empty data set");
    const auto start = Clock::now();
    ModelConfig cfg = config;
    const double mean = mean_runtime(dataset);
    if (!(mean > 0.0)) throw std::invalid_argument("train: data set has no observed runtimes");
    cfg.runtime_scale = mean;
    cfg.transition_time_fraction = mean_transition_fraction(dataset, config.transition_time_fraction);

    TrainResult result{EnelModel::create(cfg, options.seed), {}, 0.0};
    const TrainingSet set = build_training_set(cfg, dataset, options.prior);
    optimise(result.model, set, options, false, result, start);
    result.model.trained_on_runs = run_ids(dataset);
    result.wall_seconds = seconds_since(start);
    return result;
}

TrainResult fine_tune(const EnelModel& model, std::span<const JobExecution> recent, const TrainOptions& options) {
    const auto start = Clock::now();
    TrainResult result{model, {}, 0.0};
    if (options.epochs == 0 || recent.empty()) {
        result.wall_seconds = seconds_since(start);
        return result;
    }
    const TrainingSet set = build_training_set(model.config, recent, options.prior);
    optimise(result.model, set, options, true, result, start);
    for (auto& id : run_ids(recent)) {
        if (std::find(result.model.trained_on_runs.begin(), result.model.trained_on_runs.end(), id) ==
            result.model.trained_on_runs.end()) {
            result.model.trained_on_runs.push_back(id);
        }
    }
    result.wall_seconds = seconds_since(start);
    return result;
}

}  // namespace enel
