#include "enel/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace enel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NodeTemplate make_node(std::string id, ErnestCoefficients theta, MetricProfile metrics, std::uint64_t tasks) {
    NodeTemplate n;
    n.properties = {{PropertyGroup::node, "stage", id}, {PropertyGroup::node, "tasks", tasks}};
    n.id = std::move(id);
    n.theta = theta;
    n.metrics = metrics;
    return n;
}

ComponentTemplate chain(std::string name, std::vector<NodeTemplate> nodes) {
    ComponentTemplate c{std::move(name), std::move(nodes), {}};
    for (std::size_t i = 1; i < c.nodes.size(); ++i) c.edges.push_back({i - 1, i});
    return c;
}

// head -> {left, right} -> tail
ComponentTemplate diamond(std::string name, NodeTemplate head, NodeTemplate left, NodeTemplate right,
                          NodeTemplate tail) {
    ComponentTemplate c{std::move(name), {std::move(head), std::move(left), std::move(right), std::move(tail)}, {}};
    c.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
    return c;
}

std::vector<Property> job_properties(std::string signature, std::string dataset, std::string parameters) {
    return {
        {PropertyGroup::always, "job", std::move(signature)},
        {PropertyGroup::always, "dataset", std::move(dataset)},
        {PropertyGroup::always, "parameters", std::move(parameters)},
        {PropertyGroup::optional, "spark_version", std::string("spark 3.1.1")},
        {PropertyGroup::optional, "executor_cores", std::uint64_t{6}},
        {PropertyGroup::optional, "executor_memory_mb", std::uint64_t{10240}},
    };
}

JobProfile lr_profile() {
    JobProfile p{"lr-like", {}, 20, "27 GB", job_properties("LogisticRegression", "multiclass 27 GB", "20 iterations")};
    p.components.push_back(chain("prepare", {make_node("read", {3, 280, 0, 0.35}, {0.9, 0.1, 1.2, 0.03, 0.2}, 216),
                                             make_node("parse", {1, 90, 0, 0.1}, {0.85, 0.3, 0.6, 0.05, 0.1}, 216)}));
    for (int i = 0; i < p.iterations; ++i) {
        p.components.push_back(chain("iteration", {make_node("gradient", {0.5, 90, 0, 0.12}, {0.8, 0.2, 0.4, 0.04, 0.05}, 216),
                                                   make_node("aggregate", {0.3, 8, 0.3, 0.06}, {0.6, 0.6, 0.1, 0.02, 0.02}, 36)}));
    }
    p.components.push_back(chain("finalize", {make_node("save", {2, 40, 0, 0.08}, {0.5, 0.1, 0.8, 0.02, 0.01}, 36)}));
    return p;
}

JobProfile mpc_profile() {
    JobProfile p{"mpc-like", {}, 20, "27 GB",
                 job_properties("MultilayerPerceptronClassifier", "multiclass 27 GB", "20 iterations layers 200 100 50 3")};
    p.components.push_back(chain("prepare", {make_node("read", {3, 300, 0, 0.4}, {0.9, 0.1, 1.2, 0.03, 0.2}, 216),
                                             make_node("parse", {1, 100, 0, 0.1}, {0.85, 0.3, 0.6, 0.05, 0.1}, 216)}));
    for (int i = 0; i < p.iterations; ++i) {
        p.components.push_back(chain("iteration",
                                     {make_node("forward", {0.5, 60, 0, 0.1}, {0.9, 0.2, 0.3, 0.06, 0.08}, 216),
                                      make_node("backward", {0.5, 80, 0, 0.12}, {0.9, 0.3, 0.3, 0.08, 0.1}, 216),
                                      make_node("aggregate", {0.3, 10, 0.3, 0.08}, {0.6, 0.7, 0.1, 0.02, 0.02}, 36),
                                      make_node("update", {0.2, 4, 0, 0.03}, {0.4, 0.1, 0.05, 0.01, 0.0}, 6)}));
    }
    p.components.push_back(chain("finalize", {make_node("evaluate", {2, 60, 0, 0.1}, {0.7, 0.2, 0.5, 0.03, 0.02}, 72)}));
    return p;
}

JobProfile kmeans_profile() {
    JobProfile p{"kmeans-like", {}, 10, "48 GB", job_properties("KMeans", "points 48 GB", "10 iterations 8 clusters")};
    p.components.push_back(chain("prepare", {make_node("read", {4, 360, 0, 0.45}, {0.9, 0.1, 1.4, 0.03, 0.25}, 384),
                                             make_node("cache", {2, 120, 0, 0.15}, {0.8, 0.2, 0.9, 0.06, 0.3}, 384)}));
    for (int i = 0; i < p.iterations; ++i) {
        p.components.push_back(diamond("iteration",
                                       make_node("assign", {1, 200, 0, 0.3}, {0.95, 0.2, 0.5, 0.05, 0.1}, 384),
                                       make_node("partial_a", {0.5, 60, 0.4, 0.06}, {0.7, 0.5, 0.2, 0.03, 0.05}, 192),
                                       make_node("partial_b", {0.5, 72, 0.4, 0.07}, {0.7, 0.55, 0.2, 0.03, 0.05}, 192),
                                       make_node("update", {0.8, 10, 0, 0.05}, {0.5, 0.3, 0.05, 0.02, 0.0}, 8)));
    }
    p.components.push_back(chain("finalize", {make_node("evaluate", {2, 90, 0, 0.12}, {0.7, 0.2, 0.6, 0.03, 0.02}, 96)}));
    return p;
}

JobProfile gbt_profile() {
    JobProfile p{"gbt-like", {}, 10, "35 GB", job_properties("GBTRegressor", "vandermonde 35 GB", "10 iterations regression")};
    p.components.push_back(chain("prepare", {make_node("read", {3, 260, 0, 0.35}, {0.9, 0.1, 1.3, 0.03, 0.2}, 280),
                                             make_node("bin", {1, 120, 0, 0.12}, {0.85, 0.4, 0.5, 0.05, 0.15}, 280)}));
    for (int i = 0; i < p.iterations; ++i) {
        ComponentTemplate splits{"splits",
                                 {make_node("split_a", {0.4, 36, 0, 0.06}, {0.85, 0.4, 0.3, 0.05, 0.08}, 140),
                                  make_node("split_b", {0.4, 40, 0, 0.06}, {0.85, 0.45, 0.3, 0.05, 0.08}, 140),
                                  make_node("merge", {0.2, 6, 0.2, 0.04}, {0.5, 0.6, 0.1, 0.02, 0.01}, 20)},
                                 {{0, 2}, {1, 2}}};
        p.components.push_back(std::move(splits));
        p.components.push_back(chain("grow", {make_node("grow", {0.3, 20, 0, 0.05}, {0.6, 0.2, 0.1, 0.02, 0.02}, 20)}));
        p.components.push_back(chain("predict", {make_node("predict", {0.3, 30, 0, 0.04}, {0.8, 0.1, 0.5, 0.03, 0.04}, 280)}));
        p.components.push_back(chain("residual", {make_node("residual", {0.2, 16, 0, 0.04}, {0.75, 0.3, 0.3, 0.03, 0.03}, 280)}));
    }
    p.components.push_back(chain("finalize", {make_node("evaluate", {2, 70, 0, 0.1}, {0.7, 0.2, 0.6, 0.03, 0.02}, 80)}));
    return p;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

std::vector<std::string> profile_names() { return {"lr-like", "mpc-like", "kmeans-like", "gbt-like"}; }

JobProfile make_profile(std::string_view name) {
    if (name == "lr-like") return lr_profile();
    if (name == "mpc-like") return mpc_profile();
    if (name == "kmeans-like") return kmeans_profile();
    if (name == "gbt-like") return gbt_profile();
    throw std::invalid_argument("unknown job profile '" + std::string(name) + "'");
}

void validate(const JobProfile& profile) {
    if (profile.components.empty()) throw std::invalid_argument("profile " + profile.name + ": no components");
    for (const auto& c : profile.components) {
        if (c.nodes.empty()) throw std::invalid_argument("profile " + profile.name + ": empty component " + c.name);
        for (const auto& n : c.nodes) {
            for (double t : n.theta) {
                if (!(t >= 0.0)) throw std::invalid_argument("profile " + profile.name + ": negative coefficient at " + n.id);
            }
        }
        ComponentGraph g;
        for (const auto& n : c.nodes) {
            TaskNode t;
            t.id = n.id;
            g.nodes.push_back(std::move(t));
        }
        g.edges = c.edges;
        for (const auto& e : g.edges) {
            if (e.from >= g.nodes.size() || e.to >= g.nodes.size()) {
                throw std::invalid_argument("profile " + profile.name + ": edge refers to a missing node");
            }
        }
        topological_order(g);
    }
}

void validate(const ClusterEnv& env) {
    if (env.min_scaleout < 1 || env.max_scaleout < env.min_scaleout) {
        throw std::invalid_argument("cluster env: invalid scale-out range");
    }
    if (env.noise_level < 0.0) throw std::invalid_argument("cluster env: noise level must be >= 0");
    if (env.rescale_latency < 0.0 || env.executor_recovery_delay < 0.0 || env.failure_slowdown < 1.0) {
        throw std::invalid_argument("cluster env: invalid latency, recovery delay or slowdown");
    }
}

double noise_factor(double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return 1.0;
    std::lognormal_distribution<double> dist(0.0, sigma);
    return dist(rng);
}

double ground_truth_runtime(const NodeTemplate& node, double scaleout, double noise_level, std::mt19937_64& rng) {
    return evaluate_ernest(node.theta, scaleout) * noise_factor(noise_level, rng);
}

std::array<double, kMetricDim> generate_metrics(const NodeTemplate& node, double s, double noise_level,
                                                std::mt19937_64& rng, double d) {
    if (!(s >= 1.0)) throw std::invalid_argument("generate_metrics: scale-out must be >= 1");
    const auto& b = node.metrics;
    std::array<double, kMetricDim> m{
        b.cpu * (1.0 - 0.25 * (s - 1.0) / 35.0) * (1.0 - 0.4 * d),
        b.shuffle * (1.0 - 1.0 / s),
        b.io * (1.0 + 0.5 * d),
        b.gc * (1.0 + 8.0 / s),
        b.spill * 16.0 / (s + 16.0),
    };
    for (double& v : m) v *= noise_factor(noise_level, rng);
    m[0] = clamp01(m[0]);
    m[1] = std::max(0.0, m[1]);
    m[2] = std::max(0.0, m[2]);
    m[3] = clamp01(m[3]);
    m[4] = clamp01(m[4]);
    return m;
}

FailureSchedule::FailureSchedule(const FailurePlan& plan, std::uint64_t seed) : plan_(plan), rng_(seed) {
    if (!(plan_.interval > 0.0)) throw std::invalid_argument("failure plan: interval must be positive");
    interval_ = 0;
    --interval_;  // advance() moves to interval 0
    advance();
}

void FailureSchedule::advance() {
    ++interval_;
    const auto last_second = static_cast<long long>(std::ceil(plan_.interval)) - 1;
    std::uniform_int_distribution<long long> second(0, last_second);
    next_ = static_cast<double>(interval_) * plan_.interval + static_cast<double>(second(rng_));
}

std::vector<FailureEvent> inject_failures(std::span<const ScaleoutChange> timeline, double duration,
                                          const FailurePlan& plan, double recovery_delay, std::uint64_t seed) {
    std::vector<FailureEvent> events;
    if (!plan.enabled || timeline.empty()) return events;
    FailureSchedule schedule(plan, seed);
    std::vector<double> pending;
    for (; schedule.peek() < duration; schedule.advance()) {
        const double t = schedule.peek();
        std::erase_if(pending, [&](double r) { return r <= t; });
        int nominal = timeline.front().executors;
        for (const auto& c : timeline) {
            if (c.time <= t) nominal = c.executors;
        }
        const int alive = nominal - static_cast<int>(pending.size());
        if (alive > plan.min_executors) {
            events.push_back({t, alive, t + recovery_delay});
            pending.push_back(t + recovery_delay);
        }
    }
    return events;
}

JobExecution job_template(const JobProfile& profile, const std::string& run_id, double runtime_target) {
    JobExecution job;
    job.run_id = run_id;
    job.runtime_target = runtime_target;
    job.properties = profile.properties;
    for (std::size_t k = 0; k < profile.components.size(); ++k) {
        const auto& c = profile.components[k];
        ComponentGraph g;
        g.index = static_cast<int>(k);
        g.edges = c.edges;
        for (const auto& n : c.nodes) {
            TaskNode t;
            t.id = n.id;
            t.properties = n.properties;
            g.nodes.push_back(std::move(t));
        }
        job.components.push_back(std::move(g));
    }
    return job;
}

namespace {

struct RunningNode {
    std::size_t index = 0;
    double start = 0.0;      // relative to component start
    double stall_end = 0.0;  // work begins here
    double seg_time = 0.0;   // accounting done up to here
    double work = 1.0;       // remaining fraction
    double noise = 1.0;
    int start_executors = 0;
    double time_at_start = 0.0;
    double degraded_time = 0.0;
    bool changed = false;
    std::mt19937_64 rng;
};

}  // namespace

SimulationResult simulate_run(const JobProfile& profile, const ClusterEnv& env, ScalingPolicy& policy,
                              const RunOptions& options) {
    validate(profile);
    validate(env);
    SimulationResult result;
    auto& job = result.job;
    auto& trace = result.trace;
    job = job_template(profile, options.run_id, options.runtime_target);
    trace.run_id = options.run_id;

    auto clamp_scaleout = [&](int s) { return std::clamp(s, env.min_scaleout, env.max_scaleout); };
    FailureSchedule schedule(options.failures, mix_seed(options.seed, 0xfa11));
    std::vector<double> recoveries;  // absolute times

    int nominal = clamp_scaleout(policy.initial_scaleout(job));
    auto effective = [&] { return nominal - static_cast<int>(recoveries.size()); };
    trace.timeline.push_back({0.0, nominal});

    double elapsed = 0.0;
    for (std::size_t k = 0; k < profile.components.size(); ++k) {
        const auto& component = profile.components[k];
        auto& graph = job.components[k];
        const std::size_t n = component.nodes.size();

        int before = effective();
        double stall = 0.0;
        if (k > 0) {
            const int want = clamp_scaleout(policy.at_boundary(job, k, elapsed, nominal));
            if (want != nominal) {
                stall = env.rescale_latency * std::abs(want - nominal);
                nominal = want;
                recoveries.clear();  // the rescale provisions the full requested count
                trace.timeline.push_back({elapsed, effective()});
            }
        }

        std::vector<std::vector<std::size_t>> successors(n);
        std::vector<std::size_t> waiting(n, 0);
        for (const auto& e : component.edges) {
            successors[e.from].push_back(e.to);
            ++waiting[e.to];
        }

        std::vector<RunningNode> running;
        auto start_node = [&](std::size_t i, double tau, bool root) {
            RunningNode r;
            r.index = i;
            r.start = tau;
            r.stall_end = root ? tau + stall : tau;
            r.seg_time = tau;
            r.rng.seed(mix_seed(options.seed, k + 1, i + 1));
            r.noise = noise_factor(env.noise_level, r.rng);
            r.start_executors = (root && stall > 0.0) ? before : effective();
            running.push_back(std::move(r));
        };
        for (std::size_t i = 0; i < n; ++i) {
            if (waiting[i] == 0) start_node(i, 0.0, true);
        }

        auto node_duration = [&](const RunningNode& r, int executors, bool degraded) {
            const double base = evaluate_ernest(component.nodes[r.index].theta, executors) * r.noise;
            return degraded ? base * env.failure_slowdown : base;
        };
        // Books progress over [seg_time, tau] under the current executor state.
        auto settle = [&](RunningNode& r, double tau) {
            if (tau <= r.seg_time) return;
            const int e = effective();
            const bool degraded = !recoveries.empty();
            const double stall_part = std::max(0.0, std::min(tau, r.stall_end) - r.seg_time);
            const double work_part = std::max(0.0, tau - std::max(r.seg_time, r.stall_end));
            r.time_at_start += stall_part;
            if (work_part > 0.0) {
                if (e == r.start_executors) {
                    r.time_at_start += work_part;
                } else {
                    r.changed = true;
                }
                r.work -= work_part / node_duration(r, e, degraded);
            }
            if (degraded) r.degraded_time += tau - r.seg_time;
            r.seg_time = tau;
        };
        auto finish_time = [&](const RunningNode& r) {
            return std::max(r.seg_time, r.stall_end) +
                   std::max(0.0, r.work) * node_duration(r, effective(), !recoveries.empty());
        };

        std::size_t finished = 0;
        double wall = 0.0;
        while (finished < n) {
            std::size_t next = running.size();
            double t_finish = kInf;
            for (std::size_t j = 0; j < running.size(); ++j) {
                const double f = finish_time(running[j]);
                if (f < t_finish) {
                    t_finish = f;
                    next = j;
                }
            }
            const double t_failure = options.failures.enabled ? schedule.peek() - elapsed : kInf;
            const double t_recovery =
                recoveries.empty() ? kInf : *std::min_element(recoveries.begin(), recoveries.end()) - elapsed;

            if (t_finish <= t_failure && t_finish <= t_recovery) {
                RunningNode r = std::move(running[next]);
                running.erase(running.begin() + static_cast<std::ptrdiff_t>(next));
                settle(r, t_finish);
                const auto& tmpl = component.nodes[r.index];
                const double duration = t_finish - r.start;
                const int end_executors = effective();

                NodeRecord rec;
                rec.component = static_cast<int>(k);
                rec.node_id = tmpl.id;
                rec.start = elapsed + r.start;
                rec.end = elapsed + t_finish;
                rec.start_scaleout = r.start_executors;
                rec.end_scaleout = end_executors;
                rec.time_fraction = r.changed && duration > 0.0 ? std::clamp(r.time_at_start / duration, 0.0, 1.0) : 1.0;
                rec.degraded_fraction = duration > 0.0 ? std::clamp(r.degraded_time / duration, 0.0, 1.0) : 0.0;
                rec.metrics = generate_metrics(tmpl, end_executors, env.noise_level, r.rng, rec.degraded_fraction);
                trace.nodes.push_back(rec);

                auto& node = graph.nodes[r.index];
                node.start_scaleout = rec.start_scaleout;
                node.end_scaleout = rec.end_scaleout;
                node.time_fraction = rec.time_fraction;
                node.metrics.assign(rec.metrics.begin(), rec.metrics.end());
                node.runtime = duration;
                node.start_time = rec.start;

                ++finished;
                wall = std::max(wall, t_finish);
                for (std::size_t s : successors[r.index]) {
                    if (--waiting[s] == 0) start_node(s, t_finish, false);
                }
            } else if (t_recovery <= t_failure) {
                for (auto& r : running) settle(r, t_recovery);
                recoveries.erase(std::min_element(recoveries.begin(), recoveries.end()));
                trace.timeline.push_back({elapsed + t_recovery, effective()});
            } else {
                for (auto& r : running) settle(r, t_failure);
                const int alive = effective();
                if (alive > options.failures.min_executors) {
                    if (env.failure_rework) {
                        for (auto& r : running) {
                            if (r.seg_time >= r.stall_end) r.work = std::min(1.0, r.work + (1.0 - r.work) / alive);
                        }
                    }
                    const double at = elapsed + t_failure;
                    recoveries.push_back(at + env.executor_recovery_delay);
                    trace.failures.push_back({at, alive, at + env.executor_recovery_delay});
                    trace.timeline.push_back({at, effective()});
                }
                schedule.advance();
            }
        }
        graph.summaries.clear();
        job.component_wall_times.push_back(wall);
        trace.component_wall_times.push_back(wall);
        elapsed += wall;
    }
    trace.total_wall_time = elapsed;
    return result;
}

}  // namespace enel
