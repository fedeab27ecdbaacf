#pragma once

// Shared builders and brute-force oracles for the test binaries.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "enel/graph.hpp"
#include "enel/model.hpp"
#include "enel/simulator.hpp"

namespace enel::testing {

inline ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.embedding_dim = 2;
    cfg.hidden_width = 6;
    cfg.attention_dim = 3;
    cfg.runtime_scale = 20.0;
    return cfg;
}

inline TaskNode named_node(const std::string& id) {
    TaskNode n;
    n.id = id;
    return n;
}

inline std::vector<double> filled(std::size_t n, double start, double step) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + step * static_cast<double>(i);
    return v;
}

inline TaskNode observed_node(const ModelConfig& cfg, const std::string& id, int a, int z, double r, double runtime,
                              double seed_value) {
    TaskNode n;
    n.id = id;
    n.start_scaleout = a;
    n.end_scaleout = z;
    n.time_fraction = r;
    n.runtime = runtime;
    n.context = filled(cfg.context_dim(), seed_value, 0.1);
    n.metrics = filled(cfg.metric_dim, 0.2 + seed_value, 0.05);
    return n;
}

/// Component 0: one node. Component 1: roots x, y feeding sink w, x rescaled.
inline JobExecution toy_job(const ModelConfig& cfg, const std::string& run_id = "toy") {
    JobExecution job;
    job.run_id = run_id;
    job.runtime_target = 100.0;
    ComponentGraph c0;
    c0.index = 0;
    c0.nodes = {observed_node(cfg, "a", 4, 4, 1.0, 30.0, -0.3)};
    ComponentGraph c1;
    c1.index = 1;
    c1.nodes = {observed_node(cfg, "x", 4, 8, 0.4, 18.0, 0.1), observed_node(cfg, "y", 8, 8, 1.0, 12.0, 0.4),
                observed_node(cfg, "w", 8, 8, 1.0, 9.0, -0.1)};
    c1.edges = {{0, 2}, {1, 2}};
    job.components = {c0, c1};
    job.component_wall_times = {30.0, 27.0};
    return job;
}

/// Random DAG over n nodes: edges only go from lower to higher index.
inline ComponentGraph random_dag(std::mt19937_64& rng, int n, double edge_probability) {
    ComponentGraph g;
    for (int i = 0; i < n; ++i) {
        TaskNode node;
        node.id = "n" + std::to_string(i);
        g.nodes.push_back(node);
    }
    std::bernoulli_distribution edge(edge_probability);
    for (int j = 1; j < n; ++j) {
        for (int i = 0; i < j; ++i) {
            if (edge(rng)) g.edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
        }
    }
    return g;
}

/// Longest path ending at each node, by exhaustive enumeration of all paths
/// that begin at offset.
inline std::vector<double> longest_paths_by_enumeration(const ComponentGraph& g, const std::vector<double>& weight,
                                                        double offset = 0.0) {
    std::vector<double> best(g.nodes.size(), 0.0);
    std::function<void(std::size_t, double)> walk = [&](std::size_t node, double sum) {
        const double total = sum + weight[node];
        best[node] = std::max(best[node], total);
        for (const auto& e : g.edges) {
            if (e.from == node) walk(e.to, total);
        }
    };
    for (std::size_t i = 0; i < g.nodes.size(); ++i) walk(i, offset);
    return best;
}

/// Completion time of a component that starts at offset.
inline double critical_path(const ComponentGraph& g, const std::vector<double>& durations, double offset = 0.0) {
    const auto paths = longest_paths_by_enumeration(g, durations, offset);
    return *std::max_element(paths.begin(), paths.end());
}

/// Sequence of components, each a chain of identical nodes with coefficients theta.
inline JobProfile chain_profile(int components, int nodes_per_component, const ErnestCoefficients& theta) {
    JobProfile profile;
    profile.name = "chain";
    profile.iterations = components;
    profile.dataset_size = "1 GB";
    profile.properties = {{PropertyGroup::always, "job", std::string("chain job")},
                          {PropertyGroup::always, "dataset", std::string("synthetic")}};
    for (int k = 0; k < components; ++k) {
        ComponentTemplate c;
        c.name = "c" + std::to_string(k);
        for (int i = 0; i < nodes_per_component; ++i) {
            NodeTemplate n;
            n.id = "c" + std::to_string(k) + "_n" + std::to_string(i);
            n.theta = theta;
            n.properties = {{PropertyGroup::node, "stage", n.id}};
            c.nodes.push_back(n);
            if (i > 0) c.edges.push_back({static_cast<std::size_t>(i - 1), static_cast<std::size_t>(i)});
        }
        profile.components.push_back(c);
    }
    return profile;
}

/// One run per scale-out at a fixed scale-out, contexts annotated by a
/// freshly fitted encoder.
inline std::vector<JobExecution> fixed_runs(const JobProfile& profile, const ClusterEnv& env,
                                            const std::vector<int>& scaleouts, std::uint64_t seed,
                                            double runtime_target = 1000.0) {
    std::vector<JobExecution> runs;
    for (std::size_t i = 0; i < scaleouts.size(); ++i) {
        FixedScaleout policy(scaleouts[i]);
        RunOptions options;
        options.run_id = "run" + std::to_string(i);
        options.runtime_target = runtime_target;
        options.seed = seed + i;
        runs.push_back(simulate_run(profile, env, policy, options).job);
    }
    const auto encoder = ContextEncoder::fit(runs, kDefaultEmbeddingDim, 400);
    for (auto& run : runs) encoder.annotate(run);
    return runs;
}

}  // namespace enel::testing
