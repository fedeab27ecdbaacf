#pragma once

// A dataflow job as an ordered sequence of attributed component DAGs.
// Consecutive components are linked through summary nodes: P carries the
// current run's aggregate of a component, H the average of the most
// similar historical P nodes of the same component.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "enel/encoding.hpp"

namespace enel {

inline constexpr std::size_t kMetricDim = 5;  // cpu, shuffle r/w, data i/o, gc fraction, spill ratio
inline constexpr int kDefaultBeta = 3;

/// [1 - 1/s, ln s, s]. Throws for s < 1.
std::array<double, 3> enrich_scaleout(double scaleout);

struct TaskNode {
    std::string id;
    int start_scaleout = 1;       // a
    int end_scaleout = 1;         // z
    std::vector<double> metrics;  // m, empty for nodes not yet executed
    std::vector<double> context;  // c = u || v || w, filled by ContextEncoder::annotate
    double time_fraction = 1.0;   // r
    std::optional<double> runtime;
    double start_time = 0.0;  // relative to the job start, informational
    std::vector<Property> properties;  // node-unique properties

    bool observed() const { return runtime.has_value() && !metrics.empty(); }
};

enum class SummaryKind { current, historical };  // P, H

struct SummaryNode {
    SummaryKind kind = SummaryKind::current;
    int source_component = 0;
    int start_scaleout = 1;
    int end_scaleout = 1;
    std::vector<double> context;
    std::vector<double> metrics;
    std::size_t sequence = 0;  // position in history, larger is more recent
};

struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    bool operator==(const Edge&) const = default;
};

struct ComponentGraph {
    int index = 0;
    std::vector<TaskNode> nodes;
    std::vector<Edge> edges;  // indices into nodes
    std::vector<SummaryNode> summaries;  // predecessors of every root

    /// Predecessor indices per node (task edges only).
    std::vector<std::vector<std::size_t>> predecessors() const;
    std::vector<std::size_t> roots() const;
    std::vector<std::size_t> sinks() const;
    bool observed() const;
};

struct JobExecution {
    std::string run_id;
    std::vector<ComponentGraph> components;
    std::vector<Property> properties;  // always / optional job-level properties
    double runtime_target = 0.0;
    std::vector<double> component_wall_times;  // only for executed components

    /// Number of leading components whose nodes are all observed.
    std::size_t observed_prefix() const;
    double total_wall_time() const;
};

/// Throws std::invalid_argument when a JobExecution breaks its invariants.
void validate(const JobExecution& job);

/// Kahn's algorithm; ready nodes are taken in ascending id order.
/// Throws std::invalid_argument naming an edge on a cycle.
std::vector<std::size_t> topological_order(const ComponentGraph& graph);

/// Component-level P node: start scale-out of the first node and end
/// scale-out of the last node in topological order, element-wise means of
/// node context and metric vectors.
SummaryNode make_summary_p(const ComponentGraph& graph);

/// Field-wise average of the min(beta, |history|) entries closest to
/// current_scaleout by end scale-out; ties go to the more recent entry.
SummaryNode select_historical_summaries(std::span<const SummaryNode> history, int current_scaleout,
                                        int beta = kDefaultBeta);

/// Installs P (and H when present) as predecessors of every root of next.
ComponentGraph attach_summary_nodes(ComponentGraph next, SummaryNode p, std::optional<SummaryNode> h);

/// Per-component P nodes of past runs, oldest first.
class SummaryHistory {
public:
    void add_run(const JobExecution& job);
    void add(int component, SummaryNode node);

    std::span<const SummaryNode> component(int index) const;
    std::optional<SummaryNode> historical(int component, int scaleout, int beta = kDefaultBeta) const;
    std::size_t runs() const { return runs_; }

private:
    std::map<int, std::vector<SummaryNode>> by_component_;
    std::size_t next_sequence_ = 0;
    std::size_t runs_ = 0;
};

/// Computes context vectors for every node from the job's always/optional
/// properties and the node's own properties.
class ContextEncoder {
public:
    ContextEncoder() = default;
    ContextEncoder(AutoencoderParams params) : params_(std::move(params)) {}

    /// Trains the autoencoder on every distinct property value in jobs.
    static ContextEncoder fit(std::span<const JobExecution> jobs, std::size_t m = kDefaultEmbeddingDim,
                              std::size_t epochs = 1500, double learning_rate = 0.5, std::uint64_t seed = 7);

    const AutoencoderParams& params() const { return params_; }
    std::size_t embedding_dim() const { return params_.m; }

    std::vector<double> context_vector(std::span<const Property> job_properties,
                                       std::span<const Property> node_properties) const;
    void annotate(JobExecution& job) const;

private:
    AutoencoderParams params_;
};

}  // namespace enel
