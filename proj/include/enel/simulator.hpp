#pragma once

// Deterministic stand-in for an iterative dataflow job on a cluster.
//
// Every task node carries Ernest-form ground-truth coefficients. A node
// holds one unit of work that it processes at rate 1 / T(e), where e is the
// current number of executors; whenever e changes the remaining work is
// carried over (piecewise work model). Scale-out changes happen at
// component boundaries and stall the roots of the next component for
// rescale_latency * |delta| seconds. Injected failures remove an executor
// until it is replaced, lose the killed executor's share of finished work
// and slow running nodes down while the replacement starts.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "enel/bell.hpp"
#include "enel/graph.hpp"

namespace enel {

/// Base levels of the five node metrics.
struct MetricProfile {
    double cpu = 0.85;      // utilisation at one executor, fraction
    double shuffle = 0.5;   // shuffle read/write volume scale
    double io = 0.5;        // data i/o volume scale
    double gc = 0.04;       // gc time fraction at large scale-outs
    double spill = 0.1;     // spill / peak memory at small scale-outs

    bool operator==(const MetricProfile&) const = default;
};

struct NodeTemplate {
    std::string id;
    ErnestCoefficients theta{};
    MetricProfile metrics;
    std::vector<Property> properties;
};

struct ComponentTemplate {
    std::string name;
    std::vector<NodeTemplate> nodes;
    std::vector<Edge> edges;
};

struct JobProfile {
    std::string name;
    std::vector<ComponentTemplate> components;
    int iterations = 0;
    std::string dataset_size;
    std::vector<Property> properties;  // job-level, always / optional
};

/// lr-like, mpc-like, kmeans-like, gbt-like
std::vector<std::string> profile_names();
JobProfile make_profile(std::string_view name);
void validate(const JobProfile& profile);

struct ClusterEnv {
    int min_scaleout = 4;
    int max_scaleout = 36;
    double rescale_latency = 2.0;           // seconds per executor added or removed
    double executor_recovery_delay = 30.0;  // seconds until a killed executor is replaced
    double noise_level = 0.0;               // relative sigma of runtime and metric noise
    double failure_slowdown = 1.5;          // runtime factor while a replacement is pending
    bool failure_rework = true;             // a failure loses 1/e of a running node's finished work
};

void validate(const ClusterEnv& env);

struct FailurePlan {
    bool enabled = false;
    double interval = 90.0;
    int min_executors = 4;
};

/// exp(sigma * N(0, 1)); exactly 1 without drawing when sigma is 0.
double noise_factor(double sigma, std::mt19937_64& rng);

double ground_truth_runtime(const NodeTemplate& node, double scaleout, double noise_level, std::mt19937_64& rng);

/// cpu        = cpu0 * (1 - 0.25 (s - 1) / 35) * (1 - 0.4 d)   in [0, 1]
/// shuffle    = shuffle0 * (1 - 1 / s)
/// io         = io0 * (1 + 0.5 d)
/// gc         = gc0 * (1 + 8 / s)                              in [0, 1]
/// spill      = spill0 * 16 / (s + 16)                         in [0, 1]
/// d is the fraction of the node's time spent degraded by failures. Each
/// value is multiplied by noise_factor(noise_level) and then clamped.
std::array<double, kMetricDim> generate_metrics(const NodeTemplate& node, double scaleout, double noise_level,
                                                std::mt19937_64& rng, double degraded_fraction = 0.0);

struct ScaleoutChange {
    double time = 0.0;
    int executors = 0;
};

struct FailureEvent {
    double time = 0.0;
    int executors_before = 0;
    double recovered_at = 0.0;
};

/// Candidate failure instants: one uniformly drawn whole second in each
/// consecutive interval.
class FailureSchedule {
public:
    FailureSchedule(const FailurePlan& plan, std::uint64_t seed);
    double peek() const { return next_; }
    void advance();

private:
    FailurePlan plan_;
    std::mt19937_64 rng_;
    std::size_t interval_ = 0;
    double next_ = 0.0;
};

/// Failures against a nominal executor timeline over [0, duration): a
/// candidate kills one executor when more than min_executors are alive at
/// that instant; the executor returns after recovery_delay seconds.
std::vector<FailureEvent> inject_failures(std::span<const ScaleoutChange> timeline, double duration,
                                          const FailurePlan& plan, double recovery_delay, std::uint64_t seed);

struct NodeRecord {
    int component = 0;
    std::string node_id;
    double start = 0.0;  // absolute seconds since job start
    double end = 0.0;
    int start_scaleout = 0;
    int end_scaleout = 0;
    double time_fraction = 1.0;
    double degraded_fraction = 0.0;
    std::array<double, kMetricDim> metrics{};
};

struct ExecutionTrace {
    std::string run_id;
    std::vector<NodeRecord> nodes;
    std::vector<ScaleoutChange> timeline;  // effective executors
    std::vector<FailureEvent> failures;
    std::vector<double> component_wall_times;
    double total_wall_time = 0.0;
};

/// Decides scale-outs during a simulated run.
class ScalingPolicy {
public:
    virtual ~ScalingPolicy() = default;
    /// job holds the full structure, nothing observed yet.
    virtual int initial_scaleout(const JobExecution& job) = 0;
    /// Called before component next_component starts; components before it
    /// are observed.
    virtual int at_boundary(const JobExecution& job, std::size_t next_component, double elapsed, int current) = 0;
};

class FixedScaleout final : public ScalingPolicy {
public:
    explicit FixedScaleout(int scaleout) : scaleout_(scaleout) {}
    int initial_scaleout(const JobExecution&) override { return scaleout_; }
    int at_boundary(const JobExecution&, std::size_t, double, int) override { return scaleout_; }

private:
    int scaleout_;
};

struct RunOptions {
    std::string run_id = "run";
    double runtime_target = 1.0;
    FailurePlan failures;
    std::uint64_t seed = 0;
};

struct SimulationResult {
    ExecutionTrace trace;
    JobExecution job;
};

/// Unobserved job structure for a profile: nodes, edges and properties.
JobExecution job_template(const JobProfile& profile, const std::string& run_id, double runtime_target);

SimulationResult simulate_run(const JobProfile& profile, const ClusterEnv& env, ScalingPolicy& policy,
                              const RunOptions& options);

}  // namespace enel
