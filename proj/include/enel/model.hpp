#pragma once

// Graph propagation network for runtime prediction.
//
// Per task node i with start/end scale-out features a_i, z_i, context c_i,
// metrics m_i and time fraction r_i:
//
//   o_i  = f1(c_i || m_i || a_i || z_i || r_i)            rescaling overhead
//   t_i  = f2(c_i || m_i || z_i || o_i)                   node runtime
//   tt_i = t_i + max_{j in preds(i)} tt_j                  accumulated runtime
//   e_ij = softmax_j( att . tanh(f3(x_i || x_j)) )         edge weights
//   m_i  = sum_j e_ij * f4(f3(x_i || x_j) || m_j)          propagated metrics
//
// with x_i = a_i || c_i || z_i. Summary nodes of the previous component
// take part in metric propagation only.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "enel/graph.hpp"
#include "enel/nn.hpp"

namespace enel {

struct ModelConfig {
    std::size_t embedding_dim = kDefaultEmbeddingDim;  // M, context length is 3M
    std::size_t metric_dim = kMetricDim;               // K
    std::size_t hidden_width = 32;
    std::size_t attention_dim = 16;  // f3 output width
    double runtime_scale = 60.0;     // seconds per unit of f1/f2 output
    double scaleout_scale = 36.0;    // divides the raw scale-out feature
    double overhead_weight = 0.1;    // gamma
    double transition_time_fraction = 0.5;  // r assumed for a rescaled root
    int beta = kDefaultBeta;

    std::size_t context_dim() const { return 3 * embedding_dim; }
    std::size_t node_input_dim() const { return 3 + context_dim() + 3; }
    std::size_t overhead_input_dim() const { return context_dim() + metric_dim + 3 + 3 + 1; }
    std::size_t runtime_input_dim() const { return context_dim() + metric_dim + 3 + 1; }
    std::size_t pair_input_dim() const { return 2 * node_input_dim(); }

    bool operator==(const ModelConfig&) const = default;
};

struct EnelModel {
    ModelConfig config;
    nn::Mlp f1;  // overhead
    nn::Mlp f2;  // runtime
    nn::Mlp f3;  // pair transform
    nn::Mlp f4;  // metric transform
    Eigen::VectorXd attention;
    std::vector<std::string> trained_on_runs;

    /// Randomly initialised model.
    static EnelModel create(const ModelConfig& config, std::uint64_t seed);
    /// Same shapes, all parameters zero.
    EnelModel zeros_like() const;

    std::vector<std::span<double>> tensors();
    bool same_parameters(const EnelModel& other) const;
};

std::size_t count_parameters(const EnelModel& model);

using ScaleoutFeatures = std::array<double, 3>;

/// Enriched scale-out vector as fed to the networks (raw s divided by
/// config.scaleout_scale).
Eigen::Vector3d model_features(const ModelConfig& config, const ScaleoutFeatures& enriched);

/// x = a || c || z
Eigen::VectorXd node_input(const ModelConfig& config, int start_scaleout, std::span<const double> context,
                           int end_scaleout);

double predict_overhead(const EnelModel& model, std::span<const double> context, std::span<const double> metrics,
                        const ScaleoutFeatures& start, const ScaleoutFeatures& end, double time_fraction);

double predict_runtime(const EnelModel& model, std::span<const double> context, std::span<const double> metrics,
                       const ScaleoutFeatures& end, double overhead_seconds);

/// tt per node. Summary nodes are not part of the task graph and never
/// contribute. Throws on cycles.
std::vector<double> accumulate_runtimes(const ComponentGraph& graph, std::span<const double> runtimes);

/// Pre-softmax attention scores att . tanh(f3(x_i || x_j)).
std::vector<double> edge_scores(const EnelModel& model, const Eigen::VectorXd& target,
                                std::span<const Eigen::VectorXd> predecessors);
std::vector<double> softmax_weights(std::span<const double> scores);

std::vector<double> edge_weights(const EnelModel& model, const Eigen::VectorXd& target,
                                 std::span<const Eigen::VectorXd> predecessors);

struct PredecessorInput {
    Eigen::VectorXd x;
    Eigen::VectorXd metrics;
};

Eigen::VectorXd propagate_metrics(const EnelModel& model, const Eigen::VectorXd& target,
                                  std::span<const PredecessorInput> predecessors);

struct NodePrediction {
    double overhead = 0.0;
    double runtime = 0.0;
    double accumulated = 0.0;
    std::vector<double> metrics;
};

struct ForwardResult {
    std::size_t from_component = 0;
    std::vector<std::vector<NodePrediction>> components;  // remaining components only
    std::vector<double> component_totals;
    double remaining = 0.0;
};

/// Predicts the remaining runtime when every component from from_component
/// onwards runs at assumed_scaleout. Components before from_component must
/// be observed; if from_component - 1 is not, its P node is taken from
/// history. Recorded values of the remaining components are ignored.
ForwardResult forward(const EnelModel& model, const JobExecution& job, std::size_t from_component,
                      int assumed_scaleout, const SummaryHistory* history = nullptr);

// ---------------------------------------------------------------------------
// Training

struct PredecessorSample {
    Eigen::VectorXd pair_input;  // x_i || x_j
    Eigen::VectorXd metrics;
};

struct NodeSample {
    Eigen::VectorXd overhead_input;  // c || m || a || z || r
    Eigen::VectorXd runtime_input;   // c || m || z || (overhead slot)
    std::vector<PredecessorSample> predecessors;
    Eigen::VectorXd metrics;
    double runtime = 0.0;
    bool rescaled = false;
};

struct TrainingSet {
    std::vector<NodeSample> nodes;
    std::vector<std::string> run_ids;
};

/// Teacher-forced samples for every observed node. H nodes for a run are
/// drawn from prior plus the runs preceding it in the list.
TrainingSet build_training_set(const ModelConfig& config, std::span<const JobExecution> runs,
                               const SummaryHistory* prior = nullptr);

struct LossBreakdown {
    double total = 0.0;
    double runtime_mse = 0.0;
    double metric_mse = 0.0;
    double overhead_reg = 0.0;
};

/// Loss over the set; when grad is non-null it must have the model's shapes
/// and receives dL/dparams (overwritten).
LossBreakdown loss_and_gradient(const EnelModel& model, const TrainingSet& set, EnelModel* grad);

struct TrainOptions {
    std::size_t epochs = 400;
    nn::OptimizerConfig optimizer{nn::OptimizerKind::adam, 5e-3, 5.0};
    std::uint64_t seed = 1;
    const SummaryHistory* prior = nullptr;
    double time_budget_s = 0.0;  // 0 = unlimited
};

struct LossRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;
};

struct TrainResult {
    EnelModel model;
    std::vector<LossRecord> curve;
    double wall_seconds = 0.0;
};

/// Trains from a fresh initialisation drawn from options.seed. The runtime
/// scale is set to the mean observed node runtime of the data set.
TrainResult train(const ModelConfig& config, std::span<const JobExecution> dataset, const TrainOptions& options);

/// Warm-started training on recent data; returns the parameters with the
/// lowest loss seen, the starting point included.
TrainResult fine_tune(const EnelModel& model, std::span<const JobExecution> recent, const TrainOptions& options);

}  // namespace enel
