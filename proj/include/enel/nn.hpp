#pragma once

// Two-layer feed-forward networks with hand-written backpropagation and a
// deterministic optimizer. Sized for models with a few thousand weights.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace enel::nn {

enum class Activation { identity, tanh, softplus };

std::string_view to_string(Activation activation);
Activation activation_from_string(std::string_view name);

double softplus(double x);

struct Dense {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;

    Dense() = default;
    Dense(std::size_t inputs, std::size_t outputs);

    std::size_t inputs() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t outputs() const { return static_cast<std::size_t>(weight.rows()); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(weight.size() + bias.size()); }

    /// Glorot-uniform weights, zero bias.
    void initialize(std::mt19937_64& rng);
    bool operator==(const Dense& other) const { return weight == other.weight && bias == other.bias; }
};

/// in -> hidden (hidden_activation) -> out (output_activation)
struct Mlp {
    Dense hidden;
    Dense output;
    Activation hidden_activation = Activation::tanh;
    Activation output_activation = Activation::identity;

    struct Cache {
        Eigen::VectorXd input;
        Eigen::VectorXd hidden;      // post-activation
        Eigen::VectorXd output_pre;  // pre-activation
    };

    Mlp() = default;
    Mlp(std::size_t inputs, std::size_t width, std::size_t outputs, Activation output_activation);

    std::size_t inputs() const { return hidden.inputs(); }
    std::size_t outputs() const { return output.outputs(); }
    std::size_t parameter_count() const { return hidden.parameter_count() + output.parameter_count(); }

    void initialize(std::mt19937_64& rng);
    Mlp zeros_like() const;

    Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
    Eigen::VectorXd forward(const Eigen::VectorXd& x, Cache& cache) const;
    /// Accumulates parameter gradients into grad and returns dL/dx.
    Eigen::VectorXd backward(const Cache& cache, const Eigen::VectorXd& grad_output, Mlp& grad) const;

    void append_tensors(std::vector<std::span<double>>& out);

    bool operator==(const Mlp& other) const {
        return hidden == other.hidden && output == other.output && hidden_activation == other.hidden_activation &&
               output_activation == other.output_activation;
    }
};

enum class OptimizerKind { gradient_descent, adam };

std::string_view to_string(OptimizerKind kind);  // gradient-descent, adam
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;  // <= 0 disables clipping
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Updates a fixed list of parameter tensors in place.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}

    /// Returns the gradient norm before clipping.
    double step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads);

private:
    OptimizerConfig config_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::uint64_t steps_ = 0;
};

}  // namespace enel::nn
