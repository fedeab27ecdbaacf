#include "enel/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace enel::nn {

std::string_view to_string(Activation activation) {
    switch (activation) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
    }
    return "identity";
}

Activation activation_from_string(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "softplus") return Activation::softplus;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

double softplus(double x) {
    // log(1 + e^x) without overflow
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Eigen::VectorXd activate(Activation a, const Eigen::VectorXd& pre) {
    switch (a) {
        case Activation::identity: return pre;
        case Activation::tanh: return pre.array().tanh();
        case Activation::softplus: return pre.unaryExpr([](double x) { return softplus(x); });
    }
    return pre;
}

// dL/dpre given dL/dpost
Eigen::VectorXd activation_backward(Activation a, const Eigen::VectorXd& pre, const Eigen::VectorXd& post,
                                    const Eigen::VectorXd& grad) {
    switch (a) {
        case Activation::identity: return grad;
        case Activation::tanh: return grad.array() * (1.0 - post.array().square());
        case Activation::softplus: return grad.array() * pre.unaryExpr([](double x) { return sigmoid(x); }).array();
    }
    return grad;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::adam ? "adam" : "gradient-descent";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "gradient-descent") return OptimizerKind::gradient_descent;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

Dense::Dense(std::size_t inputs, std::size_t outputs)
    : weight(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(outputs), static_cast<Eigen::Index>(inputs))),
      bias(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(outputs))) {}

void Dense::initialize(std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(inputs() + outputs()));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = uniform(rng);
    bias.setZero();
}

Mlp::Mlp(std::size_t inputs, std::size_t width, std::size_t outputs, Activation output_activation_)
    : hidden(inputs, width), output(width, outputs), output_activation(output_activation_) {}

void Mlp::initialize(std::mt19937_64& rng) {
    hidden.initialize(rng);
    output.initialize(rng);
}

Mlp Mlp::zeros_like() const {
    Mlp z(inputs(), hidden.outputs(), outputs(), output_activation);
    z.hidden_activation = hidden_activation;
    return z;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd h = activate(hidden_activation, hidden.weight * x + hidden.bias);
    return activate(output_activation, output.weight * h + output.bias);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, Cache& cache) const {
    if (static_cast<std::size_t>(x.size()) != inputs()) {
        throw std::invalid_argument("mlp: expected input of size " + std::to_string(inputs()) + ", got " +
                                    std::to_string(x.size()));
    }
    cache.input = x;
    cache.hidden = activate(hidden_activation, hidden.weight * x + hidden.bias);
    cache.output_pre = output.weight * cache.hidden + output.bias;
    return activate(output_activation, cache.output_pre);
}

Eigen::VectorXd Mlp::backward(const Cache& cache, const Eigen::VectorXd& grad_output, Mlp& grad) const {
    const Eigen::VectorXd post = activate(output_activation, cache.output_pre);
    const Eigen::VectorXd d_out = activation_backward(output_activation, cache.output_pre, post, grad_output);
    grad.output.weight.noalias() += d_out * cache.hidden.transpose();
    grad.output.bias += d_out;

    Eigen::VectorXd d_hidden = output.weight.transpose() * d_out;
    // hidden pre-activation is not cached; tanh and identity only need the post value
    if (hidden_activation == Activation::tanh) {
        d_hidden.array() *= 1.0 - cache.hidden.array().square();
    } else if (hidden_activation == Activation::softplus) {
        d_hidden.array() *= 1.0 - (-cache.hidden.array()).exp();
    }
    grad.hidden.weight.noalias() += d_hidden * cache.input.transpose();
    grad.hidden.bias += d_hidden;
    return hidden.weight.transpose() * d_hidden;
}

void Mlp::append_tensors(std::vector<std::span<double>>& out) {
    for (Dense* d : {&hidden, &output}) {
        out.emplace_back(d->weight.data(), static_cast<std::size_t>(d->weight.size()));
        out.emplace_back(d->bias.data(), static_cast<std::size_t>(d->bias.size()));
    }
}

double Optimizer::step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient mismatch");
    double norm_sq = 0.0;
    for (const auto& g : grads) {
        for (double v : g) norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

    if (config_.kind == OptimizerKind::gradient_descent) {
        for (std::size_t t = 0; t < params.size(); ++t) {
            for (std::size_t i = 0; i < params[t].size(); ++i) {
                params[t][i] -= config_.learning_rate * clip * grads[t][i];
            }
        }
        return norm;
    }

    if (first_.empty()) {
        for (const auto& p : params) {
            first_.emplace_back(p.size(), 0.0);
            second_.emplace_back(p.size(), 0.0);
        }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& m = first_[t];
        auto& v = second_[t];
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double g = grads[t][i] * clip;
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            params[t][i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
        }
    }
    return norm;
}

}  // namespace enel::nn
