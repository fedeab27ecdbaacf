#pragma once

// Scale-out runtime models in the style of Bell: a parametric Ernest-form
// fit runtime(s) = t0 + t1/s + t2 ln s + t3 s with non-negative
// coefficients, a piecewise-linear interpolator, and cross-validated
// selection between the two.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace enel {

struct ScaleoutSample {
    int scaleout = 1;
    double runtime = 0.0;
};

using ErnestCoefficients = std::array<double, 4>;

enum class BellKind { parametric, nonparametric };

std::string_view to_string(BellKind kind);
BellKind bell_kind_from_string(std::string_view name);

struct BellModel {
    BellKind kind = BellKind::parametric;
    ErnestCoefficients theta{};
    std::vector<std::pair<int, double>> points;  // (scale-out, mean runtime), ascending

    bool operator==(const BellModel&) const = default;
};

/// [1, 1/s, ln s, s]
std::array<double, 4> ernest_features(double scaleout);
double evaluate_ernest(const ErnestCoefficients& theta, double scaleout);

/// Lawson-Hanson active-set solution of min ||Ax - b|| s.t. x >= 0.
Eigen::VectorXd solve_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// Requires at least 4 samples over at least 2 distinct scale-outs.
ErnestCoefficients fit_parametric(std::span<const ScaleoutSample> samples);

/// Requires at least 2 distinct scale-outs.
BellModel fit_nonparametric(std::span<const ScaleoutSample> samples);

struct CrossValidation {
    double parametric_mae = 0.0;
    double nonparametric_mae = 0.0;
};

/// k-fold mean absolute error of both model kinds. Fold membership comes
/// from a seeded shuffle. A fold whose training part cannot be fitted scores
/// infinity for that kind.
CrossValidation cross_validate(std::span<const ScaleoutSample> samples, std::size_t folds = 5,
                               std::uint64_t seed = 0);

/// Picks the kind with the lower cross-validated error, parametric on ties
/// (errors equal within 1e-9 relative).
/// With fewer than five samples falls back to parametric when fittable,
/// else nonparametric, else throws.
BellModel select_model(std::span<const ScaleoutSample> samples, std::size_t folds = 5, std::uint64_t seed = 0);

BellModel make_parametric(const ErnestCoefficients& theta);

/// Clamped at zero.
double predict(const BellModel& model, double scaleout);

}  // namespace enel
