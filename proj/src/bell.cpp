#include "enel/bell.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace enel {

std::string_view to_string(BellKind kind) {
    return kind == BellKind::parametric ? "parametric" : "nonparametric";
}

BellKind bell_kind_from_string(std::string_view name) {
    if (name == "parametric") return BellKind::parametric;
    if (name == "nonparametric") return BellKind::nonparametric;
    throw std::invalid_argument("unknown Bell model kind '" + std::string(name) + "'");
}

std::array<double, 4> ernest_features(double s) {
    if (!(s >= 1.0)) throw std::invalid_argument("ernest_features: scale-out must be >= 1");
    return {1.0, 1.0 / s, std::log(s), s};
}

double evaluate_ernest(const ErnestCoefficients& theta, double scaleout) {
    const auto f = ernest_features(scaleout);
    return theta[0] * f[0] + theta[1] * f[1] + theta[2] * f[2] + theta[3] * f[3];
}

Eigen::VectorXd solve_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const Eigen::Index n = a.cols();
    // Column scaling keeps the active-set subproblems well conditioned.
    Eigen::VectorXd norms = a.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (norms[j] == 0.0) norms[j] = 1.0;
    }
    const Eigen::MatrixXd as = a * norms.cwiseInverse().asDiagonal();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-10 * std::max(1.0, (as.transpose() * b).cwiseAbs().maxCoeff());

    auto solve_passive = [&]() {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (passive[static_cast<std::size_t>(j)]) cols.push_back(j);
        }
        Eigen::MatrixXd sub(as.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = as.col(cols[c]);
        const Eigen::VectorXd sol = sub.completeOrthogonalDecomposition().solve(b);
        Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
        for (std::size_t c = 0; c < cols.size(); ++c) full[cols[c]] = sol[static_cast<Eigen::Index>(c)];
        return full;
    };

    for (int outer = 0; outer < 3 * static_cast<int>(n) + 10; ++outer) {
        const Eigen::VectorXd w = as.transpose() * (b - as * x);
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = true;

        for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
            const Eigen::VectorXd s = solve_passive();
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) feasible = false;
            }
            if (feasible) {
                x = s;
                break;
            }
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) {
                    alpha = std::min(alpha, x[j] / (x[j] - s[j]));
                }
            }
            x += alpha * (s - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && x[j] <= tol * 1e-3) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    return x.cwiseQuotient(norms);
}

namespace {

std::size_t distinct_scaleouts(std::span<const ScaleoutSample> samples) {
    std::set<int> s;
    for (const auto& x : samples) s.insert(x.scaleout);
    return s.size();
}

bool parametric_fittable(std::span<const ScaleoutSample> samples) {
    return samples.size() >= 4 && distinct_scaleouts(samples) >= 2;
}

}  // namespace

ErnestCoefficients fit_parametric(std::span<const ScaleoutSample> samples) {
    if (!parametric_fittable(samples)) {
        throw std::invalid_argument("fit_parametric: need at least 4 samples over 2 distinct scale-outs, got " +
                                    std::to_string(samples.size()) + " samples");
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(samples.size()), 4);
    Eigen::VectorXd b(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto f = ernest_features(samples[i].scaleout);
        const auto row = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < 4; ++j) a(row, j) = f[static_cast<std::size_t>(j)];
        b[row] = samples[i].runtime;
    }
    const Eigen::VectorXd x = solve_nnls(a, b);
    return {x[0], x[1], x[2], x[3]};
}

BellModel fit_nonparametric(std::span<const ScaleoutSample> samples) {
    std::map<int, std::pair<double, int>> sums;
    for (const auto& s : samples) {
        auto& [sum, count] = sums[s.scaleout];
        sum += s.runtime;
        ++count;
    }
    if (sums.size() < 2) throw std::invalid_argument("fit_nonparametric: need at least 2 distinct scale-outs");
    BellModel model;
    model.kind = BellKind::nonparametric;
    for (const auto& [s, acc] : sums) model.points.emplace_back(s, acc.first / acc.second);
    return model;
}

BellModel make_parametric(const ErnestCoefficients& theta) {
    BellModel model;
    model.kind = BellKind::parametric;
    model.theta = theta;
    return model;
}

double predict(const BellModel& model, double scaleout) {
    double value = 0.0;
    if (model.kind == BellKind::parametric) {
        value = evaluate_ernest(model.theta, scaleout);
    } else {
        const auto& p = model.points;
        if (p.empty()) throw std::invalid_argument("predict: empty nonparametric model");
        if (scaleout <= p.front().first) {
            value = p.front().second;
        } else if (scaleout >= p.back().first) {
            value = p.back().second;
        } else {
            const auto hi = std::upper_bound(p.begin(), p.end(), scaleout,
                                             [](double s, const auto& point) { return s < point.first; });
            const auto lo = hi - 1;
            const double t = (scaleout - lo->first) / static_cast<double>(hi->first - lo->first);
            value = lo->second + t * (hi->second - lo->second);
        }
    }
    return std::max(0.0, value);
}

CrossValidation cross_validate(std::span<const ScaleoutSample> samples, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("cross_validate: at least 2 folds required");
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const double inf = std::numeric_limits<double>::infinity();
    CrossValidation cv;
    std::size_t evaluated = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<ScaleoutSample> train, test;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            (pos % folds == f ? test : train).push_back(samples[order[pos]]);
        }
        if (test.empty()) continue;
        double err_p = 0.0;
        double err_n = 0.0;
        if (parametric_fittable(train)) {
            const auto theta = make_parametric(fit_parametric(train));
            for (const auto& t : test) err_p += std::abs(predict(theta, t.scaleout) - t.runtime);
        } else {
            err_p = inf;
        }
        if (distinct_scaleouts(train) >= 2) {
            const auto np = fit_nonparametric(train);
            for (const auto& t : test) err_n += std::abs(predict(np, t.scaleout) - t.runtime);
        } else {
            err_n = inf;
        }
        cv.parametric_mae += err_p;
        cv.nonparametric_mae += err_n;
        evaluated += test.size();
    }
    if (evaluated > 0) {
        cv.parametric_mae /= static_cast<double>(evaluated);
        cv.nonparametric_mae /= static_cast<double>(evaluated);
    }
    return cv;
}

BellModel select_model(std::span<const ScaleoutSample> samples, std::size_t folds, std::uint64_t seed) {
    if (samples.size() < 5) {
        if (parametric_fittable(samples)) return make_parametric(fit_parametric(samples));
        if (distinct_scaleouts(samples) >= 2) return fit_nonparametric(samples);
        throw std::invalid_argument("select_model: too few samples to fit any model");
    }
    const auto cv = cross_validate(samples, folds, seed);
    const double tie_tolerance = 1e-9 * (1.0 + cv.nonparametric_mae);
    if (cv.parametric_mae <= cv.nonparametric_mae + tie_tolerance && parametric_fittable(samples)) {
        return make_parametric(fit_parametric(samples));
    }
    if (distinct_scaleouts(samples) >= 2) return fit_nonparametric(samples);
    return make_parametric(fit_parametric(samples));
}

}  // namespace enel
