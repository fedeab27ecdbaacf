#include "enel/encoding.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

namespace enel {

std::string_view to_string(PropertyGroup group) {
    switch (group) {
        case PropertyGroup::always: return "always";
        case PropertyGroup::optional: return "optional";
        case PropertyGroup::node: return "node";
    }
    return "always";
}

PropertyGroup property_group_from_string(std::string_view name) {
    if (name == "always") return PropertyGroup::always;
    if (name == "optional") return PropertyGroup::optional;
    if (name == "node") return PropertyGroup::node;
    throw std::invalid_argument("unknown property group '" + std::string(name) + "'");
}

std::vector<double> PropertyVector::flat() const {
    std::vector<double> out;
    out.reserve(size());
    out.push_back(binarized ? 1.0 : 0.0);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::uint64_t stable_hash(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string cleanse(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_space = true;
        }
    }
    return out;
}

std::map<std::string, int> ngram_counts(std::string_view cleansed, std::size_t n) {
    std::map<std::string, int> counts;
    if (cleansed.empty() || n == 0) return counts;
    if (cleansed.size() < n) {
        counts[std::string(cleansed)] = 1;
        return counts;
    }
    for (std::size_t i = 0; i + n <= cleansed.size(); ++i) {
        ++counts[std::string(cleansed.substr(i, n))];
    }
    return counts;
}

std::vector<double> hash_encode(std::string_view text, std::size_t length) {
    if (length == 0) throw std::invalid_argument("hash_encode: length must be positive");
    std::vector<double> q(length, 0.0);
    for (const auto& [term, count] : ngram_counts(cleanse(text))) {
        q[stable_hash(term) % length] += count;
    }
    double norm_sq = 0.0;
    for (double v : q) norm_sq += v * v;
    if (norm_sq > 0.0) {
        const double norm = std::sqrt(norm_sq);
        for (double& v : q) v /= norm;
    }
    return q;
}

std::vector<double> binarize(std::uint64_t value, std::size_t length) {
    if (length == 0) throw std::invalid_argument("binarize: length must be positive");
    if (length < 64 && value >> length != 0) {
        throw std::out_of_range("binarize: value " + std::to_string(value) + " does not fit into L = " +
                                std::to_string(length) + " bits");
    }
    std::vector<double> bits(length, 0.0);
    for (std::size_t i = 0; i < length && i < 64; ++i) {
        bits[i] = static_cast<double>((value >> i) & 1U);
    }
    return bits;
}

PropertyVector encode_property(const PropertyValue& value, std::size_t total_length) {
    if (total_length < 2) throw std::invalid_argument("encode_property: N must be at least 2");
    const std::size_t payload_length = total_length - 1;
    PropertyVector out;
    if (const auto* number = std::get_if<std::uint64_t>(&value)) {
        out.binarized = true;
        out.payload = binarize(*number, payload_length);
    } else {
        out.binarized = false;
        out.payload = hash_encode(std::get<std::string>(value), payload_length);
    }
    return out;
}

AutoencoderParams::AutoencoderParams(std::size_t n_, std::size_t m_, EncoderActivation activation_)
    : n(n_), m(m_), activation(activation_) {
    if (m == 0 || m >= n) {
        throw std::invalid_argument("autoencoder requires 1 <= M < N (got M = " + std::to_string(m) +
                                    ", N = " + std::to_string(n) + ")");
    }
    const auto rows = static_cast<Eigen::Index>(m);
    const auto cols = static_cast<Eigen::Index>(n);
    enc_w = Eigen::MatrixXd::Zero(rows, cols);
    enc_b = Eigen::VectorXd::Zero(rows);
    dec_w = Eigen::MatrixXd::Zero(cols, rows);
    dec_b = Eigen::VectorXd::Zero(cols);
}

std::size_t AutoencoderParams::parameter_count() const {
    return static_cast<std::size_t>(enc_w.size() + enc_b.size() + dec_w.size() + dec_b.size());
}

bool AutoencoderParams::operator==(const AutoencoderParams& other) const {
    return n == other.n && m == other.m && activation == other.activation && enc_w == other.enc_w &&
           enc_b == other.enc_b && dec_w == other.dec_w && dec_b == other.dec_b;
}

namespace {

Eigen::VectorXd encode_hidden(const AutoencoderParams& p, const Eigen::VectorXd& x) {
    Eigen::VectorXd e = p.enc_w * x + p.enc_b;
    if (p.activation == EncoderActivation::tanh) e = e.array().tanh();
    return e;
}

}  // namespace

AutoencoderGradient autoencoder_loss_and_gradient(const AutoencoderParams& params,
                                                  std::span<const Eigen::VectorXd> data) {
    AutoencoderGradient out{0.0, AutoencoderParams(params.n, params.m, params.activation)};
    if (data.empty()) return out;
    const double scale = 1.0 / static_cast<double>(data.size() * params.n);
    for (const auto& x : data) {
        const Eigen::VectorXd e = encode_hidden(params, x);
        const Eigen::VectorXd residual = params.dec_w * e + params.dec_b - x;
        out.loss += residual.squaredNorm() * scale;

        const Eigen::VectorXd d_rec = 2.0 * scale * residual;
        out.grad.dec_w.noalias() += d_rec * e.transpose();
        out.grad.dec_b += d_rec;
        Eigen::VectorXd d_e = params.dec_w.transpose() * d_rec;
        if (params.activation == EncoderActivation::tanh) {
            d_e.array() *= 1.0 - e.array().square();
        }
        out.grad.enc_w.noalias() += d_e * x.transpose();
        out.grad.enc_b += d_e;
    }
    return out;
}

AutoencoderTraining train_autoencoder(std::span<const PropertyVector> vectors, std::size_t m, std::size_t epochs,
                                      double learning_rate, std::uint64_t seed, EncoderActivation activation) {
    if (vectors.empty()) throw std::invalid_argument("train_autoencoder: empty training set");
    if (learning_rate <= 0.0) throw std::invalid_argument("train_autoencoder: learning rate must be positive");
    const std::size_t n = vectors.front().size();
    std::vector<Eigen::VectorXd> data;
    data.reserve(vectors.size());
    for (const auto& v : vectors) {
        if (v.size() != n) throw std::invalid_argument("train_autoencoder: mixed vector lengths");
        const auto flat = v.flat();
        data.emplace_back(Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size())));
    }

    AutoencoderTraining result{AutoencoderParams(n, m, activation), {}};
    auto& p = result.params;
    std::mt19937_64 rng(seed);
    const double enc_limit = std::sqrt(6.0 / static_cast<double>(n + m));
    std::uniform_real_distribution<double> uniform(-enc_limit, enc_limit);
    for (Eigen::Index i = 0; i < p.enc_w.size(); ++i) p.enc_w.data()[i] = uniform(rng);
    for (Eigen::Index i = 0; i < p.dec_w.size(); ++i) p.dec_w.data()[i] = uniform(rng);

    result.loss_curve.reserve(epochs + 1);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        auto g = autoencoder_loss_and_gradient(p, data);
        result.loss_curve.push_back(g.loss);
        p.enc_w -= learning_rate * g.grad.enc_w;
        p.enc_b -= learning_rate * g.grad.enc_b;
        p.dec_w -= learning_rate * g.grad.dec_w;
        p.dec_b -= learning_rate * g.grad.dec_b;
    }
    result.loss_curve.push_back(autoencoder_loss_and_gradient(p, data).loss);
    return result;
}

Embedding embed(const AutoencoderParams& params, const PropertyVector& vector) {
    if (vector.size() != params.n) {
        throw std::invalid_argument("embed: expected vector of length " + std::to_string(params.n) + ", got " +
                                    std::to_string(vector.size()));
    }
    const auto flat = vector.flat();
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
    const Eigen::VectorXd e = encode_hidden(params, x);
    return Embedding{std::vector<double>(e.data(), e.data() + e.size())};
}

std::vector<double> decode(const AutoencoderParams& params, const Embedding& embedding) {
    if (embedding.size() != params.m) throw std::invalid_argument("decode: embedding length mismatch");
    const Eigen::VectorXd e =
        Eigen::Map<const Eigen::VectorXd>(embedding.values.data(), static_cast<Eigen::Index>(embedding.size()));
    const Eigen::VectorXd x = params.dec_w * e + params.dec_b;
    return {x.data(), x.data() + x.size()};
}

std::vector<double> build_context_vector(std::span<const Embedding> always, std::span<const Embedding> optional,
                                         std::span<const Embedding> node, std::size_t m) {
    std::vector<double> out(3 * m, 0.0);
    auto mean_into = [&](std::span<const Embedding> group, std::size_t offset) {
        if (group.empty()) return;
        for (const auto& e : group) {
            if (e.size() != m) {
                throw std::invalid_argument("build_context_vector: embedding of length " + std::to_string(e.size()) +
                                            " where " + std::to_string(m) + " was expected");
            }
            for (std::size_t i = 0; i < m; ++i) out[offset + i] += e.values[i];
        }
        const double inv = 1.0 / static_cast<double>(group.size());
        for (std::size_t i = 0; i < m; ++i) out[offset + i] *= inv;
    };
    mean_into(always, 0);
    mean_into(optional, m);
    mean_into(node, 2 * m);
    return out;
}

}  // namespace enel
