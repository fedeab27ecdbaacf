#pragma once

// Encoding of descriptive execution-context properties.
//
// Every property is turned into a fixed-length vector [lambda, q_1..q_L]
// where lambda = 1 marks a binarized non-negative integer and lambda = 0 a
// hashed text value. The sparse vectors are compressed into dense
// embeddings by a small autoencoder.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace enel {

using PropertyValue = std::variant<std::uint64_t, std::string>;

/// Where a property is recorded: always available, optionally recorded,
/// or unique to one set of parallel tasks.
enum class PropertyGroup { always, optional, node };

struct Property {
    PropertyGroup group = PropertyGroup::always;
    std::string key;
    PropertyValue value;

    bool operator==(const Property&) const = default;
};

std::string_view to_string(PropertyGroup group);
PropertyGroup property_group_from_string(std::string_view name);

inline constexpr std::size_t kDefaultPropertyLength = 33;  // N
inline constexpr std::size_t kDefaultEmbeddingDim = 8;     // M
inline constexpr std::size_t kNgramSize = 3;

struct PropertyVector {
    bool binarized = false;  // lambda
    std::vector<double> payload;

    std::size_t size() const { return payload.size() + 1; }
    /// lambda followed by the payload.
    std::vector<double> flat() const;

    bool operator==(const PropertyVector&) const = default;
};

struct Embedding {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    bool operator==(const Embedding&) const = default;
};

// FNV-1a, 64 bit.
std::uint64_t stable_hash(std::string_view bytes);

/// Lowercases, maps every run of non-alphanumeric characters to a single
/// space and trims the ends.
std::string cleanse(std::string_view text);

/// Character n-gram counts of an already cleansed string. Strings shorter
/// than n yield themselves as the only term.
std::map<std::string, int> ngram_counts(std::string_view cleansed, std::size_t n = kNgramSize);

std::vector<double> hash_encode(std::string_view text, std::size_t length);

/// Little-endian bit vector: bit i of value lands at index i.
/// Throws std::out_of_range when value does not fit into length bits.
std::vector<double> binarize(std::uint64_t value, std::size_t length);

PropertyVector encode_property(const PropertyValue& value, std::size_t total_length = kDefaultPropertyLength);

enum class EncoderActivation { tanh, linear };

struct AutoencoderParams {
    std::size_t n = 0;
    std::size_t m = 0;
    EncoderActivation activation = EncoderActivation::tanh;
    Eigen::MatrixXd enc_w;  // m x n
    Eigen::VectorXd enc_b;  // m
    Eigen::MatrixXd dec_w;  // n x m
    Eigen::VectorXd dec_b;  // n

    AutoencoderParams() = default;
    /// Zero-initialised parameters. Requires 1 <= m < n.
    AutoencoderParams(std::size_t n, std::size_t m, EncoderActivation activation = EncoderActivation::tanh);

    std::size_t parameter_count() const;
    bool operator==(const AutoencoderParams& other) const;
};

struct AutoencoderTraining {
    AutoencoderParams params;
    std::vector<double> loss_curve;  // loss before each epoch, then the final loss
    double final_loss() const { return loss_curve.back(); }
};

AutoencoderTraining train_autoencoder(std::span<const PropertyVector> vectors, std::size_t m, std::size_t epochs,
                                      double learning_rate, std::uint64_t seed,
                                      EncoderActivation activation = EncoderActivation::tanh);

/// Mean squared reconstruction error over the data set and its gradient.
struct AutoencoderGradient {
    double loss = 0.0;
    AutoencoderParams grad;
};
AutoencoderGradient autoencoder_loss_and_gradient(const AutoencoderParams& params,
                                                  std::span<const Eigen::VectorXd> data);

Embedding embed(const AutoencoderParams& params, const PropertyVector& vector);
std::vector<double> decode(const AutoencoderParams& params, const Embedding& embedding);

/// u || v || w where each part is the mean of one embedding group and an
/// empty group contributes zeros.
std::vector<double> build_context_vector(std::span<const Embedding> always, std::span<const Embedding> optional,
                                         std::span<const Embedding> node, std::size_t m);

}  // namespace enel
