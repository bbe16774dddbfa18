#pragma once

// Downstream heads on top of a trained cascade: the (2 + 2L) latent feature
// vector, a one-class extreme learning machine, ROC-AUC, and loss-based
// dictionary classification.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "despawn/error.hpp"
#include "despawn/network.hpp"
#include "despawn/training.hpp"

namespace despawn {

/// Residual mean/max and per-level mean/max modulus of the thresholded details.
struct LatentFeatures {
    double res_mean = 0.0;
    double res_max = 0.0;
    std::vector<double> l1_mean;
    std::vector<double> l1_max;

    std::size_t dimension() const noexcept { return 2 + l1_mean.size() + l1_max.size(); }

    /// res_mean, res_max, l1_mean_1..L, l1_max_1..L
    std::vector<double> flatten() const {
        std::vector<double> out{res_mean, res_max};
        out.insert(out.end(), l1_mean.begin(), l1_mean.end());
        out.insert(out.end(), l1_max.begin(), l1_max.end());
        return out;
    }

    static LatentFeatures unflatten(std::span<const double> v) {
        if (v.size() < 4 || v.size() % 2 != 0) {
            throw Error(ErrorKind::InvalidInput, "feature vector of size " + std::to_string(v.size()) +
                                                     " is not of the form 2 + 2L");
        }
        const std::size_t levels = (v.size() - 2) / 2;
        LatentFeatures f;
        f.res_mean = v[0];
        f.res_max = v[1];
        f.l1_mean.assign(v.begin() + 2, v.begin() + 2 + static_cast<std::ptrdiff_t>(levels));
        f.l1_max.assign(v.begin() + 2 + static_cast<std::ptrdiff_t>(levels), v.end());
        return f;
    }
};

inline LatentFeatures features_from_record(const ForwardRecord& record, std::span<const double> signal) {
    if (record.reconstruction.size() != signal.size()) {
        throw Error(ErrorKind::InvalidInput, "signal and reconstruction lengths differ");
    }
    LatentFeatures f;
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const double r = std::abs(signal[i] - record.reconstruction[i]);
        f.res_mean += r;
        f.res_max = std::max(f.res_max, r);
    }
    f.res_mean /= static_cast<double>(signal.size());
    for (const auto& d : record.pyramid.details) {
        double sum = 0.0, peak = 0.0;
        for (double v : d) {
            sum += std::abs(v);
            peak = std::max(peak, std::abs(v));
        }
        f.l1_mean.push_back(sum / static_cast<double>(d.size()));
        f.l1_max.push_back(peak);
    }
    return f;
}

inline LatentFeatures extract_features(std::span<const double> signal, const DespawnModel& model) {
    return features_from_record(model_forward(signal, model), signal);
}

/// Single-hidden-layer network with fixed random sigmoid units and a ridge
/// regressed readout, fitted to output 1 on normal data only.
struct OneClassElm {
    Eigen::MatrixXd hidden_weights;  // dimension x neurons
    Eigen::VectorXd hidden_bias;     // neurons
    Eigen::VectorXd output_weights;  // neurons
    Eigen::VectorXd feature_mean;    // dimension
    Eigen::VectorXd feature_stddev;  // dimension, all > 0
    double ridge_lambda = 1e-3;
    std::uint64_t seed = 0;

    std::size_t neurons() const noexcept { return static_cast<std::size_t>(hidden_bias.size()); }
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(feature_mean.size()); }

    Eigen::RowVectorXd hidden_activation(std::span<const double> x) const {
        if (x.size() != dimension()) {
            throw Error(ErrorKind::InvalidInput, "feature dimension " + std::to_string(x.size()) +
                                                     " does not match the fitted " + std::to_string(dimension()));
        }
        Eigen::RowVectorXd z(static_cast<Eigen::Index>(x.size()));
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            z[j] = (x[static_cast<std::size_t>(j)] - feature_mean[j]) / feature_stddev[j];
        }
        Eigen::RowVectorXd h = z * hidden_weights + hidden_bias.transpose();
        return h.unaryExpr([](double t) { return sigmoid(t); });
    }

    double predict(std::span<const double> x) const { return hidden_activation(x).dot(output_weights); }
};

inline OneClassElm elm_fit(std::span<const std::vector<double>> features, std::size_t neurons = 50,
                           double ridge_lambda = 1e-3, std::uint64_t seed = 0) {
    if (features.empty()) throw Error(ErrorKind::Configuration, "ELM needs at least one training sample");
    if (neurons == 0) throw Error(ErrorKind::Configuration, "ELM needs at least one neuron");
    if (!(ridge_lambda >= 0.0)) throw Error(ErrorKind::Configuration, "ridge lambda must be >= 0");
    const std::size_t dim = features.front().size();
    if (dim == 0) throw Error(ErrorKind::InvalidInput, "empty feature vectors");
    for (const auto& f : features) {
        if (f.size() != dim) throw Error(ErrorKind::InvalidInput, "feature vectors differ in dimension");
    }
    const auto n = static_cast<Eigen::Index>(features.size());
    const auto d = static_cast<Eigen::Index>(dim);
    const auto h = static_cast<Eigen::Index>(neurons);

    OneClassElm elm;
    elm.ridge_lambda = ridge_lambda;
    elm.seed = seed;
    elm.feature_mean = Eigen::VectorXd::Zero(d);
    elm.feature_stddev = Eigen::VectorXd::Zero(d);
    for (const auto& f : features)
        for (Eigen::Index j = 0; j < d; ++j) elm.feature_mean[j] += f[static_cast<std::size_t>(j)];
    elm.feature_mean /= static_cast<double>(n);
    for (const auto& f : features) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double c = f[static_cast<std::size_t>(j)] - elm.feature_mean[j];
            elm.feature_stddev[j] += c * c;
        }
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        const double sd = std::sqrt(elm.feature_stddev[j] / static_cast<double>(n));
        elm.feature_stddev[j] = (sd > 0.0 && std::isfinite(sd)) ? sd : 1.0;
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    elm.hidden_weights.resize(d, h);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < h; ++j) elm.hidden_weights(i, j) = uniform(rng);
    elm.hidden_bias.resize(h);
    for (Eigen::Index j = 0; j < h; ++j) elm.hidden_bias[j] = uniform(rng);

    Eigen::MatrixXd hidden(n, h);
    for (Eigen::Index i = 0; i < n; ++i) hidden.row(i) = elm.hidden_activation(features[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd gram = hidden.transpose() * hidden;
    gram.diagonal().array() += ridge_lambda;
    const Eigen::VectorXd rhs = hidden.transpose() * Eigen::VectorXd::Ones(n);
    elm.output_weights = gram.ldlt().solve(rhs);
    return elm;
}

inline OneClassElm elm_fit(std::span<const LatentFeatures> features, std::size_t neurons = 50,
                           double ridge_lambda = 1e-3, std::uint64_t seed = 0) {
    std::vector<std::vector<double>> flat;
    flat.reserve(features.size());
    for (const auto& f : features) flat.push_back(f.flatten());
    return elm_fit(std::span<const std::vector<double>>(flat), neurons, ridge_lambda, seed);
}

/// |1 - y|; larger is more anomalous.
inline double elm_score(const OneClassElm& elm, std::span<const double> features) {
    return std::abs(1.0 - elm.predict(features));
}

inline double elm_score(const OneClassElm& elm, const LatentFeatures& features) {
    return elm_score(elm, features.flatten());
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney U / (n_pos n_neg)).
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorKind::InvalidInput, "scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j averaged
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] != 0) {
                positive_rank_sum += mid_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw Error(ErrorKind::UndefinedMetric, "AUC needs both positive and negative labels");
    }
    const double p = static_cast<double>(positives);
    const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

/// One cascade per class; a signal belongs to the class whose cascade gives
/// the lowest training loss.
struct DictionaryModel {
    std::map<std::string, DespawnModel> class_models;
    double gamma = 1.0;
};

struct Classification {
    std::string label;
    std::map<std::string, double> losses;
};

inline void validate_dictionary(const DictionaryModel& dict) {
    if (dict.class_models.size() < 2) throw Error(ErrorKind::Configuration, "dictionary needs at least two classes");
    const DespawnModel& ref = dict.class_models.begin()->second;
    for (const auto& [label, m] : dict.class_models) {
        if (m.levels != ref.levels || m.kernel_size != ref.kernel_size || m.mode != ref.mode) {
            throw Error(ErrorKind::Configuration, "class '" + label + "' has a different architecture");
        }
    }
}

inline DictionaryModel dict_train(const std::map<std::string, std::vector<std::vector<double>>>& class_datasets,
                                  SharingMode mode, const TrainConfig& config) {
    if (class_datasets.size() < 2) throw Error(ErrorKind::Configuration, "need at least two classes");
    for (const auto& [label, signals] : class_datasets) {
        if (signals.empty()) throw Error(ErrorKind::Configuration, "class '" + label + "' has no training signals");
    }
    TrainConfig cfg = config;
    if (cfg.levels == 0) cfg.levels = default_levels(class_datasets.begin()->second.front().size());
    DictionaryModel dict;
    dict.gamma = cfg.gamma;
    for (const auto& [label, signals] : class_datasets) {
        dict.class_models.emplace(label, train(signals, mode, cfg).final_model);
    }
    return dict;
}

inline Classification dict_classify(std::span<const double> signal, const DictionaryModel& dict) {
    validate_dictionary(dict);
    Classification out;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [label, model] : dict.class_models) {  // std::map: lexicographic order
        const double l = loss(model_forward(signal, model), signal, dict.gamma).total;
        out.losses.emplace(label, l);
        if (l < best) {
            best = l;
            out.label = label;
        }
    }
    return out;
}

}  // namespace despawn
