#pragma once

// The learnable denoising wavelet cascade: per-level kernels under a sharing
// mode, the double-sigmoid hard-threshold activation, the encoder/decoder
// forward pass and the reconstruction + sparsity loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "despawn/error.hpp"
#include "despawn/wavelet.hpp"

namespace despawn {

inline constexpr double kDefaultSharpness = 10.0;

enum class SharingMode {
    Db4Fixed,             // db4, identity activation, nothing trained
    Db4FixedHT,           // db4, thresholds trained
    SharedCqf,            // CWN: one h for all levels
    SharedCqfHT,          // DeCWN
    PerLevelCqf,          // LCWN: one h per level
    PerLevelCqfHT,        // DeSpaWN
    PerLevelTwoKernelHT,  // DeSpaWN-2: h and g per level, partial CQF
    FreeHT,               // FreeWN: all four kernels per level
};

inline constexpr std::array<SharingMode, 8> kAllModes = {
    SharingMode::Db4Fixed,    SharingMode::Db4FixedHT,    SharingMode::SharedCqf,           SharingMode::SharedCqfHT,
    SharingMode::PerLevelCqf, SharingMode::PerLevelCqfHT, SharingMode::PerLevelTwoKernelHT, SharingMode::FreeHT,
};

inline std::string_view mode_name(SharingMode mode) noexcept {
    switch (mode) {
        case SharingMode::Db4Fixed: return "db4";
        case SharingMode::Db4FixedHT: return "db4-ht";
        case SharingMode::SharedCqf: return "cwn";
        case SharingMode::SharedCqfHT: return "decwn";
        case SharingMode::PerLevelCqf: return "lcwn";
        case SharingMode::PerLevelCqfHT: return "despawn";
        case SharingMode::PerLevelTwoKernelHT: return "despawn2";
        case SharingMode::FreeHT: return "free";
    }
    return "unknown";
}

inline SharingMode parse_mode(std::string_view name) {
    for (SharingMode m : kAllModes) {
        if (mode_name(m) == name) return m;
    }
    throw Error(ErrorKind::Configuration, "unknown mode '" + std::string(name) + "'");
}

constexpr bool learns_thresholds(SharingMode mode) noexcept {
    switch (mode) {
        case SharingMode::Db4Fixed:
        case SharingMode::SharedCqf:
        case SharingMode::PerLevelCqf: return false;
        default: return true;
    }
}

constexpr bool uses_fixed_db4(SharingMode mode) noexcept {
    return mode == SharingMode::Db4Fixed || mode == SharingMode::Db4FixedHT;
}

constexpr bool shares_kernels(SharingMode mode) noexcept {
    return uses_fixed_db4(mode) || mode == SharingMode::SharedCqf || mode == SharingMode::SharedCqfHT;
}

/// How many of (h, g, h_bar, g_bar) are trained per kernel group.
constexpr std::size_t trained_kernels_per_group(SharingMode mode) noexcept {
    switch (mode) {
        case SharingMode::Db4Fixed:
        case SharingMode::Db4FixedHT: return 0;
        case SharingMode::PerLevelTwoKernelHT: return 2;
        case SharingMode::FreeHT: return 4;
        default: return 1;
    }
}

/// Thresholds of one HT layer. alpha is the fixed sharpness, never trained.
struct ThresholdPair {
    double b_plus = 0.0;
    double b_minus = 0.0;
    double alpha = kDefaultSharpness;

    bool operator==(const ThresholdPair&) const = default;
};

/// Logistic function that never evaluates exp of a large positive argument.
inline double sigmoid(double t) noexcept {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// x * [sigma(-alpha (x + b_minus)) + sigma(alpha (x - b_plus))].
///
/// Evaluated as x * (1 + (sigma(alpha (x - b_plus)) - sigma(alpha (x + b_minus)))),
/// which is the same function but gives exactly x when both thresholds are 0.
inline double ht_activation(double x, const ThresholdPair& t) noexcept {
    const double gate = 1.0 + (sigmoid(t.alpha * (x - t.b_plus)) - sigmoid(t.alpha * (x + t.b_minus)));
    return x * gate;
}

struct HtJet {
    double value;
    double d_x;
    double d_b_plus;
    double d_b_minus;
};

inline HtJet ht_jet(double x, const ThresholdPair& t) noexcept {
    const double s_plus = sigmoid(t.alpha * (x - t.b_plus));
    const double s_minus = sigmoid(t.alpha * (x + t.b_minus));
    const double ds_plus = t.alpha * s_plus * (1.0 - s_plus);
    const double ds_minus = t.alpha * s_minus * (1.0 - s_minus);
    const double gate = 1.0 + (s_plus - s_minus);
    return {x * gate, gate + x * (ds_plus - ds_minus), -x * ds_plus, -x * ds_minus};
}

/// Trainable kernel storage for one group. Only the kernels the mode trains
/// are populated; the rest are re-derived on demand and never stored.
struct LearnableKernels {
    Kernel h;
    Kernel g;
    Kernel h_bar;
    Kernel g_bar;

    bool operator==(const LearnableKernels&) const = default;
};

struct DespawnModel {
    std::size_t levels = 0;
    std::size_t kernel_size = 0;
    SharingMode mode = SharingMode::PerLevelCqfHT;
    double gamma = 1.0;
    std::vector<LearnableKernels> kernels;   // one group if shared, else one per level
    std::vector<ThresholdPair> thresholds;   // one per level

    double alpha() const noexcept { return thresholds.empty() ? kDefaultSharpness : thresholds.front().alpha; }

    const LearnableKernels& group_for_level(std::size_t level) const {
        return kernels.at(shares_kernels(mode) ? 0 : level);
    }

    /// Filter bank actually used at a level, with CQF relations re-derived
    /// from the trainable kernels.
    FilterBank bank(std::size_t level) const {
        const LearnableKernels& k = group_for_level(level);
        switch (mode) {
            case SharingMode::PerLevelTwoKernelHT: return cqf_partial(k.h, k.g);
            case SharingMode::FreeHT: return FilterBank{k.h, k.g, k.h_bar, k.g_bar};
            default: return cqf_from_scaling(k.h);
        }
    }

    std::vector<FilterBank> banks() const {
        std::vector<FilterBank> out;
        out.reserve(levels);
        for (std::size_t l = 0; l < levels; ++l) out.push_back(bank(l));
        return out;
    }

    bool operator==(const DespawnModel&) const = default;
};

/// Initial scaling filter for a kernel size: db4 for 8 taps, otherwise Haar
/// zero-extended to the requested length (still an orthonormal CQF filter).
inline Kernel initial_scaling(std::size_t kernel_size) {
    if (kernel_size == kDb4Scaling.size()) return db4_scaling();
    Kernel h(kernel_size, 0.0);
    const auto haar = haar_scaling();
    h[0] = haar[0];
    h[1] = haar[1];
    return h;
}

inline DespawnModel build_model(std::size_t levels, std::size_t kernel_size, SharingMode mode, double gamma = 1.0,
                                double alpha = kDefaultSharpness) {
    if (levels == 0) throw Error(ErrorKind::Configuration, "model needs at least one level");
    if (kernel_size < 2 || kernel_size % 2 != 0) {
        throw Error(ErrorKind::Configuration, "kernel size must be even and >= 2 (got " +
                                                  std::to_string(kernel_size) + ")");
    }
    if (uses_fixed_db4(mode) && kernel_size != kDb4Scaling.size()) {
        throw Error(ErrorKind::Configuration, "db4 modes require kernel size 8");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::Configuration, "alpha must be positive");
    if (!std::isfinite(gamma) || gamma < 0.0) throw Error(ErrorKind::Configuration, "gamma must be >= 0");

    DespawnModel model;
    model.levels = levels;
    model.kernel_size = kernel_size;
    model.mode = mode;
    model.gamma = gamma;

    const FilterBank init = cqf_from_scaling(initial_scaling(kernel_size));
    LearnableKernels group;
    group.h = init.h;
    if (mode == SharingMode::PerLevelTwoKernelHT || mode == SharingMode::FreeHT) group.g = init.g;
    if (mode == SharingMode::FreeHT) {
        group.h_bar = init.h_bar;
        group.g_bar = init.g_bar;
    }
    model.kernels.assign(shares_kernels(mode) ? 1 : levels, group);
    model.thresholds.assign(levels, ThresholdPair{0.0, 0.0, alpha});
    return model;
}

/// Number of trainable scalars, e.g. (k_n + 2) * L for the per-level CQF mode
/// with thresholds.
inline std::size_t parameter_count(const DespawnModel& model) noexcept {
    const std::size_t groups = model.kernels.size();
    std::size_t n = groups * trained_kernels_per_group(model.mode) * model.kernel_size;
    if (learns_thresholds(model.mode)) n += 2 * model.levels;
    return n;
}

namespace detail {

// Visits every trainable scalar in the canonical flat order: for each kernel
// group its trained kernels (h, g, h_bar, g_bar), then (b_plus, b_minus) per
// level. fn(double& value) may read or write.
template <typename Model, typename Fn>
void for_each_parameter(Model& model, Fn&& fn) {
    const std::size_t per_group = trained_kernels_per_group(model.mode);
    for (auto& group : model.kernels) {
        const std::array slots{&group.h, &group.g, &group.h_bar, &group.g_bar};
        for (std::size_t k = 0; k < per_group; ++k) {
            for (auto& tap : *slots[k]) fn(tap);
        }
    }
    if (learns_thresholds(model.mode)) {
        for (auto& t : model.thresholds) {
            fn(t.b_plus);
            fn(t.b_minus);
        }
    }
}

}  // namespace detail

inline std::vector<double> parameters(const DespawnModel& model) {
    std::vector<double> out;
    out.reserve(parameter_count(model));
    detail::for_each_parameter(model, [&](const double& v) { out.push_back(v); });
    return out;
}

inline void set_parameters(DespawnModel& model, std::span<const double> values) {
    if (values.size() != parameter_count(model)) {
        throw Error(ErrorKind::State, "expected " + std::to_string(parameter_count(model)) + " parameters, got " +
                                          std::to_string(values.size()));
    }
    std::size_t i = 0;
    detail::for_each_parameter(model, [&](double& v) { v = values[i++]; });
}

/// Human-readable name of a flat parameter index, e.g. "level 3 h[2]".
inline std::string parameter_label(const DespawnModel& model, std::size_t index) {
    if (index >= parameter_count(model)) throw Error(ErrorKind::Index, "parameter index out of range");
    const std::size_t per_group = trained_kernels_per_group(model.mode);
    const std::size_t group_span = per_group * model.kernel_size;
    const std::size_t kernel_total = group_span * model.kernels.size();
    static constexpr std::array<const char*, 4> names = {"h", "g", "h_bar", "g_bar"};
    if (index < kernel_total) {
        const std::size_t group = index / group_span;
        const std::size_t within = index % group_span;
        std::string where = shares_kernels(model.mode) ? "shared" : "level " + std::to_string(group + 1);
        return where + " " + names[within / model.kernel_size] + "[" + std::to_string(within % model.kernel_size) +
               "]";
    }
    const std::size_t t = index - kernel_total;
    return "level " + std::to_string(t / 2 + 1) + (t % 2 == 0 ? " b_plus" : " b_minus");
}

/// Thresholded pyramid plus reconstruction of one signal.
struct ForwardRecord {
    CoefficientPyramid pyramid;
    std::vector<double> reconstruction;
    std::size_t input_length = 0;
};

/// Everything the backward pass needs on top of the ForwardRecord.
struct ForwardTrace {
    ForwardRecord record;
    std::vector<FilterBank> banks;
    std::vector<std::vector<double>> padded_inputs;   // encoder input of level l, padded to even length
    std::vector<std::vector<double>> raw_details;     // detail of level l before HT
    std::vector<std::vector<double>> decoder_approx;  // approximation entering decoder block l
};

inline ForwardTrace forward_trace(std::span<const double> signal, const DespawnModel& model) {
    check_depth(signal.size(), model.levels);
    if (model.thresholds.size() != model.levels) throw Error(ErrorKind::State, "threshold count != levels");
    const std::size_t levels = model.levels;
    const bool thresholding = learns_thresholds(model.mode);

    ForwardTrace tr;
    tr.banks = model.banks();
    tr.padded_inputs.resize(levels);
    tr.raw_details.resize(levels);
    tr.decoder_approx.resize(levels);
    auto& pyr = tr.record.pyramid;
    pyr.details.resize(levels);
    pyr.level_lengths.resize(levels);

    std::vector<double> current(signal.begin(), signal.end());
    for (std::size_t l = 0; l < levels; ++l) {
        pyr.level_lengths[l] = current.size();
        tr.padded_inputs[l] = periodic::pad_even<double>(current);
        const std::size_t half = tr.padded_inputs[l].size() / 2;
        std::vector<double> approx(half);
        tr.raw_details[l].resize(half);
        periodic::correlate_down<double>(tr.padded_inputs[l], tr.banks[l].h, approx);
        periodic::correlate_down<double>(tr.padded_inputs[l], tr.banks[l].g, tr.raw_details[l]);
        auto& d = pyr.details[l];
        d = tr.raw_details[l];
        if (thresholding) {
            for (double& v : d) v = ht_activation(v, model.thresholds[l]);
        }
        current = std::move(approx);
    }
    pyr.approx = current;

    for (std::size_t l = levels; l-- > 0;) {
        tr.decoder_approx[l] = current;
        current = synthesize_level<double>(current, pyr.details[l], tr.banks[l].h_bar, tr.banks[l].g_bar,
                                           pyr.level_lengths[l]);
    }
    tr.record.reconstruction = std::move(current);
    tr.record.input_length = signal.size();
    return tr;
}

inline ForwardRecord model_forward(std::span<const double> signal, const DespawnModel& model) {
    return std::move(forward_trace(signal, model).record);
}

struct LossTerms {
    double total = 0.0;
    double recon = 0.0;
    double sparsity = 0.0;
};

/// Mean absolute residual plus gamma times the mean modulus of every
/// coefficient (thresholded details and the final approximation).
inline LossTerms loss(const ForwardRecord& record, std::span<const double> signal, double gamma) {
    if (record.reconstruction.size() != signal.size() || signal.empty()) {
        throw Error(ErrorKind::InvalidInput, "signal and reconstruction lengths differ");
    }
    LossTerms out;
    for (std::size_t i = 0; i < signal.size(); ++i) out.recon += std::abs(signal[i] - record.reconstruction[i]);
    out.recon /= static_cast<double>(signal.size());

    const auto& pyr = record.pyramid;
    double l1 = 0.0;
    for (const auto& d : pyr.details)
        for (double v : d) l1 += std::abs(v);
    for (double v : pyr.approx) l1 += std::abs(v);
    const std::size_t count = pyr.coefficient_count();
    out.sparsity = count == 0 ? 0.0 : l1 / static_cast<double>(count);
    out.total = out.recon + gamma * out.sparsity;
    return out;
}

inline LossTerms evaluate_loss(std::span<const double> signal, const DespawnModel& model) {
    return loss(model_forward(signal, model), signal, model.gamma);
}

/// ||h_bar|| / ||h|| per level; diverges when unconstrained synthesis kernels
/// compensate for shrinking analysis kernels.
inline std::vector<double> synthesis_gain_ratios(const DespawnModel& model) {
    std::vector<double> out;
    out.reserve(model.levels);
    for (std::size_t l = 0; l < model.levels; ++l) {
        const FilterBank b = model.bank(l);
        double nh = 0.0, nhb = 0.0;
        for (double v : b.h) nh += v * v;
        for (double v : b.h_bar) nhb += v * v;
        out.push_back(nh > 0.0 ? std::sqrt(nhb / nh) : std::numeric_limits<double>::infinity());
    }
    return out;
}

/// Default depth: nearest integer base-2 logarithm of the window length,
/// capped at the deepest cascade the length supports.
inline std::size_t default_levels(std::size_t length) {
    if (length < 2) throw Error(ErrorKind::InvalidSignal, "signal must have at least 2 samples");
    const auto l = static_cast<std::size_t>(std::lround(std::log2(static_cast<double>(length))));
    return std::clamp<std::size_t>(l, 1, max_depth(length));
}

}  // namespace despawn
