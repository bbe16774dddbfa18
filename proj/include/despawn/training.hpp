#pragma once

// Hand-written reverse-mode gradients of the training loss, the central
// finite-difference oracle used to check them, Adam, and the mini-batch loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "despawn/error.hpp"
#include "despawn/network.hpp"
#include "despawn/wavelet.hpp"

namespace despawn {

/// |v| at or below this counts as an exact zero of an l1 term, whose
/// subgradient is then 0. Perfect-reconstruction residuals sit at ~1e-16
/// rather than exactly 0.
inline constexpr double kL1ZeroTolerance = 1e-12;

inline double l1_subgradient(double v) noexcept {
    if (std::abs(v) <= kL1ZeroTolerance) return 0.0;
    return v > 0.0 ? 1.0 : -1.0;
}

/// Gradient of the total loss, laid out exactly like parameters(model).
struct Gradients {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    bool all_finite() const noexcept {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
};

struct BackwardResult {
    LossTerms loss;
    Gradients grads;
};

namespace detail {

inline void zero_parameters(DespawnModel& m) {
    for (auto& group : m.kernels) {
        for (Kernel* k : {&group.h, &group.g, &group.h_bar, &group.g_bar}) std::fill(k->begin(), k->end(), 0.0);
    }
    for (auto& t : m.thresholds) t.b_plus = t.b_minus = 0.0;
}

// Chain rule from the four per-level bank kernels back to whatever the mode
// actually trains.
inline void fold_bank_gradient(const FilterBank& gb, SharingMode mode, LearnableKernels& target) {
    const std::size_t k = gb.h.size();
    switch (mode) {
        case SharingMode::Db4Fixed:
        case SharingMode::Db4FixedHT: return;
        case SharingMode::FreeHT:
            for (std::size_t n = 0; n < k; ++n) {
                target.h[n] += gb.h[n];
                target.g[n] += gb.g[n];
                target.h_bar[n] += gb.h_bar[n];
                target.g_bar[n] += gb.g_bar[n];
            }
            return;
        case SharingMode::PerLevelTwoKernelHT:
            // h_bar[n] = h[K-1-n], g_bar[n] = g[K-1-n]
            for (std::size_t n = 0; n < k; ++n) {
                target.h[n] += gb.h[n];
                target.g[n] += gb.g[n];
                target.h[k - 1 - n] += gb.h_bar[n];
                target.g[k - 1 - n] += gb.g_bar[n];
            }
            return;
        default:
            // g[n] = (-1)^n h[K-1-n], h_bar[n] = h[K-1-n], g_bar[n] = (-1)^(n+1) h[n]
            for (std::size_t n = 0; n < k; ++n) {
                const double even = (n % 2 == 0) ? 1.0 : -1.0;
                target.h[n] += gb.h[n] - even * gb.g_bar[n];
                target.h[k - 1 - n] += even * gb.g[n] + gb.h_bar[n];
            }
            return;
    }
}

}  // namespace detail

/// Exact gradient of loss(model_forward(signal), signal, gamma).total with
/// respect to every trainable scalar of the model.
inline BackwardResult backward(std::span<const double> signal, const DespawnModel& model, double gamma) {
    const ForwardTrace tr = forward_trace(signal, model);
    const ForwardRecord& rec = tr.record;
    const auto& pyr = rec.pyramid;
    const std::size_t levels = model.levels;
    const std::size_t ksize = model.kernel_size;
    const bool thresholding = learns_thresholds(model.mode);

    BackwardResult out;
    out.loss = loss(rec, signal, gamma);

    const double w_recon = 1.0 / static_cast<double>(signal.size());
    const double w_sparse = gamma / static_cast<double>(pyr.coefficient_count());

    std::vector<FilterBank> bank_grads(
        levels, FilterBank{Kernel(ksize, 0.0), Kernel(ksize, 0.0), Kernel(ksize, 0.0), Kernel(ksize, 0.0)});
    std::vector<ThresholdPair> threshold_grads(levels, ThresholdPair{0.0, 0.0, model.alpha()});

    // d loss / d (thresholded detail), seeded with the sparsity term.
    std::vector<std::vector<double>> grad_detail(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        grad_detail[l].resize(pyr.details[l].size());
        for (std::size_t k = 0; k < grad_detail[l].size(); ++k) {
            grad_detail[l][k] = w_sparse * l1_subgradient(pyr.details[l][k]);
        }
    }

    // Decoder, from the reconstruction back up to a^L.
    std::vector<double> grad_current(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
        grad_current[i] = w_recon * l1_subgradient(rec.reconstruction[i] - signal[i]);
    }
    Kernel scratch(ksize);
    for (std::size_t l = 0; l < levels; ++l) {
        const std::size_t half = pyr.details[l].size();
        grad_current.resize(2 * half, 0.0);  // transpose of the truncation
        const Kernel h_rev = reversed<double>(tr.banks[l].h_bar);
        const Kernel g_rev = reversed<double>(tr.banks[l].g_bar);

        std::vector<double> grad_approx(half), grad_d(half);
        periodic::correlate_down<double>(grad_current, h_rev, grad_approx);
        periodic::correlate_down<double>(grad_current, g_rev, grad_d);
        for (std::size_t k = 0; k < half; ++k) grad_detail[l][k] += grad_d[k];

        std::fill(scratch.begin(), scratch.end(), 0.0);
        periodic::accumulate_kernel_grad<double>(grad_current, tr.decoder_approx[l], scratch);
        for (std::size_t n = 0; n < ksize; ++n) bank_grads[l].h_bar[ksize - 1 - n] += scratch[n];
        std::fill(scratch.begin(), scratch.end(), 0.0);
        periodic::accumulate_kernel_grad<double>(grad_current, pyr.details[l], scratch);
        for (std::size_t n = 0; n < ksize; ++n) bank_grads[l].g_bar[ksize - 1 - n] += scratch[n];

        grad_current = std::move(grad_approx);
    }

    // a^L feeds both the decoder and the sparsity term.
    for (std::size_t k = 0; k < grad_current.size(); ++k) {
        grad_current[k] += w_sparse * l1_subgradient(pyr.approx[k]);
    }

    // Encoder, deepest level first; grad_current is d loss / d a^{l+1}.
    for (std::size_t l = levels; l-- > 0;) {
        const auto& raw = tr.raw_details[l];
        std::vector<double> grad_raw(raw.size());
        for (std::size_t k = 0; k < raw.size(); ++k) {
            if (thresholding) {
                const HtJet jet = ht_jet(raw[k], model.thresholds[l]);
                grad_raw[k] = grad_detail[l][k] * jet.d_x;
                threshold_grads[l].b_plus += grad_detail[l][k] * jet.d_b_plus;
                threshold_grads[l].b_minus += grad_detail[l][k] * jet.d_b_minus;
            } else {
                grad_raw[k] = grad_detail[l][k];
            }
        }
        const auto& input = tr.padded_inputs[l];
        periodic::accumulate_kernel_grad<double>(input, grad_current, bank_grads[l].h);
        periodic::accumulate_kernel_grad<double>(input, grad_raw, bank_grads[l].g);
        if (l == 0) break;

        std::vector<double> grad_input(input.size(), 0.0);
        periodic::scatter_up<double>(grad_current, tr.banks[l].h, grad_input);
        periodic::scatter_up<double>(grad_raw, tr.banks[l].g, grad_input);
        grad_input.resize(pyr.level_lengths[l]);  // transpose of the zero pad
        grad_current = std::move(grad_input);
    }

    DespawnModel grad_model = model;
    detail::zero_parameters(grad_model);
    for (std::size_t l = 0; l < levels; ++l) {
        detail::fold_bank_gradient(bank_grads[l], model.mode, grad_model.kernels[shares_kernels(model.mode) ? 0 : l]);
    }
    if (thresholding) grad_model.thresholds = threshold_grads;
    out.grads.values = parameters(grad_model);
    return out;
}

inline BackwardResult backward(std::span<const double> signal, const DespawnModel& model) {
    return backward(signal, model, model.gamma);
}

/// Default central-difference step for a parameter value.
inline double finite_difference_step(double theta) noexcept { return 1e-6 * std::max(1.0, std::abs(theta)); }

/// (loss(theta + step) - loss(theta - step)) / (2 step) by two full forward
/// passes. step <= 0 selects finite_difference_step(theta).
inline double finite_difference_grad(std::span<const double> signal, const DespawnModel& model, double gamma,
                                     std::size_t param_index, double step = 0.0) {
    std::vector<double> theta = parameters(model);
    if (param_index >= theta.size()) {
        throw Error(ErrorKind::Index, "parameter index " + std::to_string(param_index) + " out of range (model has " +
                                          std::to_string(theta.size()) + " trainable parameters)");
    }
    if (step <= 0.0) step = finite_difference_step(theta[param_index]);
    DespawnModel probe = model;
    const double base = theta[param_index];

    theta[param_index] = base + step;
    set_parameters(probe, theta);
    const double up = loss(model_forward(signal, probe), signal, gamma).total;

    theta[param_index] = base - step;
    set_parameters(probe, theta);
    const double down = loss(model_forward(signal, probe), signal, gamma).total;

    return (up - down) / (2.0 * step);
}

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    double gamma = 1.0;
    bool shuffle = true;
    std::size_t levels = 0;  // 0: nearest log2 of the first training signal's length
    std::size_t kernel_size = 8;
    std::size_t workers = 1;  // threads for per-signal backward passes within a batch

    void validate() const {
        if (epochs < 1) throw Error(ErrorKind::Configuration, "epochs must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw Error(ErrorKind::Configuration, "learning rate must be finite and >= 0");
        }
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
            throw Error(ErrorKind::Configuration, "Adam betas must lie in (0, 1)");
        }
        if (!(adam_epsilon > 0.0)) throw Error(ErrorKind::Configuration, "Adam epsilon must be positive");
        if (batch_size < 1) throw Error(ErrorKind::Configuration, "batch size must be >= 1");
        if (workers < 1) throw Error(ErrorKind::Configuration, "workers must be >= 1");
    }
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update. An empty state is initialised to zeros.
inline void adam_step(DespawnModel& model, const Gradients& grads, AdamState& state, const TrainConfig& config) {
    std::vector<double> theta = parameters(model);
    if (grads.size() != theta.size()) {
        throw Error(ErrorKind::State, "gradient has " + std::to_string(grads.size()) + " entries, model has " +
                                          std::to_string(theta.size()));
    }
    if (state.step == 0 && state.first_moment.empty() && state.second_moment.empty()) {
        state.first_moment.assign(theta.size(), 0.0);
        state.second_moment.assign(theta.size(), 0.0);
    }
    if (state.first_moment.size() != theta.size() || state.second_moment.size() != theta.size()) {
        throw Error(ErrorKind::State, "optimizer state does not match the parameter count");
    }
    ++state.step;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grads.values[i];
        state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g;
        state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        const double m_hat = state.first_moment[i] / correction1;
        const double v_hat = state.second_moment[i] / correction2;
        theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
    set_parameters(model, theta);
}

struct TrainReport {
    std::vector<LossTerms> loss_history;  // per-epoch means, measured before each update
    DespawnModel final_model;
    double wall_time_seconds = 0.0;
    std::vector<double> synthesis_gain_ratios;  // ||h_bar|| / ||h|| per level of final_model
};

namespace detail {

// Per-signal backward passes for one batch; results land in fixed slots so the
// reduction order never depends on the worker count.
inline std::vector<BackwardResult> batch_backward(std::span<const std::vector<double>> signals,
                                                  std::span<const std::size_t> batch, const DespawnModel& model,
                                                  double gamma, std::size_t workers) {
    std::vector<BackwardResult> results(batch.size());
    auto run = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < batch.size(); i += stride) {
            results[i] = backward(signals[batch[i]], model, gamma);
        }
    };
    const std::size_t n_threads = std::min(workers, batch.size());
    if (n_threads <= 1) {
        run(0, 1);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(run, t, n_threads);
    }
    return results;
}

}  // namespace detail

/// Trains an existing model in place of its initial parameters.
inline TrainReport train_model(DespawnModel model, std::span<const std::vector<double>> signals,
                               const TrainConfig& config) {
    config.validate();
    if (signals.empty()) throw Error(ErrorKind::Configuration, "training set is empty");
    for (const auto& s : signals) check_depth(s.size(), model.levels);

    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(signals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    AdamState state;
    TrainReport report;
    report.loss_history.reserve(config.epochs);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
        LossTerms epoch_sum;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + begin, end - begin);
            const auto results = detail::batch_backward(signals, batch, model, config.gamma, config.workers);

            Gradients mean{std::vector<double>(parameter_count(model), 0.0)};
            for (const auto& r : results) {
                for (std::size_t i = 0; i < mean.size(); ++i) mean.values[i] += r.grads.values[i];
                epoch_sum.total += r.loss.total;
                epoch_sum.recon += r.loss.recon;
                epoch_sum.sparsity += r.loss.sparsity;
            }
            for (double& v : mean.values) v /= static_cast<double>(results.size());
            if (mean.size() > 0) adam_step(model, mean, state, config);
        }
        const double n = static_cast<double>(signals.size());
        report.loss_history.push_back({epoch_sum.total / n, epoch_sum.recon / n, epoch_sum.sparsity / n});
    }

    report.synthesis_gain_ratios = synthesis_gain_ratios(model);
    report.final_model = std::move(model);
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline TrainReport train(std::span<const std::vector<double>> signals, SharingMode mode, const TrainConfig& config) {
    config.validate();
    if (signals.empty()) throw Error(ErrorKind::Configuration, "training set is empty");
    const std::size_t levels = config.levels == 0 ? default_levels(signals.front().size()) : config.levels;
    return train_model(build_model(levels, config.kernel_size, mode, config.gamma), signals, config);
}

/// Outcome of comparing backward against finite differences on one model.
struct GradCheckResult {
    std::size_t parameters_checked = 0;
    std::size_t failures = 0;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;  // over entries not already within abs_tol
    std::vector<std::string> failure_labels;

    bool passed() const noexcept { return failures == 0; }
};

/// Compares every analytic gradient entry with the central difference;
/// an entry passes when |a - f| <= max(rel_tol * max(|a|, |f|), abs_tol).
inline GradCheckResult compare_with_finite_differences(std::span<const double> signal, const DespawnModel& model,
                                                       double gamma, double rel_tol = 1e-4, double abs_tol = 1e-7) {
    const BackwardResult analytic = backward(signal, model, gamma);
    GradCheckResult result;
    for (std::size_t i = 0; i < analytic.grads.size(); ++i) {
        const double a = analytic.grads.values[i];
        const double f = finite_difference_grad(signal, model, gamma, i);
        const double err = std::abs(a - f);
        const double scale = std::max(std::abs(a), std::abs(f));
        ++result.parameters_checked;
        result.max_abs_error = std::max(result.max_abs_error, err);
        if (err > abs_tol) result.max_rel_error = std::max(result.max_rel_error, err / scale);
        if (!std::isfinite(a) || err > std::max(rel_tol * scale, abs_tol)) {
            ++result.failures;
            result.failure_labels.push_back(parameter_label(model, i) + ": analytic " + std::to_string(a) +
                                            " vs numeric " + std::to_string(f));
        }
    }
    return result;
}

/// A freshly built model moved off its initialisation: kernel taps get
/// Gaussian noise, thresholds (for modes that learn them) random positive
/// values, so every gradient path is exercised away from the db4 optimum.
inline DespawnModel perturbed_model(std::size_t levels, std::size_t kernel_size, SharingMode mode, double gamma,
                                    std::uint64_t seed, double kernel_noise = 0.05) {
    DespawnModel model = build_model(levels, kernel_size, mode, gamma);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, kernel_noise);
    std::uniform_real_distribution<double> threshold(0.02, 0.3);
    for (auto& group : model.kernels) {
        for (Kernel* k : {&group.h, &group.g, &group.h_bar, &group.g_bar}) {
            for (double& v : *k) v += noise(rng);
        }
    }
    if (uses_fixed_db4(model.mode)) model.kernels.front().h = db4_scaling();
    if (learns_thresholds(mode)) {
        for (auto& t : model.thresholds) {
            t.b_plus = threshold(rng);
            t.b_minus = threshold(rng);
        }
    }
    return model;
}

inline std::vector<double> gaussian_signal(std::size_t length, std::uint64_t seed, double stddev = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> out(length);
    for (double& v : out) v = dist(rng);
    return out;
}

}  // namespace despawn
