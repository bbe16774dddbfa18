#pragma once

// Seeded desk-scale stand-in for machine-sound and bird-song recordings:
// windows made of two sinusoid bursts plus white noise, with impulse and
// frequency-shift anomalies and a second class built on another frequency pair.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "despawn/error.hpp"

namespace despawn::pipeline {

enum class SignalKind { Normal, Impulse, Shift, ClassB };

inline const char* kind_label(SignalKind kind) noexcept {
    switch (kind) {
        case SignalKind::Normal: return "normal";
        case SignalKind::Impulse: return "impulse";
        case SignalKind::Shift: return "shift";
        case SignalKind::ClassB: return "B";
    }
    return "?";
}

struct SyntheticSpec {
    std::size_t window = 1024;
    double sample_rate = 16000.0;
    double sigma = 0.1;                        // white-noise standard deviation
    double amplitude = 0.3;                    // per-burst sinusoid amplitude
    std::array<double, 2> normal_hz{440.0, 1800.0};
    std::array<double, 2> class_b_hz{700.0, 3000.0};
    double burst_fraction = 0.6;               // share of the window each burst covers
    std::size_t burst_ramp = 16;               // raised-cosine edge, samples
    std::size_t impulse_count = 3;
    double impulse_amplitude = 1.0;           // above the normal peak of about 0.6 plus noise
    double shift_factor = 1.5;
    std::size_t shifted_component = 1;         // which of the two tones the shift anomaly moves

    void validate() const {
        if (window < 2) throw Error(ErrorKind::Configuration, "window must be >= 2 samples");
        if (!(sample_rate > 0.0)) throw Error(ErrorKind::Configuration, "sample rate must be positive");
        if (!(sigma >= 0.0)) throw Error(ErrorKind::Configuration, "sigma must be >= 0");
        if (!(burst_fraction > 0.0 && burst_fraction <= 1.0)) {
            throw Error(ErrorKind::Configuration, "burst fraction must lie in (0, 1]");
        }
        if (shifted_component > 1) throw Error(ErrorKind::Configuration, "shifted component must be 0 or 1");
    }
};

/// Everything random about one window, drawn up front so the deterministic
/// part can be re-rendered independently of the noise.
struct WindowRecipe {
    std::array<double, 2> freq_hz{};
    std::array<double, 2> phase{};
    std::array<std::size_t, 2> burst_start{};
    std::size_t burst_length = 0;
    std::vector<std::size_t> impulse_positions;
    std::vector<double> impulse_amplitudes;
    std::uint64_t noise_seed = 0;
};

struct SyntheticWindow {
    SignalKind kind = SignalKind::Normal;
    WindowRecipe recipe;
    std::vector<double> samples;
};

inline double burst_envelope(std::size_t t, std::size_t start, std::size_t length, std::size_t ramp) {
    if (t < start || t >= start + length) return 0.0;
    const std::size_t from_edge = std::min(t - start, start + length - 1 - t);
    if (ramp == 0 || from_edge >= ramp) return 1.0;
    return 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(from_edge) + 0.5) / static_cast<double>(ramp));
}

/// Noise-free part of a window: the two bursts plus any impulses.
inline std::vector<double> render_clean(const WindowRecipe& r, const SyntheticSpec& spec) {
    std::vector<double> x(spec.window, 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        const double w = 2.0 * std::numbers::pi * r.freq_hz[c] / spec.sample_rate;
        for (std::size_t t = 0; t < spec.window; ++t) {
            const double env = burst_envelope(t, r.burst_start[c], r.burst_length, spec.burst_ramp);
            if (env != 0.0) x[t] += spec.amplitude * env * std::sin(w * static_cast<double>(t) + r.phase[c]);
        }
    }
    for (std::size_t i = 0; i < r.impulse_positions.size(); ++i) x[r.impulse_positions[i]] += r.impulse_amplitudes[i];
    return x;
}

inline std::vector<double> render_window(const WindowRecipe& r, const SyntheticSpec& spec) {
    std::vector<double> x = render_clean(r, spec);
    if (spec.sigma > 0.0) {
        std::mt19937_64 rng(r.noise_seed);
        std::normal_distribution<double> noise(0.0, spec.sigma);
        for (double& v : x) v += noise(rng);
    }
    return x;
}

inline WindowRecipe draw_recipe(SignalKind kind, const SyntheticSpec& spec, std::mt19937_64& rng) {
    WindowRecipe r;
    r.freq_hz = kind == SignalKind::ClassB ? spec.class_b_hz : spec.normal_hz;
    if (kind == SignalKind::Shift) r.freq_hz[spec.shifted_component] *= spec.shift_factor;
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    r.burst_length = std::max<std::size_t>(1, static_cast<std::size_t>(spec.burst_fraction * spec.window));
    std::uniform_int_distribution<std::size_t> start(0, spec.window - r.burst_length);
    for (std::size_t c = 0; c < 2; ++c) {
        r.phase[c] = phase(rng);
        r.burst_start[c] = start(rng);
    }
    if (kind == SignalKind::Impulse) {
        std::uniform_int_distribution<std::size_t> pos(0, spec.window - 1);
        std::bernoulli_distribution sign(0.5);
        for (std::size_t i = 0; i < spec.impulse_count; ++i) {
            r.impulse_positions.push_back(pos(rng));
            r.impulse_amplitudes.push_back(sign(rng) ? spec.impulse_amplitude : -spec.impulse_amplitude);
        }
    }
    r.noise_seed = rng();
    return r;
}

inline SyntheticWindow generate_window(SignalKind kind, const SyntheticSpec& spec, std::mt19937_64& rng) {
    SyntheticWindow w{kind, draw_recipe(kind, spec, rng), {}};
    w.samples = render_window(w.recipe, spec);
    return w;
}

struct SyntheticSet {
    std::vector<SyntheticWindow> train;
    std::vector<SyntheticWindow> test;
};

/// Normal-only training windows; test windows are n_test normal followed by
/// n_test impulse and n_test shift anomalies.
inline SyntheticSet anomaly_benchmark(const SyntheticSpec& spec, std::size_t n_train, std::size_t n_test,
                                      std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    SyntheticSet set;
    for (std::size_t i = 0; i < n_train; ++i) set.train.push_back(generate_window(SignalKind::Normal, spec, rng));
    for (SignalKind kind : {SignalKind::Normal, SignalKind::Impulse, SignalKind::Shift}) {
        for (std::size_t i = 0; i < n_test; ++i) set.test.push_back(generate_window(kind, spec, rng));
    }
    return set;
}

/// Two classes ("normal" tones vs class-B tones), n_train and n_test of each.
inline SyntheticSet classification_benchmark(const SyntheticSpec& spec, std::size_t n_train, std::size_t n_test,
                                             std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    SyntheticSet set;
    for (SignalKind kind : {SignalKind::Normal, SignalKind::ClassB}) {
        for (std::size_t i = 0; i < n_train; ++i) set.train.push_back(generate_window(kind, spec, rng));
    }
    for (SignalKind kind : {SignalKind::Normal, SignalKind::ClassB}) {
        for (std::size_t i = 0; i < n_test; ++i) set.test.push_back(generate_window(kind, spec, rng));
    }
    return set;
}

/// Class label used by the classification benchmark: "A" or "B".
inline std::string class_label(SignalKind kind) { return kind == SignalKind::ClassB ? "B" : "A"; }

}  // namespace despawn::pipeline
