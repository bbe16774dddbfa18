#pragma once

// Anti-aliased decimation and non-overlapping windowing.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "despawn/error.hpp"

namespace despawn::pipeline {

inline constexpr std::size_t kDecimationTaps = 63;

/// Hann-windowed sinc low-pass with cutoff 0.5 / factor cycles per sample,
/// normalized to unit DC gain. Symmetric, so zero phase about the centre tap.
inline std::vector<double> lowpass_kernel(std::size_t factor, std::size_t taps = kDecimationTaps) {
    if (factor < 1) throw Error(ErrorKind::Configuration, "decimation factor must be >= 1");
    if (taps % 2 == 0) throw Error(ErrorKind::Configuration, "low-pass kernel needs an odd tap count");
    const double fc = 0.5 / static_cast<double>(factor);
    const double centre = static_cast<double>(taps - 1) / 2.0;
    std::vector<double> h(taps);
    double sum = 0.0;
    for (std::size_t n = 0; n < taps; ++n) {
        const double t = static_cast<double>(n) - centre;
        const double sinc = t == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * t) / (std::numbers::pi * t);
        const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                 static_cast<double>(taps - 1));
        h[n] = sinc * hann;
        sum += h[n];
    }
    for (double& v : h) v /= sum;
    return h;
}

/// Whole-sample mirror about the ends (x[-1] = x[1]), folded as often as needed.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

/// Low-pass then keep every factor-th sample, starting with sample 0.
inline std::vector<double> decimate(std::span<const double> samples, std::size_t factor) {
    if (factor < 1) throw Error(ErrorKind::Configuration, "decimation factor must be >= 1");
    if (factor == 1 || samples.empty()) return {samples.begin(), samples.end()};
    const auto h = lowpass_kernel(factor);
    const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
    std::vector<double> out;
    out.reserve(samples.size() / factor + 1);
    for (std::size_t i = 0; i < samples.size(); i += factor) {
        double acc = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(k) - half;
            acc += h[k] * samples[reflect_index(j, samples.size())];
        }
        out.push_back(acc);
    }
    return out;
}

/// Non-overlapping windows; a trailing remainder shorter than window_size is dropped.
inline std::vector<std::vector<double>> window_split(std::span<const double> samples, std::size_t window_size) {
    if (window_size < 2) throw Error(ErrorKind::Configuration, "window size must be >= 2");
    std::vector<std::vector<double>> out;
    for (std::size_t start = 0; start + window_size <= samples.size(); start += window_size) {
        out.emplace_back(samples.begin() + static_cast<std::ptrdiff_t>(start),
                         samples.begin() + static_cast<std::ptrdiff_t>(start + window_size));
    }
    return out;
}

}  // namespace despawn::pipeline
