#pragma once

// Fixed-filter fast discrete wavelet transform: CQF filter-bank construction,
// single-level periodic analysis/synthesis and the multi-level cascade.
//
// Conventions used throughout:
//  * analysis is a strided periodic cross-correlation,
//      approx[k] = sum_n h[n] * a[(2k + n) mod N]
//  * a kernel f reversed on its finite support is f_r[n] = f[K - 1 - n]
//  * synthesis scatters each coefficient through the reversed synthesis
//    kernel, which makes it the exact transpose of analysis whenever the
//    bank obeys the CQF relations.
//  * odd-length inputs are zero-padded by one sample before striding; the
//    pre-pad length is kept so synthesis can truncate it away again.

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "despawn/error.hpp"

namespace despawn {

template <std::floating_point Real>
using BasicKernel = std::vector<Real>;
using Kernel = BasicKernel<double>;

/// The four kernels of one decomposition level.
template <std::floating_point Real>
struct BasicFilterBank {
    BasicKernel<Real> h;      // low-pass analysis (scaling filter)
    BasicKernel<Real> g;      // high-pass analysis (wavelet filter)
    BasicKernel<Real> h_bar;  // low-pass synthesis
    BasicKernel<Real> g_bar;  // high-pass synthesis

    std::size_t kernel_size() const noexcept { return h.size(); }

    bool operator==(const BasicFilterBank&) const = default;
};
using FilterBank = BasicFilterBank<double>;

/// Detail coefficients d^1..d^L (index 0 is the finest level) plus the last
/// approximation a^L. level_lengths[l] is the unpadded input length of level l.
template <std::floating_point Real>
struct BasicCoefficientPyramid {
    std::vector<std::vector<Real>> details;
    std::vector<Real> approx;
    std::vector<std::size_t> level_lengths;

    std::size_t levels() const noexcept { return details.size(); }

    /// Number of coefficients including the final approximation.
    std::size_t coefficient_count() const noexcept {
        std::size_t n = approx.size();
        for (const auto& d : details) n += d.size();
        return n;
    }
};
using CoefficientPyramid = BasicCoefficientPyramid<double>;

template <std::floating_point Real>
struct BasicLevelSplit {
    std::vector<Real> approx;
    std::vector<Real> detail;
};
using LevelSplit = BasicLevelSplit<double>;

constexpr std::size_t half_length(std::size_t n) noexcept { return (n + 1) / 2; }

/// Deepest cascade a signal of this length supports: every level must see at
/// least two samples.
constexpr std::size_t max_depth(std::size_t length) noexcept {
    std::size_t depth = 0;
    while (length >= 2) {
        length = half_length(length);
        ++depth;
    }
    return depth;
}

template <std::floating_point Real>
void validate_kernel(std::span<const Real> taps, const char* what = "kernel") {
    if (taps.empty() || taps.size() % 2 != 0) {
        throw Error(ErrorKind::InvalidKernel, std::string(what) + " must have even, non-zero length (got " +
                                                  std::to_string(taps.size()) + ")");
    }
    for (Real t : taps) {
        if (!std::isfinite(t)) throw Error(ErrorKind::InvalidKernel, std::string(what) + " has non-finite taps");
    }
}

template <std::floating_point Real>
BasicKernel<Real> reversed(std::span<const Real> f) {
    return BasicKernel<Real>(f.rbegin(), f.rend());
}

/// Full CQF bank from a scaling filter:
///   g[n] = (-1)^n h[K-1-n],  h_bar[n] = h[K-1-n],  g_bar[n] = (-1)^(n+1) h[n].
template <std::floating_point Real>
BasicFilterBank<Real> cqf_from_scaling(std::span<const Real> h) {
    validate_kernel(h, "scaling filter");
    const std::size_t k = h.size();
    BasicFilterBank<Real> bank{BasicKernel<Real>(h.begin(), h.end()), BasicKernel<Real>(k), reversed(h),
                               BasicKernel<Real>(k)};
    for (std::size_t n = 0; n < k; ++n) {
        bank.g[n] = (n % 2 == 0) ? h[k - 1 - n] : -h[k - 1 - n];
        bank.g_bar[n] = (n % 2 == 0) ? -h[n] : h[n];
    }
    return bank;
}

template <std::floating_point Real>
BasicFilterBank<Real> cqf_from_scaling(const BasicKernel<Real>& h) {
    return cqf_from_scaling(std::span<const Real>(h));
}

/// Partial CQF: h and g are independent, synthesis kernels are their reversals.
template <std::floating_point Real>
BasicFilterBank<Real> cqf_partial(std::span<const Real> h, std::span<const Real> g) {
    validate_kernel(h, "scaling filter");
    validate_kernel(g, "wavelet filter");
    if (h.size() != g.size()) {
        throw Error(ErrorKind::InvalidKernel, "scaling and wavelet filters differ in length (" +
                                                  std::to_string(h.size()) + " vs " + std::to_string(g.size()) + ")");
    }
    return {BasicKernel<Real>(h.begin(), h.end()), BasicKernel<Real>(g.begin(), g.end()), reversed(h), reversed(g)};
}

template <std::floating_point Real>
BasicFilterBank<Real> cqf_partial(const BasicKernel<Real>& h, const BasicKernel<Real>& g) {
    return cqf_partial(std::span<const Real>(h), std::span<const Real>(g));
}

/// Daubechies scaling filter with 4 vanishing moments (8 taps), sum = sqrt(2).
inline constexpr std::array<double, 8> kDb4Scaling = {
    0.2303778133088965,   0.7148465705529157,   0.6308807679298589, -0.027983769416859854,
    -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032,
};

inline Kernel db4_scaling() { return Kernel(kDb4Scaling.begin(), kDb4Scaling.end()); }

inline FilterBank db4_filterbank() { return cqf_from_scaling(db4_scaling()); }

inline Kernel haar_scaling() {
    const double s = 1.0 / std::sqrt(2.0);
    return {s, s};
}

inline FilterBank haar_filterbank() { return cqf_from_scaling(haar_scaling()); }

/// Strided periodic primitives shared by the transform and its gradients.
/// x has even length N; y has length N/2.
namespace periodic {

/// y[k] = sum_n kernel[n] * x[(2k + n) mod N]
template <std::floating_point Real>
void correlate_down(std::span<const Real> x, std::span<const Real> kernel, std::span<Real> y) {
    const std::size_t n_in = x.size();
    for (std::size_t k = 0; k < y.size(); ++k) {
        Real acc = 0;
        std::size_t idx = (2 * k) % n_in;
        for (std::size_t n = 0; n < kernel.size(); ++n) {
            acc += kernel[n] * x[idx];
            if (++idx == n_in) idx = 0;
        }
        y[k] = acc;
    }
}

/// x[(2k + n) mod N] += y[k] * kernel[n]; the transpose of correlate_down.
template <std::floating_point Real>
void scatter_up(std::span<const Real> y, std::span<const Real> kernel, std::span<Real> x) {
    const std::size_t n_out = x.size();
    for (std::size_t k = 0; k < y.size(); ++k) {
        const Real yk = y[k];
        std::size_t idx = (2 * k) % n_out;
        for (std::size_t n = 0; n < kernel.size(); ++n) {
            x[idx] += yk * kernel[n];
            if (++idx == n_out) idx = 0;
        }
    }
}

/// grad[n] += sum_k y[k] * x[(2k + n) mod N]; derivative of either primitive
/// with respect to its kernel.
template <std::floating_point Real>
void accumulate_kernel_grad(std::span<const Real> x, std::span<const Real> y, std::span<Real> grad) {
    const std::size_t n_in = x.size();
    for (std::size_t k = 0; k < y.size(); ++k) {
        const Real yk = y[k];
        std::size_t idx = (2 * k) % n_in;
        for (std::size_t n = 0; n < grad.size(); ++n) {
            grad[n] += yk * x[idx];
            if (++idx == n_in) idx = 0;
        }
    }
}

/// Copy of x with one trailing zero when its length is odd.
template <std::floating_point Real>
std::vector<Real> pad_even(std::span<const Real> x) {
    std::vector<Real> out(x.begin(), x.end());
    if (out.size() % 2 != 0) out.push_back(Real(0));
    return out;
}

}  // namespace periodic

template <std::floating_point Real>
BasicLevelSplit<Real> analyze_level(std::span<const Real> a, std::span<const Real> h, std::span<const Real> g) {
    if (a.empty()) throw Error(ErrorKind::InvalidSignal, "cannot analyze an empty signal");
    if (h.size() != g.size() || h.empty()) {
        throw Error(ErrorKind::InvalidKernel, "analysis kernels must be non-empty and of equal length");
    }
    const auto padded = periodic::pad_even(a);
    const std::size_t half = padded.size() / 2;
    BasicLevelSplit<Real> out{std::vector<Real>(half), std::vector<Real>(half)};
    periodic::correlate_down<Real>(padded, h, out.approx);
    periodic::correlate_down<Real>(padded, g, out.detail);
    return out;
}

template <std::floating_point Real>
BasicLevelSplit<Real> analyze_level(const std::vector<Real>& a, const BasicFilterBank<Real>& bank) {
    return analyze_level<Real>(a, bank.h, bank.g);
}

template <std::floating_point Real>
std::vector<Real> synthesize_level(std::span<const Real> approx, std::span<const Real> detail,
                                   std::span<const Real> h_bar, std::span<const Real> g_bar,
                                   std::size_t original_length) {
    if (approx.size() != detail.size()) {
        throw Error(ErrorKind::InvalidPyramid, "approximation and detail lengths differ (" +
                                                   std::to_string(approx.size()) + " vs " +
                                                   std::to_string(detail.size()) + ")");
    }
    const std::size_t full = 2 * approx.size();
    if (approx.empty() || (original_length != full && original_length + 1 != full)) {
        throw Error(ErrorKind::InvalidPyramid, "original length " + std::to_string(original_length) +
                                                   " incompatible with " + std::to_string(approx.size()) +
                                                   " coefficients");
    }
    if (h_bar.size() != g_bar.size() || h_bar.empty()) {
        throw Error(ErrorKind::InvalidKernel, "synthesis kernels must be non-empty and of equal length");
    }
    const auto h_rev = reversed(h_bar);
    const auto g_rev = reversed(g_bar);
    std::vector<Real> out(full, Real(0));
    periodic::scatter_up<Real>(approx, h_rev, out);
    periodic::scatter_up<Real>(detail, g_rev, out);
    out.resize(original_length);
    return out;
}

template <std::floating_point Real>
std::vector<Real> synthesize_level(const std::vector<Real>& approx, const std::vector<Real>& detail,
                                   const BasicFilterBank<Real>& bank, std::size_t original_length) {
    return synthesize_level<Real>(approx, detail, bank.h_bar, bank.g_bar, original_length);
}

inline void check_depth(std::size_t length, std::size_t levels) {
    if (levels == 0) throw Error(ErrorKind::InvalidDepth, "at least one decomposition level is required");
    if (length < 2) throw Error(ErrorKind::InvalidSignal, "signal must have at least 2 samples");
    if (levels > max_depth(length)) {
        throw Error(ErrorKind::InvalidDepth, std::to_string(levels) + " levels requested but a length-" +
                                                 std::to_string(length) + " signal supports at most " +
                                                 std::to_string(max_depth(length)));
    }
}

template <std::floating_point Real>
BasicCoefficientPyramid<Real> fdwt(std::span<const Real> signal, const BasicFilterBank<Real>& bank,
                                   std::size_t levels) {
    check_depth(signal.size(), levels);
    BasicCoefficientPyramid<Real> pyramid;
    pyramid.details.reserve(levels);
    pyramid.level_lengths.reserve(levels);
    std::vector<Real> current(signal.begin(), signal.end());
    for (std::size_t l = 0; l < levels; ++l) {
        pyramid.level_lengths.push_back(current.size());
        auto split = analyze_level<Real>(current, bank.h, bank.g);
        pyramid.details.push_back(std::move(split.detail));
        current = std::move(split.approx);
    }
    pyramid.approx = std::move(current);
    return pyramid;
}

template <std::floating_point Real>
BasicCoefficientPyramid<Real> fdwt(const std::vector<Real>& signal, const BasicFilterBank<Real>& bank,
                                   std::size_t levels) {
    return fdwt(std::span<const Real>(signal), bank, levels);
}

template <std::floating_point Real>
void validate_pyramid(const BasicCoefficientPyramid<Real>& p) {
    const std::size_t levels = p.details.size();
    if (levels == 0 || p.level_lengths.size() != levels) {
        throw Error(ErrorKind::InvalidPyramid, "pyramid needs matching, non-empty detail and length lists");
    }
    for (std::size_t l = 0; l < levels; ++l) {
        if (p.level_lengths[l] < 2) throw Error(ErrorKind::InvalidPyramid, "level length below 2");
        if (p.details[l].size() != half_length(p.level_lengths[l])) {
            throw Error(ErrorKind::InvalidPyramid, "detail " + std::to_string(l + 1) + " has wrong length");
        }
        if (l + 1 < levels && p.level_lengths[l + 1] != p.details[l].size()) {
            throw Error(ErrorKind::InvalidPyramid, "level lengths do not halve consistently");
        }
    }
    if (p.approx.size() != p.details.back().size()) {
        throw Error(ErrorKind::InvalidPyramid, "approximation length does not match the coarsest detail");
    }
}

template <std::floating_point Real>
std::vector<Real> ifdwt(const BasicCoefficientPyramid<Real>& pyramid, const BasicFilterBank<Real>& bank) {
    validate_pyramid(pyramid);
    std::vector<Real> current = pyramid.approx;
    for (std::size_t l = pyramid.levels(); l-- > 0;) {
        current = synthesize_level<Real>(current, pyramid.details[l], bank.h_bar, bank.g_bar,
                                         pyramid.level_lengths[l]);
    }
    return current;
}

}  // namespace despawn
