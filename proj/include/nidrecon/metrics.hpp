#ifndef NIDRECON_METRICS_HPP
#define NIDRECON_METRICS_HPP

#include "radon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace nidrecon {

namespace detail {

inline double squared_error(std::span<const double> ref, std::span<const double> test)
{
    if (ref.size() != test.size()) throw DimensionError("metrics: shape mismatch");
    double e = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        const double d = ref[k] - test[k];
        e += d * d;
    }
    return e;
}

} // namespace detail

/// 10 log10(||ref||^2 / ||ref - test||^2); +inf when the inputs coincide.
inline double snr(std::span<const double> ref, std::span<const double> test)
{
    const double err = detail::squared_error(ref, test);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    double e = 0.0;
    for (double x : ref) e += x * x;
    return 10.0 * std::log10(e / err);
}

/// 10 log10(max(ref)^2 / MSE); +inf when the inputs coincide.
inline double psnr(std::span<const double> ref, std::span<const double> test)
{
    const double err = detail::squared_error(ref, test);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    if (ref.empty()) throw DimensionError("metrics: empty input");
    const double peak = *std::max_element(ref.begin(), ref.end());
    return 10.0 * std::log10(peak * peak * static_cast<double>(ref.size()) / err);
}

inline double snr(const Image& ref, const Image& test)
{
    if (!(ref.grid() == test.grid())) throw DimensionError("snr: grid mismatch");
    return snr(ref.values(), test.values());
}
inline double snr(const Sinogram& ref, const Sinogram& test)
{
    if (!(ref.geometry() == test.geometry())) throw DimensionError("snr: geometry mismatch");
    return snr(ref.values(), test.values());
}
inline double psnr(const Image& ref, const Image& test)
{
    if (!(ref.grid() == test.grid())) throw DimensionError("psnr: grid mismatch");
    return psnr(ref.values(), test.values());
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean structural similarity over all window positions that fit inside the
/// image (Gaussian-weighted local statistics).  The dynamic range is
/// max(ref) - min(ref).  Windows wider than the image shrink to the largest
/// odd size that fits.
inline double ssim(const Image& ref, const Image& test, const SsimParams& prm = {})
{
    if (!(ref.grid() == test.grid())) throw DimensionError("ssim: grid mismatch");
    const int n = ref.n();
    int w = std::min(prm.window, n);
    if (w % 2 == 0) --w;
    const int r = w / 2;

    std::vector<double> g(w);
    double total = 0.0;
    for (int k = 0; k < w; ++k) {
        const double x = k - r;
        g[k] = std::exp(-x * x / (2.0 * prm.sigma * prm.sigma));
        total += g[k];
    }
    for (double& x : g) x /= total;

    const auto [lo, hi] = std::minmax_element(ref.data().begin(), ref.data().end());
    double range = *hi - *lo;
    if (range == 0.0) range = 1.0;
    const double c1 = (prm.k1 * range) * (prm.k1 * range);
    const double c2 = (prm.k2 * range) * (prm.k2 * range);

    // separable filtering of x, y, x^2, y^2, xy restricted to valid positions
    const int m = n - w + 1;
    auto filter = [&](auto pixel) {
        std::vector<double> rows(static_cast<std::size_t>(n) * m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int k = 0; k < w; ++k) s += g[k] * pixel(i, j + k);
                rows[static_cast<std::size_t>(i) * m + j] = s;
            }
        std::vector<double> out(static_cast<std::size_t>(m) * m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int k = 0; k < w; ++k) s += g[k] * rows[static_cast<std::size_t>(i + k) * m + j];
                out[static_cast<std::size_t>(i) * m + j] = s;
            }
        return out;
    };
    const auto mx = filter([&](int i, int j) { return ref(i, j); });
    const auto my = filter([&](int i, int j) { return test(i, j); });
    const auto mxx = filter([&](int i, int j) { return ref(i, j) * ref(i, j); });
    const auto myy = filter([&](int i, int j) { return test(i, j) * test(i, j); });
    const auto mxy = filter([&](int i, int j) { return ref(i, j) * test(i, j); });

    double acc = 0.0;
    for (std::size_t k = 0; k < mx.size(); ++k) {
        const double vx = mxx[k] - mx[k] * mx[k];
        const double vy = myy[k] - my[k] * my[k];
        const double cxy = mxy[k] - mx[k] * my[k];
        acc += ((2.0 * mx[k] * my[k] + c1) * (2.0 * cxy + c2)) /
               ((mx[k] * mx[k] + my[k] * my[k] + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(mx.size());
}

struct QualityReport {
    double snr;
    double psnr;
    double ssim;
};

inline QualityReport assess(const Image& ref, const Image& test)
{
    return {snr(ref, test), psnr(ref, test), ssim(ref, test)};
}

} // namespace nidrecon

#endif
