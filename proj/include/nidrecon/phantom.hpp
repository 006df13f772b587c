#ifndef NIDRECON_PHANTOM_HPP
#define NIDRECON_PHANTOM_HPP

#include "radon.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace nidrecon {

struct EllipseSpec {
    double x0, y0;    // centre
    double a, b;      // semi-axes along the rotated x1 / x2 directions
    double angle_deg; // counter-clockwise rotation
    double intensity; // added inside the ellipse

    bool contains(double x1, double x2) const
    {
        const double c = std::cos(angle_deg * std::numbers::pi / 180.0);
        const double s = std::sin(angle_deg * std::numbers::pi / 180.0);
        const double dx = x1 - x0, dy = x2 - y0;
        const double u = dx * c + dy * s;
        const double v = -dx * s + dy * c;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

enum class PhantomTable { modified, classic };

/// Ten-ellipse Shepp-Logan head.  The modified table uses the higher
/// contrast intensities (Toft), the classic one the original values.
inline std::vector<EllipseSpec> shepp_logan_ellipses(PhantomTable table = PhantomTable::modified)
{
    std::vector<EllipseSpec> e = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 0.0},
        {0.0, -0.0184, 0.6624, 0.874, 0.0, 0.0},
        {0.22, 0.0, 0.11, 0.31, -18.0, 0.0},
        {-0.22, 0.0, 0.16, 0.41, 18.0, 0.0},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.0},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.0},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.0},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.0},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.0},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.0},
    };
    const double modified[] = {1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    const double classic[] = {2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01};
    for (std::size_t k = 0; k < e.size(); ++k)
        e[k].intensity = table == PhantomTable::modified ? modified[k] : classic[k];
    return e;
}

inline PhantomTable parse_phantom_table(const std::string& name)
{
    if (name == "modified") return PhantomTable::modified;
    if (name == "classic") return PhantomTable::classic;
    throw ParameterError("unknown phantom table '" + name + "' (expected modified or classic)");
}

/// Sum of ellipse indicators sampled at pixel centres.
inline Image ellipse_phantom(const GridSpec& grid, const std::vector<EllipseSpec>& ellipses)
{
    Image f(grid);
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j) {
            double v = 0.0;
            for (const auto& e : ellipses)
                if (e.contains(grid.x1(j), grid.x2(i))) v += e.intensity;
            f(i, j) = v;
        }
    return f;
}

inline Image shepp_logan_phantom(const GridSpec& grid, PhantomTable table = PhantomTable::modified)
{
    return ellipse_phantom(grid, shepp_logan_ellipses(table));
}

struct NoiseConfig {
    double snr_db = 19.4; // +inf: no noise
    std::uint64_t seed = 1;
};

/// Adds i.i.d. Gaussian noise rescaled so that 10 log10(||g||^2 / ||noise||^2)
/// equals the target exactly (up to rounding).
inline Sinogram add_noise(const Sinogram& g, const NoiseConfig& cfg)
{
    if (std::isinf(cfg.snr_db) && cfg.snr_db > 0) return g;
    if (std::isnan(cfg.snr_db)) throw ParameterError("noise: target SNR is nan");
    double energy = 0.0;
    for (double x : g.values()) energy += x * x;
    if (!(energy > 0.0)) throw ParameterError("noise: cannot calibrate noise on a zero sinogram");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eta(g.size());
    double noise_energy = 0.0;
    for (double& x : eta) {
        x = normal(rng);
        noise_energy += x * x;
    }
    const double scale = std::sqrt(energy * std::pow(10.0, -cfg.snr_db / 10.0) / noise_energy);
    Sinogram out = g;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += scale * eta[k];
    return out;
}

} // namespace nidrecon

#endif
