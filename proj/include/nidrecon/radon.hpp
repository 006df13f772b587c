#ifndef NIDRECON_RADON_HPP
#define NIDRECON_RADON_HPP

#include "geometry.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace nidrecon {

/// Parallel-beam sampling: p angles j*pi/p in [0, pi), q detector offsets
/// spread uniformly over [-1, 1] including both endpoints.
struct SinogramGeometry {
    int p = 1;
    int q = 2;

    SinogramGeometry() = default;
    SinogramGeometry(int angles, int offsets) : p(angles), q(offsets)
    {
        if (angles < 1 || offsets < 2)
            throw ParameterError("sinogram geometry: need p >= 1 and q >= 2");
    }

    double angle(int j) const { return std::numbers::pi * j / p; }
    double offset(int l) const { return -1.0 + 2.0 * l / (q - 1); }
    double angle_step() const { return std::numbers::pi / p; }
    double offset_step() const { return 2.0 / (q - 1); }
    /// quadrature weight of one sample in the data-space inner product
    double weight() const { return angle_step() * offset_step(); }
    std::size_t size() const { return static_cast<std::size_t>(p) * q; }

    friend bool operator==(const SinogramGeometry&, const SinogramGeometry&) = default;
};

/// p x q samples, one row per angle.
class Sinogram {
public:
    Sinogram() = default;
    explicit Sinogram(SinogramGeometry geom, double fill = 0.0) : geom_(geom), v_(geom.size(), fill) {}
    Sinogram(SinogramGeometry geom, std::vector<double> values) : geom_(geom), v_(std::move(values))
    {
        if (v_.size() != geom_.size())
            throw DimensionError("sinogram: value count does not match geometry");
    }

    const SinogramGeometry& geometry() const { return geom_; }
    std::size_t size() const { return v_.size(); }
    double& operator()(int j, int l) { return v_[static_cast<std::size_t>(j) * geom_.q + l]; }
    double operator()(int j, int l) const { return v_[static_cast<std::size_t>(j) * geom_.q + l]; }
    double& operator[](std::size_t k) { return v_[k]; }
    double operator[](std::size_t k) const { return v_[k]; }
    std::span<const double> values() const& { return v_; }
    std::span<const double> values() && = delete; // would dangle
    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

    Sinogram& operator-=(const Sinogram& o)
    {
        if (!(geom_ == o.geom_))
            throw DimensionError("sinogram: geometry mismatch");
        for (std::size_t k = 0; k < v_.size(); ++k) v_[k] -= o.v_[k];
        return *this;
    }

    friend bool operator==(const Sinogram&, const Sinogram&) = default;

private:
    SinogramGeometry geom_{};
    std::vector<double> v_;
};

/// Quadrature-weighted inner product over (theta, s).
inline double inner(const Sinogram& a, const Sinogram& b)
{
    if (!(a.geometry() == b.geometry()))
        throw DimensionError("inner: sinogram geometry mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return a.geometry().weight() * s;
}

inline double norm(const Sinogram& a) { return std::sqrt(inner(a, a)); }

/// Sparse (pq x n^2) matrix of ray/pixel intersection lengths in CSR layout.
/// Row j*q + l is the line {s_l theta_j + t theta_j^perp}; column i*n + j is
/// pixel (i, j).
struct ProjectionMatrix {
    GridSpec grid;
    SinogramGeometry geometry;
    std::vector<std::size_t> row_start;
    std::vector<std::int32_t> column;
    std::vector<double> length;

    std::size_t rows() const { return geometry.size(); }
    std::size_t cols() const { return grid.size(); }
    std::size_t nonzeros() const { return length.size(); }
};

namespace detail {

struct RaySegment {
    std::int32_t pixel;
    double length;
};

// Exact chords of the line {s*theta + t*theta_perp} through the pixels of
// [-1,1]^2, by marching over the sorted crossings with the grid lines.
inline void trace_ray(const GridSpec& grid, double angle, double s, std::vector<RaySegment>& out)
{
    out.clear();
    constexpr double parallel_eps = 1e-12;
    const int n = grid.n;
    const double h = grid.h();
    const double c = std::cos(angle);
    const double sn = std::sin(angle);
    const double p0[2] = {s * c, s * sn};
    const double d[2] = {-sn, c};

    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    bool moving[2];
    for (int k = 0; k < 2; ++k) {
        moving[k] = std::abs(d[k]) > parallel_eps;
        if (moving[k]) {
            double a = (-1.0 - p0[k]) / d[k];
            double b = (1.0 - p0[k]) / d[k];
            if (a > b) std::swap(a, b);
            t_lo = std::max(t_lo, a);
            t_hi = std::min(t_hi, b);
        } else if (p0[k] < -1.0 || p0[k] > 1.0) {
            return;
        }
    }
    if (!(t_hi > t_lo)) return;

    std::vector<double> crossings[2];
    for (int k = 0; k < 2; ++k) {
        if (!moving[k]) continue;
        auto& ts = crossings[k];
        ts.reserve(n + 1);
        for (int m = 0; m <= n; ++m) {
            double t = (-1.0 + m * h - p0[k]) / d[k];
            if (t > t_lo && t < t_hi) ts.push_back(t);
        }
        if (d[k] < 0) std::reverse(ts.begin(), ts.end());
    }
    std::vector<double> ts;
    ts.reserve(crossings[0].size() + crossings[1].size() + 2);
    ts.push_back(t_lo);
    std::merge(crossings[0].begin(), crossings[0].end(), crossings[1].begin(), crossings[1].end(),
               std::back_inserter(ts));
    ts.push_back(t_hi);

    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double len = ts[k + 1] - ts[k];
        if (len <= 1e-14) continue;
        const double tm = 0.5 * (ts[k] + ts[k + 1]);
        const double x1 = p0[0] + tm * d[0];
        const double x2 = p0[1] + tm * d[1];
        const int col = std::clamp(static_cast<int>(std::floor((x1 + 1.0) / h)), 0, n - 1);
        const int row = std::clamp(static_cast<int>(std::floor((1.0 - x2) / h)), 0, n - 1);
        out.push_back({row * n + col, len});
    }
    std::sort(out.begin(), out.end(), [](const RaySegment& a, const RaySegment& b) { return a.pixel < b.pixel; });
    std::size_t w = 0;
    for (std::size_t r = 0; r < out.size(); ++r) {
        if (w > 0 && out[w - 1].pixel == out[r].pixel)
            out[w - 1].length += out[r].length;
        else
            out[w++] = out[r];
    }
    out.resize(w);
}

} // namespace detail

inline ProjectionMatrix build_projection_matrix(const GridSpec& grid, const SinogramGeometry& geom)
{
    ProjectionMatrix a{grid, geom, {}, {}, {}};
    a.row_start.reserve(geom.size() + 1);
    a.row_start.push_back(0);
    a.column.reserve(geom.size() * 2 * grid.n);
    a.length.reserve(geom.size() * 2 * grid.n);
    std::vector<detail::RaySegment> segs;
    for (int j = 0; j < geom.p; ++j) {
        for (int l = 0; l < geom.q; ++l) {
            detail::trace_ray(grid, geom.angle(j), geom.offset(l), segs);
            for (const auto& s : segs) {
                a.column.push_back(s.pixel);
                a.length.push_back(s.length);
            }
            a.row_start.push_back(a.length.size());
        }
    }
    return a;
}

inline Sinogram forward_project(const ProjectionMatrix& a, const Image& f)
{
    if (!(f.grid() == a.grid))
        throw DimensionError("forward_project: image grid does not match matrix");
    Sinogram g(a.geometry);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t k = a.row_start[r]; k < a.row_start[r + 1]; ++k) s += a.length[k] * f[a.column[k]];
        g[r] = s;
    }
    return g;
}

/// Adjoint of forward_project with respect to the weighted inner products,
/// i.e. (w_sino / h^2) A^T g.
inline Image back_project(const ProjectionMatrix& a, const Sinogram& g)
{
    if (!(g.geometry() == a.geometry))
        throw DimensionError("back_project: sinogram geometry does not match matrix");
    Image f(a.grid);
    auto& out = f.data();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        for (std::size_t k = a.row_start[r]; k < a.row_start[r + 1]; ++k) out[a.column[k]] += a.length[k] * gr;
    }
    const double h = a.grid.h();
    f *= a.geometry.weight() / (h * h);
    return f;
}

/// sinc(pi sigma / (2 gamma)) inside the band |sigma| <= gamma, 0 outside.
inline double shepp_logan_weight(double sigma, double cutoff)
{
    if (!(cutoff > 0.0))
        throw ParameterError("shepp_logan_filter: cutoff must be positive");
    if (std::abs(sigma) > cutoff) return 0.0;
    const double x = std::numbers::pi * sigma / (2.0 * cutoff);
    return x == 0.0 ? 1.0 : std::sin(x) / x;
}

inline std::vector<double> shepp_logan_filter(std::span<const double> freqs, double cutoff)
{
    std::vector<double> w(freqs.size());
    std::transform(freqs.begin(), freqs.end(), w.begin(), [cutoff](double s) { return shepp_logan_weight(s, cutoff); });
    return w;
}

/// Nyquist frequency of the detector sampling (cycles per unit length).
inline double nyquist_cutoff(const SinogramGeometry& geom) { return 0.5 / geom.offset_step(); }

/// Ramp-filters every projection with the Shepp-Logan window and back-projects.
/// Frequencies are in cycles per unit length; the detector axis is zero-padded
/// to the next power of two >= 2q.  cutoff <= 0 selects the Nyquist frequency.
inline Sinogram fbp_filter(const Sinogram& g, double cutoff = 0.0)
{
    const auto& geom = g.geometry();
    if (cutoff <= 0.0) cutoff = nyquist_cutoff(geom);
    int len = 1;
    while (len < 2 * geom.q) len *= 2;
    const int bins = len / 2 + 1;

    std::vector<double> freqs(bins);
    for (int k = 0; k < bins; ++k) freqs[k] = k / (len * geom.offset_step());
    std::vector<double> response = shepp_logan_filter(freqs, cutoff);
    for (int k = 0; k < bins; ++k) response[k] *= std::abs(freqs[k]) / len;

    std::vector<double> line(len);
    fftw_complex* spec = fftw_alloc_complex(bins);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(len, line.data(), spec, FFTW_ESTIMATE);
    fftw_plan inv = fftw_plan_dft_c2r_1d(len, spec, line.data(), FFTW_ESTIMATE);

    Sinogram out(geom);
    for (int j = 0; j < geom.p; ++j) {
        std::fill(line.begin(), line.end(), 0.0);
        for (int l = 0; l < geom.q; ++l) line[l] = g(j, l);
        fftw_execute(fwd);
        for (int k = 0; k < bins; ++k) {
            spec[k][0] *= response[k];
            spec[k][1] *= response[k];
        }
        fftw_execute(inv);
        for (int l = 0; l < geom.q; ++l) out(j, l) = line[l];
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
    fftw_free(spec);
    return out;
}

inline Image fbp_reconstruct(const ProjectionMatrix& a, const Sinogram& g, double cutoff = 0.0)
{
    if (!(g.geometry() == a.geometry))
        throw DimensionError("fbp_reconstruct: sinogram geometry does not match matrix");
    return back_project(a, fbp_filter(g, cutoff));
}

inline Image fbp_reconstruct(const Sinogram& g, const GridSpec& grid, double cutoff = 0.0)
{
    return fbp_reconstruct(build_projection_matrix(grid, g.geometry()), g, cutoff);
}

} // namespace nidrecon

#endif
