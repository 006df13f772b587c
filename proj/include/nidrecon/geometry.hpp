#ifndef NIDRECON_GEOMETRY_HPP
#define NIDRECON_GEOMETRY_HPP

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace nidrecon {

/// Square pixel grid covering [-1,1]^2.  Row i runs along x2 (top row is
/// x2 = +1), column j along x1 (left column is x1 = -1).
struct GridSpec {
    int n = 2;

    GridSpec() = default;
    explicit GridSpec(int pixels) : n(pixels)
    {
        if (pixels < 2)
            throw ParameterError("grid: need at least 2 pixels per side");
    }

    double h() const { return 2.0 / n; }
    std::size_t size() const { return static_cast<std::size_t>(n) * n; }
    double x1(int j) const { return -1.0 + (j + 0.5) * h(); }
    double x2(int i) const { return 1.0 - (i + 0.5) * h(); }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Scalar field sampled at pixel centres, row-major.
class Image {
public:
    Image() = default;
    explicit Image(GridSpec grid, double fill = 0.0) : grid_(grid), v_(grid.size(), fill) {}
    Image(GridSpec grid, std::vector<double> values) : grid_(grid), v_(std::move(values))
    {
        if (v_.size() != grid_.size())
            throw DimensionError("image: value count does not match grid");
    }

    const GridSpec& grid() const { return grid_; }
    int n() const { return grid_.n; }
    std::size_t size() const { return v_.size(); }

    double& operator()(int i, int j) { return v_[static_cast<std::size_t>(i) * grid_.n + j]; }
    double operator()(int i, int j) const { return v_[static_cast<std::size_t>(i) * grid_.n + j]; }
    double& operator[](std::size_t k) { return v_[k]; }
    double operator[](std::size_t k) const { return v_[k]; }

    std::span<double> values() & { return v_; }
    std::span<const double> values() const& { return v_; }
    std::span<const double> values() && = delete; // would dangle
    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

    bool all_finite() const
    {
        return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
    }

    Image& operator+=(const Image& o)
    {
        check(o);
        for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += o.v_[k];
        return *this;
    }
    Image& operator-=(const Image& o)
    {
        check(o);
        for (std::size_t k = 0; k < v_.size(); ++k) v_[k] -= o.v_[k];
        return *this;
    }
    Image& operator*=(double c)
    {
        for (double& x : v_) x *= c;
        return *this;
    }
    /// this += c * o
    Image& axpy(double c, const Image& o)
    {
        check(o);
        for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += c * o.v_[k];
        return *this;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    void check(const Image& o) const
    {
        if (!(grid_ == o.grid_))
            throw DimensionError("image: grid mismatch");
    }

    GridSpec grid_{};
    std::vector<double> v_;
};

inline Image operator+(Image a, const Image& b) { return a += b; }
inline Image operator-(Image a, const Image& b) { return a -= b; }
inline Image operator*(double c, Image a) { return a *= c; }

/// Two-component field (d/dx1, d/dx2) on a grid.
struct VectorField {
    Image c1;
    Image c2;

    VectorField() = default;
    explicit VectorField(GridSpec grid) : c1(grid), c2(grid) {}
    VectorField(Image a, Image b) : c1(std::move(a)), c2(std::move(b))
    {
        if (!(c1.grid() == c2.grid()))
            throw DimensionError("vector field: component grids differ");
    }

    const GridSpec& grid() const { return c1.grid(); }
};

/// h^2-weighted L2 inner product.
inline double inner(const Image& a, const Image& b)
{
    if (!(a.grid() == b.grid()))
        throw DimensionError("inner: grid mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    const double h = a.grid().h();
    return h * h * s;
}

inline double inner(const VectorField& a, const VectorField& b)
{
    return inner(a.c1, b.c1) + inner(a.c2, b.c2);
}

inline double norm(const Image& a) { return std::sqrt(inner(a, a)); }
inline double norm(const VectorField& a) { return std::sqrt(inner(a, a)); }

/// Forward difference along x1 (zero in the last column) and the
/// difference (f[i-1][j] - f[i][j]) / h along x2 (zero in the first row).
inline VectorField grad_fd(const Image& f)
{
    const int n = f.n();
    const double inv_h = 1.0 / f.grid().h();
    VectorField g(f.grid());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j + 1 < n; ++j)
            g.c1(i, j) = (f(i, j + 1) - f(i, j)) * inv_h;
        g.c1(i, n - 1) = 0.0;
    }
    for (int j = 0; j < n; ++j) g.c2(0, j) = 0.0;
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < n; ++j)
            g.c2(i, j) = (f(i - 1, j) - f(i, j)) * inv_h;
    return g;
}

/// Discrete divergence, defined as the negative transpose of grad_fd so that
/// <grad_fd f, v> = -<f, divergence v> holds exactly.  Entries of v that
/// grad_fd never produces (last column of c1, first row of c2) are ignored.
inline Image divergence(const VectorField& v)
{
    const int n = v.grid().n;
    const double inv_h = 1.0 / v.grid().h();
    Image out(v.grid());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double d1 = (j + 1 < n ? v.c1(i, j) : 0.0) - (j > 0 ? v.c1(i, j - 1) : 0.0);
            double d2 = (i > 0 ? v.c2(i, j) : 0.0) - (i + 1 < n ? v.c2(i + 1, j) : 0.0);
            out(i, j) = (d1 + d2) * inv_h;
        }
    }
    return out;
}

/// div(w * gfield) in conservative form.  For constant w this is the
/// stencil w/h [(d1 f)_{i,j} - (d1 f)_{i,j-1} + (d2 f)_{i,j} - (d2 f)_{i+1,j}].
inline Image div_weighted(const Image& w, const VectorField& gfield)
{
    if (!(w.grid() == gfield.grid()))
        throw DimensionError("div_weighted: grid mismatch");
    VectorField flux(gfield.grid());
    for (std::size_t k = 0; k < w.size(); ++k) {
        flux.c1[k] = w[k] * gfield.c1[k];
        flux.c2[k] = w[k] * gfield.c2[k];
    }
    return divergence(flux);
}

/// Pointwise squared gradient magnitude.
inline Image magnitude_squared(const VectorField& g)
{
    Image out(g.grid());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = g.c1[k] * g.c1[k] + g.c2[k] * g.c2[k];
    return out;
}

} // namespace nidrecon

#endif
