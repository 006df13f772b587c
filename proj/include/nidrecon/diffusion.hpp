#ifndef NIDRECON_DIFFUSION_HPP
#define NIDRECON_DIFFUSION_HPP

#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace nidrecon {

// ---------------------------------------------------------------------------
// Penalty families.  Each family provides the penalty p(s) (s = squared
// gradient magnitude), the diffusion rate phi = p' and the flux
// psi(s) = s * phi(s^2).

/// phi(s2) = 1 / (1 + s2/lambda^2),  p(s) = lambda^2 log(1 + s/lambda^2)
struct PeronaMalik1 {
    double lambda = 1.0;
};

/// phi(s2) = exp(-s2/lambda^2),  p(s) = lambda^2 (1 - exp(-s/lambda^2))
struct PeronaMalik2 {
    double lambda = 1.0;
};

/// p(s) = sqrt(eps + s): the smoothed total variation integrand.
struct AcarVogel {
    double epsilon = 0.01;
};

/// Weighted mean of PM1 terms with different thresholds.
struct Nid1 {
    struct Term {
        double weight;
        double lambda;
    };
    std::vector<Term> terms;
};

/// Weighted mean of shifted PM1-type rates, zero below each shift:
/// phi_k(s^2) = lambda_k^2 / (lambda_k^2 + (s - s_k)^2) for s >= s_k.
struct Nid2 {
    struct Term {
        double weight;
        double lambda;
        double shift;
    };
    std::vector<Term> terms;
};

/// Forward / backward diffusion interval of a tabulated flux derivative.
struct DiffusionInterval {
    double begin;
    double end;
    bool backward; // psi' < 0 on the interval
};

/// Flux function reconstructed from tabulated samples of psi' on a uniform
/// grid s_i = i * step.  psi is integrated by cumulative Simpson quadrature
/// and interpolated by the cubic Hermite spline through (psi_i, psi'_i);
/// the penalty p(s^2) = 2 int_0^s psi is integrated exactly on that spline,
/// so p' = phi holds to rounding.
class Nid3 {
public:
    Nid3(double step, std::vector<double> slope);

    double step() const { return step_; }
    double range() const { return step_ * (slope_.size() - 1); }
    std::span<const double> nodes_slope() const { return slope_; }
    std::span<const double> nodes_flux() const { return flux_; }
    const std::vector<DiffusionInterval>& intervals() const { return intervals_; }

    double flux(double s) const;
    double flux_derivative(double s) const;
    double flux_integral(double s) const;

private:
    double step_;
    std::vector<double> slope_;    // psi'(s_i)
    std::vector<double> flux_;     // psi(s_i)
    std::vector<double> integral_; // int_0^{s_i} psi
    std::vector<DiffusionInterval> intervals_;
};

class PenaltyFamily {
public:
    using Variant = std::variant<PeronaMalik1, PeronaMalik2, AcarVogel, Nid1, Nid2, std::shared_ptr<const Nid3>>;

    PenaltyFamily(PeronaMalik1 f) : v_(f) { positive(f.lambda, "PM1 lambda"); }
    PenaltyFamily(PeronaMalik2 f) : v_(f) { positive(f.lambda, "PM2 lambda"); }
    PenaltyFamily(AcarVogel f) : v_(f) { positive(f.epsilon, "Acar-Vogel epsilon"); }
    PenaltyFamily(Nid1 f) : v_(std::move(f)) { validate(std::get<Nid1>(v_)); }
    PenaltyFamily(Nid2 f) : v_(std::move(f)) { validate(std::get<Nid2>(v_)); }
    PenaltyFamily(Nid3 f) : v_(std::make_shared<const Nid3>(std::move(f))) {}

    const Variant& variant() const { return v_; }
    std::string name() const;

    double penalty(double s) const;
    double diffusion_rate(double s2) const;
    double flux(double s) const;
    double flux_derivative(double s) const;

private:
    static void positive(double x, const char* what)
    {
        if (!(x > 0.0) || !std::isfinite(x))
            throw ParameterError(std::string(what) + " must be positive");
    }
    static void validate(const Nid1& f)
    {
        if (f.terms.empty()) throw ParameterError("NID1: no terms");
        for (const auto& t : f.terms) {
            positive(t.weight, "NID1 weight");
            positive(t.lambda, "NID1 lambda");
        }
    }
    static void validate(const Nid2& f)
    {
        if (f.terms.empty()) throw ParameterError("NID2: no terms");
        double last = -1.0;
        for (const auto& t : f.terms) {
            positive(t.weight, "NID2 weight");
            positive(t.lambda, "NID2 lambda");
            if (!(t.shift >= 0.0) || !(t.shift > last))
                throw ParameterError("NID2 shifts must be non-negative and strictly increasing");
            last = t.shift;
        }
    }

    Variant v_;
};

namespace detail {

template <class Terms>
double total_weight(const Terms& terms)
{
    double w = 0.0;
    for (const auto& t : terms) w += t.weight;
    return w;
}

// int_0^{s} 2 r phi_k(r^2) dr for one shifted term.
inline double nid2_term_penalty(double s, double lambda, double shift)
{
    if (s < shift) return 0.0;
    const double d = s - shift;
    const double l2 = lambda * lambda;
    return l2 * std::log1p(d * d / l2) + 2.0 * shift * lambda * std::atan(d / lambda);
}

inline double nid2_term_rate(double s, double lambda, double shift)
{
    if (s < shift) return 0.0;
    const double d = s - shift;
    return lambda * lambda / (lambda * lambda + d * d);
}

// d/ds [s * phi_k(s^2)]
inline double nid2_term_flux_derivative(double s, double lambda, double shift)
{
    if (s < shift) return 0.0;
    const double d = s - shift;
    const double l2 = lambda * lambda;
    const double den = l2 + d * d;
    return l2 / den - 2.0 * s * d * l2 / (den * den);
}

} // namespace detail

inline double PenaltyFamily::penalty(double s) const
{
    if (!(s >= 0.0)) throw DomainError("penalty: argument must be non-negative");
    return std::visit(
        [s](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, PeronaMalik1>) {
                const double l2 = f.lambda * f.lambda;
                return l2 * std::log1p(s / l2);
            } else if constexpr (std::is_same_v<T, PeronaMalik2>) {
                const double l2 = f.lambda * f.lambda;
                return -l2 * std::expm1(-s / l2);
            } else if constexpr (std::is_same_v<T, AcarVogel>) {
                return std::sqrt(f.epsilon + s);
            } else if constexpr (std::is_same_v<T, Nid1>) {
                double acc = 0.0;
                for (const auto& t : f.terms) {
                    const double l2 = t.lambda * t.lambda;
                    acc += t.weight * l2 * std::log1p(s / l2);
                }
                return acc / detail::total_weight(f.terms);
            } else if constexpr (std::is_same_v<T, Nid2>) {
                const double r = std::sqrt(s);
                double acc = 0.0;
                for (const auto& t : f.terms) acc += t.weight * detail::nid2_term_penalty(r, t.lambda, t.shift);
                return acc / detail::total_weight(f.terms);
            } else {
                return 2.0 * f->flux_integral(std::sqrt(s));
            }
        },
        v_);
}

inline double PenaltyFamily::diffusion_rate(double s2) const
{
    if (!(s2 >= 0.0)) throw DomainError("diffusion_rate: argument must be non-negative");
    return std::visit(
        [s2](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, PeronaMalik1>) {
                return 1.0 / (1.0 + s2 / (f.lambda * f.lambda));
            } else if constexpr (std::is_same_v<T, PeronaMalik2>) {
                return std::exp(-s2 / (f.lambda * f.lambda));
            } else if constexpr (std::is_same_v<T, AcarVogel>) {
                return 0.5 / std::sqrt(f.epsilon + s2);
            } else if constexpr (std::is_same_v<T, Nid1>) {
                double acc = 0.0;
                for (const auto& t : f.terms) acc += t.weight / (1.0 + s2 / (t.lambda * t.lambda));
                return acc / detail::total_weight(f.terms);
            } else if constexpr (std::is_same_v<T, Nid2>) {
                const double r = std::sqrt(s2);
                double acc = 0.0;
                for (const auto& t : f.terms) acc += t.weight * detail::nid2_term_rate(r, t.lambda, t.shift);
                return acc / detail::total_weight(f.terms);
            } else {
                const double r = std::sqrt(s2);
                if (r < 1e-8) return f->flux_derivative(0.0);
                return f->flux(r) / r;
            }
        },
        v_);
}

inline double PenaltyFamily::flux(double s) const
{
    if (!(s >= 0.0)) throw DomainError("flux: argument must be non-negative");
    if (const auto* t = std::get_if<std::shared_ptr<const Nid3>>(&v_)) return (*t)->flux(s);
    return s * diffusion_rate(s * s);
}

inline double PenaltyFamily::flux_derivative(double s) const
{
    if (!(s >= 0.0)) throw DomainError("flux_derivative: argument must be non-negative");
    return std::visit(
        [s](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            const double s2 = s * s;
            if constexpr (std::is_same_v<T, PeronaMalik1>) {
                const double l2 = f.lambda * f.lambda;
                const double den = l2 + s2;
                return l2 * (l2 - s2) / (den * den);
            } else if constexpr (std::is_same_v<T, PeronaMalik2>) {
                const double l2 = f.lambda * f.lambda;
                return (1.0 - 2.0 * s2 / l2) * std::exp(-s2 / l2);
            } else if constexpr (std::is_same_v<T, AcarVogel>) {
                return 0.5 * f.epsilon / std::pow(f.epsilon + s2, 1.5);
            } else if constexpr (std::is_same_v<T, Nid1>) {
                double acc = 0.0;
                for (const auto& t : f.terms) {
                    const double l2 = t.lambda * t.lambda;
                    const double den = l2 + s2;
                    acc += t.weight * l2 * (l2 - s2) / (den * den);
                }
                return acc / detail::total_weight(f.terms);
            } else if constexpr (std::is_same_v<T, Nid2>) {
                double acc = 0.0;
                for (const auto& t : f.terms) acc += t.weight * detail::nid2_term_flux_derivative(s, t.lambda, t.shift);
                return acc / detail::total_weight(f.terms);
            } else {
                return f->flux_derivative(s);
            }
        },
        v_);
}

inline std::string PenaltyFamily::name() const
{
    constexpr const char* names[] = {"pm1", "pm2", "av", "nid1", "nid2", "nid3"};
    return names[v_.index()];
}

inline double penalty(const PenaltyFamily& fam, double s) { return fam.penalty(s); }
inline double diffusion_rate(const PenaltyFamily& fam, double s2) { return fam.diffusion_rate(s2); }
inline double flux(const PenaltyFamily& fam, double s) { return fam.flux(s); }

// ---------------------------------------------------------------------------
// NID3

inline Nid3::Nid3(double step, std::vector<double> slope) : step_(step), slope_(std::move(slope))
{
    if (!(step_ > 0.0) || !std::isfinite(step_)) throw ParameterError("NID3: table step must be positive");
    if (slope_.size() < 2) throw ParameterError("NID3: table needs at least 2 nodes");
    for (double v : slope_)
        if (!std::isfinite(v)) throw ParameterError("NID3: table contains non-finite values");

    // cumulative Simpson: pairs of intervals, the odd nodes closed with the
    // three-point rule on the trailing interval
    const std::size_t m = slope_.size();
    const double hs = step_;
    flux_.assign(m, 0.0);
    for (std::size_t i = 1; i < m; ++i) {
        if (i % 2 == 0) {
            flux_[i] = flux_[i - 2] + hs / 3.0 * (slope_[i - 2] + 4.0 * slope_[i - 1] + slope_[i]);
        } else if (i + 1 < m) {
            flux_[i] = flux_[i - 1] + hs / 12.0 * (5.0 * slope_[i - 1] + 8.0 * slope_[i] - slope_[i + 1]);
        } else if (i >= 2) {
            flux_[i] = flux_[i - 1] + hs / 12.0 * (-slope_[i - 2] + 8.0 * slope_[i - 1] + 5.0 * slope_[i]);
        } else {
            flux_[i] = flux_[i - 1] + hs / 2.0 * (slope_[i - 1] + slope_[i]);
        }
    }
    // quadrature error can push a decayed tail slightly below zero; only a
    // clearly negative flux is an error, the rest is clamped to zero
    double peak = 0.0;
    for (double v : flux_) peak = std::max(peak, std::abs(v));
    const double tol = 1e-6 * peak;
    for (std::size_t i = 0; i < m; ++i) {
        if (flux_[i] < -tol)
            throw ParameterError("NID3: pattern integrates to a negative flux at s = " + std::to_string(i * step_) +
                                 " (diffusion rate must stay non-negative)");
        flux_[i] = std::max(flux_[i], 0.0);
    }

    integral_.assign(m, 0.0);
    for (std::size_t i = 0; i + 1 < m; ++i)
        integral_[i + 1] = integral_[i] + hs * (flux_[i] + flux_[i + 1]) / 2.0 +
                           hs * hs * (slope_[i] - slope_[i + 1]) / 12.0;

    // sign runs of the tabulated derivative; zeros extend the current run
    std::size_t start = 0;
    int sign = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const int si = slope_[i] > 0.0 ? 1 : (slope_[i] < 0.0 ? -1 : 0);
        if (si == 0) continue;
        if (sign == 0) {
            sign = si;
        } else if (si != sign) {
            intervals_.push_back({start * step_, (i - 1) * step_, sign < 0});
            start = i;
            sign = si;
        }
    }
    if (sign != 0) intervals_.push_back({start * step_, (m - 1) * step_, sign < 0});
}

inline double Nid3::flux(double s) const
{
    const std::size_t last = slope_.size() - 1;
    if (s >= range()) return flux_[last];
    const std::size_t i = std::min(static_cast<std::size_t>(s / step_), last - 1);
    const double u = (s - i * step_) / step_;
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * flux_[i] + (u3 - 2 * u2 + u) * step_ * slope_[i] + (-2 * u3 + 3 * u2) * flux_[i + 1] +
           (u3 - u2) * step_ * slope_[i + 1];
}

inline double Nid3::flux_derivative(double s) const
{
    const std::size_t last = slope_.size() - 1;
    if (s > range()) return 0.0;
    if (s == range()) return slope_[last];
    const std::size_t i = std::min(static_cast<std::size_t>(s / step_), last - 1);
    const double u = (s - i * step_) / step_;
    const double u2 = u * u;
    return (6 * u2 - 6 * u) * flux_[i] / step_ + (3 * u2 - 4 * u + 1) * slope_[i] + (-6 * u2 + 6 * u) * flux_[i + 1] / step_ +
           (3 * u2 - 2 * u) * slope_[i + 1];
}

inline double Nid3::flux_integral(double s) const
{
    const std::size_t last = slope_.size() - 1;
    if (s >= range()) return integral_[last] + flux_[last] * (s - range());
    const std::size_t i = std::min(static_cast<std::size_t>(s / step_), last - 1);
    const double u = (s - i * step_) / step_;
    const double u2 = u * u, u3 = u2 * u, u4 = u3 * u;
    // antiderivatives of the Hermite basis functions
    const double a00 = u4 / 2 - u3 + u;
    const double a10 = u4 / 4 - 2 * u3 / 3 + u2 / 2;
    const double a01 = -u4 / 2 + u3;
    const double a11 = u4 / 4 - u3 / 3;
    return integral_[i] +
           step_ * (a00 * flux_[i] + a10 * step_ * slope_[i] + a01 * flux_[i + 1] + a11 * step_ * slope_[i + 1]);
}

/// Builds the NID3 family from samples of psi' at s_i = i * step, i = 0..m-1.
inline PenaltyFamily build_nid3(double step, std::vector<double> slope)
{
    return PenaltyFamily(Nid3(step, std::move(slope)));
}

// ---------------------------------------------------------------------------
// Gaussian smoothing

/// Separable, normalized, truncated samples of G_sigma on the pixel grid.
/// sigma is in domain units; the support is ceil(4 sigma / h) pixels per side.
/// sigma = 0 gives the identity kernel.
class GaussianKernel {
public:
    GaussianKernel(double sigma, const GridSpec& grid) : sigma_(sigma)
    {
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("gaussian kernel: sigma must be >= 0");
        const double h = grid.h();
        radius_ = sigma == 0.0 ? 0 : static_cast<int>(std::ceil(4.0 * sigma / h));
        w_.resize(2 * radius_ + 1);
        for (int k = -radius_; k <= radius_; ++k) {
            const double x = k * h;
            w_[k + radius_] = sigma == 0.0 ? 1.0 : std::exp(-x * x / (2.0 * sigma * sigma));
        }
        const double total = std::accumulate(w_.begin(), w_.end(), 0.0);
        for (double& v : w_) v /= total;
    }

    double sigma() const { return sigma_; }
    int radius() const { return radius_; }
    int width() const { return 2 * radius_ + 1; }
    std::span<const double> weights() const { return w_; }
    /// 2-D sample at offset (a, b), |a|,|b| <= radius
    double at(int a, int b) const { return w_[a + radius_] * w_[b + radius_]; }

private:
    double sigma_;
    int radius_ = 0;
    std::vector<double> w_;
};

namespace detail {

// whole-sample symmetric reflection: -1 -> 0, n -> n-1
inline int reflect(int i, int n)
{
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

inline Image blur(const Image& f, const GaussianKernel& k)
{
    if (k.radius() == 0) return f;
    const int n = f.n();
    const int r = k.radius();
    const auto w = k.weights();
    Image tmp(f.grid());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int a = -r; a <= r; ++a) s += w[a + r] * f(i, reflect(j + a, n));
            tmp(i, j) = s;
        }
    Image out(f.grid());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int a = -r; a <= r; ++a) s += w[a + r] * tmp(reflect(i + a, n), j);
            out(i, j) = s;
        }
    return out;
}

// transpose of blur (reflection makes it differ from blur near the border)
inline Image blur_adjoint(const Image& u, const GaussianKernel& k)
{
    if (k.radius() == 0) return u;
    const int n = u.n();
    const int r = k.radius();
    const auto w = k.weights();
    Image tmp(u.grid());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = u(i, j);
            for (int a = -r; a <= r; ++a) tmp(reflect(i + a, n), j) += w[a + r] * v;
        }
    Image out(u.grid());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = tmp(i, j);
            for (int a = -r; a <= r; ++a) out(i, reflect(j + a, n)) += w[a + r] * v;
        }
    return out;
}

} // namespace detail

/// grad_fd of the reflected-boundary convolution G_sigma * f.
inline VectorField smoothed_gradient(const Image& f, const GaussianKernel& k)
{
    return grad_fd(detail::blur(f, k));
}

/// Exact adjoint of smoothed_gradient: blur^T(-div v).
inline Image smoothed_gradient_adjoint(const VectorField& v, const GaussianKernel& k)
{
    Image u = divergence(v);
    u *= -1.0;
    return detail::blur_adjoint(u, k);
}

} // namespace nidrecon

#endif
