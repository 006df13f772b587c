#ifndef NIDRECON_FUNCTIONAL_HPP
#define NIDRECON_FUNCTIONAL_HPP

#include "diffusion.hpp"
#include "radon.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace nidrecon {

/// One regularization term gamma * int p(|grad_sigma f|^2).
struct NidTerm {
    double gamma;
    double sigma;
    PenaltyFamily family;
};

/// 1/2 ||A f - g||^2 + sum_k gamma_k int p_k(|grad_{sigma_k} f|^2) + alpha/2 ||f||^2
struct NidConfig {
    std::vector<NidTerm> terms;
    double alpha = 0.0;

    void validate() const
    {
        if (terms.empty()) throw ParameterError("NID config: at least one term required");
        for (const auto& t : terms) {
            if (!(t.gamma >= 0.0)) throw ParameterError("NID config: gamma must be >= 0");
            if (!(t.sigma > 0.0)) throw ParameterError("NID config: sigma must be > 0");
        }
        if (!(alpha >= 0.0)) throw ParameterError("NID config: alpha must be >= 0");
    }
};

/// 1/2 ||A f - g||^2 + beta int sqrt(eps + |grad f|^2) + alpha/2 ||f||^2
struct TvConfig {
    double beta = 1.0;
    double epsilon = 0.01;
    double alpha = 0.0;

    void validate() const
    {
        if (!(beta > 0.0)) throw ParameterError("TV config: beta must be > 0");
        if (!(epsilon > 0.0)) throw ParameterError("TV config: epsilon must be > 0");
        if (!(alpha >= 0.0)) throw ParameterError("TV config: alpha must be >= 0");
    }
};

/// Blend weight omega(n) (non-increasing, in [0,1]) and flux scale zeta(n) > 0.
struct AnidSchedule {
    enum class Kind { sigmoid, constant, step };

    Kind kind = Kind::sigmoid;
    double midpoint = 300.0;  // sigmoid centre n0
    double steepness = 0.02;  // sigmoid slope a
    double omega_value = 1.0; // constant omega
    double zeta0 = 1.0;       // zeta at the start (constant zeta for Kind::constant)
    int step_at = 0;          // Kind::step: omega = 1 for n < step_at, 0 afterwards

    static AnidSchedule sigmoid(double midpoint, double steepness, double zeta0 = 1.0)
    {
        AnidSchedule s;
        s.kind = Kind::sigmoid;
        s.midpoint = midpoint;
        s.steepness = steepness;
        s.zeta0 = zeta0;
        s.validate();
        return s;
    }
    static AnidSchedule constant(double omega, double zeta = 1.0)
    {
        AnidSchedule s;
        s.kind = Kind::constant;
        s.omega_value = omega;
        s.zeta0 = zeta;
        s.validate();
        return s;
    }
    static AnidSchedule step(int at, double zeta0 = 1.0)
    {
        AnidSchedule s;
        s.kind = Kind::step;
        s.step_at = at;
        s.zeta0 = zeta0;
        s.validate();
        return s;
    }

    void validate() const
    {
        if (!(zeta0 > 0.0)) throw ParameterError("schedule: zeta must be positive");
        if (kind == Kind::sigmoid && !(steepness >= 0.0)) throw ParameterError("schedule: steepness must be >= 0");
        if (kind == Kind::constant && !(omega_value >= 0.0 && omega_value <= 1.0))
            throw ParameterError("schedule: omega must lie in [0,1]");
    }

    double omega(int n) const
    {
        switch (kind) {
        case Kind::constant: return omega_value;
        case Kind::step: return n < step_at ? 1.0 : 0.0;
        case Kind::sigmoid: break;
        }
        return 1.0 / (1.0 + std::exp(steepness * (n - midpoint)));
    }

    /// zeta runs from zeta0 to 1 along the omega curve
    double zeta(int n) const
    {
        if (kind == Kind::constant) return zeta0;
        return 1.0 + (zeta0 - 1.0) * omega(n);
    }
};

struct ValueGradient {
    double value;
    Image gradient;
};

/// Regularizer value and gradient pieces, evaluated on a prepared kernel set.
namespace detail {

inline double regularizer_value(const Image& f, const std::vector<NidTerm>& terms,
                                const std::vector<GaussianKernel>& kernels)
{
    const double h = f.grid().h();
    double total = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        if (terms[k].gamma == 0.0) continue;
        const VectorField g = smoothed_gradient(f, kernels[k]);
        double s = 0.0;
        for (std::size_t p = 0; p < f.size(); ++p)
            s += terms[k].family.penalty(g.c1[p] * g.c1[p] + g.c2[p] * g.c2[p]);
        total += terms[k].gamma * h * h * s;
    }
    return total;
}

// d/df gamma int p(|grad_sigma f|^2) = 2 gamma grad_sigma^*(phi(|grad_sigma f|^2) grad_sigma f)
inline void add_regularizer_gradient(const Image& f, const std::vector<NidTerm>& terms,
                                     const std::vector<GaussianKernel>& kernels, double scale, Image& out)
{
    for (std::size_t k = 0; k < terms.size(); ++k) {
        if (terms[k].gamma == 0.0) continue;
        VectorField g = smoothed_gradient(f, kernels[k]);
        for (std::size_t p = 0; p < f.size(); ++p) {
            const double w = terms[k].family.diffusion_rate(g.c1[p] * g.c1[p] + g.c2[p] * g.c2[p]);
            g.c1[p] *= w;
            g.c2[p] *= w;
        }
        out.axpy(2.0 * terms[k].gamma * scale, smoothed_gradient_adjoint(g, kernels[k]));
    }
}

inline double half_squared_residual(const Sinogram& r) { return 0.5 * inner(r, r); }

inline Sinogram residual(const ProjectionMatrix& a, const Image& f, const Sinogram& g)
{
    Sinogram r = forward_project(a, f);
    r -= g;
    return r;
}

} // namespace detail

/// NID Tikhonov functional bound to an operator and data.
class NidFunctional {
public:
    NidFunctional(const ProjectionMatrix& a, const Sinogram& g, NidConfig cfg) : a_(&a), g_(&g), cfg_(std::move(cfg))
    {
        cfg_.validate();
        if (!(g.geometry() == a.geometry)) throw DimensionError("NID functional: data geometry does not match operator");
        for (const auto& t : cfg_.terms) kernels_.emplace_back(t.sigma, a.grid);
    }

    const NidConfig& config() const { return cfg_; }
    const ProjectionMatrix& op() const { return *a_; }
    const Sinogram& data() const { return *g_; }

    double value(const Image& f) const { return value_with_residual(f, detail::residual(*a_, f, *g_)); }

    /// value given a precomputed residual A f - g
    double value_with_residual(const Image& f, const Sinogram& r) const
    {
        check(f);
        return detail::half_squared_residual(r) + regularizer(f) + 0.5 * cfg_.alpha * inner(f, f);
    }

    double regularizer(const Image& f) const { return detail::regularizer_value(f, cfg_.terms, kernels_); }

    Image gradient(const Image& f) const { return gradient_with_residual(f, detail::residual(*a_, f, *g_)); }

    Image gradient_with_residual(const Image& f, const Sinogram& r) const
    {
        check(f);
        Image out = back_project(*a_, r);
        detail::add_regularizer_gradient(f, cfg_.terms, kernels_, 1.0, out);
        out.axpy(cfg_.alpha, f);
        return out;
    }

    ValueGradient evaluate(const Image& f) const
    {
        const Sinogram r = detail::residual(*a_, f, *g_);
        return {value_with_residual(f, r), gradient_with_residual(f, r)};
    }

private:
    void check(const Image& f) const
    {
        if (!(f.grid() == a_->grid)) throw DimensionError("NID functional: image grid does not match operator");
    }

    const ProjectionMatrix* a_;
    const Sinogram* g_;
    NidConfig cfg_;
    std::vector<GaussianKernel> kernels_;
};

/// Acar-Vogel smoothed TV functional on the unsmoothed difference gradient.
class TvFunctional {
public:
    TvFunctional(const ProjectionMatrix& a, const Sinogram& g, TvConfig cfg)
        : a_(&a), g_(&g), cfg_(cfg), terms_{{cfg.beta, 0.0, AcarVogel{cfg.epsilon}}}, kernels_{GaussianKernel(0.0, a.grid)}
    {
        cfg_.validate();
        if (!(g.geometry() == a.geometry)) throw DimensionError("TV functional: data geometry does not match operator");
    }

    const TvConfig& config() const { return cfg_; }

    double value(const Image& f) const { return value_with_residual(f, detail::residual(*a_, f, *g_)); }

    double value_with_residual(const Image& f, const Sinogram& r) const
    {
        check(f);
        return detail::half_squared_residual(r) + regularizer(f) + 0.5 * cfg_.alpha * inner(f, f);
    }

    double regularizer(const Image& f) const { return detail::regularizer_value(f, terms_, kernels_); }

    Image gradient(const Image& f) const { return gradient_with_residual(f, detail::residual(*a_, f, *g_)); }

    Image gradient_with_residual(const Image& f, const Sinogram& r) const
    {
        check(f);
        Image out = back_project(*a_, r);
        detail::add_regularizer_gradient(f, terms_, kernels_, 1.0, out);
        out.axpy(cfg_.alpha, f);
        return out;
    }

    ValueGradient evaluate(const Image& f) const
    {
        const Sinogram r = detail::residual(*a_, f, *g_);
        return {value_with_residual(f, r), gradient_with_residual(f, r)};
    }

private:
    void check(const Image& f) const
    {
        if (!(f.grid() == a_->grid)) throw DimensionError("TV functional: image grid does not match operator");
    }

    const ProjectionMatrix* a_;
    const Sinogram* g_;
    TvConfig cfg_;
    std::vector<NidTerm> terms_;
    std::vector<GaussianKernel> kernels_;
};

/// Iteration-dependent blend T_n(f) = (1 - w(n)) T_NID^n(zeta(n) f) + w(n) T_TV(f).
/// The NID configuration may itself depend on n.
class AnidFunctional {
public:
    using NidSequence = std::function<NidConfig(int)>;

    struct Parts {
        double nid; // T_NID^n(zeta(n) f)
        double tv;  // T_TV(f)
    };

    AnidFunctional(const ProjectionMatrix& a, const Sinogram& g, NidSequence nid, TvConfig tv, AnidSchedule schedule)
        : a_(&a), g_(&g), nid_seq_(std::move(nid)), tv_(a, g, tv), schedule_(schedule)
    {
        schedule_.validate();
    }

    AnidFunctional(const ProjectionMatrix& a, const Sinogram& g, NidConfig nid, TvConfig tv, AnidSchedule schedule)
        : AnidFunctional(a, g, NidSequence([nid = std::move(nid)](int) { return nid; }), tv, schedule)
    {
        static_nid_.emplace(a, g, nid_seq_(0));
    }

    const AnidSchedule& schedule() const { return schedule_; }
    const TvFunctional& tv() const { return tv_; }
    double omega(int n) const { return schedule_.omega(n); }
    double zeta(int n) const { return schedule_.zeta(n); }

    /// Both blended functionals at f, sharing one forward projection.
    Parts parts(int n, const Image& f) const
    {
        const Sinogram af = forward_project(*a_, f);
        return {nid_value_scaled(n, f, af), tv_.value_with_residual(f, minus_data(af))};
    }

    double value(int n, const Image& f) const
    {
        const double w = omega(n);
        const Sinogram af = forward_project(*a_, f);
        double v = 0.0;
        if (w != 1.0) v += (1.0 - w) * nid_value_scaled(n, f, af);
        if (w != 0.0) v += w * tv_.value_with_residual(f, minus_data(af));
        return v;
    }

    ValueGradient evaluate(int n, const Image& f) const
    {
        const double w = omega(n);
        const double z = zeta(n);
        const Sinogram af = forward_project(*a_, f);
        double v = 0.0;
        Image grad(f.grid());
        if (w != 1.0) {
            const NidFunctional& nid = nid_at(n);
            const Image zf = z * f;
            const Sinogram r = scaled_residual(af, z);
            v += (1.0 - w) * nid.value_with_residual(zf, r);
            grad.axpy((1.0 - w) * z, nid.gradient_with_residual(zf, r));
        }
        if (w != 0.0) {
            const Sinogram r = minus_data(af);
            v += w * tv_.value_with_residual(f, r);
            grad.axpy(w, tv_.gradient_with_residual(f, r));
        }
        return {v, std::move(grad)};
    }

    Image gradient(int n, const Image& f) const { return evaluate(n, f).gradient; }

private:
    const NidFunctional& nid_at(int n) const
    {
        if (static_nid_) return *static_nid_;
        if (!cached_nid_ || cached_n_ != n) {
            cached_nid_.emplace(*a_, *g_, nid_seq_(n));
            cached_n_ = n;
        }
        return *cached_nid_;
    }

    double nid_value_scaled(int n, const Image& f, const Sinogram& af) const
    {
        const double z = zeta(n);
        return nid_at(n).value_with_residual(z * f, scaled_residual(af, z));
    }

    Sinogram minus_data(const Sinogram& af) const
    {
        Sinogram r = af;
        r -= *g_;
        return r;
    }

    // A(z f) - g computed as z (A f) - g
    Sinogram scaled_residual(const Sinogram& af, double z) const
    {
        Sinogram r = af;
        if (z != 1.0)
            for (double& x : r.data()) x *= z;
        r -= *g_;
        return r;
    }

    const ProjectionMatrix* a_;
    const Sinogram* g_;
    NidSequence nid_seq_;
    TvFunctional tv_;
    AnidSchedule schedule_;
    std::optional<NidFunctional> static_nid_;
    mutable std::optional<NidFunctional> cached_nid_;
    mutable int cached_n_ = -1;
};

// Free-function forms.

inline double nid_value(const Image& f, const Sinogram& g, const ProjectionMatrix& a, const NidConfig& cfg)
{
    return NidFunctional(a, g, cfg).value(f);
}

inline Image nid_gradient(const Image& f, const Sinogram& g, const ProjectionMatrix& a, const NidConfig& cfg)
{
    return NidFunctional(a, g, cfg).gradient(f);
}

inline double tv_value(const Image& f, const Sinogram& g, const ProjectionMatrix& a, const TvConfig& cfg)
{
    return TvFunctional(a, g, cfg).value(f);
}

inline Image tv_gradient(const Image& f, const Sinogram& g, const ProjectionMatrix& a, const TvConfig& cfg)
{
    return TvFunctional(a, g, cfg).gradient(f);
}

inline double anid_value(const Image& f, int n, const Sinogram& g, const ProjectionMatrix& a, const NidConfig& nid,
                         const TvConfig& tv, const AnidSchedule& schedule)
{
    return AnidFunctional(a, g, nid, tv, schedule).value(n, f);
}

inline Image anid_gradient(const Image& f, int n, const Sinogram& g, const ProjectionMatrix& a, const NidConfig& nid,
                           const TvConfig& tv, const AnidSchedule& schedule)
{
    return AnidFunctional(a, g, nid, tv, schedule).gradient(n, f);
}

} // namespace nidrecon

#endif
