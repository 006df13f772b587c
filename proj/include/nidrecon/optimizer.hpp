#ifndef NIDRECON_OPTIMIZER_HPP
#define NIDRECON_OPTIMIZER_HPP

#include "functional.hpp"
#include "number_format.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace nidrecon {

struct LineSearchConfig {
    enum class Mode { armijo, wolfe };

    Mode mode = Mode::armijo;
    double mu = 1e-4;        // sufficient decrease
    double rho = 0.9;        // curvature (wolfe mode)
    double backtrack = 0.5;  // step reduction factor
    double tau0 = 1.0;       // initial / fallback step
    int max_backtracks = 60; // trial steps per iteration
    bool barzilai_borwein = true;

    void validate() const
    {
        if (!(mu > 0.0 && mu < 0.5)) throw ParameterError("line search: need 0 < mu < 1/2");
        if (!(rho > mu && rho < 1.0)) throw ParameterError("line search: need mu < rho < 1");
        if (!(backtrack > 0.0 && backtrack < 1.0)) throw ParameterError("line search: need 0 < backtrack < 1");
        if (!(tau0 > 0.0) || !std::isfinite(tau0)) throw ParameterError("line search: tau0 must be positive");
        if (max_backtracks < 1) throw ParameterError("line search: max_backtracks must be >= 1");
    }
};

struct StopCriteria {
    int max_iterations = 500;
    double grad_tol = 1e-6;  // stop when ||v_n|| <= grad_tol * max(1, ||v_0||)
    double value_tol = 0.0;  // stop when |T_n - T_{n+1}| <= value_tol * max(1, |T_n|)

    void validate() const
    {
        if (max_iterations < 0) throw ParameterError("stop: max_iterations must be >= 0");
        if (!(grad_tol >= 0.0) || !(value_tol >= 0.0)) throw ParameterError("stop: tolerances must be >= 0");
        if (max_iterations == 0 && grad_tol == 0.0 && value_tol == 0.0)
            throw ParameterError("stop: no criterion active");
    }
};

/// One row per iteration.  Row n holds T_n(f_n), ||v_n||, the accepted step
/// t_n and the Barzilai-Borwein quotient tau_n as computed (before any
/// safeguard).  The final row describes the returned iterate and has t_n,
/// tau_n = nan.  Quantities that do not apply are nan.
struct TraceRecord {
    int n = 0;
    double value = 0.0;
    double grad_norm = 0.0;
    double t = std::numeric_limits<double>::quiet_NaN();
    double tau = std::numeric_limits<double>::quiet_NaN();
    double omega = std::numeric_limits<double>::quiet_NaN();
    double zeta = std::numeric_limits<double>::quiet_NaN();
    double variation_slack = std::numeric_limits<double>::quiet_NaN();
};

struct IterationTrace {
    std::vector<TraceRecord> records;
    std::string stop_reason;

    static constexpr const char* csv_header = "n,value,grad_norm,t_n,tau_n,omega,zeta,cond41_slack";

    void write_csv(std::ostream& os) const
    {
        os << csv_header << '\n';
        for (const auto& r : records)
            os << r.n << ',' << format_double(r.value) << ',' << format_double(r.grad_norm) << ',' << format_double(r.t)
               << ',' << format_double(r.tau) << ',' << format_double(r.omega) << ',' << format_double(r.zeta) << ','
               << format_double(r.variation_slack) << '\n';
    }

    /// iterations n > warmup whose variation slack is negative
    std::vector<int> variation_violations(int warmup = 0) const
    {
        std::vector<int> out;
        for (const auto& r : records)
            if (r.n > warmup && r.variation_slack < 0.0) out.push_back(r.n);
        return out;
    }
};

struct LineSearchError : Error {
    LineSearchError(const std::string& what, IterationTrace partial) : Error(what), trace(std::move(partial)) {}
    IterationTrace trace;
};

/// Iteration-indexed objective.  `stationary` means T_n does not depend on n.
struct Objective {
    std::function<ValueGradient(int, const Image&)> evaluate;
    std::function<double(int, const Image&)> value;
    bool stationary = true;
    std::function<double(int)> omega; // optional, for the trace
    std::function<double(int)> zeta;  // optional, for the trace
    bool monitor_variation = false;
};

struct DescentResult {
    Image f;
    IterationTrace trace;
};

/// <v_n - v_{n-1}, f_n - f_{n-1}> / ||v_n - v_{n-1}||^2, nan if the
/// denominator vanishes.
inline double bb_quotient(const Image& f_n, const Image& f_prev, const Image& v_n, const Image& v_prev)
{
    const Image dv = v_n - v_prev;
    const Image df = f_n - f_prev;
    const double den = inner(dv, dv);
    if (den < 1e-30) return std::numeric_limits<double>::quiet_NaN();
    return inner(dv, df) / den;
}

/// Step to start the line search from a BB quotient: tau0 when the quotient
/// is undefined or outside [1e-6, 1e6] * tau0.  Near a kink of the functional
/// a clamped tiny quotient would otherwise repeat forever.
inline double safeguarded_bb(double quotient, double tau0)
{
    if (!std::isfinite(quotient) || !(quotient >= 1e-6 * tau0 && quotient <= 1e6 * tau0)) return tau0;
    return quotient;
}

inline double bb_step(const Image& f_n, const Image& f_prev, const Image& v_n, const Image& v_prev, double tau0 = 1.0)
{
    return safeguarded_bb(bb_quotient(f_n, f_prev, v_n, v_prev), tau0);
}

struct StepResult {
    double t;
    Image f;                              // f_n - t v_n
    double value;                         // T(f_n - t v_n)
    std::optional<ValueGradient> at_step; // value and gradient there, when computed
};

/// Largest t = backtrack^l * tau with T(f - t v) <= T(f) - mu t ||v||^2.
inline StepResult armijo_search(const std::function<double(const Image&)>& value, const Image& f, double value_f,
                                const Image& v, double tau, const LineSearchConfig& cfg)
{
    const double v2 = inner(v, v);
    double t = tau;
    for (int l = 0; l < cfg.max_backtracks; ++l) {
        Image trial = f;
        trial.axpy(-t, v);
        const double val = value(trial);
        if (std::isfinite(val) && val <= value_f - cfg.mu * t * v2) return {t, std::move(trial), val, std::nullopt};
        t *= cfg.backtrack;
    }
    throw LineSearchError("armijo search: no sufficient decrease after " + std::to_string(cfg.max_backtracks) +
                              " backtracks",
                          {});
}

/// Weak Wolfe step by bracketing and bisection starting from tau: sufficient
/// decrease plus <T'(f - t v), v> <= rho ||v||^2.
inline StepResult wolfe_search(const std::function<ValueGradient(const Image&)>& evaluate, const Image& f,
                               double value_f, const Image& v, double tau, const LineSearchConfig& cfg)
{
    const double v2 = inner(v, v);
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double t = tau;
    for (int l = 0; l < 2 * cfg.max_backtracks; ++l) {
        Image trial = f;
        trial.axpy(-t, v);
        ValueGradient vg = evaluate(trial);
        if (!std::isfinite(vg.value) || vg.value > value_f - cfg.mu * t * v2) {
            hi = t;
        } else if (inner(vg.gradient, v) > cfg.rho * v2) {
            lo = t;
        } else {
            const double val = vg.value;
            return {t, std::move(trial), val, std::move(vg)};
        }
        t = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * t;
    }
    throw LineSearchError("wolfe search: no admissible step in bracket [" + format_double(lo) + ", " +
                              format_double(hi) + "]",
                          {});
}

/// mu t ||v_n||^2 minus the variation of the blended functional between
/// iterations n and n+1 at f_{n+1}:
/// (w_n - w_{n+1}) (N_n - TV) + (1 - w_{n+1}) (N_{n+1} - N_n).
/// N_n is the NID part of T_n evaluated at f_{n+1} (including the zeta scaling).
inline double variation_slack(double mu, double t, double v_norm2, double omega_n, double omega_next, double nid_n,
                                double tv, double nid_next)
{
    return mu * t * v_norm2 - ((omega_n - omega_next) * (nid_n - tv) + (1.0 - omega_next) * (nid_next - nid_n));
}

/// Gradient descent f_{n+1} = f_n - t_n v_n, v_n = T_n'(f_n), with BB initial
/// steps and an Armijo or Wolfe line search.
inline DescentResult descend(const Objective& obj, Image f, const LineSearchConfig& ls, const StopCriteria& stop)
{
    ls.validate();
    stop.validate();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    IterationTrace trace;

    auto fill_schedule = [&](TraceRecord& r) {
        if (obj.omega) r.omega = obj.omega(r.n);
        if (obj.zeta) r.zeta = obj.zeta(r.n);
    };

    ValueGradient cur = obj.evaluate(0, f);
    Image f_prev, v_prev;
    double prev_step_value = nan; // T_{n-1}(f_n): value accepted by the previous line search
    double prev_decrease = nan;   // mu t_{n-1} ||v_{n-1}||^2
    const double v0 = norm(cur.gradient);

    for (int n = 0;; ++n) {
        if (!std::isfinite(cur.value) || !cur.gradient.all_finite())
            throw LineSearchError("descent: non-finite functional or gradient at iteration " + std::to_string(n),
                                  trace);
        if (n > 0 && obj.monitor_variation)
            trace.records.back().variation_slack = prev_decrease - (cur.value - prev_step_value);

        TraceRecord rec;
        rec.n = n;
        rec.value = cur.value;
        rec.grad_norm = norm(cur.gradient);
        fill_schedule(rec);

        if (rec.grad_norm <= stop.grad_tol * std::max(1.0, v0)) {
            trace.records.push_back(rec);
            trace.stop_reason = "gradient tolerance";
            break;
        }
        if (n >= stop.max_iterations) {
            trace.records.push_back(rec);
            trace.stop_reason = "iteration limit";
            break;
        }

        double tau = ls.tau0;
        if (n > 0 && ls.barzilai_borwein) {
            rec.tau = bb_quotient(f, f_prev, cur.gradient, v_prev);
            tau = safeguarded_bb(rec.tau, ls.tau0);
        } else {
            rec.tau = ls.tau0;
        }

        StepResult step;
        try {
            if (ls.mode == LineSearchConfig::Mode::armijo) {
                step = armijo_search([&](const Image& x) { return obj.value(n, x); }, f, cur.value, cur.gradient, tau,
                                     ls);
            } else {
                step = wolfe_search([&](const Image& x) { return obj.evaluate(n, x); }, f, cur.value, cur.gradient,
                                    tau, ls);
            }
        } catch (const LineSearchError& e) {
            trace.records.push_back(rec);
            trace.stop_reason = "line search failure";
            throw LineSearchError(std::string(e.what()) + " at iteration " + std::to_string(n), trace);
        }

        rec.t = step.t;
        const double v2 = rec.grad_norm * rec.grad_norm;
        trace.records.push_back(rec);
        prev_step_value = step.value;
        prev_decrease = ls.mu * step.t * v2;

        f_prev = std::move(f);
        v_prev = std::move(cur.gradient);
        f = std::move(step.f);
        if (obj.stationary && step.at_step) {
            cur = std::move(*step.at_step);
        } else {
            cur = obj.evaluate(n + 1, f);
        }

        if (stop.value_tol > 0.0 &&
            std::abs(rec.value - step.value) <= stop.value_tol * std::max(1.0, std::abs(rec.value))) {
            if (obj.monitor_variation) trace.records.back().variation_slack = prev_decrease - (cur.value - step.value);
            TraceRecord last;
            last.n = n + 1;
            last.value = cur.value;
            last.grad_norm = norm(cur.gradient);
            fill_schedule(last);
            trace.records.push_back(last);
            trace.stop_reason = "value stagnation";
            break;
        }
    }
    return {std::move(f), std::move(trace)};
}

inline Objective make_objective(const NidFunctional& fn)
{
    Objective o;
    o.evaluate = [&fn](int, const Image& f) { return fn.evaluate(f); };
    o.value = [&fn](int, const Image& f) { return fn.value(f); };
    return o;
}

inline Objective make_objective(const TvFunctional& fn)
{
    Objective o;
    o.evaluate = [&fn](int, const Image& f) { return fn.evaluate(f); };
    o.value = [&fn](int, const Image& f) { return fn.value(f); };
    return o;
}

inline Objective make_objective(const AnidFunctional& fn)
{
    Objective o;
    o.evaluate = [&fn](int n, const Image& f) { return fn.evaluate(n, f); };
    o.value = [&fn](int n, const Image& f) { return fn.value(n, f); };
    o.stationary = false;
    o.omega = [&fn](int n) { return fn.omega(n); };
    o.zeta = [&fn](int n) { return fn.zeta(n); };
    o.monitor_variation = true;
    return o;
}

inline DescentResult solve_nid(const Sinogram& g, const ProjectionMatrix& a, const NidConfig& cfg,
                               const LineSearchConfig& ls, const StopCriteria& stop, const Image& f0)
{
    const NidFunctional fn(a, g, cfg);
    return descend(make_objective(fn), f0, ls, stop);
}

inline DescentResult solve_tv(const Sinogram& g, const ProjectionMatrix& a, const TvConfig& cfg,
                              const LineSearchConfig& ls, const StopCriteria& stop, const Image& f0)
{
    const TvFunctional fn(a, g, cfg);
    return descend(make_objective(fn), f0, ls, stop);
}

/// Line search used by default for the adaptive scheme: the fixed ladder
/// t = tau0 * backtrack^l without Barzilai-Borwein initialisation.
inline LineSearchConfig anid_line_search()
{
    LineSearchConfig ls;
    ls.barzilai_borwein = false;
    return ls;
}

inline DescentResult solve_anid(const Sinogram& g, const ProjectionMatrix& a, AnidFunctional::NidSequence nid,
                                const TvConfig& tv, const AnidSchedule& schedule, const LineSearchConfig& ls,
                                const StopCriteria& stop, const Image& f0)
{
    const AnidFunctional fn(a, g, std::move(nid), tv, schedule);
    return descend(make_objective(fn), f0, ls, stop);
}

inline DescentResult solve_anid(const Sinogram& g, const ProjectionMatrix& a, const NidConfig& nid,
                                const TvConfig& tv, const AnidSchedule& schedule, const LineSearchConfig& ls,
                                const StopCriteria& stop, const Image& f0)
{
    const AnidFunctional fn(a, g, nid, tv, schedule);
    return descend(make_objective(fn), f0, ls, stop);
}

} // namespace nidrecon

#endif
