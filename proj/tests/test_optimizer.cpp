#include "nidrecon/optimizer.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace nidrecon;

namespace {

Image random_image(int n, std::mt19937_64& rng, double amp = 1.0)
{
    std::uniform_real_distribution<double> u(-amp, amp);
    Image f{GridSpec(n)};
    for (double& x : f.data()) x = u(rng);
    return f;
}

// Stationary T(f) = 1/2 ||f - c||^2 in the grid inner product.
Objective quadratic(const Image& c)
{
    Objective o;
    o.value = [c](int, const Image& f) {
        const Image d = f - c;
        return 0.5 * inner(d, d);
    };
    o.evaluate = [c](int, const Image& f) {
        Image d = f - c;
        const double v = 0.5 * inner(d, d);
        return ValueGradient{v, std::move(d)};
    };
    return o;
}

struct Problem {
    GridSpec grid;
    SinogramGeometry geom;
    ProjectionMatrix a;
    Sinogram g;
};

Problem make_problem(int n, int p, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    GridSpec grid(n);
    SinogramGeometry geom(p, p + 1);
    auto a = build_projection_matrix(grid, geom);
    Image truth(grid);
    for (int i = n / 4; i < 3 * n / 4; ++i)
        for (int j = n / 4; j < 3 * n / 4; ++j) truth(i, j) = 1.0;
    Sinogram g = forward_project(a, truth);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (double& x : g.data()) x += noise(rng);
    return {grid, geom, std::move(a), std::move(g)};
}

NidConfig pm1_config(double gamma, double lambda)
{
    return NidConfig{{{gamma, 0.05, PenaltyFamily(PeronaMalik1{lambda})}}, 0.0};
}

} // namespace

TEST(BarzilaiBorwein, QuotientAndFallback)
{
    GridSpec grid(4);
    std::mt19937_64 rng(1);
    const Image f0 = random_image(4, rng), d = random_image(4, rng), v0 = random_image(4, rng);
    const Image f1 = f0 + d, v1 = v0 + 2.0 * d;
    EXPECT_NEAR(bb_quotient(f1, f0, v1, v0), 0.5, 1e-14);
    EXPECT_NEAR(bb_step(f1, f0, v1, v0), 0.5, 1e-14);

    EXPECT_TRUE(std::isnan(bb_quotient(f1, f0, v0, v0)));
    EXPECT_EQ(bb_step(f1, f0, v0, v0, 0.25), 0.25);
    const Image v_neg = v0 - 2.0 * d; // negative curvature
    EXPECT_LT(bb_quotient(f1, f0, v_neg, v0), 0.0);
    EXPECT_EQ(bb_step(f1, f0, v_neg, v0, 0.25), 0.25);

    EXPECT_EQ(safeguarded_bb(1e-6, 1.0), 1e-6);
    EXPECT_EQ(safeguarded_bb(0.9e-6, 1.0), 1.0);
    EXPECT_EQ(safeguarded_bb(1e6, 1.0), 1e6);
    EXPECT_EQ(safeguarded_bb(2e6, 1.0), 1.0);
    EXPECT_EQ(safeguarded_bb(5e-8, 0.1), 0.1);
}

TEST(ArmijoSearch, BacktracksToSufficientDecrease)
{
    std::mt19937_64 rng(2);
    const Image f = random_image(8, rng);
    const Image c(f.grid());
    const auto obj = quadratic(c);
    LineSearchConfig cfg;
    // T(f - t f) = (1 - t)^2 T(f): t = 4 and t = 2 fail, t = 1 reaches the minimum
    const auto step = armijo_search([&](const Image& x) { return obj.value(0, x); }, f, obj.value(0, f), f, 4.0, cfg);
    EXPECT_EQ(step.t, 1.0);
    EXPECT_NEAR(step.value, 0.0, 1e-30);
}

TEST(ArmijoSearch, AscentDirectionFails)
{
    std::mt19937_64 rng(3);
    const Image f = random_image(8, rng);
    const auto obj = quadratic(Image(f.grid()));
    LineSearchConfig cfg;
    cfg.max_backtracks = 30;
    EXPECT_THROW(armijo_search([&](const Image& x) { return obj.value(0, x); }, f, obj.value(0, f), -1.0 * f, 1.0, cfg),
                 LineSearchError);
}

TEST(WolfeSearch, ExpandsUntilCurvatureHolds)
{
    std::mt19937_64 rng(4);
    const Image f = random_image(8, rng);
    const auto obj = quadratic(Image(f.grid()));
    LineSearchConfig cfg;
    cfg.mode = LineSearchConfig::Mode::wolfe;
    // curvature needs (1 - t) <= rho: t >= 0.1; doubling from 0.01 stops at 0.16
    const auto step = wolfe_search([&](const Image& x) { return obj.evaluate(0, x); }, f, obj.value(0, f), f, 0.01, cfg);
    EXPECT_NEAR(step.t, 0.16, 1e-15);
    ASSERT_TRUE(step.at_step.has_value());
    EXPECT_EQ(step.at_step->value, step.value);
}

TEST(WolfeSearch, BisectsOvershoot)
{
    std::mt19937_64 rng(5);
    const Image f = random_image(8, rng);
    const auto obj = quadratic(Image(f.grid()));
    LineSearchConfig cfg;
    cfg.mode = LineSearchConfig::Mode::wolfe;
    const auto step = wolfe_search([&](const Image& x) { return obj.evaluate(0, x); }, f, obj.value(0, f), f, 8.0, cfg);
    EXPECT_GE(step.t, 0.1);
    EXPECT_LE(obj.value(0, step.f), obj.value(0, f) - cfg.mu * step.t * inner(f, f));
}

TEST(LineSearchConfig, Validation)
{
    LineSearchConfig c;
    c.mu = 0.6;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.rho = 1e-5;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.backtrack = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.tau0 = 0.0;
    EXPECT_THROW(c.validate(), ParameterError);
    StopCriteria s;
    s.max_iterations = -1;
    EXPECT_THROW(s.validate(), ParameterError);
}

TEST(Descend, ZeroIterationsReturnsStart)
{
    std::mt19937_64 rng(6);
    const Image c = random_image(4, rng), f0 = random_image(4, rng);
    StopCriteria stop;
    stop.max_iterations = 0;
    const auto res = descend(quadratic(c), f0, LineSearchConfig{}, stop);
    EXPECT_TRUE(res.f == f0);
    ASSERT_EQ(res.trace.records.size(), 1u);
    EXPECT_EQ(res.trace.stop_reason, "iteration limit");
}

TEST(Descend, QuadraticConvergesInOneStep)
{
    std::mt19937_64 rng(7);
    const Image c = random_image(8, rng);
    const auto res = descend(quadratic(c), Image(c.grid()), LineSearchConfig{}, StopCriteria{});
    EXPECT_EQ(res.trace.stop_reason, "gradient tolerance");
    for (std::size_t k = 0; k < c.size(); ++k) EXPECT_NEAR(res.f[k], c[k], 1e-12);
}

TEST(Descend, TikhonovMatchesDenseSolve)
{
    // gamma = 0 leaves 1/2 ||A f - g||_w^2 + alpha/2 ||f||^2, solved densely:
    // (w A^T A + alpha h^2 I) x = w A^T g
    const int n = 16;
    const Problem pb = make_problem(n, 24, 8);
    const double alpha = 1e-2;
    const double h2 = pb.grid.h() * pb.grid.h();
    const double w = pb.geom.weight();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(pb.a.rows(), pb.a.cols());
    for (std::size_t r = 0; r < pb.a.rows(); ++r)
        for (std::size_t k = pb.a.row_start[r]; k < pb.a.row_start[r + 1]; ++k) a(r, pb.a.column[k]) = pb.a.length[k];
    Eigen::VectorXd g(pb.g.size());
    for (std::size_t k = 0; k < pb.g.size(); ++k) g[k] = pb.g[k];
    const Eigen::MatrixXd lhs = w * a.transpose() * a + alpha * h2 * Eigen::MatrixXd::Identity(n * n, n * n);
    const Eigen::VectorXd x = lhs.ldlt().solve(w * a.transpose() * g);

    NidConfig cfg = pm1_config(0.0, 1.0);
    cfg.alpha = alpha;
    StopCriteria stop;
    // sufficient decrease on values cannot resolve gradients much below
    // sqrt(eps * T) ~ 1e-9, so give a budget that reaches that floor
    stop.max_iterations = 1000;
    stop.grad_tol = 1e-12;
    const auto res = solve_nid(pb.g, pb.a, cfg, LineSearchConfig{}, stop, Image(pb.grid));
    double err = 0.0;
    for (int k = 0; k < n * n; ++k) err += (res.f[k] - x[k]) * (res.f[k] - x[k]);
    EXPECT_LE(std::sqrt(err) / x.norm(), 1e-6);
}

TEST(Descend, StationaryTraceDecreasesWithArmijo)
{
    const Problem pb = make_problem(16, 12, 9);
    for (auto mode : {LineSearchConfig::Mode::armijo, LineSearchConfig::Mode::wolfe}) {
        LineSearchConfig ls;
        ls.mode = mode;
        StopCriteria stop;
        stop.max_iterations = 60;
        const auto res = solve_tv(pb.g, pb.a, TvConfig{0.01, 0.01, 0.0}, ls, stop, Image(pb.grid));
        const auto& rec = res.trace.records;
        ASSERT_GE(rec.size(), 2u);
        for (std::size_t k = 0; k + 1 < rec.size(); ++k) {
            EXPECT_GT(rec[k].t, 0.0);
            EXPECT_LE(rec[k + 1].value, rec[k].value - ls.mu * rec[k].t * rec[k].grad_norm * rec[k].grad_norm)
                << "iteration " << k;
        }
        EXPECT_TRUE(std::isnan(rec.back().t));
        EXPECT_EQ(rec[0].tau, ls.tau0);
    }
}

TEST(Descend, Deterministic)
{
    const Problem pb = make_problem(16, 12, 10);
    StopCriteria stop;
    stop.max_iterations = 25;
    const NidConfig cfg = pm1_config(0.01, 1.0);
    const auto a = solve_nid(pb.g, pb.a, cfg, LineSearchConfig{}, stop, Image(pb.grid));
    const auto b = solve_nid(pb.g, pb.a, cfg, LineSearchConfig{}, stop, Image(pb.grid));
    EXPECT_TRUE(a.f == b.f);
    std::ostringstream sa, sb;
    a.trace.write_csv(sa);
    b.trace.write_csv(sb);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Descend, ValueStagnationStops)
{
    const Problem pb = make_problem(8, 8, 11);
    StopCriteria stop;
    stop.max_iterations = 10000;
    stop.grad_tol = 0.0;
    stop.value_tol = 1e-6;
    const auto res = solve_tv(pb.g, pb.a, TvConfig{0.01, 0.01, 0.0}, LineSearchConfig{}, stop, Image(pb.grid));
    EXPECT_LT(res.trace.records.size(), 10001u);
}

TEST(Descend, NonFiniteObjectiveIsLineSearchError)
{
    Objective o;
    o.value = [](int, const Image&) { return std::numeric_limits<double>::quiet_NaN(); };
    o.evaluate = [](int, const Image& f) { return ValueGradient{std::numeric_limits<double>::quiet_NaN(), f}; };
    EXPECT_THROW(descend(o, Image(GridSpec(4), 1.0), LineSearchConfig{}, StopCriteria{}), LineSearchError);
}

TEST(TraceCsv, HeaderAndNan)
{
    std::mt19937_64 rng(12);
    const Image c = random_image(4, rng);
    StopCriteria stop;
    stop.max_iterations = 2;
    stop.grad_tol = 0.0;
    LineSearchConfig ls;
    ls.barzilai_borwein = false;
    ls.tau0 = 0.5;
    const auto res = descend(quadratic(c), Image(c.grid()), ls, stop);
    std::ostringstream os;
    res.trace.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "n,value,grad_norm,t_n,tau_n,omega,zeta,cond41_slack");
    std::getline(is, line);
    EXPECT_EQ(line.substr(0, 2), "0,");
    EXPECT_NE(line.find(",0.5,0.5,nan,nan,nan"), std::string::npos) << line;
    int rows = 1;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST(Anid, EndpointTracesMatchComponents)
{
    const Problem pb = make_problem(16, 12, 13);
    const NidConfig nid = pm1_config(0.01, 1.0);
    const TvConfig tv{0.01, 0.01, 0.0};
    const auto ls = anid_line_search();
    StopCriteria stop;
    stop.max_iterations = 30;
    const Image f0(pb.grid);

    const auto as_tv = solve_anid(pb.g, pb.a, nid, tv, AnidSchedule::constant(1.0), ls, stop, f0);
    const auto pure_tv = solve_tv(pb.g, pb.a, tv, ls, stop, f0);
    const auto as_nid = solve_anid(pb.g, pb.a, nid, tv, AnidSchedule::constant(0.0), ls, stop, f0);
    const auto pure_nid = solve_nid(pb.g, pb.a, nid, ls, stop, f0);

    EXPECT_TRUE(as_tv.f == pure_tv.f);
    EXPECT_TRUE(as_nid.f == pure_nid.f);
    ASSERT_EQ(as_tv.trace.records.size(), pure_tv.trace.records.size());
    for (std::size_t k = 0; k < as_tv.trace.records.size(); ++k) {
        EXPECT_EQ(as_tv.trace.records[k].value, pure_tv.trace.records[k].value);
        EXPECT_EQ(as_nid.trace.records[k].value, pure_nid.trace.records[k].value);
    }
}

TEST(Anid, VariationSlackSlackMatchesExplicitFormula)
{
    const Problem pb = make_problem(8, 8, 14);
    const NidConfig nid = pm1_config(0.005, 1.0);
    const TvConfig tv{0.01, 0.01, 0.0};
    const auto schedule = AnidSchedule::sigmoid(4.0, 0.8, 1.3);
    const AnidFunctional fn(pb.a, pb.g, nid, tv, schedule);
    const auto ls = anid_line_search();
    const int iterations = 8;
    StopCriteria stop;
    stop.max_iterations = iterations;
    stop.grad_tol = 0.0;
    const auto full = solve_anid(pb.g, pb.a, nid, tv, schedule, ls, stop, Image(pb.grid));
    ASSERT_EQ(full.trace.records.size(), static_cast<std::size_t>(iterations + 1));

    for (int n = 0; n < iterations; ++n) {
        StopCriteria upto = stop;
        upto.max_iterations = n + 1;
        const Image f_next = solve_anid(pb.g, pb.a, nid, tv, schedule, ls, upto, Image(pb.grid)).f;
        const auto now = fn.parts(n, f_next), next = fn.parts(n + 1, f_next);
        const auto& r = full.trace.records[n];
        const double expected = variation_slack(ls.mu, r.t, r.grad_norm * r.grad_norm, schedule.omega(n),
                                                  schedule.omega(n + 1), now.nid, now.tv, next.nid);
        EXPECT_NEAR(r.variation_slack, expected, 1e-10 * std::max(1.0, std::abs(r.value))) << n;
        EXPECT_EQ(r.omega, schedule.omega(n));
        EXPECT_EQ(r.zeta, schedule.zeta(n));
    }
    EXPECT_TRUE(std::isnan(full.trace.records.back().variation_slack));
}

TEST(Anid, AbruptSwitchViolatesVariationSlack)
{
    // a strong NID regularizer switched on at once raises the functional
    const Problem pb = make_problem(16, 12, 15);
    const NidConfig nid = pm1_config(5.0, 1.0);
    const TvConfig tv{1e-3, 0.01, 0.0};
    StopCriteria stop;
    stop.max_iterations = 10;
    stop.grad_tol = 0.0;
    const auto res =
        solve_anid(pb.g, pb.a, nid, tv, AnidSchedule::step(5), anid_line_search(), stop, Image(pb.grid));
    const auto bad = res.trace.variation_violations();
    ASSERT_FALSE(bad.empty());
    EXPECT_EQ(bad.front(), 4);
    EXPECT_LT(res.trace.records[4].variation_slack, 0.0);
}

TEST(Anid, SmoothScheduleDecreasesBlendedValue)
{
    const Problem pb = make_problem(16, 12, 16);
    const NidConfig nid = pm1_config(0.002, 1.0);
    const TvConfig tv{0.01, 0.01, 0.0};
    StopCriteria stop;
    stop.max_iterations = 80;
    const auto res = solve_anid(pb.g, pb.a, nid, tv, AnidSchedule::sigmoid(40.0, 0.1), anid_line_search(), stop,
                                Image(pb.grid));
    EXPECT_TRUE(res.trace.variation_violations().empty());
    const auto& rec = res.trace.records;
    for (std::size_t k = 0; k + 1 < rec.size(); ++k) EXPECT_LE(rec[k + 1].value, rec[k].value) << k;
}
