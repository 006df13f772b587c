#include "nidrecon/metrics.hpp"
#include "nidrecon/phantom.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace nidrecon;

namespace {

// Direct 2-D windowed SSIM, one window at a time.
double reference_ssim(const Image& x, const Image& y, int w, double sigma)
{
    const int n = x.n(), r = w / 2;
    double lo = x[0], hi = x[0];
    for (double v : x.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
    double total_weight = 0.0;
    for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b) total_weight += std::exp(-(a * a + b * b) / (2.0 * sigma * sigma));
    double acc = 0.0;
    int count = 0;
    for (int ci = r; ci < n - r; ++ci)
        for (int cj = r; cj < n - r; ++cj) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int a = -r; a <= r; ++a)
                for (int b = -r; b <= r; ++b) {
                    const double wt = std::exp(-(a * a + b * b) / (2.0 * sigma * sigma)) / total_weight;
                    const double u = x(ci + a, cj + b), v = y(ci + a, cj + b);
                    mx += wt * u;
                    my += wt * v;
                    sxx += wt * u * u;
                    syy += wt * v * v;
                    sxy += wt * u * v;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return acc / count;
}

Image pixel_values(int n, std::initializer_list<double> v)
{
    Image f{GridSpec(n)};
    std::size_t k = 0;
    for (double x : v) f[k++] = x;
    return f;
}

} // namespace

TEST(Phantom, ModifiedIntensitiesAtKnownPoints)
{
    const auto e = shepp_logan_ellipses();
    ASSERT_EQ(e.size(), 10u);
    auto value_at = [&](double x1, double x2) {
        double v = 0.0;
        for (const auto& el : e)
            if (el.contains(x1, x2)) v += el.intensity;
        return v;
    };
    EXPECT_NEAR(value_at(0.0, 0.0), 0.2, 1e-15);   // brain matter
    EXPECT_NEAR(value_at(0.0, 0.9), 1.0, 1e-15);   // skull
    EXPECT_NEAR(value_at(0.22, 0.0), 0.0, 1e-15);  // right ventricle
    EXPECT_NEAR(value_at(0.0, 0.35), 0.3, 1e-15);  // upper blob
    EXPECT_NEAR(value_at(0.95, 0.95), 0.0, 1e-15); // outside the head
}

TEST(Phantom, ClassicTable)
{
    const auto e = shepp_logan_ellipses(PhantomTable::classic);
    double v = 0.0;
    for (const auto& el : e)
        if (el.contains(0.0, 0.0)) v += el.intensity;
    EXPECT_NEAR(v, 1.02, 1e-15);
    EXPECT_EQ(parse_phantom_table("classic"), PhantomTable::classic);
    EXPECT_EQ(parse_phantom_table("modified"), PhantomTable::modified);
    EXPECT_THROW(parse_phantom_table("toft"), ParameterError);
}

TEST(Phantom, RotatedEllipse)
{
    const EllipseSpec tall{0.0, 0.0, 0.1, 0.5, 0.0, 1.0}, turned{0.0, 0.0, 0.1, 0.5, 90.0, 1.0};
    EXPECT_TRUE(tall.contains(0.0, 0.45));
    EXPECT_FALSE(tall.contains(0.45, 0.0));
    EXPECT_TRUE(turned.contains(0.45, 0.0));
    EXPECT_FALSE(turned.contains(0.0, 0.45));
}

TEST(Phantom, SampledImage)
{
    const int n = 100;
    const Image f = shepp_logan_phantom(GridSpec(n));
    double lo = f[0], hi = f[0];
    for (double v : f.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_NEAR(lo, 0.0, 1e-15);
    EXPECT_NEAR(hi, 1.0, 1e-15);
    EXPECT_NEAR(f(50, 50), 0.2, 1e-15); // centre pixel (0.01, -0.01)
    EXPECT_EQ(f(0, 0), 0.0);
    // left-right mirror symmetry except for the ventricles and bottom blobs
    EXPECT_EQ(f(20, 30), f(20, 69));
}

TEST(Noise, ExactSnrAndDeterminism)
{
    const GridSpec grid(32);
    const SinogramGeometry geom(20, 21);
    const auto a = build_projection_matrix(grid, geom);
    const Sinogram clean = forward_project(a, shepp_logan_phantom(grid));
    for (double target : {0.0, 10.0, 19.4, 40.0}) {
        const Sinogram noisy = add_noise(clean, {target, 3});
        EXPECT_NEAR(snr(clean, noisy), target, 1e-10);
    }
    const Sinogram a1 = add_noise(clean, {19.4, 7}), a2 = add_noise(clean, {19.4, 7}), b = add_noise(clean, {19.4, 8});
    EXPECT_TRUE(a1 == a2);
    EXPECT_FALSE(a1 == b);
    EXPECT_TRUE(add_noise(clean, {INFINITY, 1}) == clean);
    EXPECT_THROW(add_noise(Sinogram(geom), {19.4, 1}), ParameterError);
    EXPECT_THROW(add_noise(clean, {NAN, 1}), ParameterError);
}

TEST(Noise, ZeroMeanRoughlyWhite)
{
    const SinogramGeometry geom(100, 101);
    Sinogram ones(geom);
    for (double& x : ones.data()) x = 1.0;
    const Sinogram noisy = add_noise(ones, {0.0, 11});
    double mean = 0.0;
    for (std::size_t k = 0; k < noisy.size(); ++k) mean += noisy[k] - 1.0;
    mean /= noisy.size();
    EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(static_cast<double>(noisy.size())));
}

TEST(Metrics, SnrAndPsnrExamples)
{
    EXPECT_NEAR(snr(pixel_values(2, {3, 4, 0, 0}), pixel_values(2, {3, 4.5, 0, 0})), 20.0, 1e-12);
    EXPECT_NEAR(psnr(pixel_values(2, {1, 0, 0, 0}), pixel_values(2, {1, 0, 0, 0.1})), 10.0 * std::log10(400.0), 1e-12);
    const Image f = pixel_values(2, {1, 2, 3, 4});
    EXPECT_TRUE(std::isinf(snr(f, f)));
    EXPECT_TRUE(std::isinf(psnr(f, f)));
    EXPECT_THROW(snr(f, Image(GridSpec(4))), DimensionError);
    EXPECT_THROW(psnr(f, Image(GridSpec(4))), DimensionError);
}

TEST(Metrics, SsimMatchesDirectWindows)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n : {8, 24}) {
        Image x{GridSpec(n)}, y{GridSpec(n)};
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] = u(rng);
            y[k] = 0.7 * x[k] + 0.3 * u(rng);
        }
        const int w = n < 11 ? 7 : 11;
        EXPECT_NEAR(ssim(x, y), reference_ssim(x, y, w, 1.5), 1e-12) << n;
    }
}

TEST(Metrics, SsimProperties)
{
    const Image f = shepp_logan_phantom(GridSpec(64));
    EXPECT_DOUBLE_EQ(ssim(f, f), 1.0);
    Image shifted = f;
    for (double& v : shifted.data()) v += 0.1;
    EXPECT_LT(ssim(f, shifted), 1.0);
    Image blurred = f;
    for (int i = 1; i < 63; ++i)
        for (int j = 1; j < 63; ++j) blurred(i, j) = 0.5 * f(i, j) + 0.125 * (f(i - 1, j) + f(i + 1, j) + f(i, j - 1) + f(i, j + 1));
    EXPECT_LT(ssim(f, blurred), 1.0);
    EXPECT_GT(ssim(f, blurred), ssim(f, Image(GridSpec(64))));
    const auto q = assess(f, f);
    EXPECT_TRUE(std::isinf(q.snr));
    EXPECT_EQ(q.ssim, 1.0);
}
