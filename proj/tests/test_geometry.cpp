#include "nidrecon/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nidrecon;

namespace {

Image random_image(int n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Image f{GridSpec(n)};
    for (double& x : f.data()) x = u(rng);
    return f;
}

VectorField random_field(int n, std::mt19937_64& rng)
{
    return VectorField(random_image(n, rng), random_image(n, rng));
}

} // namespace

TEST(Grid, PixelWidthAndCentres)
{
    GridSpec g(4);
    EXPECT_DOUBLE_EQ(g.h(), 0.5);
    EXPECT_DOUBLE_EQ(g.h() * g.n, 2.0);
    EXPECT_DOUBLE_EQ(g.x1(0), -0.75);
    EXPECT_DOUBLE_EQ(g.x1(3), 0.75);
    EXPECT_DOUBLE_EQ(g.x2(0), 0.75);
    EXPECT_DOUBLE_EQ(g.x2(3), -0.75);
    EXPECT_THROW(GridSpec(1), ParameterError);
}

TEST(Inner, ZeroConstantAndCheckerboard)
{
    GridSpec g2(2);
    EXPECT_DOUBLE_EQ(inner(Image(g2), Image(g2, 3.0)), 0.0);
    EXPECT_DOUBLE_EQ(inner(Image(g2, 1.0), Image(g2, 1.0)), 4.0);

    Image c(GridSpec(4));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) c(i, j) = (i + j) % 2 ? 1.0 : -1.0;
    EXPECT_DOUBLE_EQ(inner(c, c), 4.0); // h^2 * 16 with h = 1/2
}

TEST(Inner, GridMismatchThrows)
{
    EXPECT_THROW(inner(Image(GridSpec(4)), Image(GridSpec(8))), DimensionError);
}

TEST(Inner, SymmetricBilinearPositive)
{
    std::mt19937_64 rng(7);
    const Image a = random_image(8, rng), b = random_image(8, rng), c = random_image(8, rng);
    EXPECT_DOUBLE_EQ(inner(a, b), inner(b, a));
    EXPECT_NEAR(inner(2.0 * a + c, b), 2.0 * inner(a, b) + inner(c, b), 1e-12);
    EXPECT_GT(inner(a, a), 0.0);
}

TEST(GradFd, ConstantImageHasZeroGradient)
{
    const VectorField g = grad_fd(Image(GridSpec(5), 2.5));
    for (double v : g.c1.values()) EXPECT_EQ(v, 0.0);
    for (double v : g.c2.values()) EXPECT_EQ(v, 0.0);
}

TEST(GradFd, RampAlongX1)
{
    GridSpec grid(4);
    Image f(grid);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) f(i, j) = j * grid.h();
    const VectorField g = grad_fd(f);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(g.c1(i, j), 1.0, 1e-15);
        EXPECT_EQ(g.c1(i, 3), 0.0);
        for (int j = 0; j < 4; ++j) EXPECT_EQ(g.c2(i, j), 0.0);
    }
}

TEST(GradFd, HotPixelStencil)
{
    // f = 1 at (i,j) = (2,2), zero-based (1,1); h = 1/2
    GridSpec grid(4);
    Image f(grid);
    f(1, 1) = 1.0;
    const VectorField g = grad_fd(f);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double e1 = 0.0, e2 = 0.0;
            if (i == 1 && j == 0) e1 = 2.0;  // (f[1][1] - f[1][0]) / h
            if (i == 1 && j == 1) e1 = -2.0; // (f[1][2] - f[1][1]) / h
            if (i == 1 && j == 1) e2 = -2.0; // (f[0][1] - f[1][1]) / h
            if (i == 2 && j == 1) e2 = 2.0;  // (f[1][1] - f[2][1]) / h
            EXPECT_DOUBLE_EQ(g.c1(i, j), e1) << i << "," << j;
            EXPECT_DOUBLE_EQ(g.c2(i, j), e2) << i << "," << j;
        }
}

TEST(DivWeighted, ZeroWeightAndConstantImage)
{
    GridSpec grid(4);
    std::mt19937_64 rng(3);
    const Image f = random_image(4, rng);
    const Image zero_weight = div_weighted(Image(grid), grad_fd(f));
    for (double v : zero_weight.values()) EXPECT_EQ(v, 0.0);
    const Image flat = div_weighted(Image(grid, 1.0), grad_fd(Image(grid, 4.0)));
    for (double v : flat.values()) EXPECT_EQ(v, 0.0);
}

TEST(DivWeighted, HotPixelLaplacian)
{
    // hand composition of the two stencils with w = 1: the five-point
    // Laplacian (neighbours - 4 centre) / h^2 in the interior
    GridSpec grid(4);
    Image f(grid);
    f(1, 1) = 1.0;
    const Image lap = div_weighted(Image(grid, 1.0), grad_fd(f));
    const double s = 1.0 / (grid.h() * grid.h());
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double e = 0.0;
            if (i == 1 && j == 1) e = -4.0 * s;
            if ((i == 0 && j == 1) || (i == 2 && j == 1) || (i == 1 && j == 0) || (i == 1 && j == 2)) e = s;
            EXPECT_DOUBLE_EQ(lap(i, j), e) << i << "," << j;
        }
}

TEST(DivWeighted, BoundaryStencilDropsMissingNeighbours)
{
    // corner pixel (0,0): only the right and lower neighbours exist
    GridSpec grid(4);
    Image f(grid);
    f(0, 0) = 1.0;
    const Image lap = div_weighted(Image(grid, 1.0), grad_fd(f));
    const double s = 1.0 / (grid.h() * grid.h());
    EXPECT_DOUBLE_EQ(lap(0, 0), -2.0 * s);
    EXPECT_DOUBLE_EQ(lap(0, 1), s);
    EXPECT_DOUBLE_EQ(lap(1, 0), s);
}

TEST(DivWeighted, SummationByParts)
{
    std::mt19937_64 rng(11);
    for (int n : {4, 8, 16}) {
        for (int trial = 0; trial < 5; ++trial) {
            const Image f = random_image(n, rng), g = random_image(n, rng);
            Image lhs = div_weighted(Image(GridSpec(n), 1.0), grad_fd(f));
            lhs *= -1.0;
            const double a = inner(lhs, g);
            const double b = inner(grad_fd(f), grad_fd(g));
            EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(b))) << "n=" << n;
        }
    }
}

TEST(Divergence, NegativeAdjointOfGradient)
{
    std::mt19937_64 rng(5);
    for (int n : {4, 8, 16}) {
        const Image f = random_image(n, rng);
        const VectorField v = random_field(n, rng);
        const double a = inner(grad_fd(f), v);
        const double b = -inner(f, divergence(v));
        EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
    }
}

TEST(DivWeighted, Linearity)
{
    std::mt19937_64 rng(9);
    const Image w = random_image(8, rng);
    const VectorField a = random_field(8, rng), b = random_field(8, rng);
    VectorField sum(GridSpec(8));
    for (std::size_t k = 0; k < sum.c1.size(); ++k) {
        sum.c1[k] = 2.0 * a.c1[k] + b.c1[k];
        sum.c2[k] = 2.0 * a.c2[k] + b.c2[k];
    }
    const Image lhs = div_weighted(w, sum);
    const Image rhs = 2.0 * div_weighted(w, a) + div_weighted(w, b);
    for (std::size_t k = 0; k < lhs.size(); ++k) EXPECT_NEAR(lhs[k], rhs[k], 1e-12 * std::max(1.0, std::abs(rhs[k])));
}

TEST(DivWeighted, GridMismatchThrows)
{
    EXPECT_THROW(div_weighted(Image(GridSpec(4)), VectorField(GridSpec(8))), DimensionError);
}
