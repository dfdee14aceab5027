#include "dualpath/losses.hpp"

#include <doctest.h>

#include <cmath>

using namespace dualpath;

namespace {
Tensor filled(int n, int c, int l, double v) {
    Tensor t(n, c, l);
    t.fill(v);
    return t;
}
}  // namespace

TEST_SUITE("losses") {

TEST_CASE("recon loss: identity gives zero") {
    Rng rng(1);
    Tensor x(2, 1, 2048);
    for (auto& v : x.v) v = rng.normal();
    CHECK(losses::recon_loss(x, x) == 0.0);
}

TEST_CASE("recon loss: unit offset over a full window sums to 2048") {
    Tensor x = filled(1, 1, 2048, 0.0);
    Tensor xhat = filled(1, 1, 2048, 1.0);
    CHECK(losses::recon_loss(x, xhat) == doctest::Approx(2048.0));
}

TEST_CASE("recon loss: batch mean over per-item sums") {
    // two items with per-item sums {2048, 0} -> 1024
    Tensor x(2, 1, 2048), xhat(2, 1, 2048);
    for (int t = 0; t < 2048; ++t) xhat.at(0, 0, t) = 1.0;
    CHECK(losses::recon_loss(x, xhat) == doctest::Approx(1024.0));
}

TEST_CASE("distortion loss: antisymmetric pair gives 4K") {
    Rng rng(2);
    Tensor x(1, 1, 2048);
    for (auto& v : x.v) v = rng.normal();
    double k = 0.0;
    for (double v : x.v) k += v * v;
    Tensor neg = x;
    for (auto& v : neg.v) v = -v;
    CHECK(losses::distortion_loss(x, neg) == doctest::Approx(4.0 * k).epsilon(1e-12));
}

TEST_CASE("distortion loss matches recon loss bitwise on the same inputs") {
    Rng rng(3);
    Tensor a(3, 1, 2048), b(3, 1, 2048);
    for (auto& v : a.v) v = rng.normal();
    for (auto& v : b.v) v = rng.normal();
    CHECK(losses::distortion_loss(a, b) == losses::recon_loss(a, b));
}

TEST_CASE("perceptual loss: single discrepant entry") {
    const int n = 4;
    Tensor f(n, 8, 32), fhat(n, 8, 32);
    Rng rng(4);
    for (std::size_t i = 0; i < f.size(); ++i) fhat.v[i] = f.v[i] = rng.normal();
    fhat.at(2, 3, 7) += 3.0;
    CHECK(losses::perceptual_loss(f, fhat) == doctest::Approx(9.0 / n));
}

TEST_CASE("perceptual loss is invariant to a common constant shift") {
    Rng rng(5);
    Tensor f(2, 4, 16), fhat(2, 4, 16);
    for (auto& v : f.v) v = rng.normal();
    for (auto& v : fhat.v) v = rng.normal();
    const double before = losses::perceptual_loss(f, fhat);
    for (auto& v : f.v) v += 2.5;
    for (auto& v : fhat.v) v += 2.5;
    CHECK(losses::perceptual_loss(f, fhat) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("perceptual loss rejects shape mismatch") {
    Tensor f(1, 4, 16), fhat(1, 4, 8);
    CHECK_THROWS_AS(losses::perceptual_loss(f, fhat), InputError);
}

TEST_CASE("composite loss projections and the Fig-point example") {
    CHECK(losses::composite_loss(0.37, 99.0, {1.0, 0.0}) == doctest::Approx(0.37));
    CHECK(losses::composite_loss(99.0, 0.41, {0.0, 1.0}) == doctest::Approx(0.41));
    // weights of the first representative operating point
    CHECK(losses::composite_loss(0.01, 2.0, {700.0, 1.0}) == doctest::Approx(9.0));
}

TEST_CASE("composite loss: scaling both weights scales the value") {
    const losses::LossWeights w{3.0, 5.0};
    const losses::LossWeights cw{6.0, 10.0};
    const double a = losses::composite_loss(0.7, 0.2, w);
    const double b = losses::composite_loss(0.7, 0.2, cw);
    CHECK(b == doctest::Approx(2.0 * a));
}

TEST_CASE("composite loss rejects invalid inputs") {
    CHECK_THROWS_AS(losses::composite_loss(-0.1, 0.0, {1.0, 1.0}), InputError);
    CHECK_THROWS_AS(losses::composite_loss(0.1, 0.1, {0.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(losses::composite_loss(0.1, 0.1, {-1.0, 1.0}), ConfigError);
}

TEST_CASE("losses are nonnegative and zero only at identity") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a(2, 2, 32), b(2, 2, 32);
        for (auto& v : a.v) v = rng.normal();
        for (auto& v : b.v) v = rng.normal();
        const double l = losses::recon_loss(a, b);
        CHECK(l >= 0.0);
        CHECK(l > 0.0);  // random tensors differ almost surely
    }
}

TEST_CASE("composite linearity in the weights") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const double ld = std::abs(rng.normal());
        const double lp = std::abs(rng.normal());
        const losses::LossWeights w1{1.0, 2.0}, w2{4.0, 0.5};
        const double c1 = losses::composite_loss(ld, lp, w1);
        const double c2 = losses::composite_loss(ld, lp, w2);
        const losses::LossWeights sum{w1.lambda_d + w2.lambda_d, w1.lambda_p + w2.lambda_p};
        CHECK(losses::composite_loss(ld, lp, sum) == doctest::Approx(c1 + c2).epsilon(1e-12));
    }
}

}  // TEST_SUITE
