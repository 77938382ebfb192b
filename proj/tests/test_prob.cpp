#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mm/prob.hpp"

using namespace mm;

namespace {
Channel bsc(double d) {
    Tensor t = Tensor::zeros({2, 2});
    t.v = {1 - d, d, d, 1 - d};
    return Channel::make(std::move(t));
}
}  // namespace

TEST_CASE("entropy basics") {
    CHECK(entropy(ProbVec::make({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // H(0.05, 0.95) = 0.28640 bits
    CHECK(nats_to_bits(entropy(ProbVec::make({0.05, 0.95}))) == doctest::Approx(0.28640).epsilon(2e-5));
    CHECK(entropy(ProbVec::make({1.0, 0.0})) == doctest::Approx(0.0));
}

TEST_CASE("kl divergence identity and support") {
    auto p = ProbVec::make({0.3, 0.7});
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0));
    CHECK(std::isinf(kl_divergence(ProbVec::make({0.5, 0.5}), ProbVec::make({1.0, 0.0}))));
    // KL = 0 iff P = Q: a perturbed pair must have strictly positive divergence.
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_real_distribution<double> u(0.05, 0.95);
        double a = u(rng), b = u(rng);
        auto P = ProbVec::make({a, 1 - a});
        auto Q = ProbVec::make({b, 1 - b});
        const double d = kl_divergence(P, Q);
        if (std::abs(a - b) > 1e-10)
            CHECK(d > 0.0);
        else
            CHECK(d == doctest::Approx(0.0).epsilon(1e-10));
    }
}

TEST_CASE("mutual information of BSC(0.25) with uniform input") {
    const Tensor j = input_output_joint(bsc(0.25), ProbVec::make({0.5, 0.5}));
    const double mi = mutual_information(JointDist::make(j));
    CHECK(nats_to_bits(mi) == doctest::Approx(0.18872).epsilon(2e-5));
}

TEST_CASE("mutual information invariant under axis permutation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t = Tensor::zeros({3, 4});
        double s = 0;
        for (auto& x : t.v) {
            x = u(rng);
            s += x;
        }
        for (auto& x : t.v) x /= s;
        Tensor tt = Tensor::zeros({4, 3});
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 4; ++b) tt.v[static_cast<size_t>(b * 3 + a)] = t.v[static_cast<size_t>(a * 4 + b)];
        const double m1 = mutual_information(JointDist::make(t));
        const double m2 = mutual_information(JointDist::make(tt));
        CHECK(m1 == doctest::Approx(m2).epsilon(1e-10));
    }
}

TEST_CASE("product channel MI is additive") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int trial = 0; trial < 10; ++trial) {
        const Channel w1 = bsc(u(rng) * 0.5);
        const Channel w2 = bsc(u(rng) * 0.5);
        const double a1 = u(rng);
        const double a2 = u(rng);
        const auto qa = ProbVec::make({a1, 1 - a1});
        const auto qb = ProbVec::make({a2, 1 - a2});
        const Channel w12 = product_channel(w1, w2);
        std::vector<double> qp(4);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) qp[static_cast<size_t>(i * 2 + j)] = qa[i] * qb[j];
        const double mi12 =
            mutual_information(JointDist::make(input_output_joint(w12, ProbVec::make(qp))));
        const double mi1 = mutual_information(JointDist::make(input_output_joint(w1, qa)));
        const double mi2 = mutual_information(JointDist::make(input_output_joint(w2, qb)));
        CHECK(mi12 == doctest::Approx(mi1 + mi2).epsilon(1e-10));
    }
}

TEST_CASE("conditional MI matches chain rule") {
    // Random joint over (U, X, Y): I(U,X;Y) = I(U;Y) + I(X;Y|U).
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t = Tensor::zeros({2, 3, 3});
        double s = 0;
        for (auto& x : t.v) {
            x = u(rng);
            s += x;
        }
        for (auto& x : t.v) x /= s;
        const auto j = JointDist::make(t);
        const double lhs = mutual_information(j, {0, 1}, {2});
        const double rhs = mutual_information(j, {0}, {2}) + conditional_mutual_information(j, {1}, {2}, {0});
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("sum channel structure") {
    const Channel w1 = bsc(0.1);
    const Channel w2 = bsc(0.2);
    Tensor q1 = w1.k, q2 = w2.k;
    const auto [w, q] = sum_channel(w1, Metric::make(std::move(q1)), w2, Metric::make(std::move(q2)));
    CHECK(w.k.dims == std::vector<int>{4, 4});
    // Cross blocks identically zero in both kernels.
    for (int x = 0; x < 2; ++x)
        for (int y = 2; y < 4; ++y) {
            CHECK(w.k.v[static_cast<size_t>(x * 4 + y)] == 0.0);
            CHECK(q.k.v[static_cast<size_t>(x * 4 + y)] == 0.0);
        }
    for (int x = 2; x < 4; ++x)
        for (int y = 0; y < 2; ++y) {
            CHECK(w.k.v[static_cast<size_t>(x * 4 + y)] == 0.0);
            CHECK(q.k.v[static_cast<size_t>(x * 4 + y)] == 0.0);
        }
}

TEST_CASE("mac_from_mapping reproduces W'") {
    // psi(x1,x2) = 2 x1 + x2 with a 4-letter image.
    const MappingSpec m = MappingSpec::make(2, 2, 4, {0, 1, 2, 3});
    Tensor wp = Tensor::zeros({4, 4});
    const double d[4] = {0.02, 0.2, 0.025, 0.25};
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y) wp.v[static_cast<size_t>(x * 4 + y)] = (x == y) ? 1 - 3 * d[x] : d[x];
    Tensor qp = wp;
    const auto [w, q] = mac_from_mapping(m, Channel::make(std::move(wp)), Metric::make(std::move(qp)));
    CHECK(w.k.dims == std::vector<int>{2, 2, 4});
    CHECK(w.k.v[static_cast<size_t>((1 * 2 + 0) * 4 + 2)] == doctest::Approx(1 - 3 * 0.025));
    CHECK(q.k.v[static_cast<size_t>((0 * 2 + 1) * 4 + 1)] == doctest::Approx(1 - 3 * 0.2));
}

TEST_CASE("validation rejects bad inputs") {
    CHECK_THROWS_AS(ProbVec::make({0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(ProbVec::make({-0.1, 1.1}), std::invalid_argument);
    Tensor bad = Tensor::zeros({2, 2});
    bad.v = {0.9, 0.2, 0.5, 0.5};
    CHECK_THROWS_AS(Channel::make(std::move(bad)), std::invalid_argument);
    Tensor zq = Tensor::zeros({2, 2});  // metric with an all-zero input slice
    zq.v = {0.0, 0.0, 1.0, 0.5};
    CHECK_THROWS_AS(Metric::make(std::move(zq)), std::invalid_argument);
}
