#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mm/io.hpp"
#include "mm/mac.hpp"
#include "mm/prob.hpp"

using namespace mm;

namespace {

ProbVec dirichlet(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(static_cast<size_t>(n));
    double s = 0.0;
    for (auto& x : p) {
        x = -std::log(u(rng) + 1e-12);
        s += x;
    }
    for (auto& x : p) x /= s;
    return ProbVec::make(p);
}

MacInstance random_mac(std::mt19937& rng, int n1, int n2, int ny, bool matched = false) {
    Tensor w = Tensor::zeros({n1, n2, ny});
    for (int x1 = 0; x1 < n1; ++x1)
        for (int x2 = 0; x2 < n2; ++x2) {
            ProbVec row = dirichlet(rng, ny);
            for (int y = 0; y < ny; ++y)
                w.v[static_cast<size_t>((x1 * n2 + x2) * ny + y)] = row[y];
        }
    Tensor q = w;
    if (!matched) {
        std::uniform_real_distribution<double> uq(0.05, 1.0);
        for (auto& v : q.v) v = uq(rng);
    }
    return MacInstance::make(Channel::make(w), Metric::make(q), dirichlet(rng, n1),
                             dirichlet(rng, n2));
}

MacInstance load_parallel() {
    InstanceFile f = load_instance(data_dir() + "/parallel_bsc.json");
    return MacInstance::make(*f.W, *f.q, *f.Q1, *f.Q2);
}

MacInstance load_mapped() {
    InstanceFile f = load_instance(data_dir() + "/mac_fig3.json");
    auto [W, q] = mac_from_mapping(*f.psi, *f.W_prime, *f.q_prime);
    return MacInstance::make(W, q, *f.Q1, *f.Q2);
}

double h2(double d) { return -d * std::log(d) - (1.0 - d) * std::log(1.0 - d); }

// Single-user capacities of the two parallel binary channels, in nats.
const double kC1 = std::log(2.0) - h2(0.05);
const double kC2 = std::log(2.0) - h2(0.25);

}  // namespace

TEST_CASE("instance validation and explicit time sharing") {
    MacInstance mi = load_parallel();
    CHECK(!mi.matched());
    MacInstance matched = MacInstance::make(mi.W, Metric::make(mi.W.k), mi.Q1, mi.Q2);
    CHECK(matched.matched());

    Tensor bad = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(MacInstance::make(Channel::make(bad), mi.q, mi.Q1, mi.Q2),
                    std::invalid_argument);

    RatePoint p1{0.4, 0.1}, p2{0.1, 0.5};
    auto [ra, ea] = explicit_ts_combine(p1, 0.3, p2, 0.7, 1.0);
    CHECK(ra.R1 == 0.4);
    CHECK(ea == 0.3);
    auto [rb, eb] = explicit_ts_combine(p1, 0.3, p2, 0.7, 0.0);
    CHECK(rb.R2 == 0.5);
    CHECK(eb == 0.7);
    auto [rc, ec] = explicit_ts_combine(p1, 0.3, p2, 0.7, 0.5);
    CHECK(std::abs(rc.R1 - 0.25) < 1e-15);
    CHECK(std::abs(rc.R2 - 0.3) < 1e-15);
    CHECK(std::abs(ec - 0.15) < 1e-15);
    auto [rd, ed] = explicit_ts_combine(p1, 0.3, p2, 0.7, 0.25);
    CHECK(std::abs(ed - std::min(0.25 * 0.3, 0.75 * 0.7)) < 1e-15);
    CHECK(std::abs(rd.R1 - (0.25 * 0.4 + 0.75 * 0.1)) < 1e-15);
    CHECK_THROWS_AS(explicit_ts_combine(p1, 0.3, p2, 0.7, 1.2), std::invalid_argument);
    CHECK_THROWS_AS(explicit_ts_combine(p1, 0.3, p2, 0.7, -0.1), std::invalid_argument);
}

TEST_CASE("exponents vanish above the rate caps") {
    std::mt19937 rng(101);
    MacInstance mi = random_mac(rng, 2, 2, 3);
    RatePoint big{std::log(2.0) + 0.2, std::log(2.0) + 0.2};
    for (MacKind k : {MacKind::er1, MacKind::er2, MacKind::er12, MacKind::er12_naive}) {
        ExponentResult r = mac_exponent(mi, big, k);
        CHECK(r.value <= 2e-5);
        CHECK(r.form == Form::primal);
        CHECK(r.kind == k);
    }
    ExponentResult all = mac_exponent(mi, big, MacKind::overall);
    CHECK(all.value <= 2e-5);
    CHECK(all.kind == MacKind::overall);
    CHECK_THROWS_AS(mac_exponent(mi, RatePoint{-0.1, 0.2}, MacKind::er1), std::invalid_argument);
}

TEST_CASE("exponents are monotone and bounded by feasible points") {
    std::mt19937 rng(202);
    MacInstance mi = random_mac(rng, 2, 2, 2);
    Tensor joint = input_output_joint(mi.W, mi.Q1, mi.Q2);
    JointDist jd = JointDist::make(joint);
    const double i1full = mutual_information(jd, {0}, {1, 2});
    const double i2full = mutual_information(jd, {1}, {0, 2});
    const double i1y = mutual_information(jd, {0}, {2});
    const double i2y = mutual_information(jd, {1}, {2});
    const double isum = mutual_information(jd, {0, 1}, {2});

    RatePoint lo{0.05, 0.05}, mid{0.15, 0.1}, hi{0.3, 0.25};
    const double e_lo = mac_exponent(mi, lo, MacKind::er12).value;
    const double e_mid = mac_exponent(mi, mid, MacKind::er12).value;
    const double e_hi = mac_exponent(mi, hi, MacKind::er12).value;
    CHECK(e_lo >= e_mid - 1e-6);
    CHECK(e_mid >= e_hi - 1e-6);

    const double er1 = mac_exponent(mi, mid, MacKind::er1).value;
    const double er2 = mac_exponent(mi, mid, MacKind::er2).value;
    const double er12 = e_mid;
    const double naive = mac_exponent(mi, mid, MacKind::er12_naive).value;
    CHECK(er1 <= std::max(0.0, i1full - mid.R1) + 1e-5);
    CHECK(er2 <= std::max(0.0, i2full - mid.R2) + 1e-5);
    const double cap12 = std::max(
        0.0, std::max(i1y - mid.R1, std::max(i2y - mid.R2, isum - mid.R1 - mid.R2)));
    CHECK(er12 <= cap12 + 1e-5);
    CHECK(er12 >= naive - 1e-6);

    ExponentResult all = mac_exponent(mi, mid, MacKind::overall);
    CHECK(std::abs(all.value - std::min({er1, er2, er12})) <= 2e-5);
}

TEST_CASE("split exponents reproduce the joint two-rho form") {
    std::mt19937 rng(303);
    std::uniform_real_distribution<double> ur(0.03, 0.45);
    for (int t = 0; t < 8; ++t) {
        MacInstance mi = random_mac(rng, 2, t % 2 ? 3 : 2, 2);
        RatePoint r{ur(rng), ur(rng)};
        const double er12 = mac_exponent(mi, r, MacKind::er12).value;
        SplitExponents s = mac_exponent_split(mi, r);
        CHECK(s.er12_1 <= er12 + 2e-5);
        CHECK(s.er12_2 <= er12 + 2e-5);
        CHECK(std::abs(s.combined - er12) <= 2e-4);
    }
}

TEST_CASE("user symmetry maps one split exponent onto the other") {
    // Symmetric kernel: swapping the users and relabeling nothing else leaves
    // the instance invariant, so the two split exponents must coincide.
    Tensor w = Tensor::zeros({2, 2, 2});
    auto set = [&](int x1, int x2, int y, double v) {
        w.v[static_cast<size_t>((x1 * 2 + x2) * 2 + y)] = v;
    };
    set(0, 0, 0, 0.9);
    set(0, 0, 1, 0.1);
    set(0, 1, 0, 0.55);
    set(0, 1, 1, 0.45);
    set(1, 0, 0, 0.55);
    set(1, 0, 1, 0.45);
    set(1, 1, 0, 0.15);
    set(1, 1, 1, 0.85);
    Tensor q = w;
    for (auto& v : q.v) v = std::pow(v, 1.3);
    MacInstance mi = MacInstance::make(Channel::make(w), Metric::make(q),
                                       ProbVec::make({0.5, 0.5}), ProbVec::make({0.5, 0.5}));
    RatePoint r{0.12, 0.12};
    SplitExponents s = mac_exponent_split(mi, r);
    CHECK(std::abs(s.er12_1 - s.er12_2) <= 2e-5);
}

TEST_CASE("dual exponents certify the primal values") {
    std::mt19937 rng(404);
    std::uniform_real_distribution<double> ur(0.05, 0.4);
    for (int t = 0; t < 6; ++t) {
        MacInstance mi = random_mac(rng, 2, 2, 2);
        RatePoint r{ur(rng), ur(rng)};
        for (MacKind k : {MacKind::er1, MacKind::er2, MacKind::er12_naive}) {
            const double p = mac_exponent(mi, r, k).value;
            const double d = mac_exponent_dual(mi, r, k).value;
            CHECK(d <= p + 1e-4);
            CHECK(d >= p - 1e-3);
        }
        if (t < 3) {
            for (MacKind k : {MacKind::er12_split1, MacKind::er12_split2}) {
                const double p = mac_exponent(mi, r, k).value;
                const double d = mac_exponent_dual(mi, r, k).value;
                CHECK(d <= p + 1e-4);
                CHECK(d >= p - 1e-3);
            }
        }
    }
    // Zero tilts evaluate to exactly zero.
    MacInstance mi = random_mac(rng, 2, 2, 2);
    std::vector<double> th0(static_cast<size_t>(1 + 2 * (2 + 2)), 0.0);
    th0[0] = 1.0;
    CHECK(std::abs(mac_e0_12_1(mi, 0.0, 0.7, th0)) <= 1e-12);
    std::vector<double> ths(static_cast<size_t>(1 + 2 + 2 + 2), 0.0);
    ths[0] = 1.0;
    CHECK(std::abs(mac_e0_1(mi, 0.0, ths)) <= 1e-12);
    CHECK_THROWS_AS(mac_e0_1(mi, 0.5, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("parallel binary channels: region is the capacity rectangle") {
    MacInstance mi = load_parallel();
    MacRegion reg = mac_region(mi, 13);
    CHECK(std::abs(nats_to_bits(reg.r1_cap) - 0.713603) <= 1e-4);
    CHECK(std::abs(nats_to_bits(reg.r2_cap) - 0.188722) <= 1e-4);
    CHECK(std::abs(reg.corner_right.R2 - reg.r2_cap) <= 1e-4);
    CHECK(std::abs(reg.corner_top.R1 - reg.r1_cap) <= 1e-4);
    CHECK(reg.best_sum >= kC1 + kC2 - 2e-4);

    const double naive = mac_region_naive_sum(mi);
    CHECK(nats_to_bits(naive) <= 0.78032 + 1e-4);
    CHECK(nats_to_bits(naive) >= 0.78032 - 2e-3);
}

TEST_CASE("parallel binary channels: naive exponent threshold") {
    MacInstance mi = load_parallel();
    // The naive joint-error exponent is positive exactly while the scaled rate
    // pair alpha*(C1, C2) stays below the naive sum bound.
    const double naive = mac_region_naive_sum(mi);
    const double alpha_star = naive / (kC1 + kC2);
    CHECK(std::abs(alpha_star - 0.865) <= 0.01);

    auto at = [&](double alpha) { return RatePoint{alpha * kC1, alpha * kC2}; };
    CHECK(mac_exponent_dual(mi, at(0.84), MacKind::er12_naive).value > 1e-6);
    CHECK(mac_exponent(mi, at(0.875), MacKind::er12_naive).value <= 1e-5);
    // The refined form survives past the naive threshold.
    CHECK(mac_exponent_dual(mi, at(0.90), MacKind::er12).value > 1e-4);
    CHECK(mac_exponent_dual(mi, at(0.99), MacKind::er12).value > 1e-7);

    RatePoint r = at(0.90);
    const double er12 = mac_exponent(mi, r, MacKind::er12).value;
    SplitExponents s = mac_exponent_split(mi, r);
    CHECK(std::abs(s.combined - er12) <= 2e-4);
    CHECK(er12 > mac_exponent(mi, r, MacKind::er12_naive).value + 1e-4);
}

TEST_CASE("mapped channel: region corners match the published values") {
    MacInstance mi = load_mapped();
    MacRegion reg = mac_region(mi, 13);
    CHECK(std::abs(nats_to_bits(reg.r1_cap) - 0.2687) <= 0.003);
    CHECK(std::abs(nats_to_bits(reg.r2_cap) - 0.3944) <= 0.003);
    CHECK(std::abs(nats_to_bits(reg.corner_right.R2) - 0.2392) <= 0.003);
    CHECK(std::abs(nats_to_bits(reg.corner_top.R1) - 0.1412) <= 0.003);
    CHECK(std::abs(reg.corner_top.R2 - reg.r2_cap) <= 1e-9);

    const double naive = mac_region_naive_sum(mi);
    CHECK(std::abs(nats_to_bits(naive) - 0.5080) <= 0.003);
    CHECK(std::abs(nats_to_bits(naive - reg.r2_cap) - 0.1136) <= 0.003);
    // The refined corner beats the naive one on the top edge.
    CHECK(reg.corner_top.R1 > naive - reg.r2_cap + 5e-3);
    CHECK(reg.best_sum >= reg.corner_top.R1 + reg.corner_top.R2 - 1e-9);
    for (const RegionPoint& pt : reg.boundary) CHECK(pt.ok);
}

TEST_CASE("sum-rate families agree with the joint side-constrained program") {
    MacInstance mi = load_mapped();
    MacRegion reg = mac_region(mi, 7);
    auto verdict = [&](const RatePoint& r) {
        const double joint = mac_sum_bound_joint(mi, r);
        const double f1 = mac_sum_bound_family(mi, 1, r.R1);
        const double f2 = mac_sum_bound_family(mi, 2, r.R2);
        const bool by_joint = r.R1 + r.R2 <= joint + 1e-9;
        const bool by_family = r.R1 + r.R2 <= f1 + 1e-9 || r.R1 + r.R2 <= f2 + 1e-9;
        return std::make_pair(by_joint, by_family);
    };
    auto [aj, af] = verdict({0.3 * reg.r1_cap, 0.3 * reg.r2_cap});
    CHECK(aj);
    CHECK(af);
    auto [bj, bf] = verdict({0.97 * reg.r1_cap, 0.97 * reg.r2_cap});
    CHECK(!bj);
    CHECK(!bf);
    auto [cj, cf] = verdict({0.1 * reg.r1_cap, 0.9 * reg.r2_cap});
    CHECK(cj == cf);
    // Grid sum curves are certified lower bounds of the exact family values.
    const double exact = mac_sum_bound_family(mi, 1, reg.grid1[3]);
    CHECK(reg.sum1[3] <= exact + 2e-5);
}

TEST_CASE("dual membership certificates match the region") {
    MacInstance mi = load_mapped();
    MacRegion reg = mac_region(mi, 7);
    RatePoint inside{0.9 * reg.corner_top.R1, 0.9 * reg.corner_top.R2};
    MacDualMembership in = mac_region_dual_check(mi, inside);
    CHECK(in.member);
    CHECK(in.r1_bound >= reg.r1_cap - 1e-3);
    CHECK(in.r2_bound >= reg.r2_cap - 1e-3);
    RatePoint outside{1.15 * reg.r1_cap, 1.15 * reg.r2_cap};
    CHECK(!mac_region_dual_check(mi, outside).member);
    RatePoint sum_violating{0.97 * reg.r1_cap, 0.97 * reg.r2_cap};
    CHECK(!mac_region_dual_check(mi, sum_violating).member);
}

TEST_CASE("matched decoding: dedicated forms agree with the generic ones") {
    std::mt19937 rng(505);
    std::uniform_real_distribution<double> ur(0.04, 0.35);
    for (int t = 0; t < 3; ++t) {
        MacInstance mi = random_mac(rng, 2, 2, 2, true);
        for (int k = 0; k < 2; ++k) {
            RatePoint r{ur(rng), ur(rng)};
            MlExponents ml = ml_exponents(mi, r);
            CHECK(std::abs(ml.er1 - mac_exponent(mi, r, MacKind::er1).value) <= 1e-4);
            CHECK(std::abs(ml.er2 - mac_exponent(mi, r, MacKind::er2).value) <= 1e-4);
            CHECK(std::abs(ml.er12_naive -
                           mac_exponent(mi, r, MacKind::er12_naive).value) <= 1e-4);
            CHECK(std::abs(ml.min_refined - ml.min_naive) <= 1e-5);
            CHECK(ml.er1_dual <= ml.er1 + 1e-4);
            CHECK(ml.er1_dual >= ml.er1 - 1e-3);
            CHECK(ml.er2_dual <= ml.er2 + 1e-4);
            CHECK(ml.er2_dual >= ml.er2 - 1e-3);
            CHECK(ml.er12_naive_dual <= ml.er12_naive + 1e-4);
            CHECK(ml.er12_naive_dual >= ml.er12_naive - 1e-3);
        }
    }
    MacInstance mm = random_mac(rng, 2, 2, 2, false);
    CHECK_THROWS_AS(ml_exponents(mm, RatePoint{0.1, 0.1}), std::invalid_argument);
}

TEST_CASE("matched duals: parameter translation is exact and iid costs never win") {
    std::mt19937 rng(606);
    MacInstance mi = random_mac(rng, 2, 3, 2, true);
    const int n1 = 2, n2 = 3;
    std::uniform_real_distribution<double> ua(-1.0, 1.0);
    for (double rho : {0.0, 0.37, 1.0}) {
        std::vector<double> a(static_cast<size_t>(n1 + n2));
        for (auto& v : a) v = ua(rng);
        const double ml12 = ml_e0(mi, 12, rho, a);
        std::vector<double> th(static_cast<size_t>(1 + 2 * (n1 + n2)));
        th[0] = 1.0 / (1.0 + rho);
        for (int i = 0; i < n1; ++i) {
            th[static_cast<size_t>(1 + i)] = a[static_cast<size_t>(i)];
            th[static_cast<size_t>(1 + n1 + n2 + i)] = (1.0 + rho) * a[static_cast<size_t>(i)];
        }
        for (int i = 0; i < n2; ++i) {
            th[static_cast<size_t>(1 + n1 + i)] = a[static_cast<size_t>(n1 + i)];
            th[static_cast<size_t>(1 + 2 * n1 + n2 + i)] =
                (1.0 + rho) * a[static_cast<size_t>(n1 + i)];
        }
        CHECK(std::abs(ml12 - mac_e0_12_1(mi, rho, 1.0, th)) <= 1e-9);

        const double ml1 = ml_e0(mi, 1, rho, a);
        std::vector<double> t1(static_cast<size_t>(1 + 2 * n1 + n2));
        t1[0] = 1.0 / (1.0 + rho);
        for (int i = 0; i < n1; ++i) {
            t1[static_cast<size_t>(1 + i)] = a[static_cast<size_t>(i)];
            t1[static_cast<size_t>(1 + n1 + i)] = (1.0 + rho) * a[static_cast<size_t>(i)];
        }
        for (int i = 0; i < n2; ++i)
            t1[static_cast<size_t>(1 + 2 * n1 + i)] = (1.0 + rho) * a[static_cast<size_t>(n1 + i)];
        CHECK(std::abs(ml1 - mac_e0_1(mi, rho, t1)) <= 1e-9);
    }
    // The iid (zero-cost) evaluation is a valid lower bound on the optimized dual.
    RatePoint r{0.1, 0.15};
    const double opt = ml_exponent_dual(mi, r, 12).value;
    std::vector<double> zero(static_cast<size_t>(n1 + n2), 0.0);
    for (double rho : {0.3, 0.8})
        CHECK(ml_e0(mi, 12, rho, zero) - rho * (r.R1 + r.R2) <= opt + 1e-9);
}

TEST_CASE("metric zeros on channel support collapse rates and exponents") {
    Tensor w = Tensor::zeros({2, 2, 2});
    Tensor q = Tensor::zeros({2, 2, 2});
    for (int z = 0; z < 8; ++z) {
        w.v[static_cast<size_t>(z)] = z % 2 ? 0.3 : 0.7;
        q.v[static_cast<size_t>(z)] = z % 2 ? 0.4 : 0.6;
    }
    q.v[0] = 0.0;  // channel mass meets a vanished metric
    MacInstance mi = MacInstance::make(Channel::make(w), Metric::make(q),
                                       ProbVec::make({0.5, 0.5}), ProbVec::make({0.5, 0.5}));
    MacRegion reg = mac_region(mi, 5);
    CHECK(reg.r1_cap <= 1e-9);
    CHECK(reg.r2_cap <= 1e-9);
    CHECK(mac_region_naive_sum(mi) <= 1e-9);
    RatePoint r{0.05, 0.05};
    CHECK(mac_exponent(mi, r, MacKind::er12).value <= 1e-6);
    CHECK(mac_exponent(mi, r, MacKind::er1).value <= 1e-6);
    CHECK(mac_exponent_dual(mi, r, MacKind::er12_naive).value <= 1e-9);
}

TEST_CASE("expurgated region: matched pentagon and mismatched rectangle") {
    std::mt19937 rng(707);
    MacInstance mi = random_mac(rng, 2, 2, 3, true);
    Tensor joint = input_output_joint(mi.W, mi.Q1, mi.Q2);
    JointDist jd = JointDist::make(joint);
    const double cmi1 = conditional_mutual_information(jd, {0}, {2}, {1});
    const double cmi2 = conditional_mutual_information(jd, {1}, {2}, {0});
    const double isum = mutual_information(jd, {0, 1}, {2});
    MacRegion reg = expurgated_region(mi, 9);
    CHECK(std::abs(reg.r1_cap - cmi1) <= 2e-3);
    CHECK(std::abs(reg.r2_cap - cmi2) <= 2e-3);
    CHECK(std::abs(reg.best_sum - std::min(isum, cmi1 + cmi2)) <= 3e-3);

    MacInstance par = load_parallel();
    MacRegion ex = expurgated_region(par, 9);
    CHECK(std::abs(ex.r1_cap - kC1) <= 1e-3);
    CHECK(std::abs(ex.r2_cap - kC2) <= 1e-3);
    CHECK(std::abs(nats_to_bits(ex.best_sum) - 0.902325) <= 2e-3);
    CHECK(std::abs(ex.corner_right.R2 - ex.r2_cap) <= 1e-3);

    // The families are nonincreasing in their rate argument, so whichever one
    // certifies the rectangle corner also certifies it at half rate.
    const double fam = std::max(expurgated_sum_bound_family(par, 1, 0.5 * kC1),
                                expurgated_sum_bound_family(par, 2, 0.5 * kC2));
    CHECK(fam >= kC1 + kC2 - 1e-3);
}

TEST_CASE("expurgated membership certificates") {
    MacInstance par = load_parallel();
    MacDualMembership in = expurgated_region_dual_check(par, {0.98 * kC1, 0.98 * kC2});
    CHECK(in.member);
    CHECK(in.r1_bound >= kC1 - 1e-3);
    CHECK(in.r2_bound >= kC2 - 1e-3);
    MacDualMembership out = expurgated_region_dual_check(par, {1.1 * kC1, 0.5 * kC2});
    CHECK(!out.member);
}
