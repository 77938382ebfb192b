#include "mm/union_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mm {

namespace {

bool is_indicator(const Tensor& t) {
    for (double v : t.v)
        if (v != 0.0 && v != 1.0) return false;
    return true;
}

// P[drawn-value-set == S] for every subset S of one axis, via Moebius inversion
// of P[all draws land in S] = P(S)^M.
std::vector<double> set_prob_table(const ProbVec& P, long long M) {
    const int n = P.size();
    std::vector<double> cum(static_cast<size_t>(1) << n, 0.0);
    for (uint32_t S = 0; S < cum.size(); ++S) {
        double ps = 0.0;
        for (int z = 0; z < n; ++z)
            if (S >> z & 1u) ps += P[z];
        cum[S] = std::pow(ps, static_cast<double>(M));
    }
    for (int z = 0; z < n; ++z)
        for (uint32_t S = 0; S < cum.size(); ++S)
            if (S >> z & 1u) cum[S] -= cum[S ^ (1u << z)];
    return cum;
}

double k_exact(const std::vector<ProbVec>& PZ, const std::vector<long long>& M, const Tensor& A) {
    const int K = static_cast<int>(PZ.size());
    // Close over the axis with the largest alphabet; enumerate subsets of the rest.
    int last = 0;
    for (int k = 1; k < K; ++k)
        if (PZ[static_cast<size_t>(k)].size() > PZ[static_cast<size_t>(last)].size()) last = k;

    double combos = 1.0;
    for (int k = 0; k < K; ++k)
        if (k != last) combos *= std::pow(2.0, PZ[static_cast<size_t>(k)].size());
    if (combos > (1 << 22)) throw BudgetExceeded("exact_union_prob: support enumeration too large");

    std::vector<std::vector<double>> tables;
    std::vector<int> open;  // axes being enumerated
    for (int k = 0; k < K; ++k)
        if (k != last) {
            tables.push_back(set_prob_table(PZ[static_cast<size_t>(k)], M[static_cast<size_t>(k)]));
            open.push_back(k);
        }

    const int nlast = PZ[static_cast<size_t>(last)].size();
    const int cells = A.cells();
    std::vector<int> idx(static_cast<size_t>(K));

    double miss = 0.0;
    std::vector<uint32_t> masks(open.size(), 0);
    while (true) {
        double w = 1.0;
        for (size_t t = 0; t < open.size(); ++t) w *= tables[t][masks[t]];
        if (w != 0.0) {
            // hit-set on the closing axis given the drawn value sets
            std::vector<uint8_t> bad(static_cast<size_t>(nlast), 0);
            for (int c = 0; c < cells; ++c) {
                if (A.v[static_cast<size_t>(c)] == 0.0) continue;
                A.decode(c, idx);
                bool in = true;
                for (size_t t = 0; t < open.size() && in; ++t)
                    in = (masks[t] >> idx[static_cast<size_t>(open[t])]) & 1u;
                if (in) bad[static_cast<size_t>(idx[static_cast<size_t>(last)])] = 1;
            }
            double pbad = 0.0;
            for (int z = 0; z < nlast; ++z)
                if (bad[static_cast<size_t>(z)]) pbad += PZ[static_cast<size_t>(last)][z];
            miss += w * std::pow(std::max(0.0, 1.0 - pbad),
                                 static_cast<double>(M[static_cast<size_t>(last)]));
        }
        size_t t = 0;
        for (; t < open.size(); ++t) {
            const uint32_t top = 1u << PZ[static_cast<size_t>(open[t])].size();
            if (++masks[t] < top) break;
            masks[t] = 0;
        }
        if (t == open.size()) break;
    }
    return std::min(1.0, std::max(0.0, 1.0 - miss));
}

// P[(Z1,Z2) in A | Z1 = z1] for every z1 (and the mirrored version).
std::vector<double> hit_given_z1(const UnionInstance& in) {
    const int n1 = in.PZ1.size(), n2 = in.PZ2.size();
    std::vector<double> h(static_cast<size_t>(n1), 0.0);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            if (in.A.v[static_cast<size_t>(i * n2 + j)] != 0.0) h[static_cast<size_t>(i)] += in.PZ2[j];
    return h;
}
std::vector<double> hit_given_z2(const UnionInstance& in) {
    const int n1 = in.PZ1.size(), n2 = in.PZ2.size();
    std::vector<double> h(static_cast<size_t>(n2), 0.0);
    for (int j = 0; j < n2; ++j)
        for (int i = 0; i < n1; ++i)
            if (in.A.v[static_cast<size_t>(i * n2 + j)] != 0.0) h[static_cast<size_t>(j)] += in.PZ1[i];
    return h;
}

}  // namespace

UnionInstance UnionInstance::make(ProbVec PZ1, ProbVec PZ2, long long M1, long long M2, Tensor A) {
    if (M1 < 1 || M2 < 1) throw std::invalid_argument("UnionInstance: M must be positive");
    if (A.rank() != 2 || A.dims[0] != PZ1.size() || A.dims[1] != PZ2.size())
        throw std::invalid_argument("UnionInstance: indicator shape mismatch");
    if (!is_indicator(A)) throw std::invalid_argument("UnionInstance: A must be 0/1 valued");
    return {std::move(PZ1), std::move(PZ2), M1, M2, std::move(A)};
}

KUnionInstance KUnionInstance::make(std::vector<ProbVec> PZ, std::vector<long long> M, Tensor A) {
    const int K = static_cast<int>(PZ.size());
    if (K < 1 || K > 4) throw std::invalid_argument("KUnionInstance: need 1 <= K <= 4");
    if (static_cast<int>(M.size()) != K || A.rank() != K)
        throw std::invalid_argument("KUnionInstance: rank mismatch");
    for (int k = 0; k < K; ++k) {
        if (M[static_cast<size_t>(k)] < 1) throw std::invalid_argument("KUnionInstance: M must be positive");
        if (A.dims[static_cast<size_t>(k)] != PZ[static_cast<size_t>(k)].size())
            throw std::invalid_argument("KUnionInstance: indicator shape mismatch");
    }
    if (!is_indicator(A)) throw std::invalid_argument("KUnionInstance: A must be 0/1 valued");
    return {std::move(PZ), std::move(M), std::move(A)};
}

double exact_union_prob(const UnionInstance& inst, bool iid_pairwise) {
    (void)iid_pairwise;  // declarative: full independence subsumes it
    if (inst.M1 * inst.M2 > 1000000LL)
        throw BudgetExceeded("exact_union_prob: M1*M2 beyond the oracle budget");
    return k_exact({inst.PZ1, inst.PZ2}, {inst.M1, inst.M2}, inst.A);
}

double exact_union_prob(const KUnionInstance& inst) {
    double mp = 1.0;
    for (long long m : inst.M) mp *= static_cast<double>(m);
    if (mp > 1e6) throw BudgetExceeded("exact_union_prob: message count beyond the oracle budget");
    return k_exact(inst.PZ, inst.M, inst.A);
}

double upper_bound_general(const UnionInstance& inst) {
    const auto h1 = hit_given_z1(inst);
    const auto h2 = hit_given_z2(inst);
    double t1 = 0.0;
    for (int i = 0; i < inst.PZ1.size(); ++i)
        t1 += inst.PZ1[i] * std::min(1.0, static_cast<double>(inst.M2) * h1[static_cast<size_t>(i)]);
    t1 *= static_cast<double>(inst.M1);
    double t2 = 0.0;
    for (int j = 0; j < inst.PZ2.size(); ++j)
        t2 += inst.PZ2[j] * std::min(1.0, static_cast<double>(inst.M1) * h2[static_cast<size_t>(j)]);
    t2 *= static_cast<double>(inst.M2);
    return std::min({1.0, t1, t2});
}

double lower_bound_decaen(const UnionInstance& inst) {
    const auto h1 = hit_given_z1(inst);
    const auto h2 = hit_given_z2(inst);
    double pa = 0.0, d1 = 0.0, d2 = 0.0;
    for (int i = 0; i < inst.PZ1.size(); ++i) {
        pa += inst.PZ1[i] * h1[static_cast<size_t>(i)];
        d1 += inst.PZ1[i] * h1[static_cast<size_t>(i)] * h1[static_cast<size_t>(i)];
    }
    for (int j = 0; j < inst.PZ2.size(); ++j)
        d2 += inst.PZ2[j] * h2[static_cast<size_t>(j)] * h2[static_cast<size_t>(j)];
    if (pa == 0.0) return 0.0;
    const double r1 = static_cast<double>(inst.M1) * pa * pa / d1;
    const double r2 = static_cast<double>(inst.M2) * pa * pa / d2;
    return 0.25 * std::min({1.0, r1, r2,
                            static_cast<double>(inst.M1) * static_cast<double>(inst.M2) * pa});
}

BoundPair matching_bounds(const UnionInstance& inst) {
    const auto h1 = hit_given_z1(inst);
    const auto h2 = hit_given_z2(inst);
    // constancy of the conditional hit probability over each projection
    auto check = [](const std::vector<double>& h, const ProbVec& P) {
        double mn = std::numeric_limits<double>::infinity(), mx = -std::numeric_limits<double>::infinity();
        for (size_t z = 0; z < h.size(); ++z) {
            if (h[z] == 0.0 || P[static_cast<int>(z)] == 0.0) continue;
            mn = std::min(mn, h[z]);
            mx = std::max(mx, h[z]);
        }
        if (mx > mn + 1e-12)
            throw ConditionsViolated("matching_bounds: conditional hit probability not constant");
    };
    check(h1, inst.PZ1);
    check(h2, inst.PZ2);

    double pa1 = 0.0, pa2 = 0.0, pa = 0.0;
    for (int i = 0; i < inst.PZ1.size(); ++i) {
        if (h1[static_cast<size_t>(i)] > 0.0) pa1 += inst.PZ1[i];
        pa += inst.PZ1[i] * h1[static_cast<size_t>(i)];
    }
    for (int j = 0; j < inst.PZ2.size(); ++j)
        if (h2[static_cast<size_t>(j)] > 0.0) pa2 += inst.PZ2[j];

    const double form = std::min({1.0, static_cast<double>(inst.M1) * pa1,
                                  static_cast<double>(inst.M2) * pa2,
                                  static_cast<double>(inst.M1) * static_cast<double>(inst.M2) * pa});
    return {form, 0.25 * form};
}

BoundPair k_user_matching_bounds(const KUnionInstance& inst) {
    const int K = static_cast<int>(inst.PZ.size());
    const int cells = inst.A.cells();
    std::vector<int> idx(static_cast<size_t>(K));

    double form = 1.0;
    for (uint32_t sub = 1; sub < (1u << K); ++sub) {
        // P[Z_sub in A_sub]: accumulate over distinct projections of A's support.
        std::vector<int> axes;
        for (int k = 0; k < K; ++k)
            if (sub >> k & 1u) axes.push_back(k);
        Tensor proj = Tensor::zeros([&] {
            std::vector<int> d;
            for (int a : axes) d.push_back(inst.A.dims[static_cast<size_t>(a)]);
            return d;
        }());
        std::vector<int> pidx(axes.size());
        for (int c = 0; c < cells; ++c) {
            if (inst.A.v[static_cast<size_t>(c)] == 0.0) continue;
            inst.A.decode(c, idx);
            for (size_t t = 0; t < axes.size(); ++t) pidx[t] = idx[static_cast<size_t>(axes[t])];
            proj.at(pidx) = 1.0;
        }
        double p = 0.0, mprod = 1.0;
        for (int c = 0; c < proj.cells(); ++c) {
            if (proj.v[static_cast<size_t>(c)] == 0.0) continue;
            proj.decode(c, pidx);
            double w = 1.0;
            for (size_t t = 0; t < axes.size(); ++t)
                w *= inst.PZ[static_cast<size_t>(axes[t])][pidx[t]];
            p += w;
        }
        for (int a : axes) mprod *= static_cast<double>(inst.M[static_cast<size_t>(a)]);

        // condition: P[A | Z_sub = z_sub] constant over the projection's support
        {
            double mn = std::numeric_limits<double>::infinity(), mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < proj.cells(); ++c) {
                if (proj.v[static_cast<size_t>(c)] == 0.0) continue;
                proj.decode(c, pidx);
                double w = 1.0;
                for (size_t t = 0; t < axes.size(); ++t)
                    w *= inst.PZ[static_cast<size_t>(axes[t])][pidx[t]];
                if (w == 0.0) continue;
                // conditional hit probability given z_sub
                double cond = 0.0;
                for (int c2 = 0; c2 < cells; ++c2) {
                    if (inst.A.v[static_cast<size_t>(c2)] == 0.0) continue;
                    inst.A.decode(c2, idx);
                    bool match = true;
                    for (size_t t = 0; t < axes.size() && match; ++t)
                        match = idx[static_cast<size_t>(axes[t])] == pidx[t];
                    if (!match) continue;
                    double u = 1.0;
                    for (int k = 0; k < K; ++k)
                        if (!(sub >> k & 1u)) u *= inst.PZ[static_cast<size_t>(k)][idx[static_cast<size_t>(k)]];
                    cond += u;
                }
                mn = std::min(mn, cond);
                mx = std::max(mx, cond);
            }
            if (mx > mn + 1e-12)
                throw ConditionsViolated("k_user_matching_bounds: conditional hit probability not constant");
        }
        form = std::min(form, mprod * p);
    }
    return {form, std::ldexp(form, -K)};
}

}  // namespace mm
