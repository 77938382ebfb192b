#pragma once

// Bounds on the probability of a multiply-indexed union
//   P[ U_{i_1..i_K} { (Z_1(i_1), ..., Z_K(i_K)) in A } ]
// with independent iid sequences Z_k(i) ~ P_{Z_k}, plus an exact enumeration
// oracle used to validate the factor-4 / 2^{-K} sandwiches.

#include "mm/convex.hpp"
#include "mm/prob.hpp"

namespace mm {

struct UnionInstance {
    ProbVec PZ1, PZ2;
    long long M1 = 1, M2 = 1;
    Tensor A;  // |Z1| x |Z2| indicator (0/1)

    static UnionInstance make(ProbVec PZ1, ProbVec PZ2, long long M1, long long M2, Tensor A);
};

struct KUnionInstance {
    std::vector<ProbVec> PZ;
    std::vector<long long> M;
    Tensor A;  // K-dimensional indicator, K = PZ.size()

    static KUnionInstance make(std::vector<ProbVec> PZ, std::vector<long long> M, Tensor A);
};

// Exact union probability under fully independent draws (which subsumes the
// pairwise-independence assumption; the flag is purely declarative).
// Enumerates over sets of drawn values, not raw codebooks, so the message
// counts only enter through powers. Throws BudgetExceeded when the support
// enumeration or the M1*M2 invariant is out of range.
double exact_union_prob(const UnionInstance& inst, bool iid_pairwise = true);
double exact_union_prob(const KUnionInstance& inst);

// min{1, M1 E[min{1, M2 P[A|Z1]}], M2 E[min{1, M1 P[A|Z2]}]}  -- always >= exact.
double upper_bound_general(const UnionInstance& inst);

// (1/4) min{1, M1 P[A]^2 / P[A & A'], M2 P[A]^2 / P[A & A''], M1 M2 P[A]}
// with one coordinate resampled in each denominator -- <= exact under pairwise
// independence.
double lower_bound_decaen(const UnionInstance& inst);

struct BoundPair {
    double upper = 0.0;
    double lower = 0.0;
};

// Four-term min form over the projections A1, A2; lower = upper-form / 4.
// Valid as a sandwich only when the conditional hit probabilities are constant
// on A1 and on A2; that constancy is verified numerically (ConditionsViolated).
BoundPair matching_bounds(const UnionInstance& inst);

// K-user generalization: min over nonempty subsets of indices, sandwich factor
// 2^{-K}. Conditions checked for every subset.
BoundPair k_user_matching_bounds(const KUnionInstance& inst);

}  // namespace mm
