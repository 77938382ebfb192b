#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mm/convex.hpp"
#include "mm/prob.hpp"
#include "mm/su_rates.hpp"

namespace mm {

// Two-sender instance: W(y|x1,x2), a joint decoding metric q(x1,x2,y), and a
// product input law Q1 x Q2. All rates and exponents are in nats.
struct MacInstance {
    Channel W;  // dims [n1, n2, ny]
    Metric q;   // matching dims
    ProbVec Q1, Q2;

    static MacInstance make(Channel W, Metric q, ProbVec Q1, ProbVec Q2);
    bool matched() const;  // q equals W pointwise
};

struct RatePoint {
    double R1 = 0.0, R2 = 0.0;
};

// Error-event exponents: sender 1 wrong, sender 2 wrong, both wrong (with the
// refined union bound), the naive both-wrong variant, the two single-penalty
// relaxations of the refined form, and the overall exponent min{er1,er2,er12}.
enum class MacKind { er1, er2, er12, er12_naive, er12_split1, er12_split2, overall };

struct ExponentResult {
    double value = 0.0;  // nats
    MacKind kind = MacKind::er12;
    Form form = Form::primal;
    double rho1 = 0.0, rho2 = 0.0;  // dual solves only
    std::string active;             // primal solves: objective term attaining the max
    SolveReport diagnostics;
};

ExponentResult mac_exponent(const MacInstance&, const RatePoint&, MacKind kind);

struct SplitExponents {
    double er12_1 = 0.0, er12_2 = 0.0, combined = 0.0;
};
SplitExponents mac_exponent_split(const MacInstance&, const RatePoint&);

ExponentResult mac_exponent_dual(const MacInstance&, const RatePoint&, MacKind kind);

// Cost-tilted E0 functions behind the dual exponents, evaluated at explicit
// parameters (no optimization). Any evaluation yields a valid lower bound on
// the matching exponent once the rate terms are subtracted. th packs
// [s, a1(n1), a1p(n1), a2p(n2)] for type 1, [s, a2(n2), a1p(n1), a2p(n2)] for
// type 2, and [s, a1(n1), a2(n2), a1p(n1), a2p(n2)] for the two-rho types.
double mac_e0_1(const MacInstance&, double rho1, const std::vector<double>& th);
double mac_e0_2(const MacInstance&, double rho2, const std::vector<double>& th);
double mac_e0_12_1(const MacInstance&, double rho1, double rho2, const std::vector<double>& th);
double mac_e0_12_2(const MacInstance&, double rho1, double rho2, const std::vector<double>& th);

// ---- achievable rate region ----

struct RegionPoint {
    double R1 = 0.0, R2 = 0.0;
    std::string active;  // binding constraint: "cap1", "cap2", "sum1", "sum2"
    bool ok = true;
};

struct MacRegion {
    double r1_cap = 0.0, r2_cap = 0.0;    // per-sender caps (nats)
    std::vector<double> grid1, sum1;      // family-1 sweep: sum bound given I(X1;Y) <= grid1[i]
    std::vector<double> grid2, sum2;      // family-2 sweep (role of senders swapped)
    std::vector<RegionPoint> boundary;    // upper boundary, R1 ascending
    RatePoint corner_right;               // boundary point at R1 = r1_cap
    RatePoint corner_top;                 // largest R1 with R2 = r2_cap on the boundary
    double best_sum = 0.0;                // max R1+R2 over the region (nats)
    bool converged = true;
};

MacRegion mac_region(const MacInstance&, int grid_n = 25);

// Sum-rate bound with both mutual-information side constraints dropped.
double mac_region_naive_sum(const MacInstance&);

// One-parameter family sum bounds (family = 1 constrains I(X1;Y) <= r, family
// = 2 constrains I(X2;Y) <= r) and the jointly constrained bound at a rate
// pair. +infinity means the constraint set is empty (no sum restriction).
double mac_sum_bound_family(const MacInstance&, int family, double r);
double mac_sum_bound_joint(const MacInstance&, const RatePoint&);

// Dual certificates: parametric lower bounds on the caps and on the two
// constrained sum families evaluated at the queried rate pair. member is true
// when the dual bounds alone certify the point (within slack).
struct MacDualMembership {
    double r1_bound = 0.0, r2_bound = 0.0;
    double sum1_bound = 0.0, sum2_bound = 0.0;  // bounds on R1 given R2 / on R2 given R1
    bool member = false;
};
MacDualMembership mac_region_dual_check(const MacInstance&, const RatePoint&, double slack = 1e-3);

// ---- expurgated parallel coding ----

MacRegion expurgated_region(const MacInstance&, int grid_n = 25);
double expurgated_sum_bound_family(const MacInstance&, int family, double r);
MacDualMembership expurgated_region_dual_check(const MacInstance&, const RatePoint&,
                                               double slack = 1e-3);

// ---- ML specialization ----

struct MlExponents {
    double er1 = 0.0, er2 = 0.0, er12_naive = 0.0;  // single-minimization primal forms
    double er12 = 0.0;                              // refined joint form
    double er1_dual = 0.0, er2_dual = 0.0, er12_naive_dual = 0.0;
    double min_refined = 0.0, min_naive = 0.0;      // min{er1,er2,er12} vs naive variant
    bool converged = true;
};

// Requires a matched instance (metric equal to the channel).
MlExponents ml_exponents(const MacInstance&, const RatePoint&);

// Gallager-form E0 with input costs, evaluated at explicit parameters.
// which is 1, 2 or 12 (the naive joint form); a packs [a1(n1), a2(n2)].
double ml_e0(const MacInstance&, int which, double rho, const std::vector<double>& a);
ExponentResult ml_exponent_dual(const MacInstance&, const RatePoint&, int which);

// ---- explicit time sharing ----

// Rates mix linearly; the exponent is min{lambda e1, (1-lambda) e2}. Exact
// endpoints return the active point unchanged: a constituent that is never
// used imposes no penalty.
std::pair<RatePoint, double> explicit_ts_combine(const RatePoint& p1, double e1,
                                                 const RatePoint& p2, double e2, double lambda);

}  // namespace mm
