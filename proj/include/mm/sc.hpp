#pragma once

#include <string>
#include <vector>

#include "mm/convex.hpp"
#include "mm/prob.hpp"

namespace mm {

// Superposition coding over a single-user mismatched channel: each message
// pair (cloud center, satellite) is encoded by drawing the codeword letters
// from Q_{X|U} along an auxiliary cloud sequence distributed per Q_U, and the
// decoder maximizes the product metric over the whole codebook. Joint laws
// over (U, X, Y) use axis order (0, 1, 2) throughout.
struct ScInstance {
    Channel W;    // single-user kernel [nx, ny]
    Metric q;     // same shape
    Tensor Q_UX;  // input distribution on U x X, [nu, nx]

    static ScInstance make(Channel W, Metric q, Tensor Q_UX);
    int nu() const { return Q_UX.dims[0]; }
    int nx() const { return Q_UX.dims[1]; }
    int ny() const { return W.k.dims[1]; }
};

struct ScRates {
    double R0 = 0.0, R1 = 0.0;  // cloud / satellite rates, nats
};

// Ensemble-tight random-coding exponents of the two error events (cloud
// decoded wrongly / satellite decoded wrongly within the right cloud) and
// their minimum.
struct ScExponents {
    double er0 = 0.0, er1 = 0.0, overall = 0.0;
    bool converged = true;
};

struct ScRegionPoint {
    double R0 = 0.0, R1 = 0.0;
    std::string active;  // which constraint clips the point: "cap1" or "sum"
    bool ok = true;
};

// Rate region in the (R0, R1) plane: R1 is capped by the conditional-rate
// program, and for each R0 the sum R0 + R1 is capped by a family of
// side-constrained programs whose Lagrangian envelope is swept once. The sum
// bound is vacuous below r0_min, the smallest cloud information consistent
// with the constraint set.
struct ScRegion {
    double r1_cap = 0.0;
    double r0_min = 0.0;
    double r0_cap = 0.0;  // largest R0 on the R1 = 0 axis
    std::vector<ScRegionPoint> boundary;
    double best_sum = 0.0;     // max R0 + R1 over the region
    double best_sum_R0 = 0.0;  // the R0 achieving it (best_sum - cap1)
    bool converged = true;
};

// Dual certificate for one rate condition; every evaluation of the dual
// objective at feasible parameters is a valid lower bound on the primal.
struct ScDualReport {
    double value = 0.0;  // nats
    double s = 0.0, rho1 = 0.0;
    std::vector<double> a;  // cost table a(u,x), row-major
};

ScExponents sc_exponents(const ScInstance& inst, const ScRates& rates);

// Matched-decoding collapse of the cloud exponent: min over the single joint
// law of D + [I(U,X;Y) - R0 - R1]^+. The overall matched exponent built from
// this form agrees with the generic one.
double sc_er0_ml(const ScInstance& inst, const ScRates& rates, bool* converged = nullptr);

double sc_r1_cap(const ScInstance& inst, bool* converged = nullptr);
// Exact side-constrained sum bound S(R0); +infinity when no competitor meets
// the cloud-information constraint (the vacuous-minimum convention).
double sc_sum_bound(const ScInstance& inst, double R0, bool* converged = nullptr);
// Largest R0 such that (R0, R1) satisfies the sum condition.
double sc_reach(const ScInstance& inst, double R1, bool* converged = nullptr);
ScRegion sc_region(const ScInstance& inst, int grid_n = 25);
double sc_best_sum_rate(const ScInstance& inst, bool* converged = nullptr);

// Raw dual objectives (nats) at given parameters, without any rate penalty
// (sc_r0_dual subtracts rho1 * R1 itself); kept public so tests and the
// refined-coding module can check parameter-identification identities.
double sc_r1_dual_eval(const ScInstance& inst, double s, const std::vector<double>& a);
double sc_r0_dual_eval(const ScInstance& inst, double rho1, double s, const std::vector<double>& a);

ScDualReport sc_r1_dual(const ScInstance& inst);
ScDualReport sc_r0_dual(const ScInstance& inst, double R1);

// Superposition coding on the single-user channel W' with U = X1 and
// Q_{UX}(x1, x) = sum_{x2} Q1(x1) Q2(x2) 1{x = psi(x1, x2)} dominates the
// expurgated parallel-coding sum rate on the MAC induced by psi.
struct ScComparison {
    double sc_sum = 0.0;          // nats
    double expurgated_sum = 0.0;  // nats
    bool sc_dominates = false;    // sc_sum >= expurgated_sum - 1e-5
    bool converged = true;
};

ScComparison sc_vs_expurgated(const MappingSpec& psi, const Channel& wp, const Metric& qp,
                              const ProbVec& Q1, const ProbVec& Q2);

}  // namespace mm
