#pragma once

// Single-user mismatched-decoding rates: the LM rate (primal and dual forms),
// the generalized mutual information, and the k-th order product-channel LM
// rate (reported per channel use).

#include <limits>

#include "mm/convex.hpp"
#include "mm/prob.hpp"

namespace mm {

enum class Form { primal, dual, both };

struct SuRateRequest {
    Channel W;  // single input axis
    Metric q;
    ProbVec Q;      // on the (product) input alphabet
    Form form = Form::both;
    int order = 1;  // k-fold product extension, k <= 3

    static SuRateRequest make(Channel W, Metric q, ProbVec Q, Form form = Form::both,
                              int order = 1);
};

struct RateReport {
    double value = 0.0;   // nats: primal when computed, else dual
    double primal = std::numeric_limits<double>::quiet_NaN();
    double dual = std::numeric_limits<double>::quiet_NaN();
    double gap = 0.0;     // primal - dual when both present
    DualParams params;    // lambda = s, mu1 = a(.) on the pruned input alphabet
    bool converged = true;
};

// min_{P~: P~_X = Q, P~_Y = P_Y, E_P~[log q] >= E_P[log q]} I_P~(X;Y)
// and/or its dual sup_{s>=0, a(.)}. Zero-probability inputs are pruned first.
RateReport lm_rate(const SuRateRequest& req);

// sup_{s >= 0} E_P[ log( q(X,Y)^s / E_Q[ q(Xbar,Y)^s ] ) ]  -- the a == 0 dual.
double gmi(const SuRateRequest& req);

// (1/k) * LM rate of the k-fold product channel at the supplied product-alphabet
// input law. order = 1 coincides with lm_rate().value.
double product_lm_rate(const SuRateRequest& req);

// Shared helper: the LM-rate constrained problem for (W, q, Q) after pruning
// zero-probability inputs. Exposed for reuse by the multiuser modules' tests.
ConstrainedProblem lm_problem(const Channel& W, const Metric& q, const ProbVec& Q);

}  // namespace mm
