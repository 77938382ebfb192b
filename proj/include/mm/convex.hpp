#pragma once

// Convex solver for the constrained programs behind every rate and exponent in
// this project. Two layers:
//
//  1. A general solver (`solve_general`) for programs of the form
//        min over (x_1, ..., x_B)   max_j  T_j(x)
//     where each x_b is a distribution over a finite cell set, subject to
//        - pinned marginals          (marginal of x_b over axes == constant),
//        - tied marginals            (marginal of x_a == marginal of x_b),
//        - one linear halfspace      (<h, x> >= 0, the metric constraint),
//     and each term T_j is a nonnegative combination of blocks
//        sum_{z in S} m(z) log( m(z) / r(z) )
//     with m a marginal of one x_b and r(z) either a constant or
//     scale(z) * (marginal of some block at a mapped cell), plus a linear part.
//     Every such term is jointly convex, so the program is convex.
//     Algorithm: entropic mirror descent on the max (annealed log-sum-exp
//     smoothing) with cyclic KL reprojection onto the constraints.
//
//  2. The two-marginal canonical problem (`ConstrainedProblem`) with its exact
//     finite-dimensional concave dual, plus an independent brute-force oracle
//     (free-coordinate grid + Nelder-Mead polish) for small instances.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mm/prob.hpp"

namespace mm {

// ---- error types ----
struct InfeasibleError : std::runtime_error {
    explicit InfeasibleError(const std::string& m) : std::runtime_error(m) {}
};
struct UnboundedError : std::runtime_error {
    explicit UnboundedError(const std::string& m) : std::runtime_error(m) {}
};
struct NonConvergentError : std::runtime_error {
    explicit NonConvergentError(const std::string& m) : std::runtime_error(m) {}
};
struct PreconditionViolated : std::runtime_error {
    explicit PreconditionViolated(const std::string& m) : std::runtime_error(m) {}
};
struct ConditionsViolated : std::runtime_error {
    explicit ConditionsViolated(const std::string& m) : std::runtime_error(m) {}
};
struct BudgetExceeded : std::runtime_error {
    explicit BudgetExceeded(const std::string& m) : std::runtime_error(m) {}
};

// ---- general program ----

struct BlockSpec {
    std::vector<int> dims;
    std::vector<uint8_t> allowed;  // 1 = cell may carry mass; empty = all allowed
};

struct MarginalPin {
    int block = 0;
    std::vector<int> axes;
    std::vector<double> target;  // flat over the marginal cells
};

// Marginal of block_a over axes_a must equal marginal of block_b over axes_b
// (identical cell layout).
struct MarginalTie {
    int block_a = 0;
    std::vector<int> axes_a;
    int block_b = 1;
    std::vector<int> axes_b;
};

// sum_b <coef[b], x_b> + cst ; empty coef vectors mean zero.
struct LinearFunctional {
    std::vector<std::vector<double>> coef;
    double cst = 0.0;
};

// w * sum_{z in S} m(z) log(m(z)/r(z)), m = marginal of `block` over `axes`.
// r(z) = rconst[z]                          when rlin_block < 0
//      = rlin_scale[z] * m2(rlin_map[z])    otherwise, m2 = marginal of
//        rlin_block over rlin_axes.
struct EntropyBlock {
    double w = 1.0;
    int block = 0;
    std::vector<int> axes;
    std::vector<uint8_t> inS;  // empty = all marginal cells
    std::vector<double> rconst;
    int rlin_block = -1;
    std::vector<int> rlin_axes;
    std::vector<int> rlin_map;
    std::vector<double> rlin_scale;
};

struct Term {
    std::string name;
    std::vector<EntropyBlock> blocks;
    LinearFunctional lin;
};

struct GeneralProgram {
    std::vector<BlockSpec> blocks;
    std::vector<MarginalPin> pins;
    std::vector<MarginalTie> ties;
    bool has_halfspace = false;
    LinearFunctional halfspace;  // requires value >= 0
    std::vector<Term> terms;     // objective = max over terms
};

struct SolveOptions {
    int max_iters = 60000;
    int restarts = 2;                 // random restarts beyond the supplied/default start
    uint64_t seed = 0x9e3779b97f4a7c15ULL;
    double tol_gap = config::kSolveGapTol;
    std::vector<std::vector<std::vector<double>>> starts;  // optional explicit starts
};

struct GeneralSolveResult {
    double value = 0.0;  // objective at the best feasible iterate
    std::vector<std::vector<double>> x;
    bool converged = false;
    int iterations = 0;
    double last_change = 0.0;
    int active_term = 0;
    std::string message;
};

GeneralSolveResult solve_general(const GeneralProgram& prog, const SolveOptions& opt = {});

// Value of one term / of the max objective at a given point.
double term_value(const GeneralProgram& prog, const Term& t, const std::vector<std::vector<double>>& x);
double objective_value(const GeneralProgram& prog, const std::vector<std::vector<double>>& x);

// Minimize prog's objective subject to extra convex constraints side_j(x) <= bound_j,
// via an outer concave maximization over multipliers. Returns +infinity when the
// side system is infeasible (the vacuous-minimum convention used by the rate
// region sum conditions).
struct SideConstraint {
    Term term;
    double bound = 0.0;
};
GeneralSolveResult solve_with_side(const GeneralProgram& prog,
                                   const std::vector<SideConstraint>& side,
                                   const SolveOptions& opt = {});

// ---- canonical two-marginal problem (the duality-lemma form) ----
//
//   min_{P on Z1 x Z2}  I_P(Z1;Z2) - E_P[log g]
//   s.t. P_{Z1} = P1,  P_{Z2} = P2,  E_P[log f] >= beta.

struct ConstrainedProblem {
    ProbVec P1, P2;
    Tensor f, g;   // |Z1| x |Z2|, nonnegative
    double beta = 0.0;
    bool feasible = false;  // computed at construction

    static ConstrainedProblem make(ProbVec P1, ProbVec P2, Tensor f, Tensor g, double beta);
};

struct DualParams {
    double lambda = 0.0;          // multiplier on the metric constraint (aka s)
    std::vector<double> mu1;      // cost on Z1 (aka a)
    double rho1 = 0.0, rho2 = 0.0;
    std::vector<double> a1p, a2p;  // auxiliary cost vectors where applicable
    std::vector<double> b;
};

struct SolveReport {
    double value = 0.0;
    Tensor argmin;  // empty for dual solves
    double gap = 0.0;
    int iterations = 0;
    bool converged = false;
};

SolveReport solve_primal(const ConstrainedProblem& p, const SolveOptions& opt = {});
// Concave dual: value(lambda, mu1); never exceeds the primal. Reports best
// found with converged=false rather than throwing on slow progress.
SolveReport solve_dual(const ConstrainedProblem& p, DualParams* params = nullptr,
                       const SolveOptions& opt = {});
double dual_value(const ConstrainedProblem& p, double lambda, const std::vector<double>& mu1);

// Brute-force oracle: exhaustive grid over the free coordinates of the feasible
// affine set (step 1/64) then Nelder-Mead polish. Only for small problems; throws
// BudgetExceeded beyond 4 free dimensions or 16 cells.
double oracle_primal(const ConstrainedProblem& p);

// ---- scalar min-max split check (the synthetic form of the split lemma) ----
//
// left  = min_{t in [lo,hi]} f + [max{g1, g2, g}]^+
// right = max( min f + [max{g1, g}]^+ , min f + [max{g2, g}]^+ )
// Requires g1 + g2 <= g on the domain (checked on a dense grid).

struct MinMaxSplitInput {
    std::function<double(double)> f, g, g1, g2;
    double lo = 0.0, hi = 1.0;
};
struct MinMaxSplitResult {
    double left = 0.0, right = 0.0, right1 = 0.0, right2 = 0.0;
};
MinMaxSplitResult minmax_split(const MinMaxSplitInput& in);

// ---- generic helpers shared by the dual evaluators ----

// Maximize a concave-ish function by gradient ascent with backtracking from
// multiple starts (finite-difference gradients). Bounds are enforced by
// projection; lo/hi may be -+infinity.
struct AscentOptions {
    int max_iters = 400;
    int restarts = 8;
    uint64_t seed = 0x51ed2701a3b9e4d5ULL;
    double init_step = 0.5;
    double tol = 1e-10;
    double restart_spread = 1.0;
};
double ascend(const std::function<double(const std::vector<double>&)>& phi,
              std::vector<double>& theta, const std::vector<double>& lo,
              const std::vector<double>& hi, const AscentOptions& opt = {});

// Golden-section maximization of a scalar function on [lo, hi].
double golden_max(const std::function<double(double)>& phi, double lo, double hi,
                  double* arg = nullptr, int iters = 80);

// Nelder-Mead maximization (used for the rho1 x rho2 refinement).
double nelder_mead_max(const std::function<double(const std::vector<double>&)>& phi,
                       std::vector<double>& x, double scale, int max_iters = 400);

}  // namespace mm
