#include "mm/sc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mm/mac.hpp"
#include "uxy.hpp"

namespace mm {
namespace {

using uxy::Cells;
using uxy::kFail;
using uxy::kInfV;

void check_rates(const ScRates& r) {
    if (r.R0 < 0.0 || r.R1 < 0.0 || !std::isfinite(r.R0) || !std::isfinite(r.R1))
        throw std::invalid_argument("sc: rates must be finite and nonnegative");
}

// ---- rate-side programs (competitor against the true behavior Q_UX x W) ----

// The behavior pw restricted to a program's allowed cells; always a feasible
// start after projection, and exactly feasible on clean instances. Anchors the
// solver away from thin-constraint-set stalls.
std::vector<double> masked_start(const Cells& c, const std::vector<uint8_t>& allow) {
    std::vector<double> x = c.pw;
    double s = 0.0;
    for (int z = 0; z < c.total; ++z) {
        if (!allow[static_cast<size_t>(z)]) x[static_cast<size_t>(z)] = 0.0;
        s += x[static_cast<size_t>(z)];
    }
    if (s <= 0.0) return {};
    for (auto& v : x) v /= s;
    return x;
}

// Single halfspace E[log q] >= beta on a one-block program.
void attach_metric(GeneralProgram& gp, const Cells& c, const std::vector<uint8_t>& allow) {
    gp.has_halfspace = true;
    gp.halfspace.coef.resize(1);
    gp.halfspace.coef[0].assign(static_cast<size_t>(c.total), 0.0);
    for (int z = 0; z < c.total; ++z)
        if (allow[static_cast<size_t>(z)])
            gp.halfspace.coef[0][static_cast<size_t>(z)] = c.logq[static_cast<size_t>(z)];
    gp.halfspace.cst = -c.beta;
}

// Satellite cap: min I(X;Y|U) over competitors keeping the true (U,X) and
// (U,Y) joints; both reference marginals are constants.
double r1_cap_value(const ScInstance& inst, const Cells& c, bool* conv) {
    const bool metric = std::isfinite(c.beta);
    GeneralProgram gp;
    std::vector<uint8_t> allow(static_cast<size_t>(c.total));
    for (int z = 0; z < c.total; ++z) {
        const int y = z % c.ny, u = z / (c.ny * c.nx);
        allow[static_cast<size_t>(z)] = static_cast<uint8_t>(
            c.sup[static_cast<size_t>(z)] && (!metric || c.qpos[static_cast<size_t>(z)]) &&
            c.puy[static_cast<size_t>(u * c.ny + y)] > 0.0);
    }
    gp.blocks.push_back({{c.nu, c.nx, c.ny}, allow});
    gp.pins.push_back({0, {0, 1}, inst.Q_UX.v});
    gp.pins.push_back({0, {0, 2}, c.puy});
    if (metric) attach_metric(gp, c, allow);
    EntropyBlock eb;
    eb.block = 0;
    eb.axes = {0, 1, 2};
    eb.rconst.resize(static_cast<size_t>(c.total));
    for (int z = 0; z < c.total; ++z) {
        const int y = z % c.ny, x = (z / c.ny) % c.nx, u = z / (c.ny * c.nx);
        eb.rconst[static_cast<size_t>(z)] = c.qxgu[static_cast<size_t>(u * c.nx + x)] *
                                            c.puy[static_cast<size_t>(u * c.ny + y)];
    }
    Term t;
    t.name = "cap1";
    t.blocks = {std::move(eb)};
    gp.terms.push_back(std::move(t));
    SolveOptions opt;
    std::vector<double> st = masked_start(c, allow);
    if (!st.empty()) opt.starts.push_back({std::move(st)});
    GeneralSolveResult r = solve_general(gp, opt);
    if (conv) *conv = r.converged;
    return std::max(r.value, 0.0);
}

// Sum-rate machinery: objective I(U,X;Y) with the cloud information I(U;Y)
// as the side functional; the competitor keeps the true (U,X) joint and
// output marginal, so both references are constants.
struct SumParts {
    GeneralProgram prog;
    Term side;
    std::vector<double> start;  // behavior restricted to the allowed cells
};

SumParts sum_parts(const ScInstance& inst, const Cells& c) {
    SumParts sp;
    const bool metric = std::isfinite(c.beta);
    std::vector<uint8_t> allow(static_cast<size_t>(c.total));
    for (int z = 0; z < c.total; ++z)
        allow[static_cast<size_t>(z)] = static_cast<uint8_t>(
            c.sup[static_cast<size_t>(z)] && (!metric || c.qpos[static_cast<size_t>(z)]) &&
            c.py[static_cast<size_t>(z % c.ny)] > 0.0);
    sp.prog.blocks.push_back({{c.nu, c.nx, c.ny}, allow});
    sp.prog.pins.push_back({0, {0, 1}, inst.Q_UX.v});
    sp.prog.pins.push_back({0, {2}, c.py});
    if (metric) attach_metric(sp.prog, c, allow);

    EntropyBlock obj;
    obj.block = 0;
    obj.axes = {0, 1, 2};
    obj.rconst.resize(static_cast<size_t>(c.total));
    for (int z = 0; z < c.total; ++z)
        obj.rconst[static_cast<size_t>(z)] = inst.Q_UX.v[static_cast<size_t>(z / c.ny)] *
                                             c.py[static_cast<size_t>(z % c.ny)];
    Term main;
    main.name = "sum";
    main.blocks = {std::move(obj)};
    sp.prog.terms.push_back(std::move(main));

    EntropyBlock cl;
    cl.block = 0;
    cl.axes = {0, 2};
    cl.rconst.resize(static_cast<size_t>(c.nu * c.ny));
    for (int i = 0; i < c.nu * c.ny; ++i)
        cl.rconst[static_cast<size_t>(i)] =
            c.qu[static_cast<size_t>(i / c.ny)] * c.py[static_cast<size_t>(i % c.ny)];
    sp.side.name = "cloud-info";
    sp.side.blocks = {std::move(cl)};
    sp.start = masked_start(c, allow);
    return sp;
}

SolveOptions sum_opt(const SumParts& sp, int restarts) {
    SolveOptions o;
    o.restarts = restarts;
    if (!sp.start.empty()) o.starts.push_back({sp.start});
    return o;
}

// Lagrangian relaxation g(nu) = min I(U,X;Y) + nu I(U;Y) over the constraint
// set. The sum bound is the concave envelope S(r) = sup_nu g(nu) - nu r, and
// every single nu certifies a valid bound, so a finite grid (plus golden
// refinement) never over-claims the region.
double lag_value(const SumParts& sp, double nu, const SolveOptions& opt) {
    GeneralProgram gp;
    gp.blocks = sp.prog.blocks;
    gp.pins = sp.prog.pins;
    gp.has_halfspace = sp.prog.has_halfspace;
    gp.halfspace = sp.prog.halfspace;
    Term t = sp.prog.terms[0];
    if (nu > 0.0) {
        EntropyBlock side = sp.side.blocks[0];
        side.w = nu;
        t.blocks.push_back(std::move(side));
    }
    gp.terms.push_back(std::move(t));
    return solve_general(gp, opt).value;
}

struct Env {
    std::vector<double> nus, g;
};

Env build_env(const SumParts& sp) {
    Env env;
    env.nus.push_back(0.0);
    const int m = 18;
    for (int k = 0; k < m; ++k)
        env.nus.push_back(0.05 * std::pow(64.0 / 0.05, static_cast<double>(k) / (m - 1)));
    const SolveOptions opt = sum_opt(sp, 1);
    for (double nu : env.nus) env.g.push_back(lag_value(sp, nu, opt));
    return env;
}

double env_S(const Env& e, double r, int* arg = nullptr) {
    double best = -kInfV;
    for (size_t i = 0; i < e.nus.size(); ++i) {
        const double v = e.g[i] - e.nus[i] * r;
        if (v > best) {
            best = v;
            if (arg) *arg = static_cast<int>(i);
        }
    }
    return best;
}

// Largest R0 with R0 + target <= S(R0): each nu certifies (g(nu) - target) / (1 + nu).
double env_reach(const Env& e, double target, int* arg = nullptr) {
    double best = -kInfV;
    for (size_t i = 0; i < e.nus.size(); ++i) {
        const double v = (e.g[i] - target) / (1.0 + e.nus[i]);
        if (v > best) {
            best = v;
            if (arg) *arg = static_cast<int>(i);
        }
    }
    return best;
}

double refine_reach(const SumParts& sp, const Env& e, double target) {
    int k = 0;
    const double best = env_reach(e, target, &k);
    const int n = static_cast<int>(e.nus.size());
    const double lo = e.nus[static_cast<size_t>(std::max(0, k - 1))];
    const double hi = e.nus[static_cast<size_t>(std::min(n - 1, k + 1))];
    if (hi <= lo) return best;
    const SolveOptions opt = sum_opt(sp, 1);
    const double v = golden_max(
        [&](double nu) { return (lag_value(sp, nu, opt) - target) / (1.0 + nu); }, lo, hi,
        nullptr, 12);
    return std::max(best, v);
}

double r0_min_value(const SumParts& sp, bool* conv) {
    GeneralProgram gp;
    gp.blocks = sp.prog.blocks;
    gp.pins = sp.prog.pins;
    gp.has_halfspace = sp.prog.has_halfspace;
    gp.halfspace = sp.prog.halfspace;
    gp.terms.push_back(sp.side);
    GeneralSolveResult r = solve_general(gp, sum_opt(sp, 2));
    if (conv) *conv = *conv && r.converged;
    return std::max(r.value, 0.0);
}

// ---- exponent programs ----

// Two-block program: block 0 is the channel behavior P, block 1 the competing
// joint law. clean restricts both blocks to metric-positive cells and keeps
// the tilted-metric halfspace; the dirty branch (reachable only when channel
// mass meets q = 0) drops the metric constraint entirely.
GeneralProgram exponent_program(const ScInstance& inst, const Cells& c, bool cloud,
                                const ScRates& rates, bool clean) {
    GeneralProgram gp;
    const std::vector<int> dims = {c.nu, c.nx, c.ny};
    std::vector<uint8_t> allow0(static_cast<size_t>(c.total)), allow1(static_cast<size_t>(c.total));
    for (int z = 0; z < c.total; ++z) {
        allow0[static_cast<size_t>(z)] = static_cast<uint8_t>(
            c.wsup[static_cast<size_t>(z)] && (!clean || c.qpos[static_cast<size_t>(z)]));
        allow1[static_cast<size_t>(z)] = static_cast<uint8_t>(
            c.sup[static_cast<size_t>(z)] && (!clean || c.qpos[static_cast<size_t>(z)]));
    }
    gp.blocks.push_back({dims, allow0});
    gp.blocks.push_back({dims, allow1});
    gp.pins.push_back({0, {0, 1}, inst.Q_UX.v});
    gp.pins.push_back({1, {0, 1}, inst.Q_UX.v});
    if (cloud)
        gp.ties.push_back({1, {2}, 0, {2}});
    else
        gp.ties.push_back({1, {0, 2}, 0, {0, 2}});
    if (clean) {
        gp.has_halfspace = true;
        gp.halfspace.coef.resize(2);
        gp.halfspace.coef[0].assign(static_cast<size_t>(c.total), 0.0);
        gp.halfspace.coef[1].assign(static_cast<size_t>(c.total), 0.0);
        for (int z = 0; z < c.total; ++z) {
            if (allow0[static_cast<size_t>(z)])
                gp.halfspace.coef[0][static_cast<size_t>(z)] = -c.logq[static_cast<size_t>(z)];
            if (allow1[static_cast<size_t>(z)])
                gp.halfspace.coef[1][static_cast<size_t>(z)] = c.logq[static_cast<size_t>(z)];
        }
    }

    EntropyBlock d0;
    d0.block = 0;
    d0.axes = {0, 1, 2};
    d0.rconst = c.pw;

    Term base;
    base.name = "base";
    base.blocks = {d0};
    gp.terms.push_back(base);

    if (cloud) {
        Term t0;
        t0.name = "cloud";
        t0.blocks = {d0, uxy::eb_iuy(c, 1)};
        t0.lin.cst = -rates.R0;
        gp.terms.push_back(std::move(t0));
        Term t01;
        t01.name = "cloud+sat";
        t01.blocks = {d0, uxy::eb_iuxy(c, 1, inst.Q_UX)};
        t01.lin.cst = -rates.R0 - rates.R1;
        gp.terms.push_back(std::move(t01));
    } else {
        Term t1;
        t1.name = "sat";
        t1.blocks = {d0, uxy::eb_ixy_cond(c, 1)};
        t1.lin.cst = -rates.R1;
        gp.terms.push_back(std::move(t1));
    }
    return gp;
}

// The clean branch is feasible iff every supported (u,x) can reach some
// output with both channel and metric positive; the behavior itself then
// doubles as a feasible competitor.
bool clean_rows_ok(const Cells& c) {
    for (int r = 0; r < c.nu * c.nx; ++r) {
        if (!c.sup[static_cast<size_t>(r * c.ny)]) continue;
        bool any = false;
        for (int y = 0; y < c.ny && !any; ++y)
            any = c.wsup[static_cast<size_t>(r * c.ny + y)] &&
                  c.qpos[static_cast<size_t>(r * c.ny + y)];
        if (!any) return false;
    }
    return true;
}

double exponent_value(const ScInstance& inst, const Cells& c, bool cloud, const ScRates& rates,
                      bool* conv) {
    double best = kInfV;
    bool solved = false;
    auto run = [&](bool clean) {
        GeneralProgram gp = exponent_program(inst, c, cloud, rates, clean);
        SolveOptions opt;
        std::vector<double> s0 = masked_start(c, gp.blocks[0].allowed);
        std::vector<double> s1 = masked_start(c, gp.blocks[1].allowed);
        if (!s0.empty() && !s1.empty()) opt.starts.push_back({std::move(s0), std::move(s1)});
        GeneralSolveResult r = solve_general(gp, opt);
        if (conv) *conv = *conv && r.converged;
        best = std::min(best, r.value);
        solved = true;
    };
    if (clean_rows_ok(c)) run(true);
    if (c.dirty) run(false);
    if (!solved) throw std::logic_error("sc_exponents: no feasible branch");
    return std::max(best, 0.0);
}

// ---- dual search ----

std::vector<double> box_lo(int dim) {
    std::vector<double> lo(static_cast<size_t>(dim), -30.0);
    lo[0] = 0.0;
    return lo;
}

std::vector<double> box_hi(int dim) {
    std::vector<double> hi(static_cast<size_t>(dim), 30.0);
    hi[0] = 50.0;
    return hi;
}

double r1_dual_core(const Cells& c, double s, const double* a) {
    for (int z = 0; z < c.total; ++z)
        if (c.pw[static_cast<size_t>(z)] > 0.0 && s > 0.0 &&
            c.logq[static_cast<size_t>(z)] == -kInfV)
            return kFail;
    std::vector<double> su(static_cast<size_t>(c.nu), s);
    std::vector<double> blog;
    uxy::fill_blog(c, su.data(), a, blog);
    double v = 0.0;
    for (int z = 0; z < c.total; ++z) {
        const double m = c.pw[static_cast<size_t>(z)];
        if (m <= 0.0) continue;
        const int y = z % c.ny, u = z / (c.ny * c.nx);
        const double b = blog[static_cast<size_t>(u * c.ny + y)];
        if (b == -kInfV) return kFail;
        double t = a[z / c.ny] - b;
        if (s > 0.0) t += s * c.logq[static_cast<size_t>(z)];
        v += m * t;
    }
    return v;
}

double r0_dual_core(const Cells& c, double rho1, double s, const double* a) {
    std::vector<double> ru(static_cast<size_t>(c.nu), rho1);
    std::vector<double> su(static_cast<size_t>(c.nu), s);
    return uxy::cloud_dual_core(c, ru.data(), su.data(), a);
}

}  // namespace

ScInstance ScInstance::make(Channel W, Metric q, Tensor Q_UX) {
    if (W.k.rank() != 2) throw std::invalid_argument("ScInstance: single-user channel required");
    if (q.k.dims != W.k.dims)
        throw std::invalid_argument("ScInstance: metric/channel shape mismatch");
    if (Q_UX.rank() != 2) throw std::invalid_argument("ScInstance: Q_UX must be a U x X joint");
    if (Q_UX.dims[1] != W.k.dims[0])
        throw std::invalid_argument("ScInstance: Q_UX input axis does not match the channel");
    JointDist::make(Q_UX);  // mass and nonnegativity checks
    ScInstance inst;
    inst.W = std::move(W);
    inst.q = std::move(q);
    inst.Q_UX = std::move(Q_UX);
    return inst;
}

ScExponents sc_exponents(const ScInstance& inst, const ScRates& rates) {
    check_rates(rates);
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    ScExponents out;
    out.er0 = exponent_value(inst, c, true, rates, &out.converged);
    out.er1 = exponent_value(inst, c, false, rates, &out.converged);
    out.overall = std::min(out.er0, out.er1);
    return out;
}

double sc_er0_ml(const ScInstance& inst, const ScRates& rates, bool* converged) {
    check_rates(rates);
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    GeneralProgram gp;
    gp.blocks.push_back({{c.nu, c.nx, c.ny}, c.wsup});
    gp.pins.push_back({0, {0, 1}, inst.Q_UX.v});
    EntropyBlock d0;
    d0.block = 0;
    d0.axes = {0, 1, 2};
    d0.rconst = c.pw;
    Term base;
    base.name = "base";
    base.blocks = {d0};
    gp.terms.push_back(base);
    Term t;
    t.name = "joint";
    t.blocks = {d0, uxy::eb_iuxy(c, 0, inst.Q_UX)};
    t.lin.cst = -rates.R0 - rates.R1;
    gp.terms.push_back(std::move(t));
    SolveOptions opt;
    opt.starts.push_back({c.pw});
    GeneralSolveResult r = solve_general(gp, opt);
    if (converged) *converged = r.converged;
    return std::max(r.value, 0.0);
}

double sc_r1_cap(const ScInstance& inst, bool* converged) {
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    bool conv = true;
    const double v = r1_cap_value(inst, c, &conv);
    if (converged) *converged = conv;
    return v;
}

double sc_sum_bound(const ScInstance& inst, double R0, bool* converged) {
    if (R0 < 0.0) throw std::invalid_argument("sc_sum_bound: R0 must be nonnegative");
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    const SumParts sp = sum_parts(inst, c);
    GeneralSolveResult r = solve_with_side(sp.prog, {{sp.side, R0}}, sum_opt(sp, 2));
    if (converged) *converged = r.converged;
    return r.value;
}

double sc_reach(const ScInstance& inst, double R1, bool* converged) {
    if (R1 < 0.0) throw std::invalid_argument("sc_reach: R1 must be nonnegative");
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    const SumParts sp = sum_parts(inst, c);
    const Env e = build_env(sp);
    bool conv = true;
    // Below r0_min the side constraint is infeasible and the sum condition is
    // vacuous, so every R0 < r0_min qualifies whatever R1 is.
    const double floor0 = r0_min_value(sp, &conv);
    if (converged) *converged = conv;
    return std::max(refine_reach(sp, e, R1), floor0);
}

ScRegion sc_region(const ScInstance& inst, int grid_n) {
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    ScRegion reg;
    bool conv = true;
    reg.r1_cap = r1_cap_value(inst, c, &conv);
    const SumParts sp = sum_parts(inst, c);
    reg.r0_min = r0_min_value(sp, &conv);
    const Env e = build_env(sp);
    // For R0 < r0_min no competitor meets the cloud-information constraint,
    // so the sum condition is vacuous there: the region contains the whole
    // strip [0, r0_min) x [0, r1_cap], and the envelope only binds beyond it.
    reg.r0_cap = std::max(std::max(refine_reach(sp, e, 0.0), reg.r0_min), 0.0);
    const double reach1 = std::max(refine_reach(sp, e, reg.r1_cap), reg.r0_min);
    double best = reg.r1_cap + std::max(reach1, 0.0);
    double best_r0 = std::max(reach1, 0.0);
    const int n = std::max(grid_n, 3);
    for (int i = 0; i < n; ++i) {
        const double r0 = reg.r0_cap * i / (n - 1);
        const bool vacuous = r0 < reg.r0_min - 1e-9;
        const double r1 =
            vacuous ? reg.r1_cap : std::min(reg.r1_cap, env_S(e, r0) - r0);
        ScRegionPoint pt;
        pt.R0 = r0;
        pt.R1 = std::max(r1, 0.0);
        pt.active = r1 < reg.r1_cap ? "sum" : "cap1";
        pt.ok = r1 >= -1e-12;
        if (pt.ok && pt.R0 + pt.R1 > best) {
            best = pt.R0 + pt.R1;
            best_r0 = pt.R0;
        }
        reg.boundary.push_back(std::move(pt));
    }
    reg.best_sum = best;
    reg.best_sum_R0 = best_r0;
    reg.converged = conv;
    return reg;
}

double sc_best_sum_rate(const ScInstance& inst, bool* converged) {
    const ScRegion reg = sc_region(inst);
    if (converged) *converged = reg.converged;
    return reg.best_sum;
}

double sc_r1_dual_eval(const ScInstance& inst, double s, const std::vector<double>& a) {
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    if (static_cast<int>(a.size()) != c.nu * c.nx)
        throw std::invalid_argument("sc_r1_dual_eval: cost table size mismatch");
    const double v = r1_dual_core(c, s, a.data());
    return v <= kFail ? -kInfV : v;
}

double sc_r0_dual_eval(const ScInstance& inst, double rho1, double s,
                       const std::vector<double>& a) {
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    if (static_cast<int>(a.size()) != c.nu * c.nx)
        throw std::invalid_argument("sc_r0_dual_eval: cost table size mismatch");
    const double v = r0_dual_core(c, rho1, s, a.data());
    return v <= kFail ? -kInfV : v;
}

ScDualReport sc_r1_dual(const ScInstance& inst) {
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    const int dim = 1 + c.nu * c.nx;
    auto phi = [&](const std::vector<double>& t) { return r1_dual_core(c, t[0], t.data() + 1); };
    std::vector<double> th(static_cast<size_t>(dim), 0.0);
    th[0] = 1.0;
    AscentOptions opt;
    opt.max_iters = 600;
    opt.restarts = 4;
    const double v = ascend(phi, th, box_lo(dim), box_hi(dim), opt);
    ScDualReport rep;
    rep.value = std::max(v, 0.0);  // s = 0 with zero costs evaluates to exactly 0
    rep.s = th[0];
    rep.a.assign(th.begin() + 1, th.end());
    return rep;
}

ScDualReport sc_r0_dual(const ScInstance& inst, double R1) {
    if (R1 < 0.0) throw std::invalid_argument("sc_r0_dual: R1 must be nonnegative");
    const Cells c = uxy::analyze(inst.W, inst.q, inst.Q_UX);
    const int dim = 1 + c.nu * c.nx;
    const std::vector<double> lo = box_lo(dim), hi = box_hi(dim);
    auto gain = [&](double rho, const std::vector<double>& t) {
        const double v = r0_dual_core(c, rho, t[0], t.data() + 1);
        return v <= kFail ? kFail : v - rho * R1;
    };
    ScDualReport best;  // rho1 = 0 with zero costs yields exactly 0
    std::vector<double> th_best(static_cast<size_t>(dim), 0.0);
    th_best[0] = 1.0;
    best.a.assign(static_cast<size_t>(dim - 1), 0.0);
    auto consider = [&](double rho, const std::vector<double>& t, double val) {
        if (val > best.value) {
            best.value = val;
            best.rho1 = rho;
            best.s = t[0];
            best.a.assign(t.begin() + 1, t.end());
            th_best = t;
        }
    };
    AscentOptions warm;
    warm.max_iters = 160;
    warm.restarts = 1;
    std::vector<double> th = th_best;
    for (int k = 1; k <= 10; ++k) {
        const double rho = k / 10.0;
        auto phi = [&](const std::vector<double>& t) { return gain(rho, t); };
        const double v = ascend(phi, th, lo, hi, warm);
        consider(rho, th, v);
    }
    AscentOptions quick;
    quick.max_iters = 100;
    quick.restarts = 0;
    const double span = 0.12;
    golden_max(
        [&](double rho) {
            auto phi = [&](const std::vector<double>& t) { return gain(rho, t); };
            std::vector<double> t = th_best;
            const double v = ascend(phi, t, lo, hi, quick);
            consider(rho, t, v);
            return v;
        },
        std::max(0.0, best.rho1 - span), std::min(1.0, best.rho1 + span), nullptr, 24);
    {
        const double rho = best.rho1;
        auto phi = [&](const std::vector<double>& t) { return gain(rho, t); };
        std::vector<double> t = th_best;
        AscentOptions fin;
        fin.max_iters = 500;
        fin.restarts = 2;
        const double v = ascend(phi, t, lo, hi, fin);
        consider(rho, t, v);
    }
    best.value = std::max(best.value, 0.0);
    return best;
}

ScComparison sc_vs_expurgated(const MappingSpec& psi, const Channel& wp, const Metric& qp,
                              const ProbVec& Q1, const ProbVec& Q2) {
    if (static_cast<int>(Q1.p.size()) != psi.n1 || static_cast<int>(Q2.p.size()) != psi.n2)
        throw std::invalid_argument("sc_vs_expurgated: input distribution size mismatch");
    if (wp.k.dims[0] != psi.n_image)
        throw std::invalid_argument("sc_vs_expurgated: mapping image does not match the channel");
    auto mac = mac_from_mapping(psi, wp, qp);
    const MacInstance mi = MacInstance::make(mac.first, mac.second, Q1, Q2);
    const MacRegion er = expurgated_region(mi);
    Tensor qux = Tensor::zeros({psi.n1, psi.n_image});
    for (int x1 = 0; x1 < psi.n1; ++x1)
        for (int x2 = 0; x2 < psi.n2; ++x2)
            qux.v[static_cast<size_t>(x1 * psi.n_image + psi.at(x1, x2))] += Q1[x1] * Q2[x2];
    const ScInstance si = ScInstance::make(wp, qp, std::move(qux));
    ScComparison cmp;
    bool conv = true;
    cmp.sc_sum = sc_best_sum_rate(si, &conv);
    cmp.expurgated_sum = er.best_sum;
    cmp.converged = conv && er.converged;
    cmp.sc_dominates = cmp.sc_sum >= cmp.expurgated_sum - 1e-5;
    return cmp;
}

}  // namespace mm
