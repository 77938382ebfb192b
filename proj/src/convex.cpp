#include "mm/convex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace mm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTiny = 1e-300;
constexpr double kHuge = 1e9;  // sentinel for "effectively +infinity" objective values

// ---- prepared program: flat projection maps for every marginal in play ----

struct MarginalMap {
    std::vector<int> map;  // cell -> marginal cell
    int size = 0;
};

MarginalMap make_map(const std::vector<int>& dims, const std::vector<int>& axes) {
    MarginalMap m;
    const auto strides = projection_strides(dims, axes);
    int cells = 1;
    for (int d : dims) cells *= d;
    int msize = 1;
    for (int a : axes) msize *= dims[static_cast<size_t>(a)];
    m.size = msize;
    m.map.resize(static_cast<size_t>(cells));
    for (int c = 0; c < cells; ++c) m.map[static_cast<size_t>(c)] = project_cell(c, dims, strides);
    return m;
}

struct PrepPin {
    int block;
    MarginalMap mm;
    std::vector<double> target;
};
struct PrepTie {
    int ba, bb;
    MarginalMap ma, mb;
};
struct PrepEB {
    const EntropyBlock* eb;
    MarginalMap mm;        // marginal of eb->block
    MarginalMap rm;        // marginal of rlin_block (when used)
};

struct Prep {
    const GeneralProgram* prog;
    std::vector<int> cells;                 // per block
    std::vector<std::vector<uint8_t>> allowed;
    std::vector<PrepPin> pins;
    std::vector<PrepTie> ties;
    std::vector<std::vector<PrepEB>> term_ebs;  // per term
    std::vector<double> hs_coef_flat;           // concatenated halfspace coefs
};

int block_cells(const BlockSpec& b) {
    int n = 1;
    for (int d : b.dims) n *= d;
    return n;
}

Prep prepare(const GeneralProgram& prog) {
    Prep p;
    p.prog = &prog;
    for (const auto& b : prog.blocks) {
        p.cells.push_back(block_cells(b));
        auto a = b.allowed;
        if (a.empty()) a.assign(static_cast<size_t>(block_cells(b)), 1);
        if (static_cast<int>(a.size()) != block_cells(b))
            throw std::invalid_argument("BlockSpec: allowed mask size mismatch");
        p.allowed.push_back(std::move(a));
    }
    for (const auto& pin : prog.pins) {
        PrepPin pp{pin.block, make_map(prog.blocks[static_cast<size_t>(pin.block)].dims, pin.axes),
                   pin.target};
        if (static_cast<int>(pin.target.size()) != pp.mm.size)
            throw std::invalid_argument("MarginalPin: target size mismatch");
        p.pins.push_back(std::move(pp));
    }
    for (const auto& tie : prog.ties) {
        PrepTie pt{tie.block_a, tie.block_b,
                   make_map(prog.blocks[static_cast<size_t>(tie.block_a)].dims, tie.axes_a),
                   make_map(prog.blocks[static_cast<size_t>(tie.block_b)].dims, tie.axes_b)};
        if (pt.ma.size != pt.mb.size) throw std::invalid_argument("MarginalTie: size mismatch");
        p.ties.push_back(std::move(pt));
    }
    for (const auto& t : prog.terms) {
        std::vector<PrepEB> ebs;
        for (const auto& eb : t.blocks) {
            PrepEB pe;
            pe.eb = &eb;
            pe.mm = make_map(prog.blocks[static_cast<size_t>(eb.block)].dims, eb.axes);
            if (eb.rlin_block >= 0)
                pe.rm = make_map(prog.blocks[static_cast<size_t>(eb.rlin_block)].dims, eb.rlin_axes);
            ebs.push_back(std::move(pe));
        }
        p.term_ebs.push_back(std::move(ebs));
    }
    return p;
}

using Point = std::vector<std::vector<double>>;

void accumulate_marginal(const std::vector<double>& x, const MarginalMap& mm,
                         std::vector<double>& out) {
    out.assign(static_cast<size_t>(mm.size), 0.0);
    for (size_t c = 0; c < x.size(); ++c) out[static_cast<size_t>(mm.map[c])] += x[c];
}

double halfspace_value(const GeneralProgram& prog, const Point& x) {
    double v = prog.halfspace.cst;
    for (size_t b = 0; b < x.size(); ++b) {
        if (b < prog.halfspace.coef.size() && !prog.halfspace.coef[b].empty()) {
            const auto& c = prog.halfspace.coef[b];
            for (size_t i = 0; i < x[b].size(); ++i)
                if (x[b][i] > 0.0) v += c[i] * x[b][i];
        }
    }
    return v;
}

// Exact KL projection onto the halfspace <h,x> + cst >= 0 (per-block Gibbs tilt).
// Returns false if unreachable within the multiplier cap.
bool project_halfspace(const GeneralProgram& prog, const Prep& p, Point& x) {
    if (!prog.has_halfspace) return true;
    if (halfspace_value(prog, x) >= 0.0) return true;
    auto tilted_value = [&](double lam, Point& out) {
        out = x;
        for (size_t b = 0; b < x.size(); ++b) {
            if (b >= prog.halfspace.coef.size() || prog.halfspace.coef[b].empty()) continue;
            const auto& c = prog.halfspace.coef[b];
            double mx = -kInf;
            for (size_t i = 0; i < x[b].size(); ++i)
                if (x[b][i] > 0.0) mx = std::max(mx, lam * c[i]);
            double z = 0.0;
            for (size_t i = 0; i < x[b].size(); ++i) {
                if (x[b][i] > 0.0)
                    out[b][i] = x[b][i] * std::exp(lam * c[i] - mx);
                else
                    out[b][i] = 0.0;
                z += out[b][i];
            }
            if (z <= 0.0) return -kInf;
            for (auto& v : out[b]) v /= z;
        }
        return halfspace_value(prog, out);
    };
    (void)p;
    double lo = 0.0, hi = 1.0;
    Point tmp;
    while (tilted_value(hi, tmp) < 0.0) {
        hi *= 2.0;
        if (hi > 1e6) return false;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tilted_value(mid, tmp) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    tilted_value(hi, tmp);
    x = std::move(tmp);
    return true;
}

// Cyclic KL projections onto pins, ties and the halfspace. Returns the final
// max constraint residual; bails out early when the residual plateaus (either
// converged or the intersection is empty).
double project(const GeneralProgram& prog, const Prep& p, Point& x, int max_cycles = 3000,
               long* work = nullptr) {
    std::vector<double> m;
    double resid = kInf;
    double prev = kInf;
    for (int cyc = 0; cyc < max_cycles; ++cyc) {
        if (work) ++*work;
        for (const auto& pin : p.pins) {
            auto& xb = x[static_cast<size_t>(pin.block)];
            accumulate_marginal(xb, pin.mm, m);
            // Fibers whose current mass vanished but whose target is positive are
            // reseeded uniformly over allowed cells.
            std::vector<double> scale(m.size());
            std::vector<int> need_seed;
            for (size_t z = 0; z < m.size(); ++z) {
                if (pin.target[z] <= 0.0)
                    scale[z] = 0.0;
                else if (m[z] > kTiny)
                    scale[z] = pin.target[z] / m[z];
                else {
                    scale[z] = 0.0;
                    need_seed.push_back(static_cast<int>(z));
                }
            }
            for (size_t c = 0; c < xb.size(); ++c) xb[c] *= scale[static_cast<size_t>(pin.mm.map[c])];
            if (!need_seed.empty()) {
                std::vector<int> counts(m.size(), 0);
                const auto& allow = p.allowed[static_cast<size_t>(pin.block)];
                for (size_t c = 0; c < xb.size(); ++c)
                    if (allow[c]) ++counts[static_cast<size_t>(pin.mm.map[c])];
                for (int z : need_seed) {
                    if (counts[static_cast<size_t>(z)] == 0) continue;  // truly infeasible fiber
                    const double each = pin.target[static_cast<size_t>(z)] / counts[static_cast<size_t>(z)];
                    for (size_t c = 0; c < xb.size(); ++c)
                        if (allow[c] && pin.mm.map[c] == z) xb[c] = each;
                }
            }
        }
        std::vector<double> ma, mb;
        for (const auto& tie : p.ties) {
            auto& xa = x[static_cast<size_t>(tie.ba)];
            auto& xb = x[static_cast<size_t>(tie.bb)];
            accumulate_marginal(xa, tie.ma, ma);
            accumulate_marginal(xb, tie.mb, mb);
            // Exact joint projection: shared marginal proportional to sqrt(ma*mb).
            std::vector<double> t(ma.size());
            double ts = 0.0;
            for (size_t z = 0; z < ma.size(); ++z) {
                t[z] = std::sqrt(std::max(ma[z], 0.0) * std::max(mb[z], 0.0));
                ts += t[z];
            }
            if (ts <= kTiny) return kInf;
            for (auto& v : t) v /= ts;
            for (size_t c = 0; c < xa.size(); ++c) {
                const double mz = ma[static_cast<size_t>(tie.ma.map[c])];
                xa[c] = mz > kTiny ? xa[c] * t[static_cast<size_t>(tie.ma.map[c])] / mz : 0.0;
            }
            for (size_t c = 0; c < xb.size(); ++c) {
                const double mz = mb[static_cast<size_t>(tie.mb.map[c])];
                xb[c] = mz > kTiny ? xb[c] * t[static_cast<size_t>(tie.mb.map[c])] / mz : 0.0;
            }
        }
        if (!project_halfspace(prog, p, x)) return kInf;

        resid = 0.0;
        for (const auto& pin : p.pins) {
            accumulate_marginal(x[static_cast<size_t>(pin.block)], pin.mm, m);
            for (size_t z = 0; z < m.size(); ++z) resid = std::max(resid, std::abs(m[z] - pin.target[z]));
        }
        for (const auto& tie : p.ties) {
            accumulate_marginal(x[static_cast<size_t>(tie.ba)], tie.ma, ma);
            accumulate_marginal(x[static_cast<size_t>(tie.bb)], tie.mb, mb);
            for (size_t z = 0; z < ma.size(); ++z) resid = std::max(resid, std::abs(ma[z] - mb[z]));
        }
        if (prog.has_halfspace) resid = std::max(resid, -halfspace_value(prog, x));
        if (resid < 1e-13) return resid;
        if ((cyc & 127) == 127) {
            // windowed progress check: flat residual means an empty intersection
            // (or one reachable only in the limit -- close enough counts).
            if (resid > 0.25 * prev) {
                if (resid < 1e-8 || resid > 0.95 * prev) return resid;
            }
            prev = resid;
        }
    }
    return resid;
}

double eval_term(const Prep& p, int ti, const Point& x, std::vector<std::vector<double>>* ms,
                 std::vector<std::vector<double>>* rms) {
    const Term& t = p.prog->terms[static_cast<size_t>(ti)];
    double val = t.lin.cst;
    for (size_t b = 0; b < x.size(); ++b)
        if (b < t.lin.coef.size() && !t.lin.coef[b].empty())
            for (size_t i = 0; i < x[b].size(); ++i)
                if (x[b][i] > 0.0) val += t.lin.coef[b][i] * x[b][i];
    const auto& ebs = p.term_ebs[static_cast<size_t>(ti)];
    for (size_t k = 0; k < ebs.size(); ++k) {
        const auto& pe = ebs[k];
        const auto& eb = *pe.eb;
        std::vector<double> mloc, rloc;
        std::vector<double>& mref = ms ? (*ms)[k] : mloc;
        accumulate_marginal(x[static_cast<size_t>(eb.block)], pe.mm, mref);
        const std::vector<double>* m2 = nullptr;
        if (eb.rlin_block >= 0) {
            std::vector<double>& rref = rms ? (*rms)[k] : rloc;
            accumulate_marginal(x[static_cast<size_t>(eb.rlin_block)], pe.rm, rref);
            m2 = &rref;
        }
        for (int z = 0; z < pe.mm.size; ++z) {
            if (!eb.inS.empty() && !eb.inS[static_cast<size_t>(z)]) continue;
            const double mz = mref[static_cast<size_t>(z)];
            if (mz <= 0.0) continue;
            const double r = eb.rlin_block >= 0
                                 ? eb.rlin_scale[static_cast<size_t>(z)] *
                                       (*m2)[static_cast<size_t>(eb.rlin_map[z])]
                                 : eb.rconst[static_cast<size_t>(z)];
            if (r <= kTiny) return kHuge;  // mass where the reference vanishes
            val += eb.w * mz * std::log(mz / r);
        }
    }
    return val;
}

// Gradient of term ti, added into g with weight u.
void add_term_gradient(const Prep& p, int ti, const Point& x, double u, Point& g) {
    const Term& t = p.prog->terms[static_cast<size_t>(ti)];
    for (size_t b = 0; b < x.size(); ++b)
        if (b < t.lin.coef.size() && !t.lin.coef[b].empty())
            for (size_t i = 0; i < x[b].size(); ++i) g[b][i] += u * t.lin.coef[b][i];
    const auto& ebs = p.term_ebs[static_cast<size_t>(ti)];
    std::vector<double> m, m2, rcoef;
    for (const auto& pe : ebs) {
        const auto& eb = *pe.eb;
        accumulate_marginal(x[static_cast<size_t>(eb.block)], pe.mm, m);
        const bool linr = eb.rlin_block >= 0;
        if (linr) accumulate_marginal(x[static_cast<size_t>(eb.rlin_block)], pe.rm, m2);
        // d/dm(z): w (1 + log(m/r)); d/dm2(z2): -w sum_{z->z2} scale(z) m(z)/r(z).
        std::vector<double> dm(static_cast<size_t>(pe.mm.size), 0.0);
        if (linr) rcoef.assign(static_cast<size_t>(pe.rm.size), 0.0);
        for (int z = 0; z < pe.mm.size; ++z) {
            if (!eb.inS.empty() && !eb.inS[static_cast<size_t>(z)]) continue;
            const double mz = std::max(m[static_cast<size_t>(z)], kTiny);
            const double r = linr ? std::max(eb.rlin_scale[static_cast<size_t>(z)] *
                                                 m2[static_cast<size_t>(eb.rlin_map[z])],
                                             kTiny)
                                  : std::max(eb.rconst[static_cast<size_t>(z)], kTiny);
            dm[static_cast<size_t>(z)] = eb.w * (1.0 + std::log(mz / r));
            if (linr)
                rcoef[static_cast<size_t>(eb.rlin_map[z])] +=
                    eb.w * eb.rlin_scale[static_cast<size_t>(z)] * (m[static_cast<size_t>(z)] / r);
        }
        auto& gb = g[static_cast<size_t>(eb.block)];
        const auto& xb = x[static_cast<size_t>(eb.block)];
        for (size_t c = 0; c < xb.size(); ++c) gb[c] += u * dm[static_cast<size_t>(pe.mm.map[c])];
        if (linr) {
            auto& gr = g[static_cast<size_t>(eb.rlin_block)];
            const auto& xr = x[static_cast<size_t>(eb.rlin_block)];
            for (size_t c = 0; c < xr.size(); ++c) gr[c] -= u * rcoef[static_cast<size_t>(pe.rm.map[c])];
        }
    }
}

double smoothed_objective(const Prep& p, const Point& x, double tau, std::vector<double>& tv) {
    const int J = static_cast<int>(p.prog->terms.size());
    tv.resize(static_cast<size_t>(J));
    double mx = -kInf;
    for (int j = 0; j < J; ++j) {
        tv[static_cast<size_t>(j)] = eval_term(p, j, x, nullptr, nullptr);
        mx = std::max(mx, tv[static_cast<size_t>(j)]);
    }
    if (J == 1 || tau <= 0.0) return mx;
    double s = 0.0;
    for (int j = 0; j < J; ++j) s += std::exp((tv[static_cast<size_t>(j)] - mx) / tau);
    return mx + tau * std::log(s);
}

Point default_start(const GeneralProgram& prog, const Prep& p, std::mt19937_64& rng, bool random) {
    Point x(prog.blocks.size());
    std::gamma_distribution<double> gamma(1.0, 1.0);
    for (size_t b = 0; b < prog.blocks.size(); ++b) {
        x[b].assign(static_cast<size_t>(p.cells[b]), 0.0);
        double s = 0.0;
        for (size_t c = 0; c < x[b].size(); ++c) {
            if (!p.allowed[b][c]) continue;
            x[b][c] = random ? gamma(rng) + 1e-3 : 1.0;
            s += x[b][c];
        }
        if (s <= 0.0) throw InfeasibleError("solve_general: block has empty support");
        for (auto& v : x[b]) v /= s;
    }
    return x;
}

GeneralSolveResult descend(const GeneralProgram& prog, const Prep& p, Point x,
                           const SolveOptions& opt) {
    GeneralSolveResult res;
    const int J = static_cast<int>(prog.terms.size());
    std::vector<double> tv;
    double resid = project(prog, p, x, 30000);
    if (resid > 1e-7) throw InfeasibleError("solve_general: cannot reach the constraint set");

    // On thin constraint sets (e.g. a nearly tight halfspace) every re-projection
    // can run hundreds of cycles; a flat work budget keeps the total bounded.
    // The reported value stays a valid upper bound: best_x is always feasible.
    long work = 0;
    const long kWorkBudget = 500000;

    const std::vector<double> tau_stages =
        J == 1 ? std::vector<double>{0.0} : std::vector<double>{1e-2, 1e-4, 1e-6, 1e-8};
    Point best_x = x;
    double best_exact = smoothed_objective(p, x, 0.0, tv);
    int iters = 0;
    double last_change = kInf;

    for (double tau : tau_stages) {
        double eta = 0.5;
        double fcur = smoothed_objective(p, x, tau, tv);
        int stall = 0;
        for (; iters < opt.max_iters && stall < config::kStagnationWindow && work < kWorkBudget;
             ++iters) {
            // softmax weights over terms at temperature tau
            Point g(x.size());
            for (size_t b = 0; b < x.size(); ++b) g[b].assign(x[b].size(), 0.0);
            if (J == 1) {
                add_term_gradient(p, 0, x, 1.0, g);
            } else {
                double mx = *std::max_element(tv.begin(), tv.end());
                double sw = 0.0;
                std::vector<double> u(static_cast<size_t>(J));
                for (int j = 0; j < J; ++j) {
                    u[static_cast<size_t>(j)] = std::exp((tv[static_cast<size_t>(j)] - mx) / std::max(tau, 1e-12));
                    sw += u[static_cast<size_t>(j)];
                }
                for (int j = 0; j < J; ++j)
                    if (u[static_cast<size_t>(j)] > 1e-16 * sw)
                        add_term_gradient(p, j, x, u[static_cast<size_t>(j)] / sw, g);
            }
            // entropic step with backtracking on the projected value
            bool accepted = false;
            for (int bt = 0; bt < 28; ++bt) {
                Point y = x;
                for (size_t b = 0; b < y.size(); ++b) {
                    double mx = -kInf;
                    for (size_t c = 0; c < y[b].size(); ++c)
                        if (y[b][c] > 0.0) mx = std::max(mx, -eta * g[b][c]);
                    double s = 0.0;
                    for (size_t c = 0; c < y[b].size(); ++c) {
                        if (y[b][c] > 0.0) y[b][c] *= std::exp(-eta * g[b][c] - mx);
                        s += y[b][c];
                    }
                    for (auto& v : y[b]) v /= s;
                }
                if (project(prog, p, y, 1500, &work) > 3e-8) {
                    eta *= 0.5;  // projection drifted too far: retry shorter step
                    if (work >= kWorkBudget) break;
                    continue;
                }
                std::vector<double> tvy;
                const double fy = smoothed_objective(p, y, tau, tvy);
                if (fy <= fcur - 1e-15 * (1.0 + std::abs(fcur))) {
                    last_change = fcur - fy;
                    x = std::move(y);
                    tv = std::move(tvy);
                    fcur = fy;
                    eta = std::min(eta * 1.3, 1e3);
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if (!accepted) {
                ++stall;
                last_change = 0.0;
                continue;
            }
            const double exact = *std::max_element(tv.begin(), tv.end());
            if (exact < best_exact) {
                best_exact = exact;
                best_x = x;
            }
            if (last_change < config::kRelChangeTol * (1.0 + std::abs(fcur)))
                ++stall;
            else
                stall = 0;
        }
    }
    (void)project(prog, p, best_x, 30000);  // tighten constraints before reporting
    std::vector<double> tvb;
    (void)smoothed_objective(p, best_x, 0.0, tvb);
    res.value = *std::max_element(tvb.begin(), tvb.end());
    res.active_term =
        static_cast<int>(std::max_element(tvb.begin(), tvb.end()) - tvb.begin());
    res.x = std::move(best_x);
    res.iterations = iters;
    res.last_change = last_change;
    res.converged = true;
    return res;
}

}  // namespace

double term_value(const GeneralProgram& prog, const Term& t, const Point& x) {
    GeneralProgram one = prog;
    one.terms = {t};
    Prep p = prepare(one);
    return eval_term(p, 0, x, nullptr, nullptr);
}

double objective_value(const GeneralProgram& prog, const Point& x) {
    Prep p = prepare(prog);
    double v = -kInf;
    for (size_t j = 0; j < prog.terms.size(); ++j)
        v = std::max(v, eval_term(p, static_cast<int>(j), x, nullptr, nullptr));
    return v;
}

GeneralSolveResult solve_general(const GeneralProgram& prog, const SolveOptions& opt) {
    if (prog.terms.empty()) throw std::invalid_argument("solve_general: no objective terms");
    Prep p = prepare(prog);
    std::mt19937_64 rng(opt.seed);

    std::vector<Point> starts;
    for (const auto& s : opt.starts) starts.push_back(s);
    starts.push_back(default_start(prog, p, rng, false));
    for (int r = 0; r < opt.restarts; ++r) starts.push_back(default_start(prog, p, rng, true));

    GeneralSolveResult best;
    bool have = false;
    std::string fail_msg;
    for (auto& s : starts) {
        try {
            GeneralSolveResult r = descend(prog, p, s, opt);
            if (!have || r.value < best.value) {
                best = std::move(r);
                have = true;
            }
        } catch (const InfeasibleError& e) {
            fail_msg = e.what();
        }
    }
    if (!have) throw InfeasibleError(fail_msg.empty() ? "solve_general: infeasible" : fail_msg);
    return best;
}

GeneralSolveResult solve_with_side(const GeneralProgram& prog,
                                   const std::vector<SideConstraint>& side,
                                   const SolveOptions& opt) {
    if (side.empty()) return solve_general(prog, opt);

    // Feasibility of the side system: minimize max_j (side_j - bound_j).
    {
        GeneralProgram feas = prog;
        feas.terms.clear();
        for (const auto& s : side) {
            Term t = s.term;
            t.lin.cst -= s.bound;
            feas.terms.push_back(std::move(t));
        }
        GeneralSolveResult fr = solve_general(feas, opt);
        if (fr.value > 1e-7) {
            GeneralSolveResult out;
            out.value = kInf;
            out.converged = true;
            out.message = "side constraints infeasible";
            return out;
        }
    }

    // Lagrangian L(nu) = min_x max_j [T_j + sum_k nu_k (S_k - b_k)], concave in nu.
    auto lagrangian = [&](const std::vector<double>& nu, GeneralSolveResult* out) {
        GeneralProgram lp = prog;
        for (auto& t : lp.terms) {
            for (size_t k = 0; k < side.size(); ++k) {
                const double w = nu[k];
                if (w <= 0.0) continue;
                for (const auto& eb : side[k].term.blocks) {
                    EntropyBlock scaled = eb;
                    scaled.w *= w;
                    t.blocks.push_back(std::move(scaled));
                }
                if (!side[k].term.lin.coef.empty()) {
                    if (t.lin.coef.size() < side[k].term.lin.coef.size())
                        t.lin.coef.resize(side[k].term.lin.coef.size());
                    for (size_t b = 0; b < side[k].term.lin.coef.size(); ++b) {
                        const auto& src = side[k].term.lin.coef[b];
                        if (src.empty()) continue;
                        if (t.lin.coef[b].empty()) t.lin.coef[b].assign(src.size(), 0.0);
                        for (size_t i = 0; i < src.size(); ++i) t.lin.coef[b][i] += w * src[i];
                    }
                }
                t.lin.cst += w * (side[k].term.lin.cst - side[k].bound);
            }
        }
        GeneralSolveResult r = solve_general(lp, opt);
        if (out) *out = r;
        return r.value;
    };

    std::vector<double> nu(side.size(), 0.0);
    GeneralSolveResult best;
    double best_val = -kInf;
    // Coordinate golden-section passes over the multipliers (them being few).
    for (int pass = 0; pass < (side.size() == 1 ? 1 : 3); ++pass) {
        for (size_t k = 0; k < side.size(); ++k) {
            double cap = 64.0;
            for (int retry = 0; retry < 2; ++retry) {
                double arg = nu[k];
                golden_max(
                    [&](double v) {
                        std::vector<double> n2 = nu;
                        n2[k] = v;
                        return lagrangian(n2, nullptr);
                    },
                    0.0, cap, &arg, 40);
                nu[k] = arg;
                if (arg < cap * 0.98) break;
                cap *= 4.0;  // boundary hit: widen once
            }
        }
    }
    GeneralSolveResult r;
    best_val = lagrangian(nu, &r);
    best = r;
    best.value = best_val;
    best.message = "side multipliers applied";
    return best;
}

// ---- canonical two-marginal problem ----

ConstrainedProblem ConstrainedProblem::make(ProbVec P1, ProbVec P2, Tensor f, Tensor g,
                                            double beta) {
    if (f.rank() != 2 || g.rank() != 2 || f.dims != g.dims)
        throw std::invalid_argument("ConstrainedProblem: f and g must be matching 2-d tensors");
    if (P1.size() != f.dims[0] || P2.size() != f.dims[1])
        throw std::invalid_argument("ConstrainedProblem: marginal size mismatch");
    for (double v : f.v)
        if (v < 0.0) throw std::invalid_argument("ConstrainedProblem: negative f");
    for (double v : g.v)
        if (v < 0.0) throw std::invalid_argument("ConstrainedProblem: negative g");

    ConstrainedProblem p;
    p.P1 = std::move(P1);
    p.P2 = std::move(P2);
    p.f = std::move(f);
    p.g = std::move(g);
    p.beta = beta;

    if (beta == -kInf) {
        p.feasible = true;
        return p;
    }
    // Feasible iff max E[log f] over the transportation polytope reaches beta.
    // The maximum is linear, attained on f > 0 cells only (else value -inf).
    const int n1 = p.f.dims[0], n2 = p.f.dims[1];
    GeneralProgram gp;
    BlockSpec bs;
    bs.dims = {n1, n2};
    bs.allowed.assign(static_cast<size_t>(n1 * n2), 1);
    bool any_zero = false;
    for (int c = 0; c < n1 * n2; ++c)
        if (p.f.v[static_cast<size_t>(c)] <= 0.0) {
            bs.allowed[static_cast<size_t>(c)] = 0;
            any_zero = true;
        }
    gp.blocks = {bs};
    gp.pins.push_back({0, {0}, p.P1.p});
    gp.pins.push_back({0, {1}, p.P2.p});
    Term t;
    t.name = "neg_log_f";
    t.lin.coef.resize(1);
    t.lin.coef[0].assign(static_cast<size_t>(n1 * n2), 0.0);
    for (int c = 0; c < n1 * n2; ++c)
        if (p.f.v[static_cast<size_t>(c)] > 0.0)
            t.lin.coef[0][static_cast<size_t>(c)] = -std::log(p.f.v[static_cast<size_t>(c)]);
    gp.terms = {t};
    try {
        SolveOptions so;
        so.restarts = 1;
        GeneralSolveResult r = solve_general(gp, so);
        p.feasible = (-r.value >= beta - 1e-9);
    } catch (const InfeasibleError&) {
        // Support restriction leaves no transportation plan: only possible when
        // f-zeros block a whole fiber, so E[log f] is -inf for every plan.
        (void)any_zero;
        p.feasible = false;
    }
    return p;
}

namespace {
GeneralProgram canonical_program(const ConstrainedProblem& p) {
    const int n1 = p.f.dims[0], n2 = p.f.dims[1];
    GeneralProgram gp;
    BlockSpec bs;
    bs.dims = {n1, n2};
    bs.allowed.assign(static_cast<size_t>(n1 * n2), 1);
    const bool metric_active = std::isfinite(p.beta);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            const int c = i * n2 + j;
            bool ok = p.P1[i] > 0.0 && p.P2[j] > 0.0 && p.g.v[static_cast<size_t>(c)] > 0.0;
            if (metric_active && p.f.v[static_cast<size_t>(c)] <= 0.0) ok = false;
            bs.allowed[static_cast<size_t>(c)] = ok ? 1 : 0;
        }
    gp.blocks = {bs};
    gp.pins.push_back({0, {0}, p.P1.p});
    gp.pins.push_back({0, {1}, p.P2.p});
    if (metric_active) {
        gp.has_halfspace = true;
        gp.halfspace.coef.resize(1);
        gp.halfspace.coef[0].assign(static_cast<size_t>(n1 * n2), 0.0);
        for (int c = 0; c < n1 * n2; ++c)
            if (bs.allowed[static_cast<size_t>(c)])
                gp.halfspace.coef[0][static_cast<size_t>(c)] = std::log(p.f.v[static_cast<size_t>(c)]);
        gp.halfspace.cst = -p.beta;
    }
    Term t;
    t.name = "objective";
    EntropyBlock eb;
    eb.block = 0;
    eb.axes = {0, 1};
    eb.rconst.assign(static_cast<size_t>(n1 * n2), 0.0);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            eb.rconst[static_cast<size_t>(i * n2 + j)] =
                p.P1[i] * p.P2[j] * p.g.v[static_cast<size_t>(i * n2 + j)];
    t.blocks = {eb};
    gp.terms = {t};
    return gp;
}
}  // namespace

SolveReport solve_primal(const ConstrainedProblem& p, const SolveOptions& opt) {
    if (!p.feasible) throw InfeasibleError("solve_primal: constraint set is empty");
    GeneralProgram gp = canonical_program(p);
    GeneralSolveResult r = solve_general(gp, opt);

    SolveReport rep;
    rep.value = r.value;
    rep.iterations = r.iterations;
    Tensor arg = Tensor::zeros(p.f.dims);
    arg.v = r.x[0];
    rep.argmin = std::move(arg);
    DualParams dp;
    SolveReport dual = solve_dual(p, &dp, opt);
    rep.gap = rep.value - dual.value;
    rep.converged = rep.gap <= opt.tol_gap && rep.gap >= -1e-7;
    return rep;
}

double dual_value(const ConstrainedProblem& p, double lambda, const std::vector<double>& mu1) {
    const int n1 = p.f.dims[0], n2 = p.f.dims[1];
    double val = lambda * (std::isfinite(p.beta) ? p.beta : 0.0);
    for (int i = 0; i < n1; ++i) val += p.P1[i] * mu1[static_cast<size_t>(i)];
    for (int j = 0; j < n2; ++j) {
        if (p.P2[j] == 0.0) continue;
        double mx = -kInf;
        for (int i = 0; i < n1; ++i) {
            if (p.P1[i] == 0.0) continue;
            const double fv = p.f.v[static_cast<size_t>(i * n2 + j)];
            const double gv = p.g.v[static_cast<size_t>(i * n2 + j)];
            if (gv <= 0.0) continue;
            if (fv <= 0.0 && lambda > 0.0) continue;
            const double e = std::log(p.P1[i]) + (lambda > 0.0 ? lambda * std::log(fv) : 0.0) +
                             std::log(gv) + mu1[static_cast<size_t>(i)];
            mx = std::max(mx, e);
        }
        if (mx == -kInf) return kHuge;  // empty column: primal forced to +inf
        double s = 0.0;
        for (int i = 0; i < n1; ++i) {
            if (p.P1[i] == 0.0) continue;
            const double fv = p.f.v[static_cast<size_t>(i * n2 + j)];
            const double gv = p.g.v[static_cast<size_t>(i * n2 + j)];
            if (gv <= 0.0) continue;
            if (fv <= 0.0 && lambda > 0.0) continue;
            const double e = std::log(p.P1[i]) + (lambda > 0.0 ? lambda * std::log(fv) : 0.0) +
                             std::log(gv) + mu1[static_cast<size_t>(i)];
            s += std::exp(e - mx);
        }
        val -= p.P2[j] * (mx + std::log(s));
    }
    return val;
}

SolveReport solve_dual(const ConstrainedProblem& p, DualParams* params, const SolveOptions& opt) {
    const int n1 = p.f.dims[0], n2 = p.f.dims[1];
    (void)opt;
    const bool metric_active = std::isfinite(p.beta);

    // Inner concave maximization over mu at fixed lambda (analytic gradient).
    auto inner = [&](double lambda, std::vector<double>& mu) {
        double best = dual_value(p, lambda, mu);
        double step = 1.0;
        for (int it = 0; it < 3000; ++it) {
            // grad_i = P1(i) - sum_j P2(j) w_ij, w_ij the Gibbs posterior weight.
            std::vector<double> grad(static_cast<size_t>(n1), 0.0);
            for (int i = 0; i < n1; ++i) grad[static_cast<size_t>(i)] = p.P1[i];
            for (int j = 0; j < n2; ++j) {
                if (p.P2[j] == 0.0) continue;
                double mx = -kInf;
                std::vector<double> e(static_cast<size_t>(n1), -kInf);
                for (int i = 0; i < n1; ++i) {
                    if (p.P1[i] == 0.0) continue;
                    const double fv = p.f.v[static_cast<size_t>(i * n2 + j)];
                    const double gv = p.g.v[static_cast<size_t>(i * n2 + j)];
                    if (gv <= 0.0) continue;
                    if (fv <= 0.0 && lambda > 0.0) continue;
                    e[static_cast<size_t>(i)] = std::log(p.P1[i]) +
                                                (lambda > 0.0 ? lambda * std::log(fv) : 0.0) +
                                                std::log(gv) + mu[static_cast<size_t>(i)];
                    mx = std::max(mx, e[static_cast<size_t>(i)]);
                }
                if (mx == -kInf) continue;
                double s = 0.0;
                for (int i = 0; i < n1; ++i)
                    if (e[static_cast<size_t>(i)] > -kInf) s += std::exp(e[static_cast<size_t>(i)] - mx);
                for (int i = 0; i < n1; ++i)
                    if (e[static_cast<size_t>(i)] > -kInf)
                        grad[static_cast<size_t>(i)] -= p.P2[j] * std::exp(e[static_cast<size_t>(i)] - mx) / s;
            }
            double gn = 0.0;
            for (double v : grad) gn = std::max(gn, std::abs(v));
            if (gn < 1e-12) break;
            bool ok = false;
            for (int bt = 0; bt < 60; ++bt) {
                std::vector<double> mu2 = mu;
                for (int i = 0; i < n1; ++i) mu2[static_cast<size_t>(i)] += step * grad[static_cast<size_t>(i)];
                const double v2 = dual_value(p, lambda, mu2);
                if (v2 > best + 1e-16) {
                    mu = std::move(mu2);
                    best = v2;
                    step = std::min(step * 1.5, 1e4);
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if (!ok) break;
        }
        return best;
    };

    std::vector<double> mu(static_cast<size_t>(n1), 0.0);
    double best_lambda = 0.0;
    double best = inner(0.0, mu);
    std::vector<double> best_mu = mu;

    if (metric_active) {
        double cap = config::kScalarCap;
        for (int attempt = 0; attempt < 2; ++attempt) {
            double arg = best_lambda;
            std::vector<double> mu_golden = best_mu;
            golden_max(
                [&](double lam) {
                    std::vector<double> m = mu_golden;  // warm start across probes
                    return inner(lam, m);
                },
                0.0, cap, &arg, 60);
            std::vector<double> mu_arg = best_mu;
            const double v = inner(arg, mu_arg);
            if (v > best) {
                best = v;
                best_lambda = arg;
                best_mu = mu_arg;
            }
            if (best_lambda < 0.98 * cap) break;
            cap *= 2.0;  // boundary warning handled by one doubling retry
        }
    }

    SolveReport rep;
    rep.value = best;
    rep.converged = true;
    rep.iterations = 0;
    if (params) {
        params->lambda = best_lambda;
        params->mu1 = best_mu;
    }
    return rep;
}

double oracle_primal(const ConstrainedProblem& p) {
    const int n1 = p.f.dims[0], n2 = p.f.dims[1];
    if (n1 * n2 > 16) throw BudgetExceeded("oracle_primal: too many cells");
    const int free_dims = (n1 - 1) * (n2 - 1);
    if (free_dims > 4) throw BudgetExceeded("oracle_primal: too many free dimensions");
    if (!p.feasible) throw InfeasibleError("oracle_primal: infeasible");

    // Base point with the pinned marginals: the independent coupling.
    std::vector<double> base(static_cast<size_t>(n1 * n2));
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) base[static_cast<size_t>(i * n2 + j)] = p.P1[i] * p.P2[j];

    // Basis of the marginal-preserving subspace.
    std::vector<std::vector<double>> basis;
    for (int i = 0; i + 1 < n1; ++i)
        for (int j = 0; j + 1 < n2; ++j) {
            std::vector<double> b(static_cast<size_t>(n1 * n2), 0.0);
            b[static_cast<size_t>(i * n2 + j)] += 1.0;
            b[static_cast<size_t>(i * n2 + (n2 - 1))] -= 1.0;
            b[static_cast<size_t>((n1 - 1) * n2 + j)] -= 1.0;
            b[static_cast<size_t>((n1 - 1) * n2 + (n2 - 1))] += 1.0;
            basis.push_back(std::move(b));
        }

    auto value_at = [&](const std::vector<double>& t, bool barrier) {
        std::vector<double> x = base;
        for (size_t k = 0; k < basis.size(); ++k)
            for (size_t c = 0; c < x.size(); ++c) x[c] += t[k] * basis[k][c];
        double pen = 0.0;
        double elogf = 0.0;
        double val = 0.0;
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j) {
                const double xc = x[static_cast<size_t>(i * n2 + j)];
                if (xc < -1e-12) {
                    if (!barrier) return kHuge;
                    pen += -xc;
                    continue;
                }
                if (xc <= 0.0) continue;
                const double fv = p.f.v[static_cast<size_t>(i * n2 + j)];
                const double gv = p.g.v[static_cast<size_t>(i * n2 + j)];
                if (gv <= 0.0 || p.P1[i] <= 0.0 || p.P2[j] <= 0.0) return kHuge;
                if (std::isfinite(p.beta)) {
                    if (fv <= 0.0) return kHuge;
                    elogf += xc * std::log(fv);
                }
                val += xc * std::log(xc / (p.P1[i] * p.P2[j] * gv));
            }
        if (std::isfinite(p.beta)) {
            const double viol = p.beta - elogf;
            if (viol > 1e-12) {
                if (!barrier) return kHuge;
                pen += viol;
            }
        }
        return val + 1e5 * pen;
    };

    // Per-coordinate feasibility intervals around the base point.
    std::vector<double> lo(basis.size()), hi(basis.size());
    for (size_t k = 0; k < basis.size(); ++k) {
        double l = -1.0, h = 1.0;
        for (size_t c = 0; c < base.size(); ++c) {
            if (basis[k][c] > 0.5)
                l = std::max(l, -base[c]);
            else if (basis[k][c] < -0.5)
                h = std::min(h, base[c]);
        }
        lo[k] = l;
        hi[k] = h;
    }

    double best = kHuge;
    std::vector<double> best_t(basis.size(), 0.0);
    std::vector<int> idx(basis.size(), 0);
    const int steps = 64;
    while (true) {
        std::vector<double> t(basis.size());
        for (size_t k = 0; k < basis.size(); ++k)
            t[k] = lo[k] + (hi[k] - lo[k]) * idx[k] / steps;
        const double v = value_at(t, false);
        if (v < best) {
            best = v;
            best_t = t;
        }
        size_t k = 0;
        for (; k < basis.size(); ++k) {
            if (++idx[k] <= steps) break;
            idx[k] = 0;
        }
        if (k == basis.size()) break;
    }

    // Nelder-Mead polish with a penalty for constraint violations.
    std::vector<double> t = best_t;
    nelder_mead_max([&](const std::vector<double>& u) { return -value_at(u, true); }, t,
                    (hi[0] - lo[0]) / 128.0, 2000);
    return std::min(best, value_at(t, true));
}

MinMaxSplitResult minmax_split(const MinMaxSplitInput& in) {
    const int ngrid = 257;
    for (int i = 0; i < ngrid; ++i) {
        const double t = in.lo + (in.hi - in.lo) * i / (ngrid - 1);
        if (in.g1(t) + in.g2(t) > in.g(t) + 1e-9)
            throw PreconditionViolated("minmax_split: g1 + g2 > g at t=" + std::to_string(t));
    }
    auto minimize = [&](const std::function<double(double)>& h) {
        double arg = in.lo;
        const double v = golden_max([&](double t) { return -h(t); }, in.lo, in.hi, &arg, 120);
        // dense pre-scan to guard golden-section against flat plateaus
        double best = -v;
        for (int i = 0; i < 1025; ++i) {
            const double t = in.lo + (in.hi - in.lo) * i / 1024.0;
            best = std::min(best, h(t));
        }
        return best;
    };
    MinMaxSplitResult r;
    r.left = minimize([&](double t) {
        return in.f(t) + std::max(0.0, std::max(in.g(t), std::max(in.g1(t), in.g2(t))));
    });
    r.right1 = minimize([&](double t) { return in.f(t) + std::max(0.0, std::max(in.g1(t), in.g(t))); });
    r.right2 = minimize([&](double t) { return in.f(t) + std::max(0.0, std::max(in.g2(t), in.g(t))); });
    r.right = std::max(r.right1, r.right2);
    return r;
}

double ascend(const std::function<double(const std::vector<double>&)>& phi,
              std::vector<double>& theta, const std::vector<double>& lo,
              const std::vector<double>& hi, const AscentOptions& opt) {
    const size_t d = theta.size();
    auto clamp = [&](std::vector<double>& x) {
        for (size_t i = 0; i < d; ++i) {
            if (i < lo.size()) x[i] = std::max(x[i], lo[i]);
            if (i < hi.size()) x[i] = std::min(x[i], hi[i]);
        }
    };
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, opt.restart_spread);

    std::vector<double> best_x = theta;
    clamp(best_x);
    double best = phi(best_x);

    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        std::vector<double> x = theta;
        if (r > 0)
            for (auto& v : x) v += gauss(rng) * (r % 2 ? 1.0 : 0.1);
        clamp(x);
        double fx = phi(x);
        double step = opt.init_step;
        int stall = 0;
        for (int it = 0; it < opt.max_iters && stall < 8; ++it) {
            std::vector<double> g(d, 0.0);
            for (size_t i = 0; i < d; ++i) {
                const double h = 1e-6 * (1.0 + std::abs(x[i]));
                std::vector<double> xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                clamp(xp);
                clamp(xm);
                const double denom = xp[i] - xm[i];
                if (denom <= 0.0) continue;
                g[i] = (phi(xp) - phi(xm)) / denom;
            }
            double gn = 0.0;
            for (double v : g) gn = std::max(gn, std::abs(v));
            if (gn < 1e-13) break;
            bool ok = false;
            for (int bt = 0; bt < 50; ++bt) {
                std::vector<double> y = x;
                for (size_t i = 0; i < d; ++i) y[i] += step * g[i];
                clamp(y);
                const double fy = phi(y);
                if (fy > fx + 1e-15) {
                    if (fy - fx < opt.tol * (1.0 + std::abs(fx)))
                        ++stall;
                    else
                        stall = 0;
                    x = std::move(y);
                    fx = fy;
                    step = std::min(step * 1.5, 1e3);
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if (!ok) break;
        }
        if (fx > best) {
            best = fx;
            best_x = x;
        }
    }
    theta = best_x;
    return best;
}

double golden_max(const std::function<double(double)>& phi, double lo, double hi, double* arg,
                  int iters) {
    const double gr = 0.6180339887498949;
    // coarse scan guards against non-unimodal wrinkles before the golden phase
    double best_t = lo, best_v = -kInf;
    for (int i = 0; i <= 32; ++i) {
        const double t = lo + (hi - lo) * i / 32.0;
        const double v = phi(t);
        if (v > best_v) {
            best_v = v;
            best_t = t;
        }
    }
    double a = std::max(lo, best_t - (hi - lo) / 16.0);
    double b = std::min(hi, best_t + (hi - lo) / 16.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = phi(x1), f2 = phi(x2);
    for (int it = 0; it < iters && (b - a) > 1e-12 * (1.0 + std::abs(b)); ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = phi(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = phi(x1);
        }
    }
    const double t = 0.5 * (a + b);
    const double v = phi(t);
    if (v >= best_v) {
        if (arg) *arg = t;
        return v;
    }
    if (arg) *arg = best_t;
    return best_v;
}

double nelder_mead_max(const std::function<double(const std::vector<double>&)>& phi,
                       std::vector<double>& x, double scale, int max_iters) {
    const size_t d = x.size();
    if (d == 0) return phi(x);
    std::vector<std::vector<double>> pts(d + 1, x);
    std::vector<double> f(d + 1);
    for (size_t i = 0; i < d; ++i) pts[i + 1][i] += (scale == 0.0 ? 0.05 : scale);
    for (size_t i = 0; i <= d; ++i) f[i] = phi(pts[i]);

    for (int it = 0; it < max_iters; ++it) {
        // sort descending (maximization)
        std::vector<size_t> ord(d + 1);
        std::iota(ord.begin(), ord.end(), size_t{0});
        std::sort(ord.begin(), ord.end(), [&](size_t a, size_t b) { return f[a] > f[b]; });
        std::vector<std::vector<double>> np(d + 1);
        std::vector<double> nf(d + 1);
        for (size_t i = 0; i <= d; ++i) {
            np[i] = pts[ord[i]];
            nf[i] = f[ord[i]];
        }
        pts = np;
        f = nf;
        if (std::abs(f[0] - f[d]) < 1e-13 * (1.0 + std::abs(f[0]))) break;

        std::vector<double> centroid(d, 0.0);
        for (size_t i = 0; i < d; ++i)
            for (size_t k = 0; k < d; ++k) centroid[k] += pts[i][k] / static_cast<double>(d);
        auto blend = [&](double alpha) {
            std::vector<double> y(d);
            for (size_t k = 0; k < d; ++k) y[k] = centroid[k] + alpha * (pts[d][k] - centroid[k]);
            return y;
        };
        std::vector<double> xr = blend(-1.0);
        const double fr = phi(xr);
        if (fr > f[0]) {
            std::vector<double> xe = blend(-2.0);
            const double fe = phi(xe);
            if (fe > fr) {
                pts[d] = xe;
                f[d] = fe;
            } else {
                pts[d] = xr;
                f[d] = fr;
            }
        } else if (fr > f[d - 1]) {
            pts[d] = xr;
            f[d] = fr;
        } else {
            std::vector<double> xc = blend(0.5);
            const double fc = phi(xc);
            if (fc > f[d]) {
                pts[d] = xc;
                f[d] = fc;
            } else {
                for (size_t i = 1; i <= d; ++i) {
                    for (size_t k = 0; k < d; ++k) pts[i][k] = 0.5 * (pts[i][k] + pts[0][k]);
                    f[i] = phi(pts[i]);
                }
            }
        }
    }
    size_t bi = 0;
    for (size_t i = 1; i <= d; ++i)
        if (f[i] > f[bi]) bi = i;
    x = pts[bi];
    return f[bi];
}

}  // namespace mm
