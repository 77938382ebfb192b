#include "mm/su_rates.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Pruned {
    ProbVec Q;        // restricted to the support of the original Q
    Tensor w, q;      // matching rows only
    std::vector<double> py;
    double beta = 0.0;  // E_P[log q]; -inf when P puts mass on q = 0 cells
};

// Drop zero-probability inputs: they affect neither the constraint set nor the
// codebook ensemble, and keeping them would only add vacuous solver cells.
Pruned prune(const Channel& W, const Metric& q, const ProbVec& Q) {
    if (W.in_axes() != 1) throw std::invalid_argument("su_rates: channel must have one input");
    if (q.k.dims != W.k.dims) throw std::invalid_argument("su_rates: metric/channel shape mismatch");
    const int nx = W.k.dims[0], ny = W.k.dims[1];
    if (Q.size() != nx) throw std::invalid_argument("su_rates: input law size mismatch");

    std::vector<int> keep;
    for (int x = 0; x < nx; ++x)
        if (Q[x] > 0.0) keep.push_back(x);
    const int m = static_cast<int>(keep.size());
    if (m == 0) throw std::invalid_argument("su_rates: input law has empty support");

    Pruned pr;
    std::vector<double> qp(static_cast<size_t>(m));
    pr.w = Tensor::zeros({m, ny});
    pr.q = Tensor::zeros({m, ny});
    pr.py.assign(static_cast<size_t>(ny), 0.0);
    pr.beta = 0.0;
    for (int i = 0; i < m; ++i) {
        const int x = keep[static_cast<size_t>(i)];
        qp[static_cast<size_t>(i)] = Q[x];
        for (int y = 0; y < ny; ++y) {
            const double wv = W.k.v[static_cast<size_t>(x * ny + y)];
            const double qv = q.k.v[static_cast<size_t>(x * ny + y)];
            pr.w.v[static_cast<size_t>(i * ny + y)] = wv;
            pr.q.v[static_cast<size_t>(i * ny + y)] = qv;
            const double mass = Q[x] * wv;
            pr.py[static_cast<size_t>(y)] += mass;
            if (mass > 0.0) {
                if (qv <= 0.0)
                    pr.beta = -kInf;  // metric constraint becomes vacuous
                else if (pr.beta != -kInf)
                    pr.beta += mass * std::log(qv);
            }
        }
    }
    pr.Q = ProbVec::make(std::move(qp));
    return pr;
}

}  // namespace

SuRateRequest SuRateRequest::make(Channel W, Metric q, ProbVec Q, Form form, int order) {
    if (order < 1 || order > 3) throw BudgetExceeded("su_rates: order must be in [1, 3]");
    SuRateRequest r{std::move(W), std::move(q), std::move(Q), form, order};
    if (r.order > 1) {
        long long n = 1;
        for (int i = 0; i < r.order; ++i) n *= r.W.k.dims[0];
        if (r.Q.size() != n)
            throw std::invalid_argument("su_rates: product input law must live on the product alphabet");
    }
    return r;
}

ConstrainedProblem lm_problem(const Channel& W, const Metric& q, const ProbVec& Q) {
    Pruned pr = prune(W, q, Q);
    const int ny = static_cast<int>(pr.py.size());
    Tensor g = Tensor::zeros({pr.Q.size(), ny});
    for (auto& v : g.v) v = 1.0;
    // With g == 1 and the two marginals pinned to (Q, P_Y) the objective
    // I(Z1;Z2) - E[log g] is exactly I_P~(X;Y).
    return ConstrainedProblem::make(pr.Q, ProbVec::make(pr.py), pr.q, g, pr.beta);
}

RateReport lm_rate(const SuRateRequest& req) {
    if (req.order != 1) throw std::invalid_argument("su_rates: lm_rate is single-letter; use product_lm_rate");
    ConstrainedProblem p = lm_problem(req.W, req.q, req.Q);
    RateReport out;
    if (req.form != Form::dual) {
        SolveReport rp = solve_primal(p);
        out.primal = rp.value;
        out.gap = rp.gap;
        out.converged = rp.converged;
    }
    if (req.form != Form::primal) {
        SolveReport rd = solve_dual(p, &out.params);
        out.dual = rd.value;
    }
    if (req.form == Form::both) out.gap = out.primal - out.dual;
    out.value = (req.form == Form::dual) ? out.dual : out.primal;
    return out;
}

double gmi(const SuRateRequest& req) {
    if (req.order != 1) throw std::invalid_argument("su_rates: gmi is single-letter");
    Pruned pr = prune(req.W, req.q, req.Q);
    if (pr.beta == -kInf) return 0.0;  // s > 0 is ruined by a zero-metric true pair
    ConstrainedProblem p = lm_problem(req.W, req.q, req.Q);
    const std::vector<double> zero(static_cast<size_t>(pr.Q.size()), 0.0);
    auto phi = [&](double s) { return dual_value(p, s, zero); };
    double cap = config::kScalarCap;
    double s_best = 0.0;
    double best = golden_max(phi, 0.0, cap, &s_best);
    for (int retry = 0; retry < 4 && s_best > 0.98 * cap; ++retry) {
        cap *= 2.0;
        best = golden_max(phi, 0.0, cap, &s_best);
    }
    return std::max(best, 0.0);  // s = 0 always attains 0
}

double product_lm_rate(const SuRateRequest& req) {
    if (req.order < 1 || req.order > 3) throw BudgetExceeded("su_rates: order must be in [1, 3]");
    if (req.order == 1) return lm_rate(req).value;
    SuRateRequest ext = req;
    ext.W = power_channel(req.W, req.order);
    ext.q = power_metric(req.q, req.order);
    ext.order = 1;
    return lm_rate(ext).value / static_cast<double>(req.order);
}

}  // namespace mm
