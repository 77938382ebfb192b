#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mm/convex.hpp"
#include "mm/prob.hpp"

// Shared bookkeeping for the superposition-coding modules: per-cell facts of
// joint (U, X, Y) laws, entropy-block builders for the information terms, and
// the log-domain pieces of the dual bounds. Cells are indexed
// z = (u*nx + x)*ny + y; the metric never depends on u.
namespace mm {
namespace uxy {

constexpr double kInfV = std::numeric_limits<double>::infinity();
constexpr double kFail = -1e18;  // dual evaluation hit an infinite penalty

// Streaming log-sum-exp accumulator; -inf entries are no-ops.
struct LseAcc {
    double m = -kInfV, s = 0.0;
    void add(double t) {
        if (t == -kInfV) return;
        if (t <= m) {
            s += std::exp(t - m);
        } else {
            s = s * std::exp(m - t) + 1.0;
            m = t;
        }
    }
    double value() const { return s > 0.0 ? m + std::log(s) : -kInfV; }
};

struct Cells {
    int nu = 0, nx = 0, ny = 0, total = 0;
    std::vector<double> pw;     // Q_UX(u,x) W(y|x)
    std::vector<double> logq;   // log q(x,y) per cell; -inf where the metric vanishes
    std::vector<double> py;     // output marginal of pw
    std::vector<double> puy;    // (u,y) marginal of pw
    std::vector<double> qu;     // cloud marginal of Q_UX
    std::vector<double> qxgu;   // Q_{X|U}(x|u), row-major [nu, nx]; 0 on massless clouds
    std::vector<uint8_t> sup;   // Q_UX > 0
    std::vector<uint8_t> qpos;  // sup and q > 0
    std::vector<uint8_t> wsup;  // sup and W > 0
    double beta = 0.0;          // E_pw[log q]; -inf when channel mass meets q = 0
    bool dirty = false;         // beta is -inf (metric constraint degenerates)
};

inline Cells analyze(const Channel& W, const Metric& q, const Tensor& Q_UX) {
    Cells c;
    c.nu = Q_UX.dims[0];
    c.nx = Q_UX.dims[1];
    c.ny = W.k.dims[1];
    c.total = c.nu * c.nx * c.ny;
    c.pw.assign(static_cast<size_t>(c.total), 0.0);
    c.logq.assign(static_cast<size_t>(c.total), 0.0);
    c.py.assign(static_cast<size_t>(c.ny), 0.0);
    c.puy.assign(static_cast<size_t>(c.nu * c.ny), 0.0);
    c.qu.assign(static_cast<size_t>(c.nu), 0.0);
    c.qxgu.assign(static_cast<size_t>(c.nu * c.nx), 0.0);
    c.sup.assign(static_cast<size_t>(c.total), 0);
    c.qpos.assign(static_cast<size_t>(c.total), 0);
    c.wsup.assign(static_cast<size_t>(c.total), 0);
    for (int u = 0; u < c.nu; ++u)
        for (int x = 0; x < c.nx; ++x)
            c.qu[static_cast<size_t>(u)] += Q_UX.v[static_cast<size_t>(u * c.nx + x)];
    for (int u = 0; u < c.nu; ++u)
        for (int x = 0; x < c.nx; ++x) {
            const double m = Q_UX.v[static_cast<size_t>(u * c.nx + x)];
            if (c.qu[static_cast<size_t>(u)] > 0.0)
                c.qxgu[static_cast<size_t>(u * c.nx + x)] = m / c.qu[static_cast<size_t>(u)];
        }
    double beta = 0.0;
    for (int u = 0; u < c.nu; ++u)
        for (int x = 0; x < c.nx; ++x)
            for (int y = 0; y < c.ny; ++y) {
                const int z = (u * c.nx + x) * c.ny + y;
                const double w = W.k.v[static_cast<size_t>(x * c.ny + y)];
                const double qv = q.k.v[static_cast<size_t>(x * c.ny + y)];
                const bool on = Q_UX.v[static_cast<size_t>(u * c.nx + x)] > 0.0;
                c.sup[static_cast<size_t>(z)] = on;
                c.qpos[static_cast<size_t>(z)] = on && qv > 0.0;
                c.wsup[static_cast<size_t>(z)] = on && w > 0.0;
                c.logq[static_cast<size_t>(z)] = qv > 0.0 ? std::log(qv) : -kInfV;
                const double mass = on ? Q_UX.v[static_cast<size_t>(u * c.nx + x)] * w : 0.0;
                c.pw[static_cast<size_t>(z)] = mass;
                c.py[static_cast<size_t>(y)] += mass;
                c.puy[static_cast<size_t>(u * c.ny + y)] += mass;
                if (mass > 0.0) {
                    if (qv > 0.0)
                        beta += mass * std::log(qv);
                    else
                        c.dirty = true;
                }
            }
    c.beta = c.dirty ? -kInfV : beta;
    return c;
}

// I(U;Y) against the block's own output marginal; valid because the (u,x)
// marginal of every block using it is pinned to Q_UX.
inline EntropyBlock eb_iuy(const Cells& c, int block) {
    EntropyBlock eb;
    eb.block = block;
    eb.axes = {0, 2};
    eb.rlin_block = block;
    eb.rlin_axes = {2};
    eb.rlin_map.resize(static_cast<size_t>(c.nu * c.ny));
    eb.rlin_scale.resize(static_cast<size_t>(c.nu * c.ny));
    for (int u = 0; u < c.nu; ++u)
        for (int y = 0; y < c.ny; ++y) {
            eb.rlin_map[static_cast<size_t>(u * c.ny + y)] = y;
            eb.rlin_scale[static_cast<size_t>(u * c.ny + y)] = c.qu[static_cast<size_t>(u)];
        }
    return eb;
}

// I(U,X;Y) against the block's own output marginal.
inline EntropyBlock eb_iuxy(const Cells& c, int block, const Tensor& Q_UX) {
    EntropyBlock eb;
    eb.block = block;
    eb.axes = {0, 1, 2};
    eb.rlin_block = block;
    eb.rlin_axes = {2};
    eb.rlin_map.resize(static_cast<size_t>(c.total));
    eb.rlin_scale.resize(static_cast<size_t>(c.total));
    for (int z = 0; z < c.total; ++z) {
        eb.rlin_map[static_cast<size_t>(z)] = z % c.ny;
        eb.rlin_scale[static_cast<size_t>(z)] = Q_UX.v[static_cast<size_t>(z / c.ny)];
    }
    return eb;
}

// Sum over clouds u in the mask of Q_U(u) I(X;Y|U=u), against the block's own
// (u,y) marginal; an empty mask means all clouds, i.e. I(X;Y|U).
inline EntropyBlock eb_ixy_cond(const Cells& c, int block, const std::vector<uint8_t>& umask = {}) {
    EntropyBlock eb;
    eb.block = block;
    eb.axes = {0, 1, 2};
    eb.rlin_block = block;
    eb.rlin_axes = {0, 2};
    eb.rlin_map.resize(static_cast<size_t>(c.total));
    eb.rlin_scale.resize(static_cast<size_t>(c.total));
    if (!umask.empty()) eb.inS.assign(static_cast<size_t>(c.total), 0);
    for (int z = 0; z < c.total; ++z) {
        const int y = z % c.ny, x = (z / c.ny) % c.nx, u = z / (c.ny * c.nx);
        eb.rlin_map[static_cast<size_t>(z)] = u * c.ny + y;
        eb.rlin_scale[static_cast<size_t>(z)] = c.qxgu[static_cast<size_t>(u * c.nx + x)];
        if (!umask.empty()) eb.inS[static_cast<size_t>(z)] = umask[static_cast<size_t>(u)];
    }
    return eb;
}

// ---- dual bounds (log-domain; convention: q^0 = 1 even at q = 0) ----

// blog(u, y) = log E[q(Xbar, y)^{s_u(u)} e^{a(u, Xbar)} | U = u] under Q_{X|U}.
inline void fill_blog(const Cells& c, const double* s_u, const double* a,
                      std::vector<double>& blog) {
    blog.assign(static_cast<size_t>(c.nu * c.ny), -kInfV);
    for (int u = 0; u < c.nu; ++u)
        for (int y = 0; y < c.ny; ++y) {
            LseAcc acc;
            for (int x = 0; x < c.nx; ++x) {
                const double g = c.qxgu[static_cast<size_t>(u * c.nx + x)];
                if (g <= 0.0) continue;
                double t = std::log(g) + a[u * c.nx + x];
                if (s_u[u] > 0.0) {
                    const double lq = c.logq[static_cast<size_t>((u * c.nx + x) * c.ny + y)];
                    if (lq == -kInfV) continue;
                    t += s_u[u] * lq;
                }
                acc.add(t);
            }
            blog[static_cast<size_t>(u * c.ny + y)] = acc.value();
        }
}

// alog(y) = log E[e^{rho_u(Ubar) blog(Ubar, y)}] under Q_U.
inline void fill_alog(const Cells& c, const double* rho_u, const std::vector<double>& blog,
                      std::vector<double>& alog) {
    alog.assign(static_cast<size_t>(c.ny), -kInfV);
    for (int y = 0; y < c.ny; ++y) {
        LseAcc acc;
        for (int u = 0; u < c.nu; ++u) {
            const double qv = c.qu[static_cast<size_t>(u)];
            if (qv <= 0.0) continue;
            double t = std::log(qv);
            if (rho_u[u] > 0.0) {
                const double b = blog[static_cast<size_t>(u * c.ny + y)];
                if (b == -kInfV) continue;
                t += rho_u[u] * b;
            }
            acc.add(t);
        }
        alog[static_cast<size_t>(y)] = acc.value();
    }
}

// Shared objective of the cloud-rate duals: with per-cloud tilts (rho_u, s_u)
// and costs a(u,x), the value is E[rho_u(U)(s_u(U) log q + a(U,X)) - alog(Y)].
// Rate penalties are the callers' business. Returns kFail when the expectation
// hits an infinite penalty.
inline double cloud_dual_core(const Cells& c, const double* rho_u, const double* s_u,
                              const double* a) {
    for (int z = 0; z < c.total; ++z) {
        if (c.pw[static_cast<size_t>(z)] <= 0.0) continue;
        const int u = z / (c.ny * c.nx);
        if (rho_u[u] > 0.0 && s_u[u] > 0.0 && c.logq[static_cast<size_t>(z)] == -kInfV)
            return kFail;
    }
    std::vector<double> blog, alog;
    fill_blog(c, s_u, a, blog);
    fill_alog(c, rho_u, blog, alog);
    double v = 0.0;
    for (int z = 0; z < c.total; ++z) {
        const double m = c.pw[static_cast<size_t>(z)];
        if (m <= 0.0) continue;
        const int u = z / (c.ny * c.nx);
        if (rho_u[u] <= 0.0) continue;
        double t = a[z / c.ny];
        if (s_u[u] > 0.0) t += s_u[u] * c.logq[static_cast<size_t>(z)];
        v += m * rho_u[u] * t;
    }
    for (int y = 0; y < c.ny; ++y) {
        const double m = c.py[static_cast<size_t>(y)];
        if (m <= 0.0) continue;
        if (alog[static_cast<size_t>(y)] == -kInfV) return kFail;
        v -= m * alog[static_cast<size_t>(y)];
    }
    return v;
}

}  // namespace uxy
}  // namespace mm
