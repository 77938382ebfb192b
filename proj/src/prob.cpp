#include "mm/prob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
    }
}
}  // namespace

double xlogx(double x) {
    if (x < 0.0) {
        if (x > -config::kDerivedTol) return 0.0;  // numerical dust from projections
        throw std::invalid_argument("xlogx: negative argument");
    }
    return x == 0.0 ? 0.0 : x * std::log(x);
}

Alphabet Alphabet::make(int size) {
    if (size <= 0) throw std::invalid_argument("Alphabet: size must be positive");
    Alphabet a;
    a.size = size;
    return a;
}

Alphabet Alphabet::make(std::vector<std::string> labels) {
    if (labels.empty()) throw std::invalid_argument("Alphabet: empty label list");
    Alphabet a;
    a.size = static_cast<int>(labels.size());
    a.labels = std::move(labels);
    return a;
}

ProbVec ProbVec::make(std::vector<double> p) {
    if (p.empty()) throw std::invalid_argument("ProbVec: empty");
    check_finite(p, "ProbVec");
    double s = 0.0;
    for (double x : p) {
        if (x < 0.0) throw std::invalid_argument("ProbVec: negative entry");
        s += x;
    }
    if (std::abs(s - 1.0) > config::kInputTol)
        throw std::invalid_argument("ProbVec: entries sum to " + std::to_string(s) + ", not 1");
    ProbVec out;
    out.p = std::move(p);
    return out;
}

Tensor Tensor::zeros(std::vector<int> dims) {
    if (dims.empty() || dims.size() > 4) throw std::invalid_argument("Tensor: rank must be 1..4");
    long long n = 1;
    for (int d : dims) {
        if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
        n *= d;
        if (n > (1LL << 26)) throw std::invalid_argument("Tensor: too many cells");
    }
    Tensor t;
    t.dims = std::move(dims);
    t.v.assign(static_cast<size_t>(n), 0.0);
    return t;
}

int Tensor::index(const std::vector<int>& idx) const {
    if (idx.size() != dims.size()) throw std::invalid_argument("Tensor::index: rank mismatch");
    int flat = 0;
    for (size_t a = 0; a < dims.size(); ++a) {
        if (idx[a] < 0 || idx[a] >= dims[a]) throw std::out_of_range("Tensor::index");
        flat = flat * dims[a] + idx[a];
    }
    return flat;
}

void Tensor::decode(int flat, std::vector<int>& idx) const {
    idx.resize(dims.size());
    for (int a = static_cast<int>(dims.size()) - 1; a >= 0; --a) {
        idx[static_cast<size_t>(a)] = flat % dims[static_cast<size_t>(a)];
        flat /= dims[static_cast<size_t>(a)];
    }
}

double Tensor::sum() const { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<long long> projection_strides(const std::vector<int>& dims, const std::vector<int>& axes) {
    // Stride of each full-tensor axis inside the marginal tensor (0 when dropped).
    std::vector<long long> strides(dims.size(), 0);
    long long s = 1;
    for (int i = static_cast<int>(axes.size()) - 1; i >= 0; --i) {
        const int a = axes[static_cast<size_t>(i)];
        if (a < 0 || a >= static_cast<int>(dims.size()))
            throw std::invalid_argument("projection_strides: axis out of range");
        strides[static_cast<size_t>(a)] = s;
        s *= dims[static_cast<size_t>(a)];
    }
    return strides;
}

Tensor marginal(const Tensor& t, const std::vector<int>& axes) {
    std::vector<int> mdims;
    mdims.reserve(axes.size());
    for (int a : axes) {
        if (a < 0 || a >= t.rank()) throw std::invalid_argument("marginal: axis out of range");
        mdims.push_back(t.dims[static_cast<size_t>(a)]);
    }
    Tensor m = Tensor::zeros(mdims);
    const auto strides = projection_strides(t.dims, axes);
    for (int c = 0; c < t.cells(); ++c)
        m.v[static_cast<size_t>(project_cell(c, t.dims, strides))] += t.v[static_cast<size_t>(c)];
    return m;
}

JointDist JointDist::make(Tensor t) {
    check_finite(t.v, "JointDist");
    for (double x : t.v)
        if (x < 0.0) throw std::invalid_argument("JointDist: negative cell");
    const double s = t.sum();
    if (std::abs(s - 1.0) > config::kInputTol)
        throw std::invalid_argument("JointDist: mass sums to " + std::to_string(s));
    JointDist j;
    j.t = std::move(t);
    return j;
}

Channel Channel::make(Tensor k) {
    if (k.rank() < 2) throw std::invalid_argument("Channel: needs at least one input axis");
    check_finite(k.v, "Channel");
    const int out = k.dims.back();
    const int rows = k.cells() / out;
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int y = 0; y < out; ++y) {
            const double w = k.v[static_cast<size_t>(r * out + y)];
            if (w < 0.0) throw std::invalid_argument("Channel: negative entry");
            s += w;
        }
        if (std::abs(s - 1.0) > config::kInputTol)
            throw std::invalid_argument("Channel: row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
    Channel c;
    c.k = std::move(k);
    return c;
}

Metric Metric::make(Tensor k) {
    if (k.rank() < 2) throw std::invalid_argument("Metric: needs at least one input axis");
    check_finite(k.v, "Metric");
    const int out = k.dims.back();
    const int rows = k.cells() / out;
    for (int r = 0; r < rows; ++r) {
        double mx = 0.0;
        for (int y = 0; y < out; ++y) {
            const double q = k.v[static_cast<size_t>(r * out + y)];
            if (q < 0.0) throw std::invalid_argument("Metric: negative entry");
            mx = std::max(mx, q);
        }
        if (mx <= 0.0)
            throw std::invalid_argument("Metric: input slice " + std::to_string(r) + " identically zero");
    }
    Metric m;
    m.k = std::move(k);
    return m;
}

MappingSpec MappingSpec::make(int n1, int n2, int n_image, std::vector<int> psi) {
    if (n1 <= 0 || n2 <= 0 || n_image <= 0) throw std::invalid_argument("MappingSpec: bad sizes");
    if (static_cast<int>(psi.size()) != n1 * n2)
        throw std::invalid_argument("MappingSpec: psi table size mismatch");
    for (int x : psi)
        if (x < 0 || x >= n_image) throw std::invalid_argument("MappingSpec: psi value out of range");
    MappingSpec m;
    m.n1 = n1;
    m.n2 = n2;
    m.n_image = n_image;
    m.psi = std::move(psi);
    return m;
}

double entropy(const ProbVec& p) {
    double h = 0.0;
    for (double x : p.p) h -= xlogx(x);
    return h;
}

double kl_divergence(const ProbVec& p, const ProbVec& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
    double d = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) return kInf;
        d += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(d, 0.0);
}

double kl_divergence(const Tensor& p, const Tensor& q) {
    if (p.dims != q.dims) throw std::invalid_argument("kl_divergence: shape mismatch");
    double d = 0.0;
    for (size_t i = 0; i < p.v.size(); ++i) {
        if (p.v[i] == 0.0) continue;
        if (q.v[i] == 0.0) return kInf;
        d += p.v[i] * std::log(p.v[i] / q.v[i]);
    }
    return std::max(d, 0.0);
}

namespace {
std::vector<int> concat_axes(std::vector<int> a, const std::vector<int>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}
}  // namespace

double mutual_information(const JointDist& j, const std::vector<int>& axesA,
                          const std::vector<int>& axesB) {
    const Tensor jab = marginal(j.t, concat_axes(axesA, axesB));
    const Tensor ja = marginal(j.t, axesA);
    const Tensor jb = marginal(j.t, axesB);
    // I(A;B) = sum p(a,b) log( p(a,b) / (p(a) p(b)) )
    double mi = 0.0;
    const int nb = jb.cells();
    for (int c = 0; c < jab.cells(); ++c) {
        const double pab = jab.v[static_cast<size_t>(c)];
        if (pab == 0.0) continue;
        const double pa = ja.v[static_cast<size_t>(c / nb)];
        const double pb = jb.v[static_cast<size_t>(c % nb)];
        mi += pab * std::log(pab / (pa * pb));
    }
    return std::max(mi, 0.0);
}

double mutual_information(const JointDist& j) {
    if (j.rank() != 2) throw std::invalid_argument("mutual_information: expected 2 axes");
    return mutual_information(j, {0}, {1});
}

double conditional_mutual_information(const JointDist& j, const std::vector<int>& axesA,
                                      const std::vector<int>& axesB,
                                      const std::vector<int>& axesC) {
    // I(A;B|C) = H(AC) + H(BC) - H(ABC) - H(C), written via the four marginals.
    auto negH = [](const Tensor& t) {
        double s = 0.0;
        for (double x : t.v) s += xlogx(x);
        return s;
    };
    const Tensor jac = marginal(j.t, concat_axes(axesA, axesC));
    const Tensor jbc = marginal(j.t, concat_axes(axesB, axesC));
    const Tensor jabc = marginal(j.t, concat_axes(concat_axes(axesA, axesB), axesC));
    const Tensor jc = marginal(j.t, axesC);
    const double mi = negH(jabc) + negH(jc) - negH(jac) - negH(jbc);
    return std::max(mi, 0.0);
}

Channel product_channel(const Channel& a, const Channel& b) {
    if (a.in_axes() != 1 || b.in_axes() != 1)
        throw std::invalid_argument("product_channel: single-user factors required");
    const int xa = a.k.dims[0], ya = a.k.dims[1];
    const int xb = b.k.dims[0], yb = b.k.dims[1];
    Tensor t = Tensor::zeros({xa * xb, ya * yb});
    for (int i = 0; i < xa; ++i)
        for (int j = 0; j < xb; ++j)
            for (int u = 0; u < ya; ++u)
                for (int v = 0; v < yb; ++v)
                    t.v[static_cast<size_t>((i * xb + j) * (ya * yb) + u * yb + v)] =
                        a.k.v[static_cast<size_t>(i * ya + u)] * b.k.v[static_cast<size_t>(j * yb + v)];
    return Channel::make(std::move(t));
}

Metric product_metric(const Metric& a, const Metric& b) {
    if (a.in_axes() != 1 || b.in_axes() != 1)
        throw std::invalid_argument("product_metric: single-user factors required");
    const int xa = a.k.dims[0], ya = a.k.dims[1];
    const int xb = b.k.dims[0], yb = b.k.dims[1];
    Tensor t = Tensor::zeros({xa * xb, ya * yb});
    for (int i = 0; i < xa; ++i)
        for (int j = 0; j < xb; ++j)
            for (int u = 0; u < ya; ++u)
                for (int v = 0; v < yb; ++v)
                    t.v[static_cast<size_t>((i * xb + j) * (ya * yb) + u * yb + v)] =
                        a.k.v[static_cast<size_t>(i * ya + u)] * b.k.v[static_cast<size_t>(j * yb + v)];
    return Metric::make(std::move(t));
}

Channel power_channel(const Channel& w, int k) {
    if (k < 1 || k > 3) throw std::invalid_argument("power_channel: order must be 1..3");
    Channel out = w;
    for (int i = 1; i < k; ++i) out = product_channel(out, w);
    return out;
}

Metric power_metric(const Metric& q, int k) {
    if (k < 1 || k > 3) throw std::invalid_argument("power_metric: order must be 1..3");
    Metric out = q;
    for (int i = 1; i < k; ++i) out = product_metric(out, q);
    return out;
}

std::pair<Channel, Metric> sum_channel(const Channel& w1, const Metric& q1,
                                       const Channel& w2, const Metric& q2) {
    if (w1.in_axes() != 1 || w2.in_axes() != 1)
        throw std::invalid_argument("sum_channel: single-user components required");
    if (w1.k.dims != q1.k.dims || w2.k.dims != q2.k.dims)
        throw std::invalid_argument("sum_channel: metric/channel shape mismatch");
    const int x1 = w1.k.dims[0], y1 = w1.k.dims[1];
    const int x2 = w2.k.dims[0], y2 = w2.k.dims[1];
    Tensor w = Tensor::zeros({x1 + x2, y1 + y2});
    Tensor q = Tensor::zeros({x1 + x2, y1 + y2});
    for (int i = 0; i < x1; ++i)
        for (int y = 0; y < y1; ++y) {
            w.v[static_cast<size_t>(i * (y1 + y2) + y)] = w1.k.v[static_cast<size_t>(i * y1 + y)];
            q.v[static_cast<size_t>(i * (y1 + y2) + y)] = q1.k.v[static_cast<size_t>(i * y1 + y)];
        }
    for (int i = 0; i < x2; ++i)
        for (int y = 0; y < y2; ++y) {
            w.v[static_cast<size_t>((x1 + i) * (y1 + y2) + y1 + y)] = w2.k.v[static_cast<size_t>(i * y2 + y)];
            q.v[static_cast<size_t>((x1 + i) * (y1 + y2) + y1 + y)] = q2.k.v[static_cast<size_t>(i * y2 + y)];
        }
    return {Channel::make(std::move(w)), Metric::make(std::move(q))};
}

std::pair<Channel, Metric> mac_from_mapping(const MappingSpec& m, const Channel& wp,
                                            const Metric& qp) {
    if (wp.in_axes() != 1) throw std::invalid_argument("mac_from_mapping: W' must be single-user");
    if (wp.k.dims[0] != m.n_image || qp.k.dims != wp.k.dims)
        throw std::invalid_argument("mac_from_mapping: shape mismatch with psi image");
    const int ny = wp.out_size();
    Tensor w = Tensor::zeros({m.n1, m.n2, ny});
    Tensor q = Tensor::zeros({m.n1, m.n2, ny});
    for (int a = 0; a < m.n1; ++a)
        for (int b = 0; b < m.n2; ++b) {
            const int xp = m.at(a, b);
            for (int y = 0; y < ny; ++y) {
                w.v[static_cast<size_t>((a * m.n2 + b) * ny + y)] = wp.k.v[static_cast<size_t>(xp * ny + y)];
                q.v[static_cast<size_t>((a * m.n2 + b) * ny + y)] = qp.k.v[static_cast<size_t>(xp * ny + y)];
            }
        }
    return {Channel::make(std::move(w)), Metric::make(std::move(q))};
}

Tensor input_output_joint(const Channel& w, const ProbVec& q1) {
    if (w.in_axes() != 1) throw std::invalid_argument("input_output_joint: expected 1 input axis");
    if (q1.size() != w.k.dims[0]) throw std::invalid_argument("input_output_joint: Q size mismatch");
    Tensor t = Tensor::zeros(w.k.dims);
    const int ny = w.out_size();
    for (int x = 0; x < w.k.dims[0]; ++x)
        for (int y = 0; y < ny; ++y)
            t.v[static_cast<size_t>(x * ny + y)] = q1[x] * w.k.v[static_cast<size_t>(x * ny + y)];
    return t;
}

Tensor input_output_joint(const Channel& w, const ProbVec& q1, const ProbVec& q2) {
    if (w.in_axes() != 2) throw std::invalid_argument("input_output_joint: expected 2 input axes");
    if (q1.size() != w.k.dims[0] || q2.size() != w.k.dims[1])
        throw std::invalid_argument("input_output_joint: Q size mismatch");
    Tensor t = Tensor::zeros(w.k.dims);
    const int ny = w.out_size();
    for (int a = 0; a < w.k.dims[0]; ++a)
        for (int b = 0; b < w.k.dims[1]; ++b)
            for (int y = 0; y < ny; ++y)
                t.v[static_cast<size_t>((a * w.k.dims[1] + b) * ny + y)] =
                    q1[a] * q2[b] * w.k.v[static_cast<size_t>((a * w.k.dims[1] + b) * ny + y)];
    return t;
}

Tensor ux_output_joint(const Channel& w, const Tensor& q_ux) {
    if (w.in_axes() != 1) throw std::invalid_argument("ux_output_joint: expected single-user channel");
    if (q_ux.rank() != 2 || q_ux.dims[1] != w.k.dims[0])
        throw std::invalid_argument("ux_output_joint: Q_UX shape mismatch");
    const int nu = q_ux.dims[0], nx = q_ux.dims[1], ny = w.out_size();
    Tensor t = Tensor::zeros({nu, nx, ny});
    for (int u = 0; u < nu; ++u)
        for (int x = 0; x < nx; ++x)
            for (int y = 0; y < ny; ++y)
                t.v[static_cast<size_t>((u * nx + x) * ny + y)] =
                    q_ux.v[static_cast<size_t>(u * nx + x)] * w.k.v[static_cast<size_t>(x * ny + y)];
    return t;
}

}  // namespace mm
