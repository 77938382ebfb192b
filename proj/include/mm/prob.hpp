#pragma once

// Core finite-alphabet probability types and information measures.
// All information quantities are computed and stored in nats; convert to bits
// only at presentation time.

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mm {

namespace config {
// Validation tolerance for user-supplied distributions / rows.
inline constexpr double kInputTol = 1e-12;
// Tolerance for internally computed marginals and normalizations.
inline constexpr double kDerivedTol = 1e-9;
inline constexpr double kLn2 = 0.69314718055994530942;
// Solver defaults (shared across modules).
inline constexpr double kSolveGapTol = 1e-5;     // target gap, nats
inline constexpr double kRelChangeTol = 1e-10;   // stagnation threshold
inline constexpr int kStagnationWindow = 20;
inline constexpr double kScalarCap = 50.0;       // search cap for s-type scalars
}  // namespace config

inline double nats_to_bits(double v) { return v / config::kLn2; }
inline double bits_to_nats(double v) { return v * config::kLn2; }

// x log x with the 0 log 0 = 0 convention.
double xlogx(double x);

struct Alphabet {
    int size = 0;
    std::vector<std::string> labels;  // optional; when present, labels.size() == size

    static Alphabet make(int size);
    static Alphabet make(std::vector<std::string> labels);
};

// Probability vector: nonnegative, sums to 1 within config::kInputTol.
struct ProbVec {
    std::vector<double> p;

    static ProbVec make(std::vector<double> p);
    int size() const { return static_cast<int>(p.size()); }
    double operator[](int i) const { return p[static_cast<size_t>(i)]; }
};

// Dense row-major tensor over 1..4 axes. The workhorse for joints/kernels.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> v;

    static Tensor zeros(std::vector<int> dims);
    int rank() const { return static_cast<int>(dims.size()); }
    int cells() const { return static_cast<int>(v.size()); }
    int index(const std::vector<int>& idx) const;
    void decode(int flat, std::vector<int>& idx) const;
    double& at(const std::vector<int>& idx) { return v[static_cast<size_t>(index(idx))]; }
    double at(const std::vector<int>& idx) const { return v[static_cast<size_t>(index(idx))]; }
    double sum() const;
};

// Marginal of t onto the listed axes (kept in the given order).
Tensor marginal(const Tensor& t, const std::vector<int>& axes);

// Flat index of the projection of cell `flat` onto `axes`; `strides` as produced
// by projection_strides. Used in solver hot loops.
std::vector<long long> projection_strides(const std::vector<int>& dims, const std::vector<int>& axes);
inline int project_cell(int flat, const std::vector<int>& dims, const std::vector<long long>& strides) {
    long long r = 0;
    int rem = flat;
    for (int a = static_cast<int>(dims.size()) - 1; a >= 0; --a) {
        const int d = dims[static_cast<size_t>(a)];
        const int coord = rem % d;
        rem /= d;
        r += strides[static_cast<size_t>(a)] * coord;
    }
    return static_cast<int>(r);
}

// Joint distribution over 1..4 axes: nonnegative, total mass 1 within kInputTol.
struct JointDist {
    Tensor t;

    static JointDist make(Tensor t);
    int rank() const { return t.rank(); }
};

// Conditional kernel: last axis is the output, leading axes are inputs.
// Every input slice is a distribution over the output (within kInputTol).
struct Channel {
    Tensor k;  // dims = [in..., out]

    static Channel make(Tensor k);
    int in_axes() const { return k.rank() - 1; }
    int out_size() const { return k.dims.back(); }
};

// Decoding metric, same shape as the channel it decodes: nonnegative, and every
// input slice has at least one strictly positive entry.
struct Metric {
    Tensor k;

    static Metric make(Tensor k);
    int in_axes() const { return k.rank() - 1; }
};

// Deterministic mapping (x1, x2) -> x' turning a single-user channel into a MAC.
struct MappingSpec {
    int n1 = 0, n2 = 0, n_image = 0;
    std::vector<int> psi;  // row-major n1 x n2, values in [0, n_image)

    static MappingSpec make(int n1, int n2, int n_image, std::vector<int> psi);
    int at(int x1, int x2) const { return psi[static_cast<size_t>(x1 * n2 + x2)]; }
};

// ---- information measures (nats) ----

double entropy(const ProbVec& p);
// +infinity when p is not absolutely continuous w.r.t. q.
double kl_divergence(const ProbVec& p, const ProbVec& q);
double kl_divergence(const Tensor& p, const Tensor& q);

// I(A; B) for a joint over axis groups A and B (groups must partition the axes
// they mention; axes not listed are marginalized out first).
double mutual_information(const JointDist& j, const std::vector<int>& axesA,
                          const std::vector<int>& axesB);
// Two-axis shorthand: I(axis0; axis1).
double mutual_information(const JointDist& j);
// I(A; B | C).
double conditional_mutual_information(const JointDist& j, const std::vector<int>& axesA,
                                      const std::vector<int>& axesB,
                                      const std::vector<int>& axesC);

// ---- constructions ----

// Product of two single-user channels/metrics: inputs and outputs are pairs.
Channel product_channel(const Channel& a, const Channel& b);
Metric product_metric(const Metric& a, const Metric& b);
// k-fold product of a channel/metric with itself, collapsing inputs/outputs to
// single axes of size |X|^k and |Y|^k (row-major pair encoding).
Channel power_channel(const Channel& w, int k);
Metric power_metric(const Metric& q, int k);

// Sum (union) channel of two single-user channels: X = X1 ⊔ X2, Y = Y1 ⊔ Y2,
// cross blocks are exactly zero in both the channel and the metric.
std::pair<Channel, Metric> sum_channel(const Channel& w1, const Metric& q1,
                                       const Channel& w2, const Metric& q2);

// MAC built from a deterministic mapping: W(y|x1,x2) = W'(y|psi(x1,x2)), same for q.
std::pair<Channel, Metric> mac_from_mapping(const MappingSpec& m, const Channel& wp,
                                            const Metric& qp);

// Joint P(x.., y) = Q1(x1) [Q2(x2)] W(y|x..) for 1- or 2-input channels.
Tensor input_output_joint(const Channel& w, const ProbVec& q1);
Tensor input_output_joint(const Channel& w, const ProbVec& q1, const ProbVec& q2);
// Joint P(u, x, y) = Q_UX(u,x) W(y|x) for a single-user channel with auxiliary input.
Tensor ux_output_joint(const Channel& w, const Tensor& q_ux);

}  // namespace mm
