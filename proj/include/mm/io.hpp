#pragma once

// JSON instance files. Schema (all numeric arrays row-major nested):
//   {
//     "alphabets": {"X": 3, "Y": 3}            // or X1/X2/Y, or U/X/Y; sizes or label arrays
//     "W": [[...], ...],                        // channel; MAC kernels are [x1][x2][y]
//     "q": [[...], ...],                        // metric, same shape as W
//     "Q": [...],                               // single-user input distribution
//     "Q1": [...], "Q2": [...],                 // MAC input distributions
//     "Q_UX": [[...], ...],                     // joint auxiliary/input distribution
//     "psi": [[...], ...], "W_prime": ..., "q_prime": ...   // mapping form (optional)
//   }
// Unknown fields are ignored so one file can serve several commands.

#include <optional>
#include <string>

#include "mm/prob.hpp"

namespace mm {

struct InstanceFile {
    std::optional<Channel> W;
    std::optional<Metric> q;
    std::optional<ProbVec> Q;
    std::optional<ProbVec> Q1, Q2;
    std::optional<Tensor> Q_UX;        // validated to total mass 1
    std::optional<MappingSpec> psi;
    std::optional<Channel> W_prime;
    std::optional<Metric> q_prime;
};

InstanceFile load_instance(const std::string& path);

// Directory holding the checked-in example instances. Honors MM_DATA_DIR, then
// the compile-time default.
std::string data_dir();

}  // namespace mm
