#include "mm/io.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace mm {

namespace {
using nlohmann::json;

std::vector<double> as_vec(const json& j) { return j.get<std::vector<double>>(); }

// Flatten arbitrarily nested numeric arrays row-major, recording the shape.
void flatten(const json& j, std::vector<int>& dims, std::vector<double>& out, int depth) {
    if (j.is_array()) {
        if (depth == static_cast<int>(dims.size()))
            dims.push_back(static_cast<int>(j.size()));
        else if (dims[static_cast<size_t>(depth)] != static_cast<int>(j.size()))
            throw std::invalid_argument("ragged nested array");
        for (const auto& e : j) flatten(e, dims, out, depth + 1);
    } else {
        if (depth != static_cast<int>(dims.size()))
            throw std::invalid_argument("inconsistent nesting depth");
        out.push_back(j.get<double>());
    }
}

Tensor tensor_of(const json& j) {
    std::vector<int> dims;
    std::vector<double> flat;
    flatten(j, dims, flat, 0);
    Tensor t = Tensor::zeros(dims);
    t.v = std::move(flat);
    return t;
}
}  // namespace

InstanceFile load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open instance file: " + path);
    json j;
    in >> j;

    InstanceFile f;
    if (j.contains("W")) f.W = Channel::make(tensor_of(j["W"]));
    if (j.contains("q")) f.q = Metric::make(tensor_of(j["q"]));
    if (j.contains("Q")) f.Q = ProbVec::make(as_vec(j["Q"]));
    if (j.contains("Q1")) f.Q1 = ProbVec::make(as_vec(j["Q1"]));
    if (j.contains("Q2")) f.Q2 = ProbVec::make(as_vec(j["Q2"]));
    if (j.contains("Q_UX")) {
        Tensor t = tensor_of(j["Q_UX"]);
        if (t.rank() != 2) throw std::invalid_argument("Q_UX must be 2-dimensional");
        if (std::abs(t.sum() - 1.0) > config::kInputTol)
            throw std::invalid_argument("Q_UX must sum to 1");
        f.Q_UX = std::move(t);
    }
    if (j.contains("W_prime")) f.W_prime = Channel::make(tensor_of(j["W_prime"]));
    if (j.contains("q_prime")) f.q_prime = Metric::make(tensor_of(j["q_prime"]));
    if (j.contains("psi")) {
        Tensor t = tensor_of(j["psi"]);
        if (t.rank() != 2) throw std::invalid_argument("psi must be 2-dimensional");
        int image = 0;
        std::vector<int> table(t.v.size());
        for (size_t i = 0; i < t.v.size(); ++i) {
            table[i] = static_cast<int>(t.v[i]);
            image = std::max(image, table[i] + 1);
        }
        if (f.W_prime) image = std::max(image, f.W_prime->k.dims[0]);
        f.psi = MappingSpec::make(t.dims[0], t.dims[1], image, std::move(table));
        if (!f.W && f.W_prime && f.q_prime) {
            auto built = mac_from_mapping(*f.psi, *f.W_prime, *f.q_prime);
            f.W = built.first;
            f.q = built.second;
        }
    }
    return f;
}

std::string data_dir() {
    if (const char* env = std::getenv("MM_DATA_DIR")) return env;
#ifdef MM_DATA_DIR_DEFAULT
    return MM_DATA_DIR_DEFAULT;
#else
    return "data";
#endif
}

}  // namespace mm
