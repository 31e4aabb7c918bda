#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "cvit/rng.hpp"
#include "cvit/tensor.hpp"

namespace test_helpers {

// Scratch directory under the test's working directory, removed on exit.
class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(std::filesystem::path("tmp_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline cvit::Tensor rand_tensor(cvit::Rng& rng, cvit::Shape shape, double lo = -1.0,
                                double hi = 1.0) {
    cvit::Tensor t = cvit::Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "leaf 2, element 17"
};

// Compares reverse-mode gradients of a scalar loss against central finite
// differences for every element of every leaf. loss_fn must rebuild the
// computation from the leaves' current data on each call.
inline GradCheckResult check_gradients(std::vector<cvit::Tensor> leaves,
                                       const std::function<cvit::Tensor()>& loss_fn,
                                       double h = 1e-5) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    {
        cvit::Tape tape;
        cvit::TapeScope scope(tape);
        cvit::Tensor loss = loss_fn();
        tape.backward(loss);
    }
    GradCheckResult result;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (std::size_t i = 0; i < leaf.size(); ++i) {
            const double saved = leaf.data()[i];
            leaf.data()[i] = saved + h;
            const double f_plus = loss_fn().value();
            leaf.data()[i] = saved - h;
            const double f_minus = loss_fn().value();
            leaf.data()[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double err = rel_err(leaf.grad()[i], fd);
            if (err > result.max_rel_err) {
                result.max_rel_err = err;
                result.worst = "leaf " + std::to_string(li) + ", element " + std::to_string(i);
            }
        }
    }
    return result;
}

}  // namespace test_helpers
