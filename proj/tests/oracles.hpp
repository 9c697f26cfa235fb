#pragma once

// Slow, independently-coded references the fast kernels are judged against.
// Everything here accumulates in double and takes the textbook form on
// purpose; none of it shares code with src/.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hadamix/rng.hpp"
#include "hadamix/tensor.hpp"

namespace hadamix::oracle {

inline Tensor matmul_naive(const Tensor& a, const Tensor& b) {
    Tensor c = Tensor::zeros({a.rows(), b.cols()});
    for (int64_t i = 0; i < a.rows(); ++i)
        for (int64_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < a.cols(); ++k)
                acc += double(a.at(i, k)) * double(b.at(k, j));
            c.at(i, j) = float(acc);
        }
    return c;
}

inline Tensor softmax_rows_naive(const Tensor& x) {
    Tensor p = Tensor::zeros({x.rows(), x.cols()});
    for (int64_t i = 0; i < x.rows(); ++i) {
        double mx = -1e300;
        for (int64_t j = 0; j < x.cols(); ++j) mx = std::max(mx, double(x.at(i, j)));
        double sum = 0.0;
        for (int64_t j = 0; j < x.cols(); ++j) sum += std::exp(double(x.at(i, j)) - mx);
        for (int64_t j = 0; j < x.cols(); ++j)
            p.at(i, j) = float(std::exp(double(x.at(i, j)) - mx) / sum);
    }
    return p;
}

inline Tensor layer_norm_naive(const Tensor& x, const Tensor& gain, const Tensor& bias,
                               double eps) {
    Tensor out = Tensor::zeros({x.rows(), x.cols()});
    const int64_t k = x.cols();
    for (int64_t i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < k; ++j) mean += double(x.at(i, j));
        mean /= double(k);
        double var = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            const double c = double(x.at(i, j)) - mean;
            var += c * c;
        }
        var /= double(k);
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < k; ++j)
            out.at(i, j) = float(double(gain.at(j)) * (double(x.at(i, j)) - mean) * rstd +
                                 double(bias.at(j)));
    }
    return out;
}

inline Tensor rms_norm_naive(const Tensor& x, const Tensor& gain, double eps) {
    Tensor out = Tensor::zeros({x.rows(), x.cols()});
    const int64_t k = x.cols();
    for (int64_t i = 0; i < x.rows(); ++i) {
        double ms = 0.0;
        for (int64_t j = 0; j < k; ++j) ms += double(x.at(i, j)) * double(x.at(i, j));
        ms /= double(k);
        const double r = 1.0 / std::sqrt(ms + eps);
        for (int64_t j = 0; j < k; ++j)
            out.at(i, j) = float(double(gain.at(j)) * double(x.at(i, j)) * r);
    }
    return out;
}

inline Tensor random_tensor(std::initializer_list<int64_t> shape, Rng& rng,
                            float scale = 1.0f) {
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
    return worst;
}

// max |a-b| / max |b|; scale-aware comparison for whole tensors.
inline double rel_diff(const Tensor& a, const Tensor& b) {
    double scale = 0.0;
    for (int64_t i = 0; i < b.numel(); ++i)
        scale = std::max(scale, std::abs(double(b.data()[i])));
    return max_abs_diff(a, b) / std::max(scale, 1e-30);
}

inline bool bytes_equal(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline double byte_entropy_nats(const std::string& bytes) {
    int64_t hist[256] = {};
    for (unsigned char c : bytes) ++hist[c];
    double h = 0.0;
    for (int64_t n : hist) {
        if (n == 0) continue;
        const double p = double(n) / double(bytes.size());
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace hadamix::oracle
