#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hadamix {

// Dense row-major float32 array of rank 1..3. The single numeric currency of
// the library: activations, weights, gradients and benchmark inputs are all
// Tensors. Kernels reject shape mismatches instead of broadcasting.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::initializer_list<int64_t> shape);

    static Tensor zeros(std::initializer_list<int64_t> shape);
    static Tensor full(std::initializer_list<int64_t> shape, float value);

    int rank() const { return rank_; }
    int64_t extent(int axis) const { return ext_[axis]; }
    int64_t numel() const;
    bool empty() const { return data_.empty(); }

    // 2-D convenience accessors.
    int64_t rows() const { return ext_[0]; }
    int64_t cols() const { return rank_ >= 2 ? ext_[1] : 1; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& at(int64_t i) { return data_[i]; }
    const float& at(int64_t i) const { return data_[i]; }
    float& at(int64_t i, int64_t j) { return data_[i * ext_[1] + j]; }
    const float& at(int64_t i, int64_t j) const { return data_[i * ext_[1] + j]; }
    float& at(int64_t i, int64_t j, int64_t k) {
        return data_[(i * ext_[1] + j) * ext_[2] + k];
    }
    const float& at(int64_t i, int64_t j, int64_t k) const {
        return data_[(i * ext_[1] + j) * ext_[2] + k];
    }

    // Row i of a rank-2 tensor.
    std::span<float> row(int64_t i) { return {data_.data() + i * ext_[1], size_t(ext_[1])}; }
    std::span<const float> row(int64_t i) const {
        return {data_.data() + i * ext_[1], size_t(ext_[1])};
    }

    bool same_shape(const Tensor& other) const;
    std::string shape_str() const;

    void fill(float value);
    void zero() { fill(0.0f); }

private:
    std::array<int64_t, 3> ext_{1, 1, 1};
    int rank_ = 0;
    std::vector<float> data_;
};

// Raises std::invalid_argument naming `who` unless the two shapes agree.
void require_same_shape(const Tensor& a, const Tensor& b, const char* who);
void require_rank(const Tensor& t, int rank, const char* who);

// A trainable tensor: value plus same-shaped gradient buffer. `decay` marks
// participation in decoupled weight decay; scale/shift vectors, norm gains and
// biases opt out.
struct ParamTensor {
    std::string name;
    Tensor value;
    Tensor grad;
    bool decay = true;

    ParamTensor() = default;
    ParamTensor(std::string n, Tensor v, bool decay_flag);

    void zero_grad() { grad.zero(); }
    int64_t numel() const { return value.numel(); }
};

}  // namespace hadamix
