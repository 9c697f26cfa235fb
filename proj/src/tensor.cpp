#include "hadamix/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace hadamix {

Tensor::Tensor(std::initializer_list<int64_t> shape) {
    if (shape.size() < 1 || shape.size() > 3)
        throw std::invalid_argument("Tensor: rank must be 1..3");
    rank_ = int(shape.size());
    int i = 0;
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0) throw std::invalid_argument("Tensor: extents must be positive");
        ext_[i++] = e;
        n *= e;
    }
    data_.assign(size_t(n), 0.0f);
}

Tensor Tensor::zeros(std::initializer_list<int64_t> shape) { return Tensor(shape); }

Tensor Tensor::full(std::initializer_list<int64_t> shape, float value) {
    Tensor t(shape);
    t.fill(value);
    return t;
}

int64_t Tensor::numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= ext_[i];
    return rank_ == 0 ? 0 : n;
}

bool Tensor::same_shape(const Tensor& other) const {
    if (rank_ != other.rank_) return false;
    for (int i = 0; i < rank_; ++i)
        if (ext_[i] != other.ext_[i]) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rank_; ++i) {
        if (i) os << 'x';
        os << ext_[i];
    }
    os << ']';
    return os.str();
}

void Tensor::fill(float value) {
    for (auto& x : data_) x = value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

void require_rank(const Tensor& t, int rank, const char* who) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(who) + ": expected rank " +
                                    std::to_string(rank) + ", got " + t.shape_str());
}

ParamTensor::ParamTensor(std::string n, Tensor v, bool decay_flag)
    : name(std::move(n)), value(std::move(v)), decay(decay_flag) {
    grad = value;
    grad.zero();
}

}  // namespace hadamix
