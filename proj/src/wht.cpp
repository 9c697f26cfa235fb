#include "hadamix/wht.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hadamix/opcount.hpp"
#include "hadamix/threadpool.hpp"

namespace hadamix {

namespace {

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

int log2_exact(int64_t n) {
    int m = 0;
    while ((int64_t(1) << m) < n) ++m;
    return m;
}

}  // namespace

HadamardSpec HadamardSpec::sylvester(int m, bool normalized) {
    if (m < 0) throw std::invalid_argument("HadamardSpec: negative Sylvester exponent");
    return {int64_t(1) << m, 1, m, normalized};
}

HadamardSpec HadamardSpec::composite12(int m, bool normalized) {
    if (m < 0) throw std::invalid_argument("HadamardSpec: negative composite exponent");
    return {int64_t(12) << m, 12, m, normalized};
}

bool HadamardSpec::order_supported(int64_t d) {
    if (d <= 0) return false;
    return is_pow2(d) || (d % 12 == 0 && is_pow2(d / 12));
}

HadamardSpec HadamardSpec::for_order(int64_t d, bool normalized) {
    if (d > 0 && is_pow2(d)) return sylvester(log2_exact(d), normalized);
    if (d > 0 && d % 12 == 0 && is_pow2(d / 12))
        return composite12(log2_exact(d / 12), normalized);
    throw std::invalid_argument("unsupported Hadamard order " + std::to_string(d) +
                                ": supported orders are 2^m and 12*2^m");
}

const int8_t* paley12_entries() {
    // H = I + S with S = [[0, 1^T], [-1, Q]], Q_ij = chi(i - j) over GF(11).
    static const auto table = [] {
        std::array<int8_t, 144> h{};
        bool qr[11] = {};
        for (int k = 1; k < 11; ++k) qr[(k * k) % 11] = true;
        auto chi = [&](int a) {
            a %= 11;
            if (a < 0) a += 11;
            return a == 0 ? 0 : (qr[a] ? 1 : -1);
        };
        for (int i = 0; i < 12; ++i) {
            for (int j = 0; j < 12; ++j) {
                int s;
                if (i == 0 && j == 0) s = 0;
                else if (i == 0) s = 1;
                else if (j == 0) s = -1;
                else s = chi((i - 1) - (j - 1));
                h[size_t(i * 12 + j)] = int8_t(s + (i == j ? 1 : 0));
            }
        }
        return h;
    }();
    return table.data();
}

Tensor build_hadamard_matrix(const HadamardSpec& spec) {
    const int64_t n = spec.order;
    Tensor h({n, n});
    if (spec.base_factor == 1) {
        h.at(0, 0) = 1.0f;
        for (int64_t sz = 1; sz < n; sz *= 2) {
            for (int64_t i = 0; i < sz; ++i) {
                for (int64_t j = 0; j < sz; ++j) {
                    float v = h.at(i, j);
                    h.at(i, j + sz) = v;
                    h.at(i + sz, j) = v;
                    h.at(i + sz, j + sz) = -v;
                }
            }
        }
    } else {
        const int64_t b = n / 12;
        Tensor hb = build_hadamard_matrix(HadamardSpec::sylvester(spec.log2_part, false));
        const int8_t* h12 = paley12_entries();
        for (int64_t i = 0; i < 12; ++i)
            for (int64_t j = 0; j < 12; ++j) {
                float a = float(h12[i * 12 + j]);
                for (int64_t k = 0; k < b; ++k)
                    for (int64_t l = 0; l < b; ++l)
                        h.at(i * b + k, j * b + l) = a * hb.at(k, l);
            }
    }
    if (spec.normalized) {
        float s = float(1.0 / std::sqrt(double(n)));
        for (int64_t i = 0; i < n * n; ++i) h.at(i) *= s;
    }
    return h;
}

void fwht_in_place(std::span<float> v, bool normalized) {
    const int64_t n = int64_t(v.size());
    if (!is_pow2(n))
        throw std::invalid_argument("fwht_in_place: length " + std::to_string(n) +
                                    " is not a power of two");
    const float scale = float(1.0 / std::sqrt(double(n)));
    for (int64_t h = 1; h < n; h *= 2) {
        const bool final_stage = (2 * h == n);
        if (final_stage && normalized) {
            for (int64_t i = 0; i < n; i += 2 * h) {
                for (int64_t j = i; j < i + h; ++j) {
                    float x = v[size_t(j)];
                    float y = v[size_t(j + h)];
                    v[size_t(j)] = (x + y) * scale;
                    v[size_t(j + h)] = (x - y) * scale;
                }
            }
        } else {
            for (int64_t i = 0; i < n; i += 2 * h) {
                for (int64_t j = i; j < i + h; ++j) {
                    float x = v[size_t(j)];
                    float y = v[size_t(j + h)];
                    v[size_t(j)] = x + y;
                    v[size_t(j + h)] = x - y;
                }
            }
        }
        tally_addsubs(uint64_t(n));
    }
}

void fwht_composite(std::span<float> v, bool normalized, bool adjoint) {
    const int64_t n = int64_t(v.size());
    if (n % 12 != 0 || !is_pow2(n / 12))
        throw std::invalid_argument("fwht_composite: length " + std::to_string(n) +
                                    " is not of the form 12*2^m");
    const int64_t b = n / 12;
    for (int64_t blk = 0; blk < 12; ++blk)
        fwht_in_place(v.subspan(size_t(blk * b), size_t(b)), normalized);

    const int8_t* h12 = paley12_entries();
    const float s12 = normalized ? float(1.0 / std::sqrt(12.0)) : 1.0f;
    std::vector<float> tmp(v.begin(), v.end());
    for (int64_t i = 0; i < 12; ++i) {
        for (int64_t k = 0; k < b; ++k) {
            float acc = 0.0f;
            for (int64_t j = 0; j < 12; ++j) {
                float c = float(adjoint ? h12[j * 12 + i] : h12[i * 12 + j]);
                acc += c * tmp[size_t(j * b + k)];
            }
            v[size_t(i * b + k)] = acc * s12;
        }
        tally_addsubs(uint64_t(12 * b));
    }
}

Tensor fwht_batch(const Tensor& y, const HadamardSpec& spec, bool adjoint, int threads) {
    require_rank(y, 2, "fwht_batch");
    if (y.cols() != spec.order)
        throw std::invalid_argument("fwht_batch: row length " + std::to_string(y.cols()) +
                                    " does not match Hadamard order " +
                                    std::to_string(spec.order));
    Tensor out = y;
    const int64_t rows = out.rows();
    if (spec.base_factor == 1) {
        parallel_for(rows, threads,
                     [&](int64_t i) { fwht_in_place(out.row(i), spec.normalized); });
    } else {
        // Row convention out = Y * H means each row is hit by H^T in column
        // terms, hence the flipped adjoint flag.
        parallel_for(rows, threads, [&](int64_t i) {
            fwht_composite(out.row(i), spec.normalized, !adjoint);
        });
    }
    return out;
}

uint64_t fwht_op_count(const HadamardSpec& spec) {
    uint64_t d = uint64_t(spec.order);
    uint64_t m = uint64_t(spec.log2_part);
    return spec.base_factor == 1 ? d * m : d * (m + 12);
}

}  // namespace hadamix
