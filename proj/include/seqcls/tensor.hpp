#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "seqcls/errors.hpp"

namespace seqcls {

/// Dense 2-D matrix of doubles, row-major, value-semantic. Every numeric
/// path in the toolkit runs on these; 64-bit precision is deliberate, the
/// gradient checks are not feasible in single precision.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Tensor t(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t r = 0;
        for (const auto& row : rows) {
            if (row.size() != t.cols_) {
                throw DimensionError("from_rows: ragged initializer list");
            }
            std::size_t c = 0;
            for (double v : row) {
                t(r, c++) = v;
            }
            ++r;
        }
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape " + a.shape_str() +
                             " does not match " + b.shape_str());
    }
}

/// a (RxK) times b (KxC). i-k-j loop order so the inner loop walks both the
/// output row and the b row contiguously.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + a.shape_str() + " incompatible with " + b.shape_str());
    }
    Tensor out(a.rows(), b.cols());
    const std::size_t rows = a.rows(), inner = a.cols(), cols = b.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        double* out_i = out.row_ptr(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const double a_ik = a(i, k);
            const double* b_k = b.row_ptr(k);
            for (std::size_t j = 0; j < cols; ++j) {
                out_i[j] += a_ik * b_k[j];
            }
        }
    }
    return out;
}

/// a (RxK) times b^T where b is CxK. Row-dot-row, no transpose materialized.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: " + a.shape_str() + " incompatible with " + b.shape_str());
    }
    Tensor out(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* a_i = a.row_ptr(i);
        double* out_i = out.row_ptr(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* b_j = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += a_i[k] * b_j[k];
            }
            out_i[j] = acc;
        }
    }
    return out;
}

/// a^T times b where a is KxR, b is KxC.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: " + a.shape_str() + " incompatible with " + b.shape_str());
    }
    Tensor out(a.cols(), b.cols());
    const std::size_t cols = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* a_k = a.row_ptr(k);
        const double* b_k = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double a_ki = a_k[i];
            double* out_i = out.row_ptr(i);
            for (std::size_t j = 0; j < cols; ++j) {
                out_i[j] += a_ki * b_k[j];
            }
        }
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

/// Row-wise softmax with per-row max subtraction. Each output row is a
/// probability distribution; finite for any finite input.
inline Tensor softmax_rows(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* in = x.row_ptr(i);
        double* o = out.row_ptr(i);
        double m = in[0];
        for (std::size_t j = 1; j < x.cols(); ++j) {
            m = std::max(m, in[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            o[j] = std::exp(in[j] - m);
            sum += o[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            o[j] *= inv;
        }
    }
    return out;
}

} // namespace seqcls
