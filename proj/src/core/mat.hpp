#pragma once

#include <cstddef>
#include <vector>

#include "core/error.hpp"

namespace dpcvqa {

// Dense row-major matrix, just enough for the calibration network.
template <class R>
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<R> v;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), v(r * c, R(0)) {}

    R* row(size_t i) { return v.data() + i * cols; }
    const R* row(size_t i) const { return v.data() + i * cols; }
    R& at(size_t i, size_t j) { return v[i * cols + j]; }
    R at(size_t i, size_t j) const { return v[i * cols + j]; }
    size_t size() const { return v.size(); }
};

// C = A * B
template <class R>
Mat<R> matmul(const Mat<R>& a, const Mat<R>& b) {
    if (a.cols != b.rows) fail(Errc::shape_mismatch, "matmul: inner dims differ");
    Mat<R> c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t k = 0; k < a.cols; ++k) {
            R aik = a.at(i, k);
            if (aik == R(0)) continue;
            const R* brow = b.row(k);
            R* crow = c.row(i);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T
template <class R>
Mat<R> matmul_nt(const Mat<R>& a, const Mat<R>& b) {
    if (a.cols != b.cols) fail(Errc::shape_mismatch, "matmul_nt: inner dims differ");
    Mat<R> c(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.rows; ++j) {
            R acc = R(0);
            const R* arow = a.row(i);
            const R* brow = b.row(j);
            for (size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            c.at(i, j) = acc;
        }
    }
    return c;
}

// C = A^T * B
template <class R>
Mat<R> matmul_tn(const Mat<R>& a, const Mat<R>& b) {
    if (a.rows != b.rows) fail(Errc::shape_mismatch, "matmul_tn: inner dims differ");
    Mat<R> c(a.cols, b.cols);
    for (size_t k = 0; k < a.rows; ++k) {
        const R* arow = a.row(k);
        const R* brow = b.row(k);
        for (size_t i = 0; i < a.cols; ++i) {
            R aki = arow[i];
            if (aki == R(0)) continue;
            R* crow = c.row(i);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

}  // namespace dpcvqa
