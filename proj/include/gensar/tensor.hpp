#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gensar/error.hpp"

namespace gensar {

// Dense vector with explicit dimension checks on every op. Scalar type is a
// template parameter so gradient-check tests can instantiate in double while
// production code runs float.
template <typename T>
struct Vec {
    std::vector<T> d;

    Vec() = default;
    explicit Vec(std::size_t n, T fill = T(0)) : d(n, fill) {}
    Vec(std::initializer_list<T> init) : d(init) {}

    std::size_t size() const { return d.size(); }
    T& operator[](std::size_t i) { return d[i]; }
    const T& operator[](std::size_t i) const { return d[i]; }
    T* data() { return d.data(); }
    const T* data() const { return d.data(); }

    bool finite() const {
        for (T x : d)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

template <typename T>
inline void check_same_dim(const Vec<T>& a, const Vec<T>& b, const char* what) {
    if (a.size() != b.size())
        throw DimensionError(std::string(what) + ": " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
}

template <typename T>
inline Vec<T> operator+(const Vec<T>& a, const Vec<T>& b) {
    check_same_dim(a, b, "vec add");
    Vec<T> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

template <typename T>
inline Vec<T> operator-(const Vec<T>& a, const Vec<T>& b) {
    check_same_dim(a, b, "vec sub");
    Vec<T> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

template <typename T>
inline Vec<T>& operator+=(Vec<T>& a, const Vec<T>& b) {
    check_same_dim(a, b, "vec add-assign");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

template <typename T>
inline Vec<T> scaled(const Vec<T>& a, T s) {
    Vec<T> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

template <typename T>
inline void axpy(T s, const Vec<T>& x, Vec<T>& y) {
    check_same_dim(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

// Inner product; accumulated in double regardless of T.
template <typename T>
inline double dot(const Vec<T>& a, const Vec<T>& b) {
    check_same_dim(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

template <typename T>
inline double squared_norm(const Vec<T>& a) {
    return dot(a, a);
}

template <typename T>
inline double squared_distance(const Vec<T>& a, const Vec<T>& b) {
    check_same_dim(a, b, "squared_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double t = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += t * t;
    }
    return acc;
}

template <typename T>
inline Vec<T> concat(const Vec<T>& a, const Vec<T>& b) {
    Vec<T> r(a.size() + b.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) r[a.size() + i] = b[i];
    return r;
}

template <typename T>
inline Vec<T> slice(const Vec<T>& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.size()) throw DimensionError("slice out of range");
    Vec<T> r(end - begin);
    for (std::size_t i = begin; i < end; ++i) r[i - begin] = a[i];
    return r;
}

// Row-major dense matrix.
template <typename T>
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<T> d;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), d(r * c, fill) {}

    T& at(std::size_t r, std::size_t c) { return d[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return d[r * cols + c]; }
    T* row(std::size_t r) { return d.data() + r * cols; }
    const T* row(std::size_t r) const { return d.data() + r * cols; }

    Vec<T> row_vec(std::size_t r) const {
        Vec<T> v(cols);
        for (std::size_t c = 0; c < cols; ++c) v[c] = at(r, c);
        return v;
    }
    void set_row(std::size_t r, const Vec<T>& v) {
        if (v.size() != cols) throw DimensionError("set_row dim mismatch");
        for (std::size_t c = 0; c < cols; ++c) at(r, c) = v[c];
    }

    bool finite() const {
        for (T x : d)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

// Non-owning matrix view over a flat parameter buffer.
template <typename T>
struct MatView {
    T* p = nullptr;
    std::size_t rows = 0, cols = 0;

    T& at(std::size_t r, std::size_t c) { return p[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return p[r * cols + c]; }
    T* row(std::size_t r) { return p + r * cols; }
    const T* row(std::size_t r) const { return p + r * cols; }
    std::size_t size() const { return rows * cols; }
};

// y = W x (+ b). W is rows x cols, x has cols entries.
template <typename T>
inline Vec<T> matvec(const Mat<T>& w, const Vec<T>& x) {
    if (w.cols != x.size())
        throw DimensionError("matvec: " + std::to_string(w.cols) + " vs " +
                             std::to_string(x.size()));
    Vec<T> y(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
        double acc = 0.0;
        const T* wr = w.row(r);
        for (std::size_t c = 0; c < w.cols; ++c)
            acc += static_cast<double>(wr[c]) * static_cast<double>(x[c]);
        y[r] = static_cast<T>(acc);
    }
    return y;
}

}  // namespace gensar
