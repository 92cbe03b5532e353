#include "ddl/matrix.hpp"

#include <cmath>
#include <cstdio>

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

namespace ddl {

Matrix Matrix::from(std::initializer_list<std::initializer_list<double>> values) {
    Matrix m(static_cast<int>(values.size()),
             values.size() ? static_cast<int>(values.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : values) {
        if (static_cast<int>(row.size()) != m.cols)
            throw ShapeError("Matrix::from: ragged initializer");
        int c = 0;
        for (double v : row) m.at(r, c++) = v;
        ++r;
    }
    return m;
}

std::string Matrix::shape_str() const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%dx%d", rows, cols);
    return buf;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " vs " + b.shape_str());
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
            double* orow = &out.data[static_cast<std::size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ShapeError("hadamard: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Matrix scale(const Matrix& m, double s) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = m.data[i] * s;
    return out;
}

double sum(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v;
    return s;
}

Matrix glorot_uniform(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix out(rows, cols);
    for (auto& v : out.data) v = rng.uniform(-bound, bound);
    return out;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b,
                       bool* degenerate) {
    if (a.size() != b.size()) throw ShapeError("cosine_distance: vector lengths differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (degenerate) *degenerate = false;
    if (na < 1e-12 || nb < 1e-12) {
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    return 1.0 - dot / (na * nb);
}

}  // namespace ddl
