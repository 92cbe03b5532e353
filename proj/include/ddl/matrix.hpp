#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace ddl {

class Rng;

// Dense row-major matrix of 64-bit floats. The one value type the whole
// engine computes with; vectors are T x 1 (or 1 x C) matrices.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    static Matrix from(std::initializer_list<std::initializer_list<double>> values);

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const;
};

bool all_finite(const Matrix& m);

// Plain (non-recording) matrix helpers. The gradient tape builds on these
// for its forward values; tests use them as oracle building blocks.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
double sum(const Matrix& m);

// Fan-scaled uniform init, bounds +/- sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(int rows, int cols, int fan_in, int fan_out, Rng& rng);

// 1 - cos(a, b), in [0, 2]. Vectors below norm 1e-12 yield the neutral
// distance 1; *degenerate reports when that branch fired.
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b,
                       bool* degenerate = nullptr);

}  // namespace ddl
