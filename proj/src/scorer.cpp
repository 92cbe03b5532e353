#include "ddl/scorer.hpp"

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

namespace ddl::scorer {
namespace {

// Multiplication by a constant 0-or-1/(1-rate) mask; the mask gates the
// gradient exactly like the activation.
Var dropout(Var x, double rate, Rng& rng) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    Matrix mask(xv.rows, xv.cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.data[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    return mul(x, t.constant(std::move(mask)));
}

}  // namespace

Var mlp_forward(Var x_tilde, const ScorerVars& p, bool training, std::uint64_t seed) {
    if (p.dropout_rate < 0.0 || p.dropout_rate >= 1.0)
        throw ConfigError("mlp_forward: dropout rate must lie in [0, 1), got " +
                          std::to_string(p.dropout_rate));
    const bool drop = training && p.dropout_rate > 0.0;
    Rng rng(seed);
    Var h = gelu(add_rowvec(matmul(x_tilde, p.w1), p.b1));
    if (drop) h = dropout(h, p.dropout_rate, rng);
    Var out = gelu(add_rowvec(matmul(h, p.w2), p.b2));
    if (drop) out = dropout(out, p.dropout_rate, rng);
    return out;
}

Var causal_conv_score(Var xf, Var kernel, Var bias) {
    return sigmoid(causal_conv(xf, kernel, bias));
}

Var score_dynamics(Var s) {
    // Copy the shape out: recording new ops below may grow the tape's node
    // storage and invalidate references into it.
    const int rows = s.tape->value(s).rows;
    const int cols = s.tape->value(s).cols;
    if (cols != 1)
        throw ShapeError("score_dynamics: expected a T x 1 column, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    if (rows < 2)
        throw ShapeError("score_dynamics: need at least 2 snippets for dynamics, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    return abs_elem(sub(slice_rows(s, 0, rows - 1), slice_rows(s, 1, rows)));
}

}  // namespace ddl::scorer
