#pragma once

#include <functional>
#include <vector>

#include "ddl/matrix.hpp"

namespace ddl {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; only valid for the
// lifetime of the tape that issued it.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

// Reverse-mode gradient tape. Operations execute eagerly and append a node
// holding the forward value plus a closure that scatters the incoming
// adjoint to the operands. Node ids grow monotonically, so walking them in
// descending order is a reverse topological traversal.
//
// A tape is single-owner: record a forward pass, call backward() once on a
// scalar node, read gradients, then discard it.
class Tape {
public:
    Var constant(Matrix value);                 // leaf, no gradient
    Var parameter(const Matrix& value);         // leaf that accumulates a gradient

    const Matrix& value(Var v) const;
    // Accumulated adjoint of v after backward(); zeros if v never influenced the loss.
    Matrix grad(Var v) const;

    void backward(Var loss);
    bool backward_ran() const { return backward_ran_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Matrix value;
        std::function<void(Tape&, const Matrix&)> pull;  // empty for leaves
        bool needs_grad = false;
    };

    int push(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> pull);
    void accumulate(int id, const Matrix& g);
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    void check(Var v) const;

    std::vector<Node> nodes_;
    std::vector<Matrix> adjoints_;
    bool backward_ran_ = false;

    friend struct OpAccess;
};

// --- primitive operations -------------------------------------------------
// Each returns a new node on the operands' tape with its gradient rule
// recorded. Shape mismatches throw ShapeError naming both shapes.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                          // elementwise
Var affine(Var a, double scale, double shift);  // scale * a + shift
Var add_rowvec(Var m, Var row);                 // broadcast a 1 x C row over T x C
Var softmax_rows(Var m);
Var layer_norm(Var m, Var gain, Var bias, double eps);
Var gelu(Var m);
Var sigmoid(Var m);
Var relu(Var m);
Var log_elem(Var m);
Var abs_elem(Var m);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var m, int begin, int end);      // rows [begin, end)
Var gather_rows(Var m, const std::vector<int>& idx);
Var sum_all(Var m);                             // 1 x 1
Var mean_all(Var m);                            // 1 x 1

// Temporal convolution with K taps over C channels, single output column,
// left zero-padded so output t sees only inputs at times <= t.
// xf: T x C, kernel: K x C, bias: 1 x 1. Returns the T x 1 pre-activation.
Var causal_conv(Var xf, Var kernel, Var bias);

// Cosine distance between consecutive rows: out[t] = 1 - cos(row t, row t+1),
// a (T-1) x 1 column. Rows with norm < 1e-12 produce the neutral distance 1
// with zero gradient through that pair.
Var row_cosine_dynamics(Var xf);

}  // namespace ddl
