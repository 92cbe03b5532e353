#include "ddl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ddl/errors.hpp"

namespace ddl {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// OpAccess keeps the op implementations out of the class while letting them
// reach the private push/accumulate machinery.
struct OpAccess {
    static int push(Tape& t, Matrix value, bool needs_grad,
                    std::function<void(Tape&, const Matrix&)> pull) {
        return t.push(std::move(value), needs_grad, std::move(pull));
    }
    static void accumulate(Tape& t, int id, const Matrix& g) { t.accumulate(id, g); }
    static bool needs_grad(const Tape& t, int id) { return t.needs_grad(id); }
};

namespace {

void acc(Tape& t, int id, const Matrix& g) { OpAccess::accumulate(t, id, g); }

Tape& same_tape(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw TapeError("operands recorded on different tapes");
    return *a.tape;
}

Var make(Tape& t, Matrix value, bool needs_grad,
         std::function<void(Tape&, const Matrix&)> pull) {
    return Var{&t, OpAccess::push(t, std::move(value), needs_grad, std::move(pull))};
}

bool wants(Var v) { return OpAccess::needs_grad(*v.tape, v.id); }

}  // namespace

int Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> pull) {
    nodes_.push_back(Node{std::move(value), std::move(pull), needs_grad});
    adjoints_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int id, const Matrix& g) {
    if (!nodes_[static_cast<std::size_t>(id)].needs_grad) return;
    Matrix& a = adjoints_[static_cast<std::size_t>(id)];
    if (a.empty()) {
        a = g;
        return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += g.data[i];
}

void Tape::check(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw TapeError("Var does not belong to this tape");
}

Var Tape::constant(Matrix value) {
    return Var{this, push(std::move(value), false, nullptr)};
}

Var Tape::parameter(const Matrix& value) {
    return Var{this, push(value, true, nullptr)};
}

const Matrix& Tape::value(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

Matrix Tape::grad(Var v) const {
    check(v);
    const Matrix& a = adjoints_[static_cast<std::size_t>(v.id)];
    if (a.empty()) {
        const Matrix& val = nodes_[static_cast<std::size_t>(v.id)].value;
        return Matrix(val.rows, val.cols, 0.0);
    }
    return a;
}

void Tape::backward(Var loss) {
    check(loss);
    if (backward_ran_) throw TapeError("backward already ran on this tape; tapes are single-shot");
    const Matrix& lv = nodes_[static_cast<std::size_t>(loss.id)].value;
    if (lv.rows != 1 || lv.cols != 1)
        throw TapeError("backward requires a scalar node, got " + lv.shape_str());
    backward_ran_ = true;
    accumulate(loss.id, Matrix(1, 1, 1.0));
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        const Matrix& a = adjoints_[static_cast<std::size_t>(id)];
        if (!n.pull || a.empty()) continue;
        n.pull(*this, a);
    }
}

// --- ops --------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    Matrix out = matmul(av, bv);
    const bool ng = wants(a) || wants(b);
    const int ai = a.id, bi = b.id;
    return make(t, std::move(out), ng, [ai, bi](Tape& tp, const Matrix& g) {
        const Matrix& av2 = tp.value(Var{&tp, ai});
        const Matrix& bv2 = tp.value(Var{&tp, bi});
        acc(tp, ai, matmul(g, transpose(bv2)));
        acc(tp, bi, matmul(transpose(av2), g));
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    Matrix out = transpose(t.value(a));
    const int ai = a.id;
    return make(t, std::move(out), wants(a), [ai](Tape& tp, const Matrix& g) {
        acc(tp, ai, transpose(g));
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Matrix out = add(t.value(a), t.value(b));
    const int ai = a.id, bi = b.id;
    return make(t, std::move(out), wants(a) || wants(b), [ai, bi](Tape& tp, const Matrix& g) {
        acc(tp, ai, g);
        acc(tp, bi, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (!av.same_shape(bv))
        throw ShapeError("sub: shapes differ, " + av.shape_str() + " vs " + bv.shape_str());
    Matrix out(av.rows, av.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] - bv.data[i];
    const int ai = a.id, bi = b.id;
    return make(t, std::move(out), wants(a) || wants(b), [ai, bi](Tape& tp, const Matrix& g) {
        acc(tp, ai, g);
        acc(tp, bi, scale(g, -1.0));
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Matrix out = hadamard(t.value(a), t.value(b));
    const int ai = a.id, bi = b.id;
    return make(t, std::move(out), wants(a) || wants(b), [ai, bi](Tape& tp, const Matrix& g) {
        acc(tp, ai, hadamard(g, tp.value(Var{&tp, bi})));
        acc(tp, bi, hadamard(g, tp.value(Var{&tp, ai})));
    });
}

Var affine(Var a, double s, double shift) {
    Tape& t = *a.tape;
    const Matrix& av = t.value(a);
    Matrix out(av.rows, av.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = s * av.data[i] + shift;
    const int ai = a.id;
    return make(t, std::move(out), wants(a), [ai, s](Tape& tp, const Matrix& g) {
        acc(tp, ai, scale(g, s));
    });
}

Var add_rowvec(Var m, Var row) {
    Tape& t = same_tape(m, row);
    const Matrix& mv = t.value(m);
    const Matrix& rv = t.value(row);
    if (rv.rows != 1 || rv.cols != mv.cols)
        throw ShapeError("add_rowvec: expected 1x" + std::to_string(mv.cols) + " row, got " +
                         rv.shape_str() + " against " + mv.shape_str());
    Matrix out(mv.rows, mv.cols);
    for (int i = 0; i < mv.rows; ++i)
        for (int j = 0; j < mv.cols; ++j) out.at(i, j) = mv.at(i, j) + rv.at(0, j);
    const int mi = m.id, ri = row.id;
    return make(t, std::move(out), wants(m) || wants(row), [mi, ri](Tape& tp, const Matrix& g) {
        acc(tp, mi, g);
        Matrix gr(1, g.cols, 0.0);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) gr.at(0, j) += g.at(i, j);
        acc(tp, ri, gr);
    });
}

Var softmax_rows(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    if (!all_finite(mv)) throw Error("softmax_rows: non-finite input");
    Matrix out(mv.rows, mv.cols);
    for (int i = 0; i < mv.rows; ++i) {
        double mx = mv.at(i, 0);
        for (int j = 1; j < mv.cols; ++j) mx = std::max(mx, mv.at(i, j));
        double z = 0.0;
        for (int j = 0; j < mv.cols; ++j) {
            const double e = std::exp(mv.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < mv.cols; ++j) out.at(i, j) /= z;
    }
    const Matrix saved = out;
    const int mi = m.id;
    return make(t, std::move(out), wants(m), [mi, saved](Tape& tp, const Matrix& g) {
        Matrix dx(saved.rows, saved.cols);
        for (int i = 0; i < saved.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < saved.cols; ++j) dot += g.at(i, j) * saved.at(i, j);
            for (int j = 0; j < saved.cols; ++j)
                dx.at(i, j) = saved.at(i, j) * (g.at(i, j) - dot);
        }
        acc(tp, mi, dx);
    });
}

Var layer_norm(Var m, Var gain, Var bias, double eps) {
    Tape& t = same_tape(m, gain);
    same_tape(gain, bias);
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    const Matrix& x = t.value(m);
    const Matrix& gv = t.value(gain);
    const Matrix& bv = t.value(bias);
    if (gv.rows != 1 || gv.cols != x.cols || bv.rows != 1 || bv.cols != x.cols)
        throw ShapeError("layer_norm: affine must be 1x" + std::to_string(x.cols) + ", got gain " +
                         gv.shape_str() + ", bias " + bv.shape_str());
    const int C = x.cols;
    Matrix xhat(x.rows, C);
    Matrix inv_sd(x.rows, 1);
    Matrix out(x.rows, C);
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < C; ++j) mean += x.at(i, j);
        mean /= C;
        double var = 0.0;
        for (int j = 0; j < C; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sd.at(i, 0) = is;
        for (int j = 0; j < C; ++j) {
            const double xh = (x.at(i, j) - mean) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = gv.at(0, j) * xh + bv.at(0, j);
        }
    }
    const int mi = m.id, gi = gain.id, bi = bias.id;
    const bool ng = wants(m) || wants(gain) || wants(bias);
    return make(t, std::move(out), ng,
                [mi, gi, bi, xhat, inv_sd](Tape& tp, const Matrix& g) {
                    const Matrix& gv2 = tp.value(Var{&tp, gi});
                    const int C2 = g.cols;
                    Matrix dgain(1, C2, 0.0), dbias(1, C2, 0.0), dx(g.rows, C2);
                    for (int i = 0; i < g.rows; ++i) {
                        double mean_gh = 0.0, mean_ghx = 0.0;
                        for (int j = 0; j < C2; ++j) {
                            const double gh = g.at(i, j) * gv2.at(0, j);
                            mean_gh += gh;
                            mean_ghx += gh * xhat.at(i, j);
                            dgain.at(0, j) += g.at(i, j) * xhat.at(i, j);
                            dbias.at(0, j) += g.at(i, j);
                        }
                        mean_gh /= C2;
                        mean_ghx /= C2;
                        const double is = inv_sd.at(i, 0);
                        for (int j = 0; j < C2; ++j) {
                            const double gh = g.at(i, j) * gv2.at(0, j);
                            dx.at(i, j) = is * (gh - mean_gh - xhat.at(i, j) * mean_ghx);
                        }
                    }
                    acc(tp, mi, dx);
                    acc(tp, gi, dgain);
                    acc(tp, bi, dbias);
                });
}

Var gelu(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    Matrix out(mv.rows, mv.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = mv.data[i] * norm_cdf(mv.data[i]);
    const int mi = m.id;
    return make(t, std::move(out), wants(m), [mi](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(Var{&tp, mi});
        Matrix dx(x.rows, x.cols);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double xv = x.data[i];
            dx.data[i] = g.data[i] * (norm_cdf(xv) + xv * norm_pdf(xv));
        }
        acc(tp, mi, dx);
    });
}

Var sigmoid(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    Matrix out(mv.rows, mv.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = stable_sigmoid(mv.data[i]);
    const Matrix saved = out;
    const int mi = m.id;
    return make(t, std::move(out), wants(m), [mi, saved](Tape& tp, const Matrix& g) {
        Matrix dx(saved.rows, saved.cols);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double y = saved.data[i];
            dx.data[i] = g.data[i] * y * (1.0 - y);
        }
        acc(tp, mi, dx);
    });
}

Var relu(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    Matrix out(mv.rows, mv.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = mv.data[i] > 0.0 ? mv.data[i] : 0.0;
    const int mi = m.id;
    return make(t, std::move(out), wants(m), [mi](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(Var{&tp, mi});
        Matrix dx(x.rows, x.cols);
        for (std::size_t i = 0; i < dx.size(); ++i)
            dx.data[i] = x.data[i] > 0.0 ? g.data[i] : 0.0;
        acc(tp, mi, dx);
    });
}

Var log_elem(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    Matrix out(mv.rows, mv.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::log(mv.data[i]);
    const int mi = m.id;
    return make(t, std::move(out), wants(m), [mi](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(Var{&tp, mi});
        Matrix dx(x.rows, x.cols);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] = g.data[i] / x.data[i];
        acc(tp, mi, dx);
    });
}

Var abs_elem(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    Matrix out(mv.rows, mv.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::fabs(mv.data[i]);
    const int mi = m.id;
    return make(t, std::move(out), wants(m), [mi](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(Var{&tp, mi});
        Matrix dx(x.rows, x.cols);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
            dx.data[i] = g.data[i] * s;
        }
        acc(tp, mi, dx);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    Tape& t = *parts.front().tape;
    int total_cols = 0;
    const int rows = t.value(parts.front()).rows;
    bool ng = false;
    for (Var p : parts) {
        same_tape(parts.front(), p);
        const Matrix& pv = t.value(p);
        if (pv.rows != rows)
            throw ShapeError("concat_cols: row counts differ, " +
                             t.value(parts.front()).shape_str() + " vs " + pv.shape_str());
        total_cols += pv.cols;
        ng = ng || wants(p);
    }
    Matrix out(rows, total_cols);
    std::vector<int> ids, offsets, widths;
    int off = 0;
    for (Var p : parts) {
        const Matrix& pv = t.value(p);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pv.cols; ++j) out.at(i, off + j) = pv.at(i, j);
        ids.push_back(p.id);
        offsets.push_back(off);
        widths.push_back(pv.cols);
        off += pv.cols;
    }
    return make(t, std::move(out), ng, [ids, offsets, widths](Tape& tp, const Matrix& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            Matrix gp(g.rows, widths[k]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < widths[k]; ++j) gp.at(i, j) = g.at(i, offsets[k] + j);
            acc(tp, ids[k], gp);
        }
    });
}

Var slice_rows(Var m, int begin, int end) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    if (begin < 0 || end > mv.rows || begin >= end)
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of " + mv.shape_str());
    Matrix out(end - begin, mv.cols);
    for (int i = begin; i < end; ++i)
        for (int j = 0; j < mv.cols; ++j) out.at(i - begin, j) = mv.at(i, j);
    const int mi = m.id, rows = mv.rows;
    return make(t, std::move(out), wants(m), [mi, begin, rows](Tape& tp, const Matrix& g) {
        Matrix gm(rows, g.cols, 0.0);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) gm.at(begin + i, j) = g.at(i, j);
        acc(tp, mi, gm);
    });
}

Var gather_rows(Var m, const std::vector<int>& idx) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    if (idx.empty()) throw ShapeError("gather_rows: empty index set");
    for (int i : idx)
        if (i < 0 || i >= mv.rows)
            throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " + mv.shape_str());
    Matrix out(static_cast<int>(idx.size()), mv.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < mv.cols; ++j) out.at(static_cast<int>(r), j) = mv.at(idx[r], j);
    const int mi = m.id, rows = mv.rows;
    return make(t, std::move(out), wants(m), [mi, idx, rows](Tape& tp, const Matrix& g) {
        Matrix gm(rows, g.cols, 0.0);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < g.cols; ++j) gm.at(idx[r], j) += g.at(static_cast<int>(r), j);
        acc(tp, mi, gm);
    });
}

Var sum_all(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    Matrix out(1, 1, sum(mv));
    const int mi = m.id, rows = mv.rows, cols = mv.cols;
    return make(t, std::move(out), wants(m), [mi, rows, cols](Tape& tp, const Matrix& g) {
        acc(tp, mi, Matrix(rows, cols, g.at(0, 0)));
    });
}

Var mean_all(Var m) {
    Tape& t = *m.tape;
    const Matrix& mv = t.value(m);
    const double n = static_cast<double>(mv.size());
    Matrix out(1, 1, sum(mv) / n);
    const int mi = m.id, rows = mv.rows, cols = mv.cols;
    return make(t, std::move(out), wants(m), [mi, rows, cols, n](Tape& tp, const Matrix& g) {
        acc(tp, mi, Matrix(rows, cols, g.at(0, 0) / n));
    });
}

Var causal_conv(Var xf, Var kernel, Var bias) {
    Tape& t = same_tape(xf, kernel);
    same_tape(kernel, bias);
    const Matrix& x = t.value(xf);
    const Matrix& w = t.value(kernel);
    const Matrix& b = t.value(bias);
    if (w.cols != x.cols)
        throw ShapeError("causal_conv: kernel channels " + w.shape_str() + " vs input " +
                         x.shape_str());
    if (b.rows != 1 || b.cols != 1)
        throw ShapeError("causal_conv: bias must be 1x1, got " + b.shape_str());
    const int T = x.rows, K = w.rows, C = x.cols;
    Matrix out(T, 1);
    for (int tt = 0; tt < T; ++tt) {
        double s = b.at(0, 0);
        for (int tau = 0; tau < K && tau <= tt; ++tau)
            for (int c = 0; c < C; ++c) s += w.at(tau, c) * x.at(tt - tau, c);
        out.at(tt, 0) = s;
    }
    const int xi = xf.id, wi = kernel.id, bi = bias.id;
    const bool ng = wants(xf) || wants(kernel) || wants(bias);
    return make(t, std::move(out), ng, [xi, wi, bi, T, K, C](Tape& tp, const Matrix& g) {
        const Matrix& x2 = tp.value(Var{&tp, xi});
        const Matrix& w2 = tp.value(Var{&tp, wi});
        Matrix dx(T, C, 0.0), dw(K, C, 0.0), db(1, 1, 0.0);
        for (int tt = 0; tt < T; ++tt) {
            const double gt = g.at(tt, 0);
            db.at(0, 0) += gt;
            for (int tau = 0; tau < K && tau <= tt; ++tau)
                for (int c = 0; c < C; ++c) {
                    dw.at(tau, c) += gt * x2.at(tt - tau, c);
                    dx.at(tt - tau, c) += gt * w2.at(tau, c);
                }
        }
        acc(tp, xi, dx);
        acc(tp, wi, dw);
        acc(tp, bi, db);
    });
}

Var row_cosine_dynamics(Var xf) {
    Tape& t = *xf.tape;
    const Matrix& x = t.value(xf);
    if (x.rows < 2) throw Error("row_cosine_dynamics: need at least 2 rows, got " + x.shape_str());
    const int T = x.rows, C = x.cols;
    Matrix out(T - 1, 1);
    std::vector<double> norms(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        double n2 = 0.0;
        for (int j = 0; j < C; ++j) n2 += x.at(i, j) * x.at(i, j);
        norms[static_cast<std::size_t>(i)] = std::sqrt(n2);
    }
    std::vector<char> degenerate(static_cast<std::size_t>(T - 1), 0);
    for (int i = 0; i + 1 < T; ++i) {
        if (norms[i] < 1e-12 || norms[i + 1] < 1e-12) {
            out.at(i, 0) = 1.0;
            degenerate[static_cast<std::size_t>(i)] = 1;
            continue;
        }
        double dot = 0.0;
        for (int j = 0; j < C; ++j) dot += x.at(i, j) * x.at(i + 1, j);
        out.at(i, 0) = 1.0 - dot / (norms[i] * norms[i + 1]);
    }
    const int xi = xf.id;
    return make(t, std::move(out), wants(xf),
                [xi, T, C, norms, degenerate](Tape& tp, const Matrix& g) {
                    const Matrix& x2 = tp.value(Var{&tp, xi});
                    Matrix dx(T, C, 0.0);
                    for (int i = 0; i + 1 < T; ++i) {
                        if (degenerate[static_cast<std::size_t>(i)]) continue;
                        const double gu = g.at(i, 0);
                        if (gu == 0.0) continue;
                        const double nu = norms[static_cast<std::size_t>(i)];
                        const double nv = norms[static_cast<std::size_t>(i) + 1];
                        double dot = 0.0;
                        for (int j = 0; j < C; ++j) dot += x2.at(i, j) * x2.at(i + 1, j);
                        const double c = dot / (nu * nv);
                        for (int j = 0; j < C; ++j) {
                            const double u = x2.at(i, j);
                            const double v = x2.at(i + 1, j);
                            // d(1 - cos)/du = -(v/(|u||v|) - cos * u/|u|^2)
                            dx.at(i, j) += gu * (c * u / (nu * nu) - v / (nu * nv));
                            dx.at(i + 1, j) += gu * (c * v / (nv * nv) - u / (nu * nv));
                        }
                    }
                    acc(tp, xi, dx);
                });
}

}  // namespace ddl
