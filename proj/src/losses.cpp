#include "ddl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ddl/errors.hpp"
#include "ddl/scorer.hpp"

namespace ddl::losses {
namespace {

std::vector<const BagTerm*> all_bags(const BagBatch& batch) {
    std::vector<const BagTerm*> bags;
    bags.reserve(batch.positives.size() + batch.negatives.size());
    for (const BagTerm& b : batch.positives) bags.push_back(&b);
    for (const BagTerm& b : batch.negatives) bags.push_back(&b);
    return bags;
}

Tape& tape_of(const BagBatch& batch) {
    if (!batch.positives.empty()) return *batch.positives.front().scores.tape;
    if (!batch.negatives.empty()) return *batch.negatives.front().scores.tape;
    throw Error("loss: empty batch");
}

const Matrix& score_column(const BagTerm& bag) {
    const Matrix& sv = bag.scores.tape->value(bag.scores);
    if (sv.cols != 1)
        throw ShapeError("loss: bag scores must be a T x 1 column, got " + sv.shape_str());
    if (sv.rows < 2)
        throw ShapeError("loss: bag needs at least 2 snippets, got " + sv.shape_str());
    return sv;
}

}  // namespace

int topk_count(int t_len, int label) {
    if (t_len < 1) throw ConfigError("topk_count: t_len must be >= 1, got " + std::to_string(t_len));
    if (label == 0) return 1;
    const int k = static_cast<int>(std::floor(static_cast<double>(t_len) / 16.0 + 1.0));
    return std::min(k, t_len);
}

std::vector<int> topk_indices(const std::vector<double>& values, int k) {
    const int n = static_cast<int>(values.size());
    if (k < 1 || k > n)
        throw ConfigError("topk_indices: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

Var mil_loss(const BagBatch& batch, bool literal) {
    const auto bags = all_bags(batch);
    if (bags.empty()) throw Error("mil_loss: empty batch");
    Tape& t = tape_of(batch);
    Var acc;
    bool have_acc = false;
    for (const BagTerm* bag : bags) {
        const Matrix& sv = score_column(*bag);
        const int k = topk_count(sv.rows, bag->label);
        Var p = mean_all(gather_rows(bag->scores, topk_indices(sv.data, k)));
        Var term;
        if (bag->label == 1) {
            term = affine(log_elem(p), -1.0, 0.0);
        } else if (literal) {
            continue;  // the printed objective has no negative-class term
        } else {
            term = affine(log_elem(affine(p, -1.0, 1.0)), -1.0, 0.0);
        }
        acc = have_acc ? add(acc, term) : term;
        have_acc = true;
    }
    if (!have_acc) return t.constant(Matrix(1, 1, 0.0));
    return affine(acc, 1.0 / static_cast<double>(bags.size()), 0.0);
}

Var dynamics_accumulation(Var delta_s, int t_len, int label) {
    const Matrix& dv = delta_s.tape->value(delta_s);
    if (dv.cols != 1 || dv.rows < 1)
        throw ShapeError("dynamics_accumulation: need a nonempty column of dynamics, got " +
                         dv.shape_str());
    const int k = std::min(topk_count(t_len, label), dv.rows);
    Var top = gather_rows(delta_s, topk_indices(dv.data, k));
    return mean_all(mul(top, top));
}

Var dr_hinge(Var e_pos, Var e_neg, double zeta) {
    if (zeta < 0.0) throw ConfigError("dr_hinge: margin must be >= 0, got " + std::to_string(zeta));
    return relu(affine(sub(e_pos, e_neg), -1.0, zeta));
}

Var dr_loss(const BagBatch& batch, double zeta) {
    Tape& t = tape_of(batch);
    const std::size_t pairs = std::min(batch.positives.size(), batch.negatives.size());
    if (pairs == 0) return t.constant(Matrix(1, 1, 0.0));
    Var acc;
    for (std::size_t i = 0; i < pairs; ++i) {
        const BagTerm& pos = batch.positives[i];
        const BagTerm& neg = batch.negatives[i];
        Var e_pos = dynamics_accumulation(scorer::score_dynamics(pos.scores),
                                          score_column(pos).rows, 1);
        Var e_neg = dynamics_accumulation(scorer::score_dynamics(neg.scores),
                                          score_column(neg).rows, 0);
        Var h = dr_hinge(e_pos, e_neg, zeta);
        acc = (i == 0) ? h : add(acc, h);
    }
    return affine(acc, 1.0 / static_cast<double>(pairs), 0.0);
}

Var feature_dynamics(Var xf) {
    return row_cosine_dynamics(xf);
}

Var da_loss(const BagBatch& batch, double epsilon) {
    if (!(epsilon > 0.0))
        throw ConfigError("da_loss: epsilon must be > 0, got " + std::to_string(epsilon));
    const auto bags = all_bags(batch);
    if (bags.empty()) throw Error("da_loss: empty batch");
    Var acc;
    for (std::size_t i = 0; i < bags.size(); ++i) {
        const BagTerm& bag = *bags[i];
        // Copy the length out: the ops recorded below may grow the tape's
        // node storage and invalidate references into it.
        const int t_rows = score_column(bag).rows;
        Var ds = scorer::score_dynamics(bag.scores);
        Var df = feature_dynamics(bag.features);
        const int df_rows = df.tape->value(df).rows;
        if (df_rows != t_rows - 1)
            throw ShapeError("da_loss: mismatched dynamics lengths, scores give " +
                             std::to_string(t_rows - 1) + " but features give " +
                             std::to_string(df_rows));
        Var aligned = sum_all(mul(ds, log_elem(affine(df, 1.0, epsilon))));
        Var term = affine(aligned, -1.0 / static_cast<double>(t_rows - 1), 0.0);
        acc = (i == 0) ? term : add(acc, term);
    }
    return affine(acc, 1.0 / static_cast<double>(bags.size()), 0.0);
}

Var total_loss(const BagBatch& batch, const LossWeights& w, LossParts* parts) {
    if (w.lambda1 < 0.0 || w.lambda2 < 0.0)
        throw ConfigError("total_loss: loss weights must be >= 0");
    Var total = mil_loss(batch, w.mil_literal);
    LossParts out;
    out.mil = total.tape->value(total).at(0, 0);
    if (w.lambda1 != 0.0) {
        Var dr = dr_loss(batch, w.zeta);
        out.dr = dr.tape->value(dr).at(0, 0);
        total = add(total, affine(dr, w.lambda1, 0.0));
    }
    if (w.lambda2 != 0.0) {
        Var da = da_loss(batch, w.epsilon);
        out.da = da.tape->value(da).at(0, 0);
        total = add(total, affine(da, w.lambda2, 0.0));
    }
    out.total = total.tape->value(total).at(0, 0);
    if (parts) *parts = out;
    return total;
}

}  // namespace ddl::losses
