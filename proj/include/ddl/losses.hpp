#pragma once

#include <vector>

#include "ddl/tape.hpp"

namespace ddl::losses {

struct LossWeights {
    double lambda1 = 1.0;      // dynamics-ranking weight
    double lambda2 = 1.0;      // dynamics-alignment weight
    double zeta = 0.0;         // ranking margin
    double epsilon = 1e-7;     // log offset in the alignment term
    bool mil_literal = false;  // drop the negative-class log term (fidelity switch)
};

// One bag's forward results living on a shared tape.
struct BagTerm {
    Var scores;     // T x 1, entries in (0,1)
    Var features;   // T x F robust representations
    int label = 0;  // 1 abnormal, 0 normal
};

struct BagBatch {
    std::vector<BagTerm> positives;
    std::vector<BagTerm> negatives;
};

// Snippet-selection size: floor(t_len/16 + 1) for abnormal bags, 1 for
// normal bags, clamped to t_len.
int topk_count(int t_len, int label);

// Indices of the k largest values; ties resolve toward the earlier index.
std::vector<int> topk_indices(const std::vector<double>& values, int k);

// Bag-level binary cross-entropy on each bag's mean of its top-k scores,
// averaged over all bags. With literal=true normal bags contribute zero
// (the printed form of the objective); the default keeps both class terms.
Var mil_loss(const BagBatch& batch, bool literal = false);

// Mean of the squared top-k entries of delta_s. k comes from topk_count on
// the bag's original length t_len and is clamped to the dynamics length.
Var dynamics_accumulation(Var delta_s, int t_len, int label);

// max(0, zeta - e_pos + e_neg): the single-pair ranking hinge.
Var dr_hinge(Var e_pos, Var e_neg, double zeta);

// Ranking hinge on dynamics accumulation, averaged over positive/negative
// bags paired by position; leftover unpaired bags contribute nothing.
Var dr_loss(const BagBatch& batch, double zeta);

// Cosine distance between consecutive feature rows, a (T-1) x 1 column.
Var feature_dynamics(Var xf);

// Per bag: -(1/(T-1)) * sum_t delta_s[t] * log(delta_f[t] + epsilon),
// then averaged over every bag in the batch.
Var da_loss(const BagBatch& batch, double epsilon);

struct LossParts {
    double mil = 0.0;
    double dr = 0.0;
    double da = 0.0;
    double total = 0.0;
};

// mil + lambda1 * dr + lambda2 * da. A component with zero weight is skipped
// entirely (reported as exactly 0), so lambda1 = lambda2 = 0 is bit-identical
// to mil_loss alone.
Var total_loss(const BagBatch& batch, const LossWeights& w, LossParts* parts = nullptr);

}  // namespace ddl::losses
