#pragma once

#include <vector>

#include "ddl/matrix.hpp"
#include "ddl/tape.hpp"

namespace ddl::lanet {

// Gaussian prior over snippet-index distance: g[i][j] = exp(-(i-j)^2 / (2*sigma)).
// Depends only on (t_len, sigma), never on the features.
struct LocalityPrior {
    double sigma = 0.0;
    Matrix g;  // t_len x t_len
};

LocalityPrior locality_prior(int t_len, double sigma);

// One attention head's weights registered on a tape.
struct HeadVars {
    Var query;  // D x (d_h / heads)
    Var key;    // D x (d_h / heads)
    Var value;  // D x (d_h / heads)
};

struct LaNetVars {
    std::vector<HeadVars> heads;
    Var out_proj;  // d_h x D
    Var ln_gain;   // 1 x D
    Var ln_bias;   // 1 x D
};

// Optional capture of a head's attention maps for inspection and tests.
struct AttentionProbe {
    Matrix pre_prior;   // row-stochastic map A
    Matrix post_prior;  // A + G, not renormalized
};

// A = softmax_rows(x q (x k)^T), recalibrated = A + G, output = recalibrated * (x v).
// The prior is added after the softmax and rows are deliberately not
// renormalized, so post-prior row sums equal 1 + sum_j g[i][j].
Var attention_head(Var x, const HeadVars& head, const LocalityPrior& prior,
                   AttentionProbe* probe = nullptr);

// Runs every head, concatenates outputs along the feature axis, projects
// back to D, adds the residual, and layer-normalizes (eps 1e-5).
Var lanet_forward(Var x, const LaNetVars& p, const LocalityPrior& prior,
                  std::vector<AttentionProbe>* probes = nullptr);

}  // namespace ddl::lanet
