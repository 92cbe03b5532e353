#pragma once

#include <cstdint>

#include "ddl/tape.hpp"

namespace ddl::scorer {

// Scoring-branch weights registered on a tape: a two-layer pointwise MLP
// followed by a causal temporal convolution with a single output channel.
struct ScorerVars {
    Var w1;           // D x hidden
    Var b1;           // 1 x hidden
    Var w2;           // hidden x out
    Var b2;           // 1 x out
    Var conv_kernel;  // K x out (temporal taps x channels)
    Var conv_bias;    // 1 x 1
    double dropout_rate = 0.1;
};

// linear -> GELU -> dropout -> linear -> GELU -> dropout, applied per snippet.
// Dropout is the inverted form (kept activations scaled by 1/(1-rate)) so
// inference needs no rescale; it is the identity when training is false.
// Masks come from a private generator seeded with `seed`.
Var mlp_forward(Var x_tilde, const ScorerVars& p, bool training, std::uint64_t seed);

// s_t = sigmoid(bias + sum_{tau,c} kernel[tau][c] * xf[t-tau][c]) with
// out-of-range rows treated as zeros; strictly causal, output in (0,1).
Var causal_conv_score(Var xf, Var kernel, Var bias);

// Score dynamics |s_t - s_{t+1}| as a (T-1) x 1 column; requires T >= 2.
Var score_dynamics(Var s);

}  // namespace ddl::scorer
