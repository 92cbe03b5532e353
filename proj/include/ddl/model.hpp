#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddl/config.hpp"
#include "ddl/lanet.hpp"
#include "ddl/scorer.hpp"

namespace ddl::model {

// Every trainable matrix of the network, owned as plain values. A fresh tape
// registers them per forward/backward pass.
struct ModelParams {
    config::HyperParams hp;
    std::vector<Matrix> query;  // per head: dim x (d_h / heads)
    std::vector<Matrix> key;
    std::vector<Matrix> value;
    Matrix out_proj;  // d_h x dim
    Matrix ln_gain;   // 1 x dim
    Matrix ln_bias;   // 1 x dim
    Matrix w1;        // dim x mlp_hidden
    Matrix b1;        // 1 x mlp_hidden
    Matrix w2;        // mlp_hidden x mlp_out
    Matrix b2;        // 1 x mlp_out
    Matrix conv_kernel;  // conv_k x mlp_out
    Matrix conv_bias;    // 1 x 1
};

// Fan-scaled uniform weights, zero biases, identity layer-norm affine, all
// drawn from one generator seeded with `seed` in registry order.
ModelParams init_params(const config::HyperParams& hp, std::uint64_t seed);

// Stable name -> matrix registry ("lanet.head0.query", ..., "conv.bias").
// Its order is the optimizer, audit, and checkpoint order.
std::vector<std::pair<std::string, Matrix*>> named_params(ModelParams& p);

struct ModelVars {
    lanet::LaNetVars lanet;
    scorer::ScorerVars scorer;
    std::vector<Var> ordered;  // registry order, aligned with named_params
};

ModelVars register_params(Tape& tape, ModelParams& p);

struct Forward {
    Var x_tilde;   // T x dim recalibrated features
    Var features;  // T x mlp_out robust representations
    Var scores;    // T x 1 anomaly scores in (0,1)
};

// Full pipeline on one bag: locality-aware attention, MLP, causal conv score.
// `seed` drives the dropout masks when training is true.
Forward model_forward(Tape& tape, const Matrix& x, const ModelVars& vars,
                      const config::HyperParams& hp, bool training, std::uint64_t seed,
                      std::vector<lanet::AttentionProbe>* probes = nullptr);

}  // namespace ddl::model
