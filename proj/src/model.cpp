#include "ddl/model.hpp"

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

namespace ddl::model {

ModelParams init_params(const config::HyperParams& hp, std::uint64_t seed) {
    config::RunConfig probe;
    probe.hyper = hp;
    config::validate(probe);

    ModelParams p;
    p.hp = hp;
    const int head_dim = hp.d_h / hp.heads;
    Rng rng(seed);
    for (int h = 0; h < hp.heads; ++h) {
        p.query.push_back(glorot_uniform(hp.dim, head_dim, hp.dim, head_dim, rng));
        p.key.push_back(glorot_uniform(hp.dim, head_dim, hp.dim, head_dim, rng));
        p.value.push_back(glorot_uniform(hp.dim, head_dim, hp.dim, head_dim, rng));
    }
    p.out_proj = glorot_uniform(hp.d_h, hp.dim, hp.d_h, hp.dim, rng);
    p.ln_gain = Matrix(1, hp.dim, 1.0);
    p.ln_bias = Matrix(1, hp.dim, 0.0);
    p.w1 = glorot_uniform(hp.dim, hp.mlp_hidden, hp.dim, hp.mlp_hidden, rng);
    p.b1 = Matrix(1, hp.mlp_hidden, 0.0);
    p.w2 = glorot_uniform(hp.mlp_hidden, hp.mlp_out, hp.mlp_hidden, hp.mlp_out, rng);
    p.b2 = Matrix(1, hp.mlp_out, 0.0);
    p.conv_kernel = glorot_uniform(hp.conv_k, hp.mlp_out, hp.conv_k * hp.mlp_out, 1, rng);
    p.conv_bias = Matrix(1, 1, 0.0);
    return p;
}

std::vector<std::pair<std::string, Matrix*>> named_params(ModelParams& p) {
    std::vector<std::pair<std::string, Matrix*>> named;
    for (std::size_t h = 0; h < p.query.size(); ++h) {
        const std::string head = "lanet.head" + std::to_string(h);
        named.emplace_back(head + ".query", &p.query[h]);
        named.emplace_back(head + ".key", &p.key[h]);
        named.emplace_back(head + ".value", &p.value[h]);
    }
    named.emplace_back("lanet.out_proj", &p.out_proj);
    named.emplace_back("lanet.ln_gain", &p.ln_gain);
    named.emplace_back("lanet.ln_bias", &p.ln_bias);
    named.emplace_back("mlp.w1", &p.w1);
    named.emplace_back("mlp.b1", &p.b1);
    named.emplace_back("mlp.w2", &p.w2);
    named.emplace_back("mlp.b2", &p.b2);
    named.emplace_back("conv.kernel", &p.conv_kernel);
    named.emplace_back("conv.bias", &p.conv_bias);
    return named;
}

ModelVars register_params(Tape& tape, ModelParams& p) {
    ModelVars v;
    for (std::size_t h = 0; h < p.query.size(); ++h) {
        lanet::HeadVars head;
        head.query = tape.parameter(p.query[h]);
        head.key = tape.parameter(p.key[h]);
        head.value = tape.parameter(p.value[h]);
        v.lanet.heads.push_back(head);
        v.ordered.push_back(head.query);
        v.ordered.push_back(head.key);
        v.ordered.push_back(head.value);
    }
    v.lanet.out_proj = tape.parameter(p.out_proj);
    v.lanet.ln_gain = tape.parameter(p.ln_gain);
    v.lanet.ln_bias = tape.parameter(p.ln_bias);
    v.scorer.w1 = tape.parameter(p.w1);
    v.scorer.b1 = tape.parameter(p.b1);
    v.scorer.w2 = tape.parameter(p.w2);
    v.scorer.b2 = tape.parameter(p.b2);
    v.scorer.conv_kernel = tape.parameter(p.conv_kernel);
    v.scorer.conv_bias = tape.parameter(p.conv_bias);
    v.scorer.dropout_rate = p.hp.dropout;
    v.ordered.push_back(v.lanet.out_proj);
    v.ordered.push_back(v.lanet.ln_gain);
    v.ordered.push_back(v.lanet.ln_bias);
    v.ordered.push_back(v.scorer.w1);
    v.ordered.push_back(v.scorer.b1);
    v.ordered.push_back(v.scorer.w2);
    v.ordered.push_back(v.scorer.b2);
    v.ordered.push_back(v.scorer.conv_kernel);
    v.ordered.push_back(v.scorer.conv_bias);
    return v;
}

Forward model_forward(Tape& tape, const Matrix& x, const ModelVars& vars,
                      const config::HyperParams& hp, bool training, std::uint64_t seed,
                      std::vector<lanet::AttentionProbe>* probes) {
    if (x.cols != hp.dim)
        throw ShapeError("model_forward: features are " + x.shape_str() + " but dim is " +
                         std::to_string(hp.dim));
    if (!all_finite(x)) throw Error("model_forward: non-finite input features");
    Var xv = tape.constant(x);
    const lanet::LocalityPrior prior = lanet::locality_prior(x.rows, hp.sigma);
    Forward f;
    f.x_tilde = lanet::lanet_forward(xv, vars.lanet, prior, probes);
    f.features = scorer::mlp_forward(f.x_tilde, vars.scorer, training, seed);
    f.scores = scorer::causal_conv_score(f.features, vars.scorer.conv_kernel,
                                         vars.scorer.conv_bias);
    return f;
}

}  // namespace ddl::model
