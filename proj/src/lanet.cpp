#include "ddl/lanet.hpp"

#include <cmath>
#include <string>

#include "ddl/errors.hpp"

namespace ddl::lanet {

LocalityPrior locality_prior(int t_len, double sigma) {
    if (t_len < 1)
        throw ConfigError("locality_prior: t_len must be >= 1, got " + std::to_string(t_len));
    if (!(sigma > 0.0))
        throw ConfigError("locality_prior: sigma must be > 0, got " + std::to_string(sigma));
    LocalityPrior prior;
    prior.sigma = sigma;
    prior.g = Matrix(t_len, t_len);
    for (int i = 0; i < t_len; ++i) {
        for (int j = 0; j < t_len; ++j) {
            const double d = static_cast<double>(i - j);
            prior.g.at(i, j) = std::exp(-(d * d) / (2.0 * sigma));
        }
    }
    return prior;
}

Var attention_head(Var x, const HeadVars& head, const LocalityPrior& prior,
                   AttentionProbe* probe) {
    Tape& t = *x.tape;
    const int t_len = t.value(x).rows;
    if (prior.g.rows != t_len || prior.g.cols != t_len)
        throw ShapeError("attention_head: prior is " + prior.g.shape_str() + " but x has " +
                         std::to_string(t_len) + " rows");
    Var q = matmul(x, head.query);
    Var k = matmul(x, head.key);
    Var v = matmul(x, head.value);
    Var a = softmax_rows(matmul(q, transpose(k)));
    Var recalibrated = add(a, t.constant(prior.g));
    if (probe) {
        probe->pre_prior = t.value(a);
        probe->post_prior = t.value(recalibrated);
    }
    return matmul(recalibrated, v);
}

Var lanet_forward(Var x, const LaNetVars& p, const LocalityPrior& prior,
                  std::vector<AttentionProbe>* probes) {
    if (p.heads.empty()) throw ConfigError("lanet_forward: at least one head required");
    if (probes) probes->assign(p.heads.size(), AttentionProbe{});
    std::vector<Var> parts;
    parts.reserve(p.heads.size());
    for (std::size_t h = 0; h < p.heads.size(); ++h)
        parts.push_back(attention_head(x, p.heads[h], prior, probes ? &(*probes)[h] : nullptr));
    Var stacked = parts.size() == 1 ? parts[0] : concat_cols(parts);
    Var projected = matmul(stacked, p.out_proj);
    return layer_norm(add(projected, x), p.ln_gain, p.ln_bias, 1e-5);
}

}  // namespace ddl::lanet
