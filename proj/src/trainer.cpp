#include "ddl/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ddl/errors.hpp"
#include "ddl/losses.hpp"
#include "ddl/rng.hpp"

namespace ddl::trainer {
namespace {

// Stream tags separating the run seed into independent substreams.
constexpr std::uint64_t kShuffleStream = 0x01;
constexpr std::uint64_t kDropoutStream = 0x02;

losses::LossWeights weights_of(const config::HyperParams& hp) {
    losses::LossWeights w;
    w.lambda1 = hp.lambda1;
    w.lambda2 = hp.lambda2;
    w.zeta = hp.zeta;
    w.epsilon = hp.epsilon;
    w.mil_literal = hp.mil_literal;
    return w;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw ParseError("checkpoint: truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
    const std::uint64_t lo = get_u32(in, what);
    const std::uint64_t hi = get_u32(in, what);
    return lo | (hi << 32);
}

double get_f64(std::istream& in, const std::string& what) {
    const std::uint64_t v = get_u64(in, what);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

void put_matrix_data(std::ostream& out, const Matrix& m) {
    for (double v : m.data) put_f64(out, v);
}

void get_matrix_data(std::istream& in, Matrix& m, const std::string& what) {
    for (double& v : m.data) v = get_f64(in, what);
}

}  // namespace

OptimState init_optim(model::ModelParams& params) {
    OptimState state;
    for (const auto& [name, mat] : model::named_params(params)) {
        (void)name;
        state.m1.emplace_back(mat->rows, mat->cols, 0.0);
        state.m2.emplace_back(mat->rows, mat->cols, 0.0);
    }
    return state;
}

double cosine_lr(int epoch, double base_lr, int total_epochs) {
    if (total_epochs < 1)
        throw ConfigError("cosine_lr: total_epochs must be >= 1, got " +
                          std::to_string(total_epochs));
    if (epoch < 0 || epoch > total_epochs)
        throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + "]");
    return base_lr * 0.5 *
           (1.0 + std::cos(M_PI * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

void adam_step(const std::vector<std::pair<std::string, Matrix*>>& params,
               const std::vector<Matrix>& grads, OptimState& state, double lr) {
    if (grads.size() != params.size())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    if (state.m1.size() != params.size() || state.m2.size() != params.size())
        throw ShapeError("adam_step: optimizer state sized for a different registry");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].same_shape(*params[i].second))
            throw ShapeError("adam_step: gradient for " + params[i].first + " is " +
                             grads[i].shape_str() + " but the parameter is " +
                             params[i].second->shape_str());
        if (!all_finite(grads[i]))
            throw NonFiniteError("adam_step: non-finite gradient for " + params[i].first +
                                 "; step rejected");
    }
    state.step += 1;
    const auto t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i].second;
        Matrix& m1 = state.m1[i];
        Matrix& m2 = state.m2[i];
        const Matrix& g = grads[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
            m1.data[e] = state.beta1 * m1.data[e] + (1.0 - state.beta1) * g.data[e];
            m2.data[e] = state.beta2 * m2.data[e] + (1.0 - state.beta2) * g.data[e] * g.data[e];
            const double m_hat = m1.data[e] / bc1;
            const double v_hat = m2.data[e] / bc2;
            p.data[e] -= lr * m_hat / (std::sqrt(v_hat) + state.adam_eps);
        }
    }
}

EpochMetrics train_epoch(model::ModelParams& params, OptimState& state,
                         const std::vector<data_io::FeatureBag>& bags,
                         const config::TrainConfig& tc, int epoch) {
    if (tc.batch < 2 || tc.batch % 2 != 0)
        throw ConfigError("train_epoch: batch must be even and >= 2");
    std::vector<int> pos_idx, neg_idx;
    for (std::size_t i = 0; i < bags.size(); ++i) {
        if (bags[i].label == 1) pos_idx.push_back(static_cast<int>(i));
        else neg_idx.push_back(static_cast<int>(i));
    }
    if (pos_idx.empty() || neg_idx.empty())
        throw ConfigError("train_epoch: training data must contain both classes, got " +
                          std::to_string(pos_idx.size()) + " positive and " +
                          std::to_string(neg_idx.size()) + " negative bags");

    Rng shuffle_rng(mix_seed(mix_seed(tc.seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(pos_idx);
    shuffle_rng.shuffle(neg_idx);

    const int half = tc.batch / 2;
    const auto larger = std::max(pos_idx.size(), neg_idx.size());
    const int steps = static_cast<int>((larger + static_cast<std::size_t>(half) - 1) /
                                       static_cast<std::size_t>(half));
    const double lr = cosine_lr(epoch, tc.lr, tc.epochs);
    const auto named = model::named_params(params);
    const losses::LossWeights w = weights_of(params.hp);

    EpochMetrics em;
    for (int s = 0; s < steps; ++s) {
        Tape tape;
        model::ModelVars vars = model::register_params(tape, params);
        losses::BagBatch batch;
        auto push_bag = [&](const data_io::FeatureBag& bag, int slot) {
            const data_io::FeatureBag sub = data_io::uniform_sample(bag, tc.t_max);
            const std::uint64_t dropout_seed =
                mix_seed(mix_seed(tc.seed, kDropoutStream),
                         (static_cast<std::uint64_t>(epoch) << 32) ^
                             (static_cast<std::uint64_t>(s) << 8) ^
                             static_cast<std::uint64_t>(slot));
            const model::Forward f =
                model::model_forward(tape, sub.x, vars, params.hp, true, dropout_seed);
            losses::BagTerm term{f.scores, f.features, bag.label};
            if (bag.label == 1) batch.positives.push_back(term);
            else batch.negatives.push_back(term);
        };
        for (int j = 0; j < half; ++j) {
            const auto pick = static_cast<std::size_t>(s) * static_cast<std::size_t>(half) + j;
            push_bag(bags[static_cast<std::size_t>(pos_idx[pick % pos_idx.size()])], j);
            push_bag(bags[static_cast<std::size_t>(neg_idx[pick % neg_idx.size()])], half + j);
        }
        losses::LossParts parts;
        Var loss = losses::total_loss(batch, w, &parts);
        tape.backward(loss);
        std::vector<Matrix> grads;
        grads.reserve(vars.ordered.size());
        for (Var v : vars.ordered) grads.push_back(tape.grad(v));
        try {
            adam_step(named, grads, state, lr);
        } catch (const NonFiniteError&) {
            ++em.rejected;
            continue;
        }
        em.total += parts.total;
        em.mil += parts.mil;
        em.dr += parts.dr;
        em.da += parts.da;
        ++em.steps;
    }
    if (em.steps > 0) {
        em.total /= em.steps;
        em.mil /= em.steps;
        em.dr /= em.steps;
        em.da /= em.steps;
    }
    return em;
}

AuditReport grad_audit(model::ModelParams& params, const data_io::FeatureBag& pos,
                       const data_io::FeatureBag& neg, double tolerance,
                       const std::string& tamper_name, double tamper_delta) {
    const auto named = model::named_params(params);
    const losses::LossWeights w = weights_of(params.hp);

    auto eval_loss = [&]() {
        Tape tape;
        model::ModelVars vars = model::register_params(tape, params);
        losses::BagBatch batch;
        const model::Forward fp = model::model_forward(tape, pos.x, vars, params.hp, false, 0);
        batch.positives.push_back(losses::BagTerm{fp.scores, fp.features, 1});
        const model::Forward fn = model::model_forward(tape, neg.x, vars, params.hp, false, 0);
        batch.negatives.push_back(losses::BagTerm{fn.scores, fn.features, 0});
        Var loss = losses::total_loss(batch, w, nullptr);
        return tape.value(loss).at(0, 0);
    };

    std::vector<Matrix> analytic;
    {
        Tape tape;
        model::ModelVars vars = model::register_params(tape, params);
        losses::BagBatch batch;
        const model::Forward fp = model::model_forward(tape, pos.x, vars, params.hp, false, 0);
        batch.positives.push_back(losses::BagTerm{fp.scores, fp.features, 1});
        const model::Forward fn = model::model_forward(tape, neg.x, vars, params.hp, false, 0);
        batch.negatives.push_back(losses::BagTerm{fn.scores, fn.features, 0});
        Var loss = losses::total_loss(batch, w, nullptr);
        tape.backward(loss);
        for (Var v : vars.ordered) analytic.push_back(tape.grad(v));
    }
    if (!tamper_name.empty()) {
        bool found = false;
        for (std::size_t i = 0; i < named.size(); ++i) {
            if (named[i].first == tamper_name) {
                analytic[i].data[0] += tamper_delta;
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("grad_audit: no parameter named " + tamper_name);
    }

    const double h = 1e-5;
    AuditReport report;
    for (std::size_t i = 0; i < named.size(); ++i) {
        Matrix& p = *named[i].second;
        AuditRow row;
        row.name = named[i].first;
        for (std::size_t e = 0; e < p.size(); ++e) {
            const double orig = p.data[e];
            p.data[e] = orig + h;
            const double f_plus = eval_loss();
            p.data[e] = orig - h;
            const double f_minus = eval_loss();
            p.data[e] = orig;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[i].data[e];
            const double rel = std::fabs(a - numeric) /
                               std::max({std::fabs(a), std::fabs(numeric), 1e-5});
            if (rel >= row.max_rel_err) {
                row.max_rel_err = rel;
                row.analytic = a;
                row.numeric = numeric;
            }
        }
        if (row.max_rel_err >= report.max_rel_err) {
            report.max_rel_err = row.max_rel_err;
            report.worst = row.name;
        }
        report.rows.push_back(std::move(row));
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

void save_checkpoint(const std::string& path, model::ModelParams& params,
                     const OptimState& state) {
    const auto named = model::named_params(params);
    if (state.m1.size() != named.size() || state.m2.size() != named.size())
        throw ShapeError("save_checkpoint: optimizer state sized for a different registry");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot write " + path);
    out.write("DDLC", 4);
    put_u32(out, 1);
    const std::string hyper = config::hyper_to_json(params.hp);
    put_u32(out, static_cast<std::uint32_t>(hyper.size()));
    out.write(hyper.data(), static_cast<std::streamsize>(hyper.size()));
    put_u32(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, mat] : named) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(mat->rows));
        put_u32(out, static_cast<std::uint32_t>(mat->cols));
        put_matrix_data(out, *mat);
    }
    put_f64(out, state.beta1);
    put_f64(out, state.beta2);
    put_f64(out, state.adam_eps);
    for (std::size_t i = 0; i < named.size(); ++i) {
        put_matrix_data(out, state.m1[i]);
        put_matrix_data(out, state.m2[i]);
    }
    put_u64(out, static_cast<std::uint64_t>(state.step));
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "DDLC")
        throw ParseError("load_checkpoint: bad magic in " + path);
    const std::uint32_t version = get_u32(in, "version");
    if (version != 1)
        throw ParseError("load_checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t hyper_len = get_u32(in, "hyperparameter block length");
    std::string hyper(hyper_len, '\0');
    if (!in.read(hyper.data(), hyper_len))
        throw ParseError("load_checkpoint: truncated hyperparameter block");
    Checkpoint ckpt;
    ckpt.params = model::init_params(config::hyper_from_json(hyper), 0);
    const auto named = model::named_params(ckpt.params);
    const std::uint32_t count = get_u32(in, "parameter count");
    if (count != named.size())
        throw ParseError("load_checkpoint: " + std::to_string(count) + " parameters but the " +
                         "hyperparameters imply " + std::to_string(named.size()));
    for (const auto& [name, mat] : named) {
        const std::uint32_t name_len = get_u32(in, "parameter name length");
        std::string got(name_len, '\0');
        if (!in.read(got.data(), name_len))
            throw ParseError("load_checkpoint: truncated parameter name");
        if (got != name)
            throw ParseError("load_checkpoint: expected parameter " + name + ", found " + got);
        const std::uint32_t rows = get_u32(in, name + " rows");
        const std::uint32_t cols = get_u32(in, name + " cols");
        if (static_cast<int>(rows) != mat->rows || static_cast<int>(cols) != mat->cols)
            throw ParseError("load_checkpoint: " + name + " is " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " but the hyperparameters imply " +
                             mat->shape_str());
        get_matrix_data(in, *mat, name);
        if (!all_finite(*mat))
            throw ParseError("load_checkpoint: non-finite values in " + name);
    }
    ckpt.state.beta1 = get_f64(in, "beta1");
    ckpt.state.beta2 = get_f64(in, "beta2");
    ckpt.state.adam_eps = get_f64(in, "adam_eps");
    for (const auto& [name, mat] : named) {
        Matrix m1(mat->rows, mat->cols);
        Matrix m2(mat->rows, mat->cols);
        get_matrix_data(in, m1, name + " first moment");
        get_matrix_data(in, m2, name + " second moment");
        ckpt.state.m1.push_back(std::move(m1));
        ckpt.state.m2.push_back(std::move(m2));
    }
    ckpt.state.step = static_cast<std::int64_t>(get_u64(in, "step counter"));
    if (in.peek() != std::char_traits<char>::eof())
        throw ParseError("load_checkpoint: trailing bytes in " + path);
    return ckpt;
}

}  // namespace ddl::trainer
