#include "ddl/config.hpp"

#include "json.hpp"

#include "ddl/errors.hpp"

namespace ddl::config {
namespace {

using nlohmann::json;

template <class T>
void read_key(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, const char* section,
                    std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) { ok = true; break; }
        if (!ok)
            throw ConfigError(std::string("config: unknown key \"") + it.key() + "\" in " +
                              section);
    }
}

void apply_hyper(const json& obj, HyperParams& h) {
    reject_unknown(obj, "hyper",
                   {"dim", "heads", "d_h", "sigma", "conv_k", "mlp_hidden", "mlp_out", "dropout",
                    "lambda1", "lambda2", "zeta", "epsilon", "mil_literal"});
    read_key(obj, "dim", h.dim);
    read_key(obj, "heads", h.heads);
    read_key(obj, "d_h", h.d_h);
    read_key(obj, "sigma", h.sigma);
    read_key(obj, "conv_k", h.conv_k);
    read_key(obj, "mlp_hidden", h.mlp_hidden);
    read_key(obj, "mlp_out", h.mlp_out);
    read_key(obj, "dropout", h.dropout);
    read_key(obj, "lambda1", h.lambda1);
    read_key(obj, "lambda2", h.lambda2);
    read_key(obj, "zeta", h.zeta);
    read_key(obj, "epsilon", h.epsilon);
    read_key(obj, "mil_literal", h.mil_literal);
}

void apply_train(const json& obj, TrainConfig& t) {
    reject_unknown(obj, "train",
                   {"batch", "epochs", "t_max", "lr", "seed", "checkpoint_interval"});
    read_key(obj, "batch", t.batch);
    read_key(obj, "epochs", t.epochs);
    read_key(obj, "t_max", t.t_max);
    read_key(obj, "lr", t.lr);
    read_key(obj, "seed", t.seed);
    read_key(obj, "checkpoint_interval", t.checkpoint_interval);
}

void apply_synth(const json& obj, SynthSpec& s) {
    reject_unknown(obj, "synth",
                   {"seed", "train_normal", "train_abnormal", "test_normal", "test_abnormal",
                    "t_min", "t_max", "dim", "segments_min", "segments_max", "segment_len_min",
                    "segment_len_max", "jump", "noise"});
    read_key(obj, "seed", s.seed);
    read_key(obj, "train_normal", s.train_normal);
    read_key(obj, "train_abnormal", s.train_abnormal);
    read_key(obj, "test_normal", s.test_normal);
    read_key(obj, "test_abnormal", s.test_abnormal);
    read_key(obj, "t_min", s.t_min);
    read_key(obj, "t_max", s.t_max);
    read_key(obj, "dim", s.dim);
    read_key(obj, "segments_min", s.segments_min);
    read_key(obj, "segments_max", s.segments_max);
    read_key(obj, "segment_len_min", s.segment_len_min);
    read_key(obj, "segment_len_max", s.segment_len_max);
    read_key(obj, "jump", s.jump);
    read_key(obj, "noise", s.noise);
}

}  // namespace

RunConfig profile_config(const std::string& name) {
    RunConfig c;  // defaults are the desk profile
    c.profile = name;
    if (name == "desk") return c;
    if (name == "ucf") {
        c.hyper.d_h = 512;
        c.hyper.sigma = 16.0;
        c.hyper.conv_k = 10;
        c.hyper.mlp_hidden = 512;
        c.hyper.mlp_out = 128;
        c.hyper.lambda1 = 1.0;
        c.train.batch = 128;
        c.train.t_max = 200;
        return c;
    }
    if (name == "xd") {
        c.hyper.d_h = 128;
        c.hyper.sigma = 6.0;
        c.hyper.conv_k = 5;
        c.hyper.mlp_hidden = 512;
        c.hyper.mlp_out = 128;
        c.hyper.lambda1 = 2.0;
        c.train.batch = 128;
        c.train.t_max = 200;
        return c;
    }
    throw ConfigError("config: unknown profile \"" + name + "\" (expected desk, ucf, or xd)");
}

void validate(const RunConfig& c) {
    const HyperParams& h = c.hyper;
    if (h.dim < 1) throw ConfigError("config: dim must be >= 1");
    if (h.heads < 1) throw ConfigError("config: heads must be >= 1");
    if (h.d_h < 1 || h.d_h % h.heads != 0)
        throw ConfigError("config: heads (" + std::to_string(h.heads) +
                          ") must divide d_h (" + std::to_string(h.d_h) + ")");
    if (!(h.sigma > 0.0)) throw ConfigError("config: sigma must be > 0");
    if (h.conv_k < 1) throw ConfigError("config: conv_k must be >= 1");
    if (h.mlp_hidden < 1 || h.mlp_out < 1) throw ConfigError("config: mlp widths must be >= 1");
    if (h.dropout < 0.0 || h.dropout >= 1.0)
        throw ConfigError("config: dropout must lie in [0, 1)");
    if (h.lambda1 < 0.0 || h.lambda2 < 0.0)
        throw ConfigError("config: loss weights must be >= 0");
    if (h.zeta < 0.0) throw ConfigError("config: zeta must be >= 0");
    if (!(h.epsilon > 0.0)) throw ConfigError("config: epsilon must be > 0");

    const TrainConfig& t = c.train;
    if (t.batch < 2 || t.batch % 2 != 0)
        throw ConfigError("config: batch must be even and >= 2 (paired halves), got " +
                          std::to_string(t.batch));
    if (t.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (t.t_max < 2) throw ConfigError("config: t_max must be >= 2");
    if (!(t.lr > 0.0)) throw ConfigError("config: lr must be > 0");
    if (t.checkpoint_interval < 0) throw ConfigError("config: checkpoint_interval must be >= 0");

    const SynthSpec& s = c.synth;
    if (s.train_normal < 0 || s.train_abnormal < 0 || s.test_normal < 0 || s.test_abnormal < 0)
        throw ConfigError("config: synth video counts must be >= 0");
    if (s.t_min < 2 || s.t_min > s.t_max)
        throw ConfigError("config: synth snippet range needs 2 <= t_min <= t_max");
    if (s.dim < 1) throw ConfigError("config: synth dim must be >= 1");
    if (s.segments_min < 1 || s.segments_min > s.segments_max)
        throw ConfigError("config: synth segment count range needs 1 <= min <= max");
    if (s.segment_len_min < 1 || s.segment_len_min > s.segment_len_max)
        throw ConfigError("config: synth segment length range needs 1 <= min <= max");
    if (!(s.noise > 0.0)) throw ConfigError("config: synth noise must be > 0");
    if (!(s.jump > s.noise))
        throw ConfigError("config: synth jump must exceed noise for detectable anomalies");
    if (s.train_abnormal + s.test_abnormal > 0) {
        const int needed = 2 + s.segments_max * s.segment_len_max + 2 * (s.segments_max - 1);
        if (s.t_min < needed)
            throw ConfigError("config: infeasible synth spec, planting up to " +
                              std::to_string(s.segments_max) + " segments of length " +
                              std::to_string(s.segment_len_max) + " needs t_min >= " +
                              std::to_string(needed) + ", got " + std::to_string(s.t_min));
    }
}

std::string to_json(const RunConfig& c) {
    json j;
    j["profile"] = c.profile;
    json& h = j["hyper"];
    h["dim"] = c.hyper.dim;
    h["heads"] = c.hyper.heads;
    h["d_h"] = c.hyper.d_h;
    h["sigma"] = c.hyper.sigma;
    h["conv_k"] = c.hyper.conv_k;
    h["mlp_hidden"] = c.hyper.mlp_hidden;
    h["mlp_out"] = c.hyper.mlp_out;
    h["dropout"] = c.hyper.dropout;
    h["lambda1"] = c.hyper.lambda1;
    h["lambda2"] = c.hyper.lambda2;
    h["zeta"] = c.hyper.zeta;
    h["epsilon"] = c.hyper.epsilon;
    h["mil_literal"] = c.hyper.mil_literal;
    json& t = j["train"];
    t["batch"] = c.train.batch;
    t["epochs"] = c.train.epochs;
    t["t_max"] = c.train.t_max;
    t["lr"] = c.train.lr;
    t["seed"] = c.train.seed;
    t["checkpoint_interval"] = c.train.checkpoint_interval;
    json& s = j["synth"];
    s["seed"] = c.synth.seed;
    s["train_normal"] = c.synth.train_normal;
    s["train_abnormal"] = c.synth.train_abnormal;
    s["test_normal"] = c.synth.test_normal;
    s["test_abnormal"] = c.synth.test_abnormal;
    s["t_min"] = c.synth.t_min;
    s["t_max"] = c.synth.t_max;
    s["dim"] = c.synth.dim;
    s["segments_min"] = c.synth.segments_min;
    s["segments_max"] = c.synth.segments_max;
    s["segment_len_min"] = c.synth.segment_len_min;
    s["segment_len_max"] = c.synth.segment_len_max;
    s["jump"] = c.synth.jump;
    s["noise"] = c.synth.noise;
    return j.dump(2) + "\n";
}

void apply_json_overrides(RunConfig& c, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: document must be a JSON object");
    try {
        reject_unknown(j, "config", {"profile", "hyper", "train", "synth"});
        if (j.contains("profile")) {
            const auto name = j.at("profile").get<std::string>();
            c = profile_config(name);
        }
        if (j.contains("hyper")) apply_hyper(j.at("hyper"), c.hyper);
        if (j.contains("train")) apply_train(j.at("train"), c.train);
        if (j.contains("synth")) apply_synth(j.at("synth"), c.synth);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value type: ") + e.what());
    }
}

RunConfig from_json(const std::string& text) {
    RunConfig c;
    apply_json_overrides(c, text);
    return c;
}

std::string hyper_to_json(const HyperParams& h) {
    RunConfig c;
    c.hyper = h;
    const json full = json::parse(to_json(c));
    return full.at("hyper").dump();
}

HyperParams hyper_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: malformed hyperparameter block: ") + e.what());
    }
    HyperParams h;
    try {
        apply_hyper(j, h);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad hyperparameter value: ") + e.what());
    }
    return h;
}

}  // namespace ddl::config
