#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddl/config.hpp"
#include "ddl/data_io.hpp"
#include "ddl/errors.hpp"
#include "ddl/metrics.hpp"
#include "ddl/model.hpp"
#include "ddl/rng.hpp"
#include "ddl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ddl::ConfigError(std::string(what) + ": cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ddl::IoError("cannot create output directory " + out + ": " + ec.message());
}

void write_run_config(const ddl::config::RunConfig& c, const std::string& out_dir) {
    const std::string path = (fs::path(out_dir) / "run_config.json").string();
    std::ofstream out(path);
    if (!out) throw ddl::IoError("cannot write " + path);
    out << ddl::config::to_json(c);
    if (!out) throw ddl::IoError("write failed for " + path);
}

// Shared flags every subcommand accepts. Precedence: defaults <- profile
// <- config file <- command-line flags; a --profile flag beats a "profile"
// key inside the config file.
struct Common {
    CLI::Option* config_opt = nullptr;
    CLI::Option* profile_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    std::string config_path;
    std::string profile;
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        config_opt = cmd->add_option("--config", config_path, "JSON config file");
        profile_opt = cmd->add_option("--profile", profile, "named profile: desk, ucf, or xd");
        seed_opt = cmd->add_option("--seed", seed, "run seed");
    }

    ddl::config::RunConfig resolve() const {
        ddl::config::RunConfig c = ddl::config::profile_config("desk");
        json overrides;
        if (config_opt->count() > 0) {
            const std::string text = read_text_file(config_path, "config");
            try {
                overrides = json::parse(text);
            } catch (const json::exception& e) {
                throw ddl::ConfigError(std::string("config: malformed JSON: ") + e.what());
            }
            if (!overrides.is_object())
                throw ddl::ConfigError("config: document must be a JSON object");
        }
        if (profile_opt->count() > 0) {
            overrides.erase("profile");
            c = ddl::config::profile_config(profile);
        }
        if (!overrides.is_null()) ddl::config::apply_json_overrides(c, overrides.dump());
        if (seed_opt->count() > 0) {
            c.train.seed = seed;
            c.synth.seed = seed;
        }
        return c;
    }
};

template <class T>
void override_if(CLI::Option* opt, T& target, const T& value) {
    if (opt != nullptr && opt->count() > 0) target = value;
}

int cmd_synth(const ddl::config::RunConfig& cfg, const std::string& out) {
    ddl::config::validate(cfg);
    ensure_out_dir(out);
    const ddl::data_io::SynthData data = ddl::data_io::generate_synthetic(cfg.synth);
    ddl::data_io::write_dataset(data, out);
    write_run_config(cfg, out);
    std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
              << " test videos to " << out << "\n";
    return 0;
}

int cmd_train(ddl::config::RunConfig cfg, const std::string& manifest_path,
              const std::string& out) {
    const ddl::data_io::Manifest manifest = ddl::data_io::load_manifest(manifest_path);
    cfg.hyper.dim = manifest.dim;  // the data defines D; everything else is config
    ddl::config::validate(cfg);
    const std::vector<ddl::data_io::FeatureBag> bags =
        ddl::data_io::load_bags(manifest, manifest_path);
    ensure_out_dir(out);

    ddl::model::ModelParams params = ddl::model::init_params(cfg.hyper, cfg.train.seed);
    ddl::trainer::OptimState state = ddl::trainer::init_optim(params);

    const std::string csv_path = (fs::path(out) / "loss.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw ddl::IoError("cannot write " + csv_path);
    csv << "epoch,total,mil,dr,da\n";
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const ddl::trainer::EpochMetrics em =
            ddl::trainer::train_epoch(params, state, bags, cfg.train, epoch);
        csv << epoch << "," << format_double(em.total) << "," << format_double(em.mil) << ","
            << format_double(em.dr) << "," << format_double(em.da) << "\n";
        if (em.rejected > 0)
            std::cerr << "epoch " << epoch << ": rejected " << em.rejected
                      << " steps with non-finite gradients\n";
        if (cfg.train.checkpoint_interval > 0 && (epoch + 1) % cfg.train.checkpoint_interval == 0 &&
            epoch + 1 < cfg.train.epochs) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.ddlc", epoch + 1);
            ddl::trainer::save_checkpoint((fs::path(out) / name).string(), params, state);
        }
    }
    if (!csv) throw ddl::IoError("write failed for " + csv_path);
    csv.close();
    ddl::trainer::save_checkpoint((fs::path(out) / "checkpoint.ddlc").string(), params, state);
    write_run_config(cfg, out);
    std::cout << "trained " << cfg.train.epochs << " epochs on " << bags.size()
              << " bags; artifacts in " << out << "\n";
    return 0;
}

int cmd_score(ddl::config::RunConfig cfg, const std::string& checkpoint_path,
              const std::string& manifest_path, const std::string& annotations_path,
              const std::string& out) {
    ddl::trainer::Checkpoint ckpt = ddl::trainer::load_checkpoint(checkpoint_path);
    const ddl::data_io::Manifest manifest = ddl::data_io::load_manifest(manifest_path);
    if (manifest.dim != ckpt.params.hp.dim)
        throw ddl::ConfigError("score: checkpoint expects dimension " +
                               std::to_string(ckpt.params.hp.dim) + " but the manifest has " +
                               std::to_string(manifest.dim));
    cfg.hyper = ckpt.params.hp;  // provenance: the weights define the hyperparameters
    ddl::config::validate(cfg);
    const std::vector<ddl::data_io::FeatureBag> bags =
        ddl::data_io::load_bags(manifest, manifest_path);

    std::map<std::string, long long> total_frames;
    if (!annotations_path.empty()) {
        for (const ddl::metrics::FrameAnnotation& ann :
             ddl::metrics::load_annotations(annotations_path))
            total_frames[ann.video_id] = ann.total_frames;
    }

    std::vector<std::pair<std::string, std::vector<double>>> rows;
    for (const ddl::data_io::FeatureBag& bag : bags) {
        ddl::Tape tape;
        const ddl::model::ModelVars vars = ddl::model::register_params(tape, ckpt.params);
        const ddl::model::Forward f =
            ddl::model::model_forward(tape, bag.x, vars, ckpt.params.hp, false, 0);
        const ddl::Matrix& s = tape.value(f.scores);
        std::vector<double> snippet_scores(s.data.begin(), s.data.end());
        long long frames = 16ll * bag.x.rows;
        if (!annotations_path.empty()) {
            const auto it = total_frames.find(bag.video_id);
            if (it == total_frames.end())
                throw ddl::ConfigError("score: no annotation for video " + bag.video_id);
            frames = it->second;
        }
        rows.emplace_back(bag.video_id, ddl::metrics::expand_scores(snippet_scores, frames));
    }
    ensure_out_dir(out);
    ddl::metrics::write_score_csv((fs::path(out) / "scores.csv").string(), rows);
    write_run_config(cfg, out);
    std::cout << "scored " << rows.size() << " videos; scores.csv in " << out << "\n";
    return 0;
}

int cmd_eval(const ddl::config::RunConfig& cfg, const std::string& scores_path,
             const std::string& annotations_path, const std::string& out) {
    const auto rows = ddl::metrics::read_score_csv(scores_path);
    const auto annotations = ddl::metrics::load_annotations(annotations_path);
    std::map<std::string, std::vector<double>> by_video;
    for (const auto& [id, scores] : rows) {
        if (!by_video.emplace(id, scores).second)
            throw ddl::ParseError("eval: video " + id + " appears twice in " + scores_path);
    }
    const ddl::metrics::EvalResult r = ddl::metrics::evaluate(by_video, annotations);
    json j;
    j["auc"] = r.auc;
    j["ap"] = r.ap;
    j["frames"] = r.frames;
    j["positives"] = r.positives;
    std::cout << j.dump(2) << "\n";
    ensure_out_dir(out);
    const std::string path = (fs::path(out) / "eval.json").string();
    std::ofstream f(path);
    if (!f) throw ddl::IoError("cannot write " + path);
    f << j.dump(2) << "\n";
    if (!f) throw ddl::IoError("write failed for " + path);
    write_run_config(cfg, out);
    return 0;
}

int cmd_gradcheck(const ddl::config::RunConfig& cfg, double tolerance, const std::string& out) {
    // Tiny audit model: T=12, D=8, 2 heads, d_h=8, 3 conv taps.
    ddl::config::HyperParams hp = cfg.hyper;
    hp.dim = 8;
    hp.heads = 2;
    hp.d_h = 8;
    hp.conv_k = 3;
    hp.mlp_hidden = 16;
    hp.mlp_out = 8;
    ddl::config::RunConfig toy = cfg;
    toy.hyper = hp;
    ddl::config::validate(toy);

    const std::uint64_t seed = cfg.train.seed;
    ddl::model::ModelParams params = ddl::model::init_params(hp, seed);
    auto random_bag = [&](std::uint64_t stream, int label) {
        ddl::Rng rng(ddl::mix_seed(seed, stream));
        ddl::data_io::FeatureBag bag;
        bag.label = label;
        bag.x = ddl::Matrix(12, hp.dim);
        for (double& v : bag.x.data) v = rng.normal();
        return bag;
    };
    const ddl::data_io::FeatureBag pos = random_bag(0xA1, 1);
    const ddl::data_io::FeatureBag neg = random_bag(0xB2, 0);

    const ddl::trainer::AuditReport report =
        ddl::trainer::grad_audit(params, pos, neg, tolerance);
    std::printf("%-20s %14s %14s %14s\n", "parameter", "max_rel_err", "analytic", "numeric");
    for (const ddl::trainer::AuditRow& row : report.rows)
        std::printf("%-20s %14.6e %14.6e %14.6e\n", row.name.c_str(), row.max_rel_err,
                    row.analytic, row.numeric);
    std::printf("max relative error %.6e at %s\n", report.max_rel_err, report.worst.c_str());
    std::printf("tolerance %.3e: %s\n", tolerance, report.pass ? "PASS" : "FAIL");

    if (!out.empty()) {
        ensure_out_dir(out);
        json j;
        j["tolerance"] = tolerance;
        j["max_rel_err"] = report.max_rel_err;
        j["worst"] = report.worst;
        j["pass"] = report.pass;
        json rows = json::array();
        for (const ddl::trainer::AuditRow& row : report.rows) {
            json r;
            r["name"] = row.name;
            r["max_rel_err"] = row.max_rel_err;
            r["analytic"] = row.analytic;
            r["numeric"] = row.numeric;
            rows.push_back(r);
        }
        j["parameters"] = rows;
        const std::string path = (fs::path(out) / "gradcheck.json").string();
        std::ofstream f(path);
        if (!f) throw ddl::IoError("cannot write " + path);
        f << j.dump(2) << "\n";
        write_run_config(toy, out);
    }
    return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly supervised temporal anomaly detection over snippet features"};
    app.require_subcommand(1);

    // synth ------------------------------------------------------------
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic feature dataset");
    Common synth_common;
    synth_common.attach(synth);
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();
    int normal_videos = 0, anomaly_videos = 0;
    int train_normal = 0, train_abnormal = 0, test_normal = 0, test_abnormal = 0;
    int t_min = 0, t_max_s = 0, dim_s = 0;
    int seg_min = 0, seg_max = 0, seg_len_min = 0, seg_len_max = 0;
    double jump = 0.0, noise = 0.0;
    CLI::Option* o_normal = synth->add_option("--normal-videos", normal_videos,
                                              "normal count for both splits");
    CLI::Option* o_anomaly = synth->add_option("--anomaly-videos", anomaly_videos,
                                               "abnormal count for both splits");
    CLI::Option* o_tn = synth->add_option("--train-normal", train_normal);
    CLI::Option* o_ta = synth->add_option("--train-abnormal", train_abnormal);
    CLI::Option* o_en = synth->add_option("--test-normal", test_normal);
    CLI::Option* o_ea = synth->add_option("--test-abnormal", test_abnormal);
    CLI::Option* o_tmin = synth->add_option("--t-min", t_min, "snippets per video, lower bound");
    CLI::Option* o_tmax = synth->add_option("--t-max", t_max_s, "snippets per video, upper bound");
    CLI::Option* o_dim = synth->add_option("--dim", dim_s, "feature dimension");
    CLI::Option* o_smin = synth->add_option("--segments-min", seg_min);
    CLI::Option* o_smax = synth->add_option("--segments-max", seg_max);
    CLI::Option* o_lmin = synth->add_option("--segment-len-min", seg_len_min);
    CLI::Option* o_lmax = synth->add_option("--segment-len-max", seg_len_max);
    CLI::Option* o_jump = synth->add_option("--jump", jump, "anomaly feature offset");
    CLI::Option* o_noise = synth->add_option("--noise", noise, "random-walk step scale");

    // train ------------------------------------------------------------
    CLI::App* train = app.add_subcommand("train", "train on a manifest of feature bags");
    Common train_common;
    train_common.attach(train);
    std::string train_manifest, train_out;
    train->add_option("--manifest", train_manifest, "training manifest")->required();
    train->add_option("--out", train_out, "output directory")->required();
    int epochs = 0, batch = 0, t_max_train = 0, ckpt_interval = 0;
    int heads = 0, d_h = 0, conv_k = 0, mlp_hidden = 0, mlp_out = 0;
    double lr = 0.0, sigma = 0.0, dropout = 0.0, lambda1 = 0.0, lambda2 = 0.0, zeta = 0.0,
           epsilon = 0.0;
    bool mil_literal = false;
    CLI::Option* o_epochs = train->add_option("--epochs", epochs);
    CLI::Option* o_batch = train->add_option("--batch", batch);
    CLI::Option* o_tmax_tr = train->add_option("--t-max", t_max_train, "subsample length");
    CLI::Option* o_lr = train->add_option("--lr", lr);
    CLI::Option* o_ci = train->add_option("--checkpoint-interval", ckpt_interval);
    CLI::Option* o_heads = train->add_option("--heads", heads);
    CLI::Option* o_dh = train->add_option("--d-h", d_h);
    CLI::Option* o_sigma = train->add_option("--sigma", sigma);
    CLI::Option* o_convk = train->add_option("--conv-k", conv_k);
    CLI::Option* o_mlph = train->add_option("--mlp-hidden", mlp_hidden);
    CLI::Option* o_mlpo = train->add_option("--mlp-out", mlp_out);
    CLI::Option* o_drop = train->add_option("--dropout", dropout);
    CLI::Option* o_l1 = train->add_option("--lambda1", lambda1);
    CLI::Option* o_l2 = train->add_option("--lambda2", lambda2);
    CLI::Option* o_zeta = train->add_option("--zeta", zeta);
    CLI::Option* o_eps = train->add_option("--epsilon", epsilon);
    CLI::Option* o_lit = train->add_flag("--mil-literal", mil_literal,
                                         "use the printed single-term objective");

    // score ------------------------------------------------------------
    CLI::App* score = app.add_subcommand("score", "run inference and export frame scores");
    Common score_common;
    score_common.attach(score);
    std::string score_ckpt, score_manifest, score_annotations, score_out;
    score->add_option("--checkpoint", score_ckpt)->required();
    score->add_option("--manifest", score_manifest)->required();
    score->add_option("--annotations", score_annotations,
                      "frame annotations supplying per-video frame counts");
    score->add_option("--out", score_out, "output directory")->required();

    // eval -------------------------------------------------------------
    CLI::App* eval_cmd = app.add_subcommand("eval", "frame-level AUC and AP from a score CSV");
    Common eval_common;
    eval_common.attach(eval_cmd);
    std::string eval_scores, eval_annotations, eval_out;
    eval_cmd->add_option("--scores", eval_scores)->required();
    eval_cmd->add_option("--annotations", eval_annotations)->required();
    eval_cmd->add_option("--out", eval_out, "output directory")->required();

    // gradcheck ----------------------------------------------------------
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    Common grad_common;
    grad_common.attach(gradcheck);
    double tolerance = 1e-4;
    std::string grad_out;
    gradcheck->add_option("--tolerance", tolerance);
    gradcheck->add_option("--out", grad_out, "optional report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            ddl::config::RunConfig cfg = synth_common.resolve();
            override_if(o_normal, cfg.synth.train_normal, normal_videos);
            override_if(o_normal, cfg.synth.test_normal, normal_videos);
            override_if(o_anomaly, cfg.synth.train_abnormal, anomaly_videos);
            override_if(o_anomaly, cfg.synth.test_abnormal, anomaly_videos);
            override_if(o_tn, cfg.synth.train_normal, train_normal);
            override_if(o_ta, cfg.synth.train_abnormal, train_abnormal);
            override_if(o_en, cfg.synth.test_normal, test_normal);
            override_if(o_ea, cfg.synth.test_abnormal, test_abnormal);
            override_if(o_tmin, cfg.synth.t_min, t_min);
            override_if(o_tmax, cfg.synth.t_max, t_max_s);
            override_if(o_dim, cfg.synth.dim, dim_s);
            override_if(o_smin, cfg.synth.segments_min, seg_min);
            override_if(o_smax, cfg.synth.segments_max, seg_max);
            override_if(o_lmin, cfg.synth.segment_len_min, seg_len_min);
            override_if(o_lmax, cfg.synth.segment_len_max, seg_len_max);
            override_if(o_jump, cfg.synth.jump, jump);
            override_if(o_noise, cfg.synth.noise, noise);
            return cmd_synth(cfg, synth_out);
        }
        if (*train) {
            ddl::config::RunConfig cfg = train_common.resolve();
            override_if(o_epochs, cfg.train.epochs, epochs);
            override_if(o_batch, cfg.train.batch, batch);
            override_if(o_tmax_tr, cfg.train.t_max, t_max_train);
            override_if(o_lr, cfg.train.lr, lr);
            override_if(o_ci, cfg.train.checkpoint_interval, ckpt_interval);
            override_if(o_heads, cfg.hyper.heads, heads);
            override_if(o_dh, cfg.hyper.d_h, d_h);
            override_if(o_sigma, cfg.hyper.sigma, sigma);
            override_if(o_convk, cfg.hyper.conv_k, conv_k);
            override_if(o_mlph, cfg.hyper.mlp_hidden, mlp_hidden);
            override_if(o_mlpo, cfg.hyper.mlp_out, mlp_out);
            override_if(o_drop, cfg.hyper.dropout, dropout);
            override_if(o_l1, cfg.hyper.lambda1, lambda1);
            override_if(o_l2, cfg.hyper.lambda2, lambda2);
            override_if(o_zeta, cfg.hyper.zeta, zeta);
            override_if(o_eps, cfg.hyper.epsilon, epsilon);
            override_if(o_lit, cfg.hyper.mil_literal, mil_literal);
            return cmd_train(cfg, train_manifest, train_out);
        }
        if (*score)
            return cmd_score(score_common.resolve(), score_ckpt, score_manifest,
                             score_annotations, score_out);
        if (*eval_cmd)
            return cmd_eval(eval_common.resolve(), eval_scores, eval_annotations, eval_out);
        if (*gradcheck) return cmd_gradcheck(grad_common.resolve(), tolerance, grad_out);
    } catch (const ddl::MetricError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ddl::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ddl::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ddl::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
