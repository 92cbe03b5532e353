#pragma once

#include <cstdint>
#include <string>

namespace ddl::config {

// Model and objective hyperparameters. Defaults are the desk-scale profile;
// the "ucf" and "xd" profiles pin the full-scale preset settings.
struct HyperParams {
    int dim = 32;         // snippet feature dimension D
    int heads = 4;        // attention head count
    int d_h = 32;         // total attention output width (split across heads)
    double sigma = 16.0;  // locality prior width
    int conv_k = 5;       // causal conv taps
    int mlp_hidden = 64;
    int mlp_out = 32;
    double dropout = 0.1;
    double lambda1 = 1.0;  // ranking-loss weight
    double lambda2 = 1.0;  // alignment-loss weight
    double zeta = 0.0;     // ranking margin
    double epsilon = 1e-7;
    bool mil_literal = false;
};

struct TrainConfig {
    int batch = 8;  // bags per step, half positive / half negative
    int epochs = 50;
    int t_max = 40;  // snippets per bag after uniform subsampling
    double lr = 5e-4;
    std::uint64_t seed = 7;
    int checkpoint_interval = 0;  // epochs between snapshots; 0 = final only
};

struct SynthSpec {
    std::uint64_t seed = 7;
    int train_normal = 40;
    int train_abnormal = 40;
    int test_normal = 10;
    int test_abnormal = 10;
    int t_min = 30;  // snippets per video, inclusive range
    int t_max = 60;
    int dim = 32;
    int segments_min = 1;  // planted anomaly segments per abnormal video
    int segments_max = 2;
    int segment_len_min = 5;  // snippets per planted segment
    int segment_len_max = 10;
    double jump = 5.0;    // feature-space offset applied inside segments
    double noise = 0.05;  // random-walk step scale
};

struct RunConfig {
    std::string profile = "desk";
    HyperParams hyper;
    TrainConfig train;
    SynthSpec synth;
};

// Named profile presets: "desk" (reduced defaults), "ucf", "xd".
RunConfig profile_config(const std::string& name);

// Rejects internally inconsistent settings (odd batch, heads not dividing
// d_h, empty ranges, ...) before any computation starts.
void validate(const RunConfig& c);

// Stable serialization: sorted keys, no filesystem paths, round-trips exactly.
std::string to_json(const RunConfig& c);

// Strict parse of a full document: unknown keys are rejected.
RunConfig from_json(const std::string& text);

// Merges a partial JSON document over c. A "profile" key, when present,
// re-bases c on that profile before the remaining keys apply.
void apply_json_overrides(RunConfig& c, const std::string& text);

// The hyperparameter block alone, used inside checkpoint files.
std::string hyper_to_json(const HyperParams& h);
HyperParams hyper_from_json(const std::string& text);

}  // namespace ddl::config
