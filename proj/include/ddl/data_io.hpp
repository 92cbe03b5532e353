#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddl/config.hpp"
#include "ddl/matrix.hpp"
#include "ddl/metrics.hpp"

namespace ddl::data_io {

struct FeatureBag {
    std::string video_id;
    Matrix x;  // T x D snippet features
    int label = 0;
    std::string source_path;
};

// FB1 container: "FBAG", u32 version = 1, u32 T, u32 D, then T*D float32
// row-major, everything little-endian. Doubles in memory, float32 on disk;
// write-then-read is bit-exact because the generator quantizes to float32.
FeatureBag read_bag(const std::string& path);
void write_bag(const FeatureBag& bag, const std::string& path);

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    std::string video_id;
    int label = 0;
};

struct Manifest {
    int dim = 0;
    int frames_per_snippet = 16;
    std::vector<ManifestEntry> entries;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// Reads every entry, resolving paths against the manifest location, and
// rejects dimension or label mismatches before anything trains.
std::vector<FeatureBag> load_bags(const Manifest& m, const std::string& manifest_path);

// Rounded-linspace subsample: identity when t_len <= t_max, else indices
// round(m * (t_len-1) / (t_max-1)), strictly increasing, endpoints kept.
std::vector<int> uniform_sample_indices(int t_len, int t_max);
FeatureBag uniform_sample(const FeatureBag& bag, int t_max);

struct SynthData {
    std::vector<FeatureBag> train;
    std::vector<FeatureBag> test;
    std::vector<metrics::FrameAnnotation> annotations;  // one per video
};

// Normal videos: a smooth random walk. Abnormal videos: the same walk plus
// planted interior segments offset along a dataset-level direction, so
// consecutive-snippet dynamics spike at segment boundaries. Fully
// deterministic in spec.seed; features are float32-quantized.
SynthData generate_synthetic(const config::SynthSpec& spec);

// Writes bags/, train_manifest.json, test_manifest.json, annotations.json.
void write_dataset(const SynthData& data, const std::string& out_dir);

}  // namespace ddl::data_io
