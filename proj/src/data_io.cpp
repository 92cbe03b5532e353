#include "ddl/data_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

namespace ddl::data_io {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

void put_f32(std::ostream& out, float f) {
    std::uint32_t v;
    static_assert(sizeof(v) == sizeof(f));
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

bool get_f32(std::istream& in, float& f) {
    std::uint32_t v;
    if (!get_u32(in, v)) return false;
    std::memcpy(&f, &v, 4);
    return true;
}

std::string stem_of(const std::string& path) {
    return fs::path(path).stem().string();
}

}  // namespace

FeatureBag read_bag(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_bag: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "FBAG")
        throw ParseError("read_bag: bad magic in " + path);
    std::uint32_t version = 0, t_len = 0, dim = 0;
    if (!get_u32(in, version) || !get_u32(in, t_len) || !get_u32(in, dim))
        throw ParseError("read_bag: truncated header in " + path);
    if (version != 1)
        throw ParseError("read_bag: unsupported version " + std::to_string(version) + " in " +
                         path);
    if (t_len < 2)
        throw ParseError("read_bag: bag needs at least 2 snippets, got T=" +
                         std::to_string(t_len) + " in " + path);
    if (dim < 1) throw ParseError("read_bag: feature dimension is 0 in " + path);
    const std::uint64_t count = static_cast<std::uint64_t>(t_len) * dim;
    if (count > (1ull << 30))
        throw ParseError("read_bag: implausible header (" + std::to_string(t_len) + " x " +
                         std::to_string(dim) + ") in " + path);
    FeatureBag bag;
    bag.video_id = stem_of(path);
    bag.source_path = path;
    bag.x = Matrix(static_cast<int>(t_len), static_cast<int>(dim));
    for (std::uint64_t i = 0; i < count; ++i) {
        float f = 0.0f;
        if (!get_f32(in, f))
            throw ParseError("read_bag: truncated payload in " + path + " (expected " +
                             std::to_string(count) + " floats)");
        if (!std::isfinite(f))
            throw ParseError("read_bag: non-finite feature at index " + std::to_string(i) +
                             " in " + path);
        bag.x.data[i] = static_cast<double>(f);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw ParseError("read_bag: trailing bytes after payload in " + path);
    return bag;
}

void write_bag(const FeatureBag& bag, const std::string& path) {
    if (bag.x.rows < 2)
        throw Error("write_bag: bag needs at least 2 snippets, got " + bag.x.shape_str());
    if (!all_finite(bag.x)) throw Error("write_bag: non-finite features for " + bag.video_id);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_bag: cannot write " + path);
    out.write("FBAG", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(bag.x.rows));
    put_u32(out, static_cast<std::uint32_t>(bag.x.cols));
    for (double v : bag.x.data) put_f32(out, static_cast<float>(v));
    if (!out) throw IoError("write_bag: write failed for " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("manifest: malformed JSON in " + path + ": " + e.what());
    }
    Manifest m;
    try {
        m.dim = j.at("dim").get<int>();
        m.frames_per_snippet = j.at("frames_per_snippet").get<int>();
        for (const json& entry : j.at("entries")) {
            ManifestEntry e;
            e.path = entry.at("path").get<std::string>();
            e.video_id = entry.at("video_id").get<std::string>();
            e.label = entry.at("label").get<int>();
            if (e.label != 0 && e.label != 1)
                throw ParseError("manifest: label must be 0 or 1 for video " + e.video_id);
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ParseError("manifest: bad structure in " + path + ": " + e.what());
    }
    if (m.dim < 1) throw ParseError("manifest: dim must be >= 1 in " + path);
    if (m.frames_per_snippet != 16)
        throw ParseError("manifest: unsupported frames_per_snippet " +
                         std::to_string(m.frames_per_snippet) + " in " + path);
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    json j;
    j["dim"] = m.dim;
    j["frames_per_snippet"] = m.frames_per_snippet;
    json entries = json::array();
    for (const ManifestEntry& e : m.entries) {
        json entry;
        entry["path"] = e.path;
        entry["video_id"] = e.video_id;
        entry["label"] = e.label;
        entries.push_back(entry);
    }
    j["entries"] = entries;
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("manifest: write failed for " + path);
}

std::vector<FeatureBag> load_bags(const Manifest& m, const std::string& manifest_path) {
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<FeatureBag> bags;
    bags.reserve(m.entries.size());
    for (const ManifestEntry& e : m.entries) {
        FeatureBag bag = read_bag((base / e.path).string());
        if (bag.x.cols != m.dim)
            throw ConfigError("load_bags: " + e.path + " has dimension " +
                              std::to_string(bag.x.cols) + " but the manifest says " +
                              std::to_string(m.dim));
        bag.video_id = e.video_id;
        bag.label = e.label;
        bags.push_back(std::move(bag));
    }
    return bags;
}

std::vector<int> uniform_sample_indices(int t_len, int t_max) {
    if (t_max < 2) throw ConfigError("uniform_sample: t_max must be >= 2");
    if (t_len < 1) throw ConfigError("uniform_sample: t_len must be >= 1");
    std::vector<int> idx;
    if (t_len <= t_max) {
        idx.resize(static_cast<std::size_t>(t_len));
        for (int i = 0; i < t_len; ++i) idx[static_cast<std::size_t>(i)] = i;
        return idx;
    }
    idx.resize(static_cast<std::size_t>(t_max));
    for (int m = 0; m < t_max; ++m) {
        const double pos = static_cast<double>(m) * static_cast<double>(t_len - 1) /
                           static_cast<double>(t_max - 1);
        idx[static_cast<std::size_t>(m)] = static_cast<int>(std::llround(pos));
    }
    return idx;
}

FeatureBag uniform_sample(const FeatureBag& bag, int t_max) {
    const std::vector<int> idx = uniform_sample_indices(bag.x.rows, t_max);
    if (static_cast<int>(idx.size()) == bag.x.rows) return bag;
    FeatureBag out;
    out.video_id = bag.video_id;
    out.label = bag.label;
    out.source_path = bag.source_path;
    out.x = Matrix(static_cast<int>(idx.size()), bag.x.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < bag.x.cols; ++c)
            out.x.at(static_cast<int>(r), c) = bag.x.at(idx[r], c);
    return out;
}

namespace {

struct PlantedSegment {
    int start = 0;
    int end = 0;  // inclusive snippet indices
};

FeatureBag make_walk_bag(const std::string& id, int label, const config::SynthSpec& spec,
                         const std::vector<double>& direction, Rng& rng,
                         metrics::FrameAnnotation& ann) {
    FeatureBag bag;
    bag.video_id = id;
    bag.label = label;
    const int t_len = static_cast<int>(rng.uniform_int(spec.t_min, spec.t_max));
    bag.x = Matrix(t_len, spec.dim);
    for (int c = 0; c < spec.dim; ++c) bag.x.at(0, c) = 0.5 * rng.normal();
    for (int t = 1; t < t_len; ++t)
        for (int c = 0; c < spec.dim; ++c)
            bag.x.at(t, c) = bag.x.at(t - 1, c) + spec.noise * rng.normal();

    std::vector<PlantedSegment> segments;
    if (label == 1) {
        const int n_seg = static_cast<int>(rng.uniform_int(spec.segments_min, spec.segments_max));
        std::vector<int> lens(static_cast<std::size_t>(n_seg));
        int span = 2 * (n_seg - 1);
        for (int& len : lens) {
            len = static_cast<int>(rng.uniform_int(spec.segment_len_min, spec.segment_len_max));
            span += len;
        }
        int slack = t_len - 2 - span;
        if (slack < 0)
            throw ConfigError("generate_synthetic: infeasible spec, cannot place " +
                              std::to_string(n_seg) + " segments in " + std::to_string(t_len) +
                              " snippets");
        int cursor = 1;  // segments are interior: start >= 1, end <= t_len - 2
        for (int s = 0; s < n_seg; ++s) {
            const int pad = static_cast<int>(rng.uniform_int(0, slack));
            slack -= pad;
            PlantedSegment seg;
            seg.start = cursor + pad;
            seg.end = seg.start + lens[static_cast<std::size_t>(s)] - 1;
            cursor = seg.end + 3;  // >= 2 normal snippets between segments
            segments.push_back(seg);
            for (int t = seg.start; t <= seg.end; ++t)
                for (int c = 0; c < spec.dim; ++c)
                    bag.x.at(t, c) += spec.jump * direction[static_cast<std::size_t>(c)];
        }
    }

    // Disk format is float32; quantize now so memory and file agree bit-exactly.
    for (double& v : bag.x.data) v = static_cast<double>(static_cast<float>(v));

    ann.video_id = id;
    ann.total_frames = 16ll * t_len + rng.uniform_int(0, 15);
    for (const PlantedSegment& seg : segments)
        ann.intervals.emplace_back(16ll * seg.start, 16ll * (seg.end + 1) - 1);
    return bag;
}

std::string padded(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
    return buf;
}

}  // namespace

SynthData generate_synthetic(const config::SynthSpec& spec) {
    config::RunConfig probe;
    probe.synth = spec;
    config::validate(probe);

    Rng master(spec.seed);
    std::vector<double> direction(static_cast<std::size_t>(spec.dim));
    double norm2 = 0.0;
    for (double& d : direction) {
        d = master.normal();
        norm2 += d * d;
    }
    const double inv_norm = 1.0 / std::sqrt(norm2);
    for (double& d : direction) d *= inv_norm;

    SynthData data;
    int counter = 0;
    auto emit = [&](std::vector<FeatureBag>& split, const char* prefix, int count, int label) {
        for (int i = 0; i < count; ++i) {
            Rng bag_rng(mix_seed(spec.seed, 1000 + static_cast<std::uint64_t>(counter++)));
            metrics::FrameAnnotation ann;
            split.push_back(make_walk_bag(padded(prefix, i), label, spec, direction, bag_rng, ann));
            data.annotations.push_back(std::move(ann));
        }
    };
    emit(data.train, "train_norm_", spec.train_normal, 0);
    emit(data.train, "train_abn_", spec.train_abnormal, 1);
    emit(data.test, "test_norm_", spec.test_normal, 0);
    emit(data.test, "test_abn_", spec.test_abnormal, 1);
    return data;
}

void write_dataset(const SynthData& data, const std::string& out_dir) {
    if (data.train.empty() && data.test.empty())
        throw ConfigError("write_dataset: dataset has no videos");
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "bags", ec);
    if (ec) throw IoError("write_dataset: cannot create " + out_dir + "/bags: " + ec.message());

    const int dim = data.train.empty() ? data.test.front().x.cols : data.train.front().x.cols;
    auto write_split = [&](const std::vector<FeatureBag>& split, const std::string& name) {
        Manifest m;
        m.dim = dim;
        for (const FeatureBag& bag : split) {
            const std::string rel = "bags/" + bag.video_id + ".fb1";
            write_bag(bag, (fs::path(out_dir) / rel).string());
            m.entries.push_back(ManifestEntry{rel, bag.video_id, bag.label});
        }
        save_manifest(m, (fs::path(out_dir) / name).string());
    };
    write_split(data.train, "train_manifest.json");
    write_split(data.test, "test_manifest.json");
    metrics::save_annotations(data.annotations, (fs::path(out_dir) / "annotations.json").string());
}

}  // namespace ddl::data_io
