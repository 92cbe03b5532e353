#include "ddl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "ddl/errors.hpp"

namespace ddl::metrics {
namespace {

using nlohmann::json;

void check_pair_sizes(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("metrics: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw MetricError("metrics: empty score pool");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<double> expand_scores(const std::vector<double>& snippet_scores,
                                  long long total_frames) {
    if (snippet_scores.empty()) throw Error("expand_scores: empty score vector");
    if (total_frames < 1)
        throw Error("expand_scores: total_frames must be >= 1, got " +
                    std::to_string(total_frames));
    const auto t_len = static_cast<long long>(snippet_scores.size());
    std::vector<double> frames(static_cast<std::size_t>(total_frames));
    for (long long f = 0; f < total_frames; ++f) {
        const long long snippet = std::min(f / 16, t_len - 1);
        frames[static_cast<std::size_t>(f)] = snippet_scores[static_cast<std::size_t>(snippet)];
    }
    return frames;
}

std::vector<int> frame_labels(const FrameAnnotation& ann) {
    if (ann.total_frames < 1)
        throw Error("frame_labels: total_frames must be >= 1 for video " + ann.video_id);
    std::vector<int> labels(static_cast<std::size_t>(ann.total_frames), 0);
    for (const auto& [start, end] : ann.intervals) {
        if (start < 0 || end < start || end >= ann.total_frames)
            throw Error("frame_labels: interval [" + std::to_string(start) + ", " +
                        std::to_string(end) + "] outside video " + ann.video_id + " with " +
                        std::to_string(ann.total_frames) + " frames");
        for (long long f = start; f <= end; ++f) {
            if (labels[static_cast<std::size_t>(f)] != 0)
                throw Error("frame_labels: overlapping intervals in video " + ann.video_id);
            labels[static_cast<std::size_t>(f)] = 1;
        }
    }
    return labels;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_pair_sizes(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    long long n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j + 1;
    }
    const long long n_neg = static_cast<long long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw MetricError("roc_auc: needs both classes, got " + std::to_string(n_pos) +
                          " positives out of " + std::to_string(n) + " frames");
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_pair_sizes(scores, labels);
    const std::size_t n = scores.size();
    const long long n_pos = std::count(labels.begin(), labels.end(), 1);
    if (n_pos == 0) throw MetricError("average_precision: no positive frames in the pool");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) tp += 1.0;
            else fp += 1.0;
        }
        const double recall = tp / static_cast<double>(n_pos);
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

EvalResult evaluate(const std::map<std::string, std::vector<double>>& video_frame_scores,
                    const std::vector<FrameAnnotation>& annotations) {
    if (video_frame_scores.empty()) throw MetricError("evaluate: no scored videos");
    std::map<std::string, const FrameAnnotation*> by_id;
    for (const FrameAnnotation& ann : annotations) {
        if (!by_id.emplace(ann.video_id, &ann).second)
            throw Error("evaluate: duplicate annotation for video " + ann.video_id);
    }
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    for (const auto& [id, scores] : video_frame_scores) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw MetricError("evaluate: no annotation for video " + id);
        const FrameAnnotation& ann = *it->second;
        if (static_cast<long long>(scores.size()) != ann.total_frames)
            throw ShapeError("evaluate: video " + id + " has " + std::to_string(scores.size()) +
                             " frame scores but annotation says " +
                             std::to_string(ann.total_frames));
        const std::vector<int> labels = frame_labels(ann);
        pooled_scores.insert(pooled_scores.end(), scores.begin(), scores.end());
        pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());
    }
    EvalResult r;
    r.frames = static_cast<long long>(pooled_scores.size());
    r.positives = std::count(pooled_labels.begin(), pooled_labels.end(), 1);
    r.auc = roc_auc(pooled_scores, pooled_labels);
    r.ap = average_precision(pooled_scores, pooled_labels);
    return r;
}

std::vector<FrameAnnotation> load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("annotations: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("annotations: malformed JSON in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError("annotations: expected a JSON array in " + path);
    std::vector<FrameAnnotation> anns;
    try {
        for (const json& item : j) {
            FrameAnnotation ann;
            ann.video_id = item.at("video_id").get<std::string>();
            ann.total_frames = item.at("total_frames").get<long long>();
            for (const json& iv : item.at("intervals")) {
                if (!iv.is_array() || iv.size() != 2)
                    throw ParseError("annotations: interval must be a [start, end] pair");
                ann.intervals.emplace_back(iv.at(0).get<long long>(), iv.at(1).get<long long>());
            }
            frame_labels(ann);  // validates bounds and overlap
            anns.push_back(std::move(ann));
        }
    } catch (const json::exception& e) {
        throw ParseError("annotations: bad structure in " + path + ": " + e.what());
    }
    return anns;
}

void save_annotations(const std::vector<FrameAnnotation>& anns, const std::string& path) {
    json j = json::array();
    for (const FrameAnnotation& ann : anns) {
        json item;
        item["video_id"] = ann.video_id;
        item["total_frames"] = ann.total_frames;
        json intervals = json::array();
        for (const auto& [start, end] : ann.intervals) intervals.push_back({start, end});
        item["intervals"] = intervals;
        j.push_back(item);
    }
    std::ofstream out(path);
    if (!out) throw IoError("annotations: cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("annotations: write failed for " + path);
}

void write_score_csv(const std::string& path,
                     const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("scores: cannot write " + path);
    out << "video_id,frame,score\n";
    for (const auto& [id, scores] : rows) {
        for (std::size_t f = 0; f < scores.size(); ++f)
            out << id << "," << f << "," << format_double(scores[f]) << "\n";
    }
    if (!out) throw IoError("scores: write failed for " + path);
}

std::vector<std::pair<std::string, std::vector<double>>> read_score_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("scores: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "video_id,frame,score")
        throw ParseError("scores: bad header in " + path);
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    std::map<std::string, std::size_t> slot;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ParseError("scores: malformed row at line " + std::to_string(line_no) +
                             " of " + path);
        const std::string id = line.substr(0, c1);
        const std::string frame_str = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string score_str = line.substr(c2 + 1);
        std::size_t consumed = 0;
        long long frame = 0;
        double score = 0.0;
        try {
            frame = std::stoll(frame_str, &consumed);
            if (consumed != frame_str.size()) throw std::invalid_argument(frame_str);
            score = std::stod(score_str, &consumed);
            if (consumed != score_str.size()) throw std::invalid_argument(score_str);
        } catch (const std::exception&) {
            throw ParseError("scores: malformed row at line " + std::to_string(line_no) +
                             " of " + path);
        }
        if (!std::isfinite(score))
            throw ParseError("scores: non-finite score at line " + std::to_string(line_no));
        auto it = slot.find(id);
        if (it == slot.end()) {
            it = slot.emplace(id, rows.size()).first;
            rows.emplace_back(id, std::vector<double>{});
        }
        std::vector<double>& scores = rows[it->second].second;
        if (frame != static_cast<long long>(scores.size()))
            throw ParseError("scores: video " + id + " expected frame " +
                             std::to_string(scores.size()) + " but got " +
                             std::to_string(frame) + " at line " + std::to_string(line_no));
        scores.push_back(score);
    }
    if (rows.empty()) throw ParseError("scores: no data rows in " + path);
    return rows;
}

}  // namespace ddl::metrics
