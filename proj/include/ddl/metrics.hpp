#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ddl::metrics {

struct FrameAnnotation {
    std::string video_id;
    long long total_frames = 0;
    // Inclusive [start, end] frame intervals, 0-based, non-overlapping.
    std::vector<std::pair<long long, long long>> intervals;
};

struct EvalResult {
    double auc = 0.0;
    double ap = 0.0;
    long long frames = 0;
    long long positives = 0;
};

// Frame f gets snippet score floor(f/16); frames past 16*T keep the last
// snippet's score (ragged tail).
std::vector<double> expand_scores(const std::vector<double>& snippet_scores,
                                  long long total_frames);

// Per-frame 0/1 labels from the annotation's intervals.
std::vector<int> frame_labels(const FrameAnnotation& ann);

// Probability a random positive outranks a random negative, ties counting
// half (rank-averaged Mann-Whitney). Throws MetricError on one-class input.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision with equal scores processed as one threshold group.
// Throws MetricError when no positive is present.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

// Pools frame scores and labels across all videos, then computes both
// metrics. Every scored video must have an annotation whose total_frames
// matches the score count.
EvalResult evaluate(const std::map<std::string, std::vector<double>>& video_frame_scores,
                    const std::vector<FrameAnnotation>& annotations);

// JSON array of {"video_id", "total_frames", "intervals": [[a,b], ...]}.
std::vector<FrameAnnotation> load_annotations(const std::string& path);
void save_annotations(const std::vector<FrameAnnotation>& anns, const std::string& path);

// CSV "video_id,frame,score" with frames numbered 0..n-1 per video.
void write_score_csv(const std::string& path,
                     const std::vector<std::pair<std::string, std::vector<double>>>& rows);
std::vector<std::pair<std::string, std::vector<double>>> read_score_csv(const std::string& path);

}  // namespace ddl::metrics
