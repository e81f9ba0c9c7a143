#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace coadapt {

// One diagnostics checkpoint of a training run. feat_dot/cosine/srank are
// computed over the whole dataset's penultimate features; loss is the
// regression loss over the whole dataset at the checkpoint.
struct MetricRow {
    std::size_t step = 0;
    double loss = 0.0;
    double mean_q = 0.0;
    double feat_dot = 0.0;
    double cosine = 0.0;
    std::size_t srank = 0;
    double eval_return = 0.0;
    double r_td = 0.0;
    bool diverged = false;
};

struct MetricTrace {
    // provenance: "key = value" strings, written as leading '#' lines
    std::vector<std::string> provenance;
    std::vector<MetricRow> rows;
    void validate() const;  // steps strictly increasing
};

inline constexpr const char* kMetricCsvHeader =
    "step,loss,mean_q,feat_dot,cosine,srank,eval_return,r_td,diverged";

void write_metric_trace(const MetricTrace& trace, const std::string& path);
MetricTrace read_metric_trace(const std::string& path);

}  // namespace coadapt
