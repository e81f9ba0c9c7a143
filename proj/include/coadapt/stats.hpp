#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/rng.hpp"

namespace coadapt {

// Per-task lists of per-seed scores. Every task needs at least one score and
// all scores must be finite.
struct RunScores {
    std::map<std::string, std::vector<double>> by_task;
    void validate() const;
};

// Interquartile mean: sort, drop floor(n/4) from each end, average the rest.
double iqm(const std::vector<double>& values);

// Percentile bootstrap interval for the interquartile mean: B resamples with
// replacement, endpoints at the (1 -+ level)/2 quantiles (linear
// interpolation). Deterministic in the supplied generator. This is the plain
// non-stratified scheme; outputs that embed it should say so.
std::pair<double, double> percentile_bootstrap_ci(const std::vector<double>& values,
                                                  std::size_t resamples, double level,
                                                  Rng& rng);

// Averaged Mann-Whitney U-statistic: per task, mean of S(x, y) over all score
// pairs with S = 1 when y < x, 1/2 on ties, 0 otherwise; then the mean across
// tasks. The complement identity p(x, y) + p(y, x) = 1 holds exactly.
double prob_improvement(const RunScores& x, const RunScores& y);

// CSV emission with '#' provenance comments, matching the metric trace format.
struct SummaryRow {
    std::string task;
    double mean = 0.0;
    double iqm = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};
inline constexpr const char* kSummaryCsvHeader = "task,mean,iqm,ci_lo,ci_hi";
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path,
                       const std::vector<std::string>& provenance = {});

struct PairwiseRow {
    std::string alg_a;
    std::string alg_b;
    double p_improve = 0.0;
};
inline constexpr const char* kPairwiseCsvHeader = "alg_a,alg_b,p_improve";
void write_pairwise_csv(const std::vector<PairwiseRow>& rows, const std::string& path,
                        const std::vector<std::string>& provenance = {});

}  // namespace coadapt
