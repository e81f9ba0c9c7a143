#include "coadapt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "coadapt/common.hpp"

namespace coadapt {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// strict lexicographic order over (task name, score list); equal contents
// compare false both ways
bool canonical_before(const RunScores& a, const RunScores& b) {
    return a.by_task < b.by_task;
}

}  // namespace

void RunScores::validate() const {
    if (by_task.empty()) throw DomainError("RunScores: no tasks");
    for (const auto& [task, scores] : by_task) {
        if (scores.empty())
            throw DomainError("RunScores: task '" + task + "' has no scores");
        for (double s : scores)
            if (!std::isfinite(s))
                throw DomainError("RunScores: task '" + task +
                                  "' has a non-finite score");
    }
}

double iqm(const std::vector<double>& values) {
    if (values.empty()) throw DomainError("iqm: no values");
    for (double v : values)
        if (!std::isfinite(v)) throw DomainError("iqm: non-finite value");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t drop = sorted.size() / 4;
    double total = 0.0;
    for (std::size_t i = drop; i < sorted.size() - drop; ++i) total += sorted[i];
    return total / static_cast<double>(sorted.size() - 2 * drop);
}

std::pair<double, double> percentile_bootstrap_ci(const std::vector<double>& values,
                                                  std::size_t resamples, double level,
                                                  Rng& rng) {
    if (values.empty()) throw DomainError("percentile_bootstrap_ci: no values");
    if (resamples < 100)
        throw DomainError("percentile_bootstrap_ci: need at least 100 resamples");
    if (!(level > 0.0 && level < 1.0))
        throw DomainError("percentile_bootstrap_ci: level must lie in (0, 1)");

    const std::size_t n = values.size();
    std::vector<double> stats(resamples);
    std::vector<double> draw(n);
    for (std::size_t b = 0; b < resamples; ++b) {
        for (std::size_t i = 0; i < n; ++i) draw[i] = values[rng.uniform_int(n)];
        stats[b] = iqm(draw);
    }
    std::sort(stats.begin(), stats.end());

    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(stats.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        if (lo + 1 >= stats.size()) return stats.back();
        const double frac = pos - static_cast<double>(lo);
        return stats[lo] + frac * (stats[lo + 1] - stats[lo]);
    };
    return {quantile((1.0 - level) / 2.0), quantile((1.0 + level) / 2.0)};
}

double prob_improvement(const RunScores& x, const RunScores& y) {
    x.validate();
    y.validate();
    if (x.by_task.size() != y.by_task.size())
        throw DomainError("prob_improvement: task sets disagree");
    for (const auto& [task, scores] : x.by_task)
        if (y.by_task.find(task) == y.by_task.end())
            throw DomainError("prob_improvement: task '" + task +
                              "' is missing from the second argument");

    // evaluate the canonically ordered direction and complement the other, so
    // p(x, y) + p(y, x) = 1 holds exactly rather than up to rounding
    if (canonical_before(y, x)) return 1.0 - prob_improvement(y, x);

    double task_sum = 0.0;
    for (const auto& [task, xs] : x.by_task) {
        const std::vector<double>& ys = y.by_task.at(task);
        // doubled wins stay integral, so the per-task tally is exact
        std::size_t doubled_wins = 0;
        for (double xv : xs)
            for (double yv : ys) {
                if (yv < xv)
                    doubled_wins += 2;
                else if (yv == xv)
                    doubled_wins += 1;
            }
        task_sum += static_cast<double>(doubled_wins) /
                    static_cast<double>(2 * xs.size() * ys.size());
    }
    return task_sum / static_cast<double>(x.by_task.size());
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path,
                       const std::vector<std::string>& provenance) {
    std::ofstream out(path);
    if (!out) throw IoError("write_summary_csv: cannot open '" + path + "'");
    for (const std::string& line : provenance) out << "# " << line << '\n';
    out << "# stats.bootstrap = plain-percentile (non-stratified)\n";
    out << kSummaryCsvHeader << '\n';
    for (const SummaryRow& r : rows)
        out << r.task << ',' << format_double(r.mean) << ',' << format_double(r.iqm)
            << ',' << format_double(r.ci_lo) << ',' << format_double(r.ci_hi) << '\n';
    if (!out) throw IoError("write_summary_csv: write to '" + path + "' failed");
}

void write_pairwise_csv(const std::vector<PairwiseRow>& rows, const std::string& path,
                        const std::vector<std::string>& provenance) {
    std::ofstream out(path);
    if (!out) throw IoError("write_pairwise_csv: cannot open '" + path + "'");
    for (const std::string& line : provenance) out << "# " << line << '\n';
    out << kPairwiseCsvHeader << '\n';
    for (const PairwiseRow& r : rows)
        out << r.alg_a << ',' << r.alg_b << ',' << format_double(r.p_improve) << '\n';
    if (!out) throw IoError("write_pairwise_csv: write to '" + path + "' failed");
}

}  // namespace coadapt
