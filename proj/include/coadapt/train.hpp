#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "coadapt/analysis.hpp"
#include "coadapt/dataset.hpp"
#include "coadapt/losses.hpp"
#include "coadapt/metric_trace.hpp"
#include "coadapt/qnetwork.hpp"

namespace coadapt {

struct LossComponents {
    double total = 0.0;  // head + cql + c0-weighted dr3, all batch-mean scaled
    double head = 0.0;   // regression (or Huber) part
    double cql = 0.0;    // mean conservatism penalty
    double dr3 = 0.0;    // raw regularizer value (batch sum, unweighted)
    double batch_mean_q = 0.0;
    bool finite = true;  // false: no update was applied
};

// phi(s_i, a_i) rows for the listed transitions under the online parameters.
Matrix feature_matrix(const MlpParams& params, const OfflineDataset& data,
                      const std::vector<std::size_t>& indices);

// Aligned (phi_i, phi'_i) rows over the non-terminal listed transitions, phi'
// taken at the selector's backup action (dataset action for SARSA and MC,
// behavior-weighted per-action features for ExpectedBehavior, the delayed
// network's argmax for MaxAction; REM heads are combined with equal weights).
// Throws DomainError when every listed transition is terminal.
FeaturePair selector_feature_pair(const QNetwork& net, const OfflineDataset& data,
                                  const std::vector<std::size_t>& indices,
                                  SelectorKind selector, double gamma,
                                  const StochasticPolicy* behavior = nullptr,
                                  std::size_t rem_heads = 0);

// Owns one training run: network, generator streams (init/batch/noise/head
// weights are independent, so degenerate configs reduce exactly), and the
// behavior policy / return-to-go table when the selector needs them.
class Trainer {
  public:
    Trainer(const OfflineDataset& data, const TrainConfig& config);

    // One gradient step on the given transition indices. Syncs the delayed
    // network first whenever step_count is a multiple of the target period.
    // A non-finite loss applies no update and reports finite = false.
    LossComponents train_step(const std::vector<std::size_t>& batch);
    LossComponents step();  // samples its own batch (uniform with replacement)
    std::vector<std::size_t> sample_batch();

    // Full loop: checkpoint rows every eval_every steps plus a final row;
    // truncates with the diverged flag when |mean Q| passes q_cap or the
    // loss stops being finite. total_steps = 0 yields an empty trace.
    MetricTrace run(const std::vector<std::string>& provenance = {});

    // Whole-dataset diagnostics at the current parameters.
    MetricRow checkpoint_row(std::size_t step) const;

    const QNetwork& net() const { return net_; }
    QNetwork& net() { return net_; }
    const TrainConfig& config() const { return config_; }
    const OfflineDataset& data() const { return data_; }
    const StochasticPolicy* behavior() const {
        return has_behavior_ ? &behavior_ : nullptr;
    }
    const std::vector<double>& returns() const { return returns_; }

  private:
    const OfflineDataset& data_;
    TrainConfig config_;
    QNetwork net_;
    StochasticPolicy behavior_;
    bool has_behavior_ = false;
    std::vector<double> returns_;
    Rng rng_batch_{0};
    Rng rng_noise_{0};
    Rng rng_rem_{0};
};

// PlainTD training perturbed by the chosen noise; everything else follows
// the config. The noise stream is separate from batch sampling, so the
// scale -> 0 limit reproduces the unperturbed run bit-for-bit.
MetricTrace noisy_td_run(const OfflineDataset& data, TrainConfig config,
                         NoiseKind kind, double scale,
                         const std::vector<std::string>& provenance = {});

}  // namespace coadapt
