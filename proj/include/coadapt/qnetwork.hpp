#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coadapt/mlp.hpp"
#include "coadapt/optim.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

// Where the bootstrap target's next action comes from:
//  - SarsaDatasetAction: the action actually logged at s' (always in-sample)
//  - ExpectedBehavior:   expectation over the behavior policy at s'
//  - MaxAction:          argmax over the delayed network's values at s'
//  - MonteCarloRegression: no bootstrap; regress on the observed return-to-go
enum class SelectorKind {
    SarsaDatasetAction,
    ExpectedBehavior,
    MaxAction,
    MonteCarloRegression,
};
std::string selector_name(SelectorKind selector);
SelectorKind selector_from_name(const std::string& name);

enum class LossHead { PlainTD, Cql, Rem };
std::string loss_head_name(LossHead head);
LossHead loss_head_from_name(const std::string& name);

enum class Dr3Variant { Off, LastLayerDot, LastLayerDotStopGrad, LabelNoiseGeneralized };
std::string dr3_variant_name(Dr3Variant variant);
Dr3Variant dr3_variant_from_name(const std::string& name);

enum class OptimizerKind { Adam, Sgd };
std::string optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(const std::string& name);

// Parameter-space noise injected by noisy runs. None leaves training exact.
enum class NoiseKind { None, Isotropic, LabelNoiseTargets };
std::string noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

std::string head_mode_name(HeadMode mode);
HeadMode head_mode_from_name(const std::string& name);

struct Dr3Config {
    Dr3Variant variant = Dr3Variant::Off;
    double c0 = 0.0;                  // regularizer coefficient; 0 exactly when Off
    std::size_t lyapunov_iters = 20;  // fixed-point steps for the generalized variant
    double lyapunov_eta = 0.01;
    void validate() const;
};

struct TrainConfig {
    SelectorKind selector = SelectorKind::SarsaDatasetAction;
    LossHead loss_head = LossHead::PlainTD;
    double cql_alpha = 0.0;   // conservatism weight; used when loss_head = Cql
    std::size_t rem_heads = 1;  // ensemble size K; used when loss_head = Rem
    bool rem_squared = false;   // substitute squared error for Huber (diagnostics)
    Dr3Config dr3;
    double gamma = 0.95;
    double lr = 3e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::size_t batch_size = 16;
    std::size_t target_period = 100;  // hard target sync every N steps
    std::size_t total_steps = 100000;
    std::size_t eval_every = 2000;
    std::uint64_t seed = 0;
    HeadMode head_mode = HeadMode::StateInputMultiHead;
    std::vector<std::size_t> hidden = {64, 64};
    NoiseKind noise = NoiseKind::None;
    double noise_scale = 0.0;  // must be > 0 when noise != None
    double q_cap = 1e6;        // |mean Q| beyond this flags divergence

    void validate() const;
    // {input, hidden..., output} for the given observation/action dimensions
    std::vector<std::size_t> layer_sizes(std::size_t obs_dim,
                                         std::size_t n_actions) const;
};

// Online parameters, the delayed copy used for bootstrap targets, and the
// optimizer state. target_params is always shape-congruent with params.
struct QNetwork {
    MlpParams params;
    MlpParams target_params;
    AdamState adam;
    std::size_t step_count = 0;  // train steps taken; drives target syncs
};

QNetwork make_qnetwork(const TrainConfig& config, std::size_t obs_dim,
                       std::size_t n_actions, Rng& rng);

// Per-head Q-values (rem_heads x n_actions) of a REM network at one
// observation, under either head mode.
Matrix rem_q_all_actions(const MlpParams& params, const std::vector<double>& obs,
                         std::size_t n_actions, std::size_t rem_heads);

// Text format for network parameters; round-trips exactly. Provenance lines
// are echoed back as leading '#' comments.
void write_params(const MlpParams& params, const std::string& path,
                  const std::vector<std::string>& provenance = {});
MlpParams read_params(const std::string& path);

}  // namespace coadapt
