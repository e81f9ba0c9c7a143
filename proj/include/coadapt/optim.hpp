#pragma once

#include "coadapt/mlp.hpp"

namespace coadapt {

// theta -= lr * grad
void sgd_step(MlpParams& params, const Gradients& grads, double lr);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::size_t t = 0;
    Gradients m;
    Gradients v;
};
AdamState make_adam_state(const MlpParams& params);

// Bias-corrected Adam update.
void adam_step(MlpParams& params, AdamState& state, const Gradients& grads,
               const AdamConfig& config);

}  // namespace coadapt
