#pragma once

#include <cstddef>
#include <vector>

#include "coadapt/matrix.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

// How a Q-network consumes (state, action):
//  - StateInputMultiHead: input is the observation, one output per action,
//    features phi(s,a) are the action-independent penultimate activations.
//  - StateActionInputScalar: input is observation ++ one-hot(action), one
//    scalar output, features depend on the action.
enum class HeadMode { StateInputMultiHead, StateActionInputScalar };

// Fully-connected ReLU network. weights[l] has shape (out_l x in_l); the
// final layer has no activation. A single-layer net is linear and its
// features are the raw input.
struct MlpParams {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    HeadMode head_mode = HeadMode::StateInputMultiHead;

    std::size_t n_layers() const { return weights.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t feature_dim() const;
    void validate() const;
};

// He-style uniform init: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
// layer_sizes = {input, hidden..., output}.
MlpParams make_mlp(const std::vector<std::size_t>& layer_sizes, HeadMode head_mode,
                   Rng& rng);

struct MlpForward {
    std::vector<double> q_values;
    std::vector<double> features;
};
MlpForward mlp_forward(const MlpParams& params, const std::vector<double>& input);

// All intermediate activations, kept for reverse-mode differentiation.
struct MlpTape {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;

    const std::vector<double>& q_values() const { return post.back(); }
    const std::vector<double>& features(const MlpParams& params) const {
        return params.n_layers() >= 2 ? post[params.n_layers() - 2] : input;
    }
};
MlpTape mlp_forward_tape(const MlpParams& params, const std::vector<double>& input);

struct Gradients {
    std::vector<Matrix> d_weights;
    std::vector<std::vector<double>> d_biases;
};
Gradients zero_gradients(const MlpParams& params);
void scale_gradients(Gradients& grads, double factor);
void add_gradients(Gradients& into, const Gradients& other, double factor = 1.0);
double grad_dot(const Gradients& a, const Gradients& b);

// Accumulates into `grads` the parameter gradient of
//   q_upstream . q(theta) + feature_upstream . features(theta)
// evaluated on `tape`. Either upstream may be empty. The feature seed enters
// at the post-activation penultimate layer; a single-layer net has constant
// features, so the feature term contributes nothing there.
void mlp_backward_accumulate(const MlpParams& params, const MlpTape& tape,
                             const std::vector<double>& q_upstream,
                             const std::vector<double>& feature_upstream,
                             Gradients& grads);

// Exact reverse-mode gradient of upstream . q(theta) w.r.t. every parameter.
Gradients mlp_backward(const MlpParams& params, const std::vector<double>& input,
                       const std::vector<double>& upstream);

// Central-difference gradient of upstream . q(theta); test oracle.
Gradients finite_diff_grad(const MlpParams& params, const std::vector<double>& input,
                           const std::vector<double>& upstream, double step = 1e-5);

// Q-values for every action under either head mode.
std::vector<double> q_all_actions(const MlpParams& params,
                                  const std::vector<double>& observation,
                                  std::size_t n_actions);

// Network input encoding one (observation, action) pair in scalar head mode.
std::vector<double> scalar_head_input(const std::vector<double>& observation,
                                      std::size_t action, std::size_t n_actions);

}  // namespace coadapt
