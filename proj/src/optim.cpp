#include "coadapt/optim.hpp"

#include <cmath>

namespace coadapt {

void sgd_step(MlpParams& params, const Gradients& grads, double lr) {
    if (grads.d_weights.size() != params.n_layers())
        throw ShapeError("sgd_step: gradient layer count disagrees");
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        Matrix& w = params.weights[l];
        const Matrix& dw = grads.d_weights[l];
        if (!w.same_shape(dw)) throw ShapeError("sgd_step: gradient shape disagrees");
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= lr * dw.data()[i];
        for (std::size_t i = 0; i < params.biases[l].size(); ++i)
            params.biases[l][i] -= lr * grads.d_biases[l][i];
    }
}

AdamState make_adam_state(const MlpParams& params) {
    return AdamState{0, zero_gradients(params), zero_gradients(params)};
}

void adam_step(MlpParams& params, AdamState& state, const Gradients& grads,
               const AdamConfig& config) {
    if (grads.d_weights.size() != params.n_layers())
        throw ShapeError("adam_step: gradient layer count disagrees");
    state.t += 1;
    const double b1 = config.beta1, b2 = config.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        Matrix& w = params.weights[l];
        const Matrix& dw = grads.d_weights[l];
        if (!w.same_shape(dw)) throw ShapeError("adam_step: gradient shape disagrees");
        double* md = state.m.d_weights[l].data();
        double* vd = state.v.d_weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = dw.data()[i];
            md[i] = b1 * md[i] + (1.0 - b1) * g;
            vd[i] = b2 * vd[i] + (1.0 - b2) * g * g;
            const double mhat = md[i] / corr1;
            const double vhat = vd[i] / corr2;
            w.data()[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
        for (std::size_t i = 0; i < params.biases[l].size(); ++i) {
            const double g = grads.d_biases[l][i];
            double& m = state.m.d_biases[l][i];
            double& v = state.v.d_biases[l][i];
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            params.biases[l][i] -= config.lr * (m / corr1) / (std::sqrt(v / corr2) + config.eps);
        }
    }
}

}  // namespace coadapt
