#include "coadapt/mlp.hpp"

#include <cmath>

namespace coadapt {

std::size_t MlpParams::input_dim() const {
    if (weights.empty()) throw ShapeError("MlpParams: no layers");
    return weights.front().cols();
}

std::size_t MlpParams::output_dim() const {
    if (weights.empty()) throw ShapeError("MlpParams: no layers");
    return weights.back().rows();
}

std::size_t MlpParams::feature_dim() const {
    if (weights.empty()) throw ShapeError("MlpParams: no layers");
    return n_layers() >= 2 ? weights[n_layers() - 2].rows() : input_dim();
}

void MlpParams::validate() const {
    if (weights.empty()) throw ShapeError("MlpParams: no layers");
    if (weights.size() != biases.size())
        throw ShapeError("MlpParams: weight/bias layer counts disagree");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (biases[l].size() != weights[l].rows())
            throw ShapeError("MlpParams: bias length disagrees with layer rows");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows())
            throw ShapeError("MlpParams: consecutive layer shapes do not chain");
        if (!all_finite(weights[l])) throw DomainError("MlpParams: non-finite weight");
        for (double b : biases[l])
            if (!std::isfinite(b)) throw DomainError("MlpParams: non-finite bias");
    }
}

MlpParams make_mlp(const std::vector<std::size_t>& layer_sizes, HeadMode head_mode,
                   Rng& rng) {
    if (layer_sizes.size() < 2)
        throw ShapeError("make_mlp: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ShapeError("make_mlp: zero layer size");
    MlpParams params;
    params.head_mode = head_mode;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        Matrix w(fan_out, fan_in);
        for (std::size_t i = 0; i < w.size(); ++i)
            w.data()[i] = rng.uniform(-limit, limit);
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(fan_out, 0.0);
    }
    return params;
}

MlpTape mlp_forward_tape(const MlpParams& params, const std::vector<double>& input) {
    params.validate();
    if (input.size() != params.input_dim())
        throw ShapeError("mlp_forward: input length disagrees with first layer");
    const std::size_t layers = params.n_layers();
    MlpTape tape;
    tape.input = input;
    tape.pre.resize(layers);
    tape.post.resize(layers);
    const std::vector<double>* current = &tape.input;
    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& w = params.weights[l];
        std::vector<double>& z = tape.pre[l];
        z = params.biases[l];
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double* row = w.data() + i * w.cols();
            double acc = z[i];
            for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * (*current)[j];
            z[i] = acc;
        }
        if (l + 1 < layers) {
            tape.post[l].resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i)
                tape.post[l][i] = z[i] > 0.0 ? z[i] : 0.0;
        } else {
            tape.post[l] = z;
        }
        current = &tape.post[l];
    }
    return tape;
}

MlpForward mlp_forward(const MlpParams& params, const std::vector<double>& input) {
    MlpTape tape = mlp_forward_tape(params, input);
    return MlpForward{tape.q_values(), tape.features(params)};
}

Gradients zero_gradients(const MlpParams& params) {
    Gradients grads;
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        grads.d_weights.emplace_back(params.weights[l].rows(), params.weights[l].cols());
        grads.d_biases.emplace_back(params.biases[l].size(), 0.0);
    }
    return grads;
}

void scale_gradients(Gradients& grads, double factor) {
    for (auto& w : grads.d_weights)
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] *= factor;
    for (auto& b : grads.d_biases)
        for (double& v : b) v *= factor;
}

void add_gradients(Gradients& into, const Gradients& other, double factor) {
    if (into.d_weights.size() != other.d_weights.size())
        throw ShapeError("add_gradients: layer counts disagree");
    for (std::size_t l = 0; l < into.d_weights.size(); ++l) {
        Matrix& w = into.d_weights[l];
        const Matrix& g = other.d_weights[l];
        if (!w.same_shape(g)) throw ShapeError("add_gradients: shapes disagree");
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] += factor * g.data()[i];
        for (std::size_t i = 0; i < into.d_biases[l].size(); ++i)
            into.d_biases[l][i] += factor * other.d_biases[l][i];
    }
}

double grad_dot(const Gradients& a, const Gradients& b) {
    if (a.d_weights.size() != b.d_weights.size())
        throw ShapeError("grad_dot: layer counts disagree");
    double acc = 0.0;
    for (std::size_t l = 0; l < a.d_weights.size(); ++l) {
        for (std::size_t i = 0; i < a.d_weights[l].size(); ++i)
            acc += a.d_weights[l].data()[i] * b.d_weights[l].data()[i];
        for (std::size_t i = 0; i < a.d_biases[l].size(); ++i)
            acc += a.d_biases[l][i] * b.d_biases[l][i];
    }
    return acc;
}

void mlp_backward_accumulate(const MlpParams& params, const MlpTape& tape,
                             const std::vector<double>& q_upstream,
                             const std::vector<double>& feature_upstream,
                             Gradients& grads) {
    const std::size_t layers = params.n_layers();
    if (!q_upstream.empty() && q_upstream.size() != params.output_dim())
        throw ShapeError("mlp_backward: upstream length disagrees with output");
    if (!feature_upstream.empty() && feature_upstream.size() != params.feature_dim())
        throw ShapeError("mlp_backward: feature upstream length disagrees");

    std::vector<double> delta(params.output_dim(), 0.0);
    if (!q_upstream.empty()) delta = q_upstream;

    for (std::size_t l = layers; l-- > 0;) {
        const std::vector<double>& below =
            l == 0 ? tape.input : tape.post[l - 1];
        const Matrix& w = params.weights[l];
        Matrix& dw = grads.d_weights[l];
        std::vector<double>& db = grads.d_biases[l];
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double di = delta[i];
            db[i] += di;
            if (di == 0.0) continue;
            double* dwrow = dw.data() + i * w.cols();
            for (std::size_t j = 0; j < w.cols(); ++j) dwrow[j] += di * below[j];
        }
        if (l == 0) break;
        std::vector<double> back(w.cols(), 0.0);
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double di = delta[i];
            if (di == 0.0) continue;
            const double* row = w.data() + i * w.cols();
            for (std::size_t j = 0; j < w.cols(); ++j) back[j] += di * row[j];
        }
        // The feature seed enters at the post-activation penultimate layer.
        if (l == layers - 1 && !feature_upstream.empty())
            for (std::size_t j = 0; j < back.size(); ++j) back[j] += feature_upstream[j];
        const std::vector<double>& z = tape.pre[l - 1];
        for (std::size_t j = 0; j < back.size(); ++j)
            back[j] = z[j] > 0.0 ? back[j] : 0.0;
        delta = std::move(back);
    }
}

Gradients mlp_backward(const MlpParams& params, const std::vector<double>& input,
                       const std::vector<double>& upstream) {
    MlpTape tape = mlp_forward_tape(params, input);
    Gradients grads = zero_gradients(params);
    mlp_backward_accumulate(params, tape, upstream, {}, grads);
    return grads;
}

namespace {

double scalar_objective(const MlpParams& params, const std::vector<double>& input,
                        const std::vector<double>& upstream) {
    MlpForward out = mlp_forward(params, input);
    return dot(upstream, out.q_values);
}

}  // namespace

Gradients finite_diff_grad(const MlpParams& params, const std::vector<double>& input,
                           const std::vector<double>& upstream, double step) {
    if (step <= 0.0) throw DomainError("finite_diff_grad: step must be positive");
    MlpParams probe = params;
    Gradients grads = zero_gradients(params);
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        for (std::size_t i = 0; i < params.weights[l].size(); ++i) {
            const double saved = probe.weights[l].data()[i];
            probe.weights[l].data()[i] = saved + step;
            const double up = scalar_objective(probe, input, upstream);
            probe.weights[l].data()[i] = saved - step;
            const double down = scalar_objective(probe, input, upstream);
            probe.weights[l].data()[i] = saved;
            grads.d_weights[l].data()[i] = (up - down) / (2.0 * step);
        }
        for (std::size_t i = 0; i < params.biases[l].size(); ++i) {
            const double saved = probe.biases[l][i];
            probe.biases[l][i] = saved + step;
            const double up = scalar_objective(probe, input, upstream);
            probe.biases[l][i] = saved - step;
            const double down = scalar_objective(probe, input, upstream);
            probe.biases[l][i] = saved;
            grads.d_biases[l][i] = (up - down) / (2.0 * step);
        }
    }
    return grads;
}

std::vector<double> scalar_head_input(const std::vector<double>& observation,
                                      std::size_t action, std::size_t n_actions) {
    if (action >= n_actions) throw DomainError("scalar_head_input: action out of range");
    std::vector<double> input = observation;
    input.resize(observation.size() + n_actions, 0.0);
    input[observation.size() + action] = 1.0;
    return input;
}

std::vector<double> q_all_actions(const MlpParams& params,
                                  const std::vector<double>& observation,
                                  std::size_t n_actions) {
    if (params.head_mode == HeadMode::StateInputMultiHead) {
        MlpForward out = mlp_forward(params, observation);
        if (out.q_values.size() != n_actions)
            throw ShapeError("q_all_actions: output width disagrees with action count");
        return out.q_values;
    }
    std::vector<double> q(n_actions, 0.0);
    for (std::size_t a = 0; a < n_actions; ++a) {
        MlpForward out = mlp_forward(params, scalar_head_input(observation, a, n_actions));
        if (out.q_values.size() != 1)
            throw ShapeError("q_all_actions: scalar head must have one output");
        q[a] = out.q_values[0];
    }
    return q;
}

}  // namespace coadapt
