#include "coadapt/qnetwork.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "coadapt/common.hpp"

namespace coadapt {

std::string selector_name(SelectorKind selector) {
    switch (selector) {
        case SelectorKind::SarsaDatasetAction: return "sarsa";
        case SelectorKind::ExpectedBehavior: return "expected";
        case SelectorKind::MaxAction: return "max";
        case SelectorKind::MonteCarloRegression: return "mc";
    }
    throw DomainError("selector_name: unknown selector");
}

SelectorKind selector_from_name(const std::string& name) {
    if (name == "sarsa") return SelectorKind::SarsaDatasetAction;
    if (name == "expected") return SelectorKind::ExpectedBehavior;
    if (name == "max") return SelectorKind::MaxAction;
    if (name == "mc") return SelectorKind::MonteCarloRegression;
    throw ParseError("unknown selector '" + name +
                     "' (expected sarsa, expected, max, or mc)");
}

std::string loss_head_name(LossHead head) {
    switch (head) {
        case LossHead::PlainTD: return "plain";
        case LossHead::Cql: return "cql";
        case LossHead::Rem: return "rem";
    }
    throw DomainError("loss_head_name: unknown loss head");
}

LossHead loss_head_from_name(const std::string& name) {
    if (name == "plain") return LossHead::PlainTD;
    if (name == "cql") return LossHead::Cql;
    if (name == "rem") return LossHead::Rem;
    throw ParseError("unknown loss head '" + name + "' (expected plain, cql, or rem)");
}

std::string dr3_variant_name(Dr3Variant variant) {
    switch (variant) {
        case Dr3Variant::Off: return "off";
        case Dr3Variant::LastLayerDot: return "dot";
        case Dr3Variant::LastLayerDotStopGrad: return "dot-stopgrad";
        case Dr3Variant::LabelNoiseGeneralized: return "label-noise";
    }
    throw DomainError("dr3_variant_name: unknown variant");
}

Dr3Variant dr3_variant_from_name(const std::string& name) {
    if (name == "off") return Dr3Variant::Off;
    if (name == "dot") return Dr3Variant::LastLayerDot;
    if (name == "dot-stopgrad") return Dr3Variant::LastLayerDotStopGrad;
    if (name == "label-noise") return Dr3Variant::LabelNoiseGeneralized;
    throw ParseError("unknown dr3 variant '" + name +
                     "' (expected off, dot, dot-stopgrad, or label-noise)");
}

std::string optimizer_name(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::Sgd: return "sgd";
    }
    throw DomainError("optimizer_name: unknown optimizer");
}

OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::Sgd;
    throw ParseError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string noise_kind_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::None: return "none";
        case NoiseKind::Isotropic: return "isotropic";
        case NoiseKind::LabelNoiseTargets: return "label-noise-targets";
    }
    throw DomainError("noise_kind_name: unknown noise kind");
}

NoiseKind noise_kind_from_name(const std::string& name) {
    if (name == "none") return NoiseKind::None;
    if (name == "isotropic") return NoiseKind::Isotropic;
    if (name == "label-noise-targets") return NoiseKind::LabelNoiseTargets;
    throw ParseError("unknown noise kind '" + name +
                     "' (expected none, isotropic, or label-noise-targets)");
}

std::string head_mode_name(HeadMode mode) {
    return mode == HeadMode::StateInputMultiHead ? "multihead" : "scalar";
}

HeadMode head_mode_from_name(const std::string& name) {
    if (name == "multihead") return HeadMode::StateInputMultiHead;
    if (name == "scalar") return HeadMode::StateActionInputScalar;
    throw ParseError("unknown head mode '" + name + "' (expected multihead or scalar)");
}

void Dr3Config::validate() const {
    if (!std::isfinite(c0) || c0 < 0.0)
        throw ConfigError("dr3: coefficient must be a finite value >= 0");
    if ((variant == Dr3Variant::Off) != (c0 == 0.0))
        throw ConfigError("dr3: coefficient must be zero exactly when the variant is off");
    if (lyapunov_iters == 0) throw ConfigError("dr3: lyapunov_iters must be >= 1");
    if (variant == Dr3Variant::LabelNoiseGeneralized && !(lyapunov_eta > 0.0))
        throw ConfigError("dr3: lyapunov step must be positive");
}

void TrainConfig::validate() const {
    dr3.validate();
    if (!std::isfinite(cql_alpha) || cql_alpha < 0.0)
        throw ConfigError("train: cql alpha must be a finite value >= 0");
    if (rem_heads == 0) throw ConfigError("train: rem heads must be >= 1");
    if (target_period == 0) throw ConfigError("train: target period must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
    if (eval_every == 0) throw ConfigError("train: eval_every must be >= 1");
    if (!std::isfinite(lr) || lr < 0.0)
        throw ConfigError("train: learning rate must be a finite value >= 0");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("train: gamma must lie in (0, 1)");
    if (!(q_cap > 0.0)) throw ConfigError("train: q_cap must be positive");
    for (std::size_t h : hidden)
        if (h == 0) throw ConfigError("train: hidden layer sizes must be >= 1");
    if (loss_head == LossHead::Rem) {
        if (selector != SelectorKind::MaxAction)
            throw ConfigError(
                "train: the rem head bootstraps through its own max; use the max "
                "selector");
        if (dr3.variant == Dr3Variant::LabelNoiseGeneralized)
            throw ConfigError("train: label-noise dr3 is undefined for the rem head");
    }
    if (noise == NoiseKind::None) {
        if (noise_scale != 0.0)
            throw ConfigError("train: noise scale must be zero without a noise kind");
    } else {
        if (loss_head != LossHead::PlainTD)
            throw ConfigError("train: noisy runs require the plain loss head");
        if (!(noise_scale > 0.0))
            throw ConfigError("train: noise scale must be positive");
    }
}

std::vector<std::size_t> TrainConfig::layer_sizes(std::size_t obs_dim,
                                                  std::size_t n_actions) const {
    if (obs_dim == 0 || n_actions == 0)
        throw DomainError("layer_sizes: need positive observation/action dimensions");
    std::vector<std::size_t> sizes;
    sizes.push_back(head_mode == HeadMode::StateInputMultiHead ? obs_dim
                                                               : obs_dim + n_actions);
    for (std::size_t h : hidden) sizes.push_back(h);
    const std::size_t heads = loss_head == LossHead::Rem ? rem_heads : 1;
    sizes.push_back(head_mode == HeadMode::StateInputMultiHead ? heads * n_actions
                                                               : heads);
    return sizes;
}

QNetwork make_qnetwork(const TrainConfig& config, std::size_t obs_dim,
                       std::size_t n_actions, Rng& rng) {
    config.validate();
    QNetwork net;
    net.params = make_mlp(config.layer_sizes(obs_dim, n_actions), config.head_mode, rng);
    net.target_params = net.params;
    net.adam = make_adam_state(net.params);
    return net;
}

Matrix rem_q_all_actions(const MlpParams& params, const std::vector<double>& obs,
                         std::size_t n_actions, std::size_t rem_heads) {
    if (rem_heads == 0) throw DomainError("rem_q_all_actions: need at least one head");
    Matrix q(rem_heads, n_actions);
    if (params.head_mode == HeadMode::StateInputMultiHead) {
        if (params.output_dim() != rem_heads * n_actions)
            throw ShapeError("rem_q_all_actions: output width is not heads * actions");
        const MlpForward fwd = mlp_forward(params, obs);
        for (std::size_t k = 0; k < rem_heads; ++k)
            for (std::size_t a = 0; a < n_actions; ++a)
                q(k, a) = fwd.q_values[k * n_actions + a];
        return q;
    }
    if (params.output_dim() != rem_heads)
        throw ShapeError("rem_q_all_actions: output width is not the head count");
    for (std::size_t a = 0; a < n_actions; ++a) {
        const MlpForward fwd =
            mlp_forward(params, scalar_head_input(obs, a, n_actions));
        for (std::size_t k = 0; k < rem_heads; ++k) q(k, a) = fwd.q_values[k];
    }
    return q;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& token, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("params file: bad float '" + token + "' on line " +
                         std::to_string(line_no));
    return v;
}

std::size_t parse_count(const std::string& token, std::size_t line_no) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("params file: bad count '" + token + "' on line " +
                         std::to_string(line_no));
    return static_cast<std::size_t>(v);
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

void write_params(const MlpParams& params, const std::string& path,
                  const std::vector<std::string>& provenance) {
    params.validate();
    std::ofstream out(path);
    if (!out) throw IoError("write_params: cannot open '" + path + "'");
    out << "# coadapt-params v=1 head_mode=" << head_mode_name(params.head_mode)
        << " layers=" << params.n_layers() << '\n';
    for (const std::string& line : provenance) out << "# " << line << '\n';
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        const Matrix& w = params.weights[l];
        out << "W " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
        for (std::size_t i = 0; i < w.rows(); ++i) {
            for (std::size_t j = 0; j < w.cols(); ++j) {
                if (j) out << ' ';
                out << format_double(w(i, j));
            }
            out << '\n';
        }
        const std::vector<double>& b = params.biases[l];
        out << "B " << l << ' ' << b.size() << '\n';
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (i) out << ' ';
            out << format_double(b[i]);
        }
        out << '\n';
    }
    if (!out) throw IoError("write_params: write to '" + path + "' failed");
}

MlpParams read_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_params: cannot open '" + path + "'");
    MlpParams params;
    std::size_t declared_layers = 0;
    bool saw_header = false;
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (line[0] == '#') {
                std::istringstream hdr(line.substr(1));
                std::string tag;
                hdr >> tag;
                if (tag != "coadapt-params") continue;
                std::string field;
                while (hdr >> field) {
                    const std::size_t eq = field.find('=');
                    if (eq == std::string::npos) continue;
                    const std::string key = field.substr(0, eq);
                    const std::string val = field.substr(eq + 1);
                    if (key == "head_mode") params.head_mode = head_mode_from_name(val);
                    if (key == "layers") declared_layers = parse_count(val, line_no);
                }
                saw_header = true;
                continue;
            }
            return true;
        }
        return false;
    };

    while (next_line()) {
        std::vector<std::string> tok = split_ws(line);
        if (tok.size() != 4 || tok[0] != "W")
            throw ParseError("params file: expected 'W layer rows cols' on line " +
                             std::to_string(line_no));
        const std::size_t layer = parse_count(tok[1], line_no);
        if (layer != params.weights.size())
            throw ParseError("params file: layers out of order on line " +
                             std::to_string(line_no));
        const std::size_t rows = parse_count(tok[2], line_no);
        const std::size_t cols = parse_count(tok[3], line_no);
        Matrix w(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            if (!next_line())
                throw ParseError("params file: truncated weight block on line " +
                                 std::to_string(line_no));
            std::vector<std::string> vals = split_ws(line);
            if (vals.size() != cols)
                throw ParseError("params file: expected " + std::to_string(cols) +
                                 " values on line " + std::to_string(line_no));
            for (std::size_t j = 0; j < cols; ++j)
                w(i, j) = parse_double(vals[j], line_no);
        }
        if (!next_line())
            throw ParseError("params file: missing bias block after line " +
                             std::to_string(line_no));
        tok = split_ws(line);
        if (tok.size() != 3 || tok[0] != "B" || parse_count(tok[1], line_no) != layer)
            throw ParseError("params file: expected 'B layer size' on line " +
                             std::to_string(line_no));
        const std::size_t size = parse_count(tok[2], line_no);
        if (size != rows)
            throw ParseError("params file: bias size disagrees with weights on line " +
                             std::to_string(line_no));
        if (!next_line())
            throw ParseError("params file: truncated bias block on line " +
                             std::to_string(line_no));
        std::vector<std::string> vals = split_ws(line);
        if (vals.size() != size)
            throw ParseError("params file: expected " + std::to_string(size) +
                             " values on line " + std::to_string(line_no));
        std::vector<double> b(size);
        for (std::size_t i = 0; i < size; ++i) b[i] = parse_double(vals[i], line_no);
        params.weights.push_back(std::move(w));
        params.biases.push_back(std::move(b));
    }
    if (!saw_header) throw ParseError("params file: '" + path + "' has no header line");
    if (declared_layers != params.n_layers())
        throw ParseError("params file: declared " + std::to_string(declared_layers) +
                         " layers but found " + std::to_string(params.n_layers()));
    params.validate();
    return params;
}

}  // namespace coadapt
