#include "coadapt/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "coadapt/analysis.hpp"
#include "coadapt/common.hpp"
#include "coadapt/dataset.hpp"
#include "coadapt/gridworld.hpp"
#include "coadapt/metric_trace.hpp"
#include "coadapt/observe.hpp"
#include "coadapt/stats.hpp"
#include "coadapt/train.hpp"

namespace coadapt {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
    if (key.empty()) return false;
    for (char c : key) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

double parse_double_value(const std::string& key, const std::string& value) {
    const char* s = value.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw ConfigError("config key '" + key + "': cannot parse '" + value +
                          "' as a number");
    return v;
}

std::uint64_t parse_uint_value(const std::string& key, const std::string& value) {
    if (value.empty() || value[0] == '-' || value[0] == '+')
        throw ConfigError("config key '" + key + "': cannot parse '" + value +
                          "' as a non-negative integer");
    const char* s = value.c_str();
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0' || errno == ERANGE)
        throw ConfigError("config key '" + key + "': cannot parse '" + value +
                          "' as a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

bool parse_bool_value(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("config key '" + key + "': expected 'true' or 'false', got '" +
                      value + "'");
}

std::vector<std::string> split_list(const std::string& key, const std::string& value) {
    std::vector<std::string> items;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = value.find(',', pos);
        const std::string item =
            trim(comma == std::string::npos ? value.substr(pos)
                                            : value.substr(pos, comma - pos));
        if (item.empty())
            throw ConfigError("config key '" + key + "': empty list item in '" + value +
                              "'");
        items.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return items;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfigDoc

ConfigDoc ConfigDoc::parse_text(const std::string& text) {
    ConfigDoc doc;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) +
                             ": expected 'key = value', got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (!valid_key(key))
            throw ParseError("config line " + std::to_string(line_no) +
                             ": invalid key '" + key + "'");
        if (value.empty())
            throw ParseError("config line " + std::to_string(line_no) +
                             ": empty value for key '" + key + "'");
        if (doc.values_.count(key))
            throw ParseError("config line " + std::to_string(line_no) +
                             ": duplicate key '" + key + "'");
        doc.order_.push_back(key);
        doc.values_[key] = value;
    }
    return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_text(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

bool ConfigDoc::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigDoc::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
        throw ConfigError("missing required config key '" + key + "'");
    used_.insert(key);
    return it->second;
}

std::string ConfigDoc::get_string(const std::string& key,
                                  const std::string& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return it->second;
}

double ConfigDoc::get_double(const std::string& key) const {
    return parse_double_value(key, get_string(key));
}
double ConfigDoc::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return parse_double_value(key, get_string(key));
}
std::uint64_t ConfigDoc::get_uint(const std::string& key) const {
    return parse_uint_value(key, get_string(key));
}
std::uint64_t ConfigDoc::get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return parse_uint_value(key, get_string(key));
}
bool ConfigDoc::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    return parse_bool_value(key, get_string(key));
}

std::vector<std::string> ConfigDoc::get_list(const std::string& key) const {
    return split_list(key, get_string(key));
}

std::vector<double> ConfigDoc::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : get_list(key))
        out.push_back(parse_double_value(key, item));
    return out;
}

std::vector<std::uint64_t> ConfigDoc::get_uint_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const std::string& item : get_list(key))
        out.push_back(parse_uint_value(key, item));
    return out;
}

void ConfigDoc::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ConfigError("config: invalid key '" + key + "'");
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
}

std::vector<std::string> ConfigDoc::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const std::string& key : order_)
        if (key.rfind(prefix, 0) == 0) out.push_back(key);
    return out;
}

std::vector<std::string> ConfigDoc::provenance() const {
    std::vector<std::string> lines;
    for (const std::string& key : order_)
        lines.push_back(key + " = " + values_.at(key));
    return lines;
}

void ConfigDoc::require_all_used() const {
    std::vector<std::string> unknown;
    for (const std::string& key : order_)
        if (!used_.count(key)) unknown.push_back(key);
    if (!unknown.empty())
        throw ConfigError("unknown config keys: " + join(unknown, ", "));
}

// ---------------------------------------------------------------------------
// Presets

const std::vector<Preset>& all_presets() {
    static const std::vector<Preset> presets = {
        {"grid16-sparse-256", "gen",
         "256-transition offline dataset on the 16x16 sparse-reward grid; the "
         "behavior policy takes the optimal action with probability 0.7, else "
         "uniform",
         "env.preset = grid16-sparse\n"
         "obs.kind = random\n"
         "obs.dim = 64\n"
         "obs.seed = 1234\n"
         "data.transitions = 256\n"
         "data.p_opt = 0.7\n"
         "data.max_episode_len = 40\n"
         "run.seeds = 7\n"
         "gen.filename = grid16-sparse-256.ds\n"},
        {"grid16-random-256", "gen",
         "256-transition offline dataset on the 16x16 sparse-reward grid under "
         "uniform-random behavior",
         "env.preset = grid16-sparse\n"
         "obs.kind = random\n"
         "obs.dim = 64\n"
         "obs.seed = 1234\n"
         "data.transitions = 256\n"
         "data.p_opt = 0\n"
         "data.max_episode_len = 40\n"
         "run.seeds = 7\n"
         "gen.filename = grid16-random-256.ds\n"},
        {"sarsa-vs-td", "train",
         "regression vs in-sample SARSA vs expected/max TD backups on the "
         "sparse 256-transition dataset: 4 selectors x 3 seeds = 12 traces; "
         "width 128, plain SGD at 0.02 and 100k steps are calibration choices "
         "(out-of-sample backups keep feature dots high where SARSA's decay; "
         "the max arm diverges by design)",
         "data.path = grid16-sparse-256.ds\n"
         "data.expect_obs_dim = 64\n"
         "train.loss_head = plain\n"
         "train.lr = 0.02\n"
         "train.optimizer = sgd\n"
         "train.batch_size = 16\n"
         "train.target_period = 100\n"
         "train.total_steps = 100000\n"
         "train.eval_every = 2000\n"
         "train.hidden = 128,128\n"
         "train.head_mode = multihead\n"
         "sweep.selector = mc,sarsa,expected,max\n"
         "run.seeds = 0,1,2\n"},
        {"target-sweep", "train",
         "delayed-target sync period sweep {5,10,50,100,200,500} for the "
         "expected TD backup on the sparse 256-transition dataset "
         "(same width-128 SGD calibration as sarsa-vs-td)",
         "data.path = grid16-sparse-256.ds\n"
         "data.expect_obs_dim = 64\n"
         "train.selector = expected\n"
         "train.loss_head = plain\n"
         "train.lr = 0.02\n"
         "train.optimizer = sgd\n"
         "train.batch_size = 16\n"
         "train.total_steps = 100000\n"
         "train.eval_every = 2000\n"
         "train.hidden = 128,128\n"
         "train.head_mode = multihead\n"
         "sweep.target_period = 5,10,50,100,200,500\n"
         "run.seeds = 0,1,2\n"},
        {"dr3-compare", "train",
         "max-backup TD with and without the feature dot-product penalty "
         "(c0 in {0, 0.01}) on the sparse 256-transition dataset, paired "
         "seeds; the conservative head (alpha 10) keeps the max backup from "
         "diverging on these near-parallel features, so the penalty's effect "
         "on dots and srank is measured in a healthy run",
         "data.path = grid16-sparse-256.ds\n"
         "data.expect_obs_dim = 64\n"
         "train.selector = max\n"
         "train.loss_head = cql\n"
         "train.cql_alpha = 10\n"
         "train.dr3.variant = dot\n"
         "train.lr = 3e-5\n"
         "train.optimizer = adam\n"
         "train.batch_size = 16\n"
         "train.target_period = 100\n"
         "train.total_steps = 100000\n"
         "train.eval_every = 2000\n"
         "train.hidden = 128,128\n"
         "train.head_mode = multihead\n"
         "sweep.dr3.c0 = 0,0.01\n"
         "run.seeds = 0,1,2,3,4\n"},
    };
    return presets;
}

const Preset& find_preset(const std::string& name) {
    for (const Preset& p : all_presets())
        if (p.name == name) return p;
    throw ConfigError("unknown preset '" + name + "'; run list-presets");
}

// ---------------------------------------------------------------------------
// Logging

LogLevel log_level() {
    const char* env = std::getenv("COADAPT_LOG");
    if (env == nullptr) return LogLevel::Info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    throw ConfigError("COADAPT_LOG must be quiet, info, or debug; got '" + v + "'");
}

namespace {
std::mutex g_log_mutex;
void log_at(LogLevel min_level, const std::string& msg) {
    if (static_cast<int>(log_level()) < static_cast<int>(min_level)) return;
    const std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cerr << "[coadapt] " << msg << "\n";
}
}  // namespace

void log_info(const std::string& msg) { log_at(LogLevel::Info, msg); }
void log_debug(const std::string& msg) { log_at(LogLevel::Debug, msg); }

// ---------------------------------------------------------------------------
// Matrix CSV

void write_matrix_csv(const Matrix& m, const std::string& path,
                      const std::vector<std::string>& provenance) {
    std::ofstream out(path);
    if (!out) throw IoError("write_matrix_csv: cannot open '" + path + "' for writing");
    for (const std::string& line : provenance) out << "# " << line << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write_matrix_csv: write to '" + path + "' failed");
}

Matrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_matrix_csv: cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = stripped.find(',', pos);
            const std::string item =
                trim(comma == std::string::npos ? stripped.substr(pos)
                                                : stripped.substr(pos, comma - pos));
            const char* s = item.c_str();
            char* end = nullptr;
            const double v = std::strtod(s, &end);
            if (item.empty() || end == s || *end != '\0')
                throw ParseError("read_matrix_csv: '" + path + "' line " +
                                 std::to_string(line_no) + ": bad number '" + item +
                                 "'");
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("read_matrix_csv: '" + path + "' line " +
                             std::to_string(line_no) + ": expected " +
                             std::to_string(rows.front().size()) + " columns, got " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw ParseError("read_matrix_csv: '" + path + "' has no data rows");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

// ---------------------------------------------------------------------------
// Shared command helpers

namespace {

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string resolve_path(const std::string& path, const std::string& out_dir) {
    if (path.empty()) throw ConfigError("empty path in config");
    if (path[0] == '/') return path;
    // Normalize lexically so "out/../data.ds" opens even before out/ exists.
    return std::filesystem::path(out_dir + "/" + path).lexically_normal().string();
}

// Timestamps honor SOURCE_DATE_EPOCH so reruns can be made byte-identical.
std::uint64_t epoch_now() {
    const char* env = std::getenv("SOURCE_DATE_EPOCH");
    if (env != nullptr) return parse_uint_value("SOURCE_DATE_EPOCH", env);
    return static_cast<std::uint64_t>(std::time(nullptr));
}

GridSpec grid_from_config(const ConfigDoc& doc) {
    const std::string name = doc.get_string("env.preset");
    GridSpec grid;
    if (name == "grid16-sparse") {
        grid = build_grid(GridPreset::Grid16Sparse);
    } else if (name == "grid16-obstacles") {
        grid = build_grid(GridPreset::Grid16Obstacles);
    } else {
        throw ConfigError("env.preset must be grid16-sparse or grid16-obstacles; got '" +
                          name + "'");
    }
    if (doc.has("env.gamma")) {
        const double gamma = doc.get_double("env.gamma");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw ConfigError("env.gamma must lie in (0, 1)");
        grid.gamma = gamma;
    }
    return grid;
}

std::vector<std::uint64_t> resolve_seeds(const ConfigDoc& doc, const CliOptions& opts,
                                         std::uint64_t fallback_seed, bool required) {
    if (!opts.seeds.empty()) return opts.seeds;
    if (doc.has("run.seeds")) return doc.get_uint_list("run.seeds");
    if (required)
        throw ConfigError("no seeds given: set run.seeds in the config or pass --seed");
    return {fallback_seed};
}

}  // namespace

// ---------------------------------------------------------------------------
// gen-data

void cmd_gen_data(const ConfigDoc& doc, const CliOptions& opts) {
    const GridSpec grid = grid_from_config(doc);
    const ObsKind kind = obs_kind_from_name(doc.get_string("obs.kind", "random"));
    const std::size_t dim = doc.get_uint("obs.dim", 64);
    const std::uint64_t obs_seed = doc.get_uint("obs.seed", 0);
    const std::size_t radius = doc.get_uint("obs.radius", 1);
    const ObservationMap obs_map = make_observation_map(kind, grid, dim, obs_seed, radius);

    const std::size_t n = doc.get_uint("data.transitions");
    if (n == 0) throw ConfigError("data.transitions must be >= 1");
    const double p_opt = doc.get_double("data.p_opt", 0.0);
    if (!(p_opt >= 0.0 && p_opt <= 1.0))
        throw ConfigError("data.p_opt must lie in [0, 1]");
    const std::size_t max_len = doc.get_uint("data.max_episode_len", 40);
    if (max_len == 0) throw ConfigError("data.max_episode_len must be >= 1");

    const std::vector<std::uint64_t> seeds = resolve_seeds(doc, opts, 0, false);
    const std::string filename = doc.get_string(
        "gen.filename", doc.get_string("env.preset") + "-" + std::to_string(n) + ".ds");
    doc.require_all_used();

    ensure_out_dir(opts.out_dir);
    const Matrix q_star = value_iteration(grid);
    const StochasticPolicy policy = make_behavior_policy(grid, q_star, p_opt);

    for (const std::uint64_t seed : seeds) {
        const OfflineDataset collected =
            collect_dataset(grid, obs_map, policy, n, max_len, seed, p_opt);
        DatasetMeta meta = collected.meta();
        meta.policy_desc = "eps-optimal(max_len=" + std::to_string(max_len) + ")";
        meta.generated_at = epoch_now();
        const OfflineDataset dataset =
            OfflineDataset::create(collected.grid(), collected.obs_map(),
                                   collected.transitions(), collected.boundaries(), meta);

        std::string name = filename;
        if (seeds.size() > 1) {
            const std::size_t dot = name.rfind('.');
            const std::string tag = "_seed" + std::to_string(seed);
            name = dot == std::string::npos ? name + tag
                                            : name.substr(0, dot) + tag + name.substr(dot);
        }
        const std::string path = opts.out_dir + "/" + name;
        write_dataset(dataset, path);

        std::cout << "dataset: " << path << "\n"
                  << "  env: " << grid.id << " " << grid.width << "x" << grid.height
                  << " gamma=" << format_double(grid.gamma) << "\n"
                  << "  obs: " << obs_kind_name(obs_map.kind) << " dim=" << obs_map.dim
                  << "\n"
                  << "  transitions: " << dataset.size()
                  << " trajectories: " << dataset.n_trajectories() << "\n"
                  << "  behavior: p_opt=" << format_double(p_opt) << " seed=" << seed
                  << "\n";
        log_info("gen-data wrote " + path);
    }
}

// ---------------------------------------------------------------------------
// train

namespace {

// One (sweep variant, seed) training job.
struct RunSpec {
    std::string label;
    TrainConfig cfg;
    std::string trace_path;
    std::string params_path;
    std::vector<std::string> provenance;
};

// Reads `train.*` keys, taking swept values from `ov` (keyed by the suffix
// after "train.") ahead of the document.
class TrainKeyReader {
  public:
    TrainKeyReader(const ConfigDoc& doc, const std::map<std::string, std::string>& ov)
        : doc_(doc), ov_(ov) {}

    bool has(const std::string& suffix) const {
        return ov_.count(suffix) > 0 || doc_.has("train." + suffix);
    }
    std::string str(const std::string& suffix, const std::string& fallback) const {
        const auto it = ov_.find(suffix);
        if (it != ov_.end()) {
            doc_.get_string("train." + suffix, "");  // consume the shadowed base key
            return it->second;
        }
        return doc_.get_string("train." + suffix, fallback);
    }
    std::string str(const std::string& suffix) const {
        if (!has(suffix))
            throw ConfigError("missing required config key 'train." + suffix + "'");
        return str(suffix, "");
    }
    double num(const std::string& suffix, double fallback) const {
        if (!has(suffix)) return fallback;
        return parse_double_value("train." + suffix, str(suffix, ""));
    }
    std::uint64_t uint(const std::string& suffix, std::uint64_t fallback) const {
        if (!has(suffix)) return fallback;
        return parse_uint_value("train." + suffix, str(suffix, ""));
    }
    bool flag(const std::string& suffix, bool fallback) const {
        if (!has(suffix)) return fallback;
        return parse_bool_value("train." + suffix, str(suffix, ""));
    }

  private:
    const ConfigDoc& doc_;
    const std::map<std::string, std::string>& ov_;
};

TrainConfig parse_train_config(const ConfigDoc& doc,
                               const std::map<std::string, std::string>& ov,
                               double default_gamma) {
    const TrainKeyReader r(doc, ov);
    TrainConfig cfg;
    cfg.selector = selector_from_name(r.str("selector"));
    cfg.loss_head = loss_head_from_name(r.str("loss_head", "plain"));
    cfg.cql_alpha = r.num("cql_alpha", 0.0);
    cfg.rem_heads = r.uint("rem_heads", 1);
    cfg.rem_squared = r.flag("rem_squared", false);

    // c0 = 0 means the penalty is off; a variant name is only consulted (and
    // defaults to "dot") when the coefficient is nonzero.
    cfg.dr3.c0 = r.num("dr3.c0", 0.0);
    const std::string variant = r.str("dr3.variant", "dot");
    cfg.dr3.variant =
        cfg.dr3.c0 == 0.0 ? Dr3Variant::Off : dr3_variant_from_name(variant);
    cfg.dr3.lyapunov_iters = r.uint("dr3.lyapunov_iters", 20);
    cfg.dr3.lyapunov_eta = r.num("dr3.lyapunov_eta", 0.01);

    cfg.gamma = r.num("gamma", default_gamma);
    cfg.lr = r.num("lr", 3e-4);
    cfg.optimizer = optimizer_from_name(r.str("optimizer", "adam"));
    cfg.batch_size = r.uint("batch_size", 16);
    cfg.target_period = r.uint("target_period", 100);
    cfg.total_steps = r.uint("total_steps", 100000);
    cfg.eval_every = r.uint("eval_every", 2000);
    cfg.head_mode = head_mode_from_name(r.str("head_mode", "multihead"));
    if (doc.has("train.hidden")) {
        cfg.hidden.clear();
        for (const std::uint64_t h : doc.get_uint_list("train.hidden"))
            cfg.hidden.push_back(static_cast<std::size_t>(h));
    }
    cfg.noise = noise_kind_from_name(r.str("noise", "none"));
    cfg.noise_scale = r.num("noise_scale", 0.0);
    cfg.q_cap = r.num("q_cap", 1e6);
    return cfg;
}

}  // namespace

void cmd_train(const ConfigDoc& doc, const CliOptions& opts) {
    const std::string data_path =
        resolve_path(doc.get_string("data.path"), opts.out_dir);
    const OfflineDataset dataset = read_dataset(data_path);
    if (doc.has("data.expect_obs_dim")) {
        const std::uint64_t expect = doc.get_uint("data.expect_obs_dim");
        if (expect != dataset.obs_dim())
            throw ConfigError("dataset '" + data_path + "' has observation dim " +
                              std::to_string(dataset.obs_dim()) + ", config expects " +
                              std::to_string(expect));
    }

    // Cartesian product of sweep.* axes, in document order.
    struct Axis {
        std::string suffix;
        std::vector<std::string> values;
    };
    std::vector<Axis> axes;
    for (const std::string& key : doc.keys_with_prefix("sweep.")) {
        const std::string suffix = key.substr(6);
        if (suffix == "hidden")
            throw ConfigError("sweep.hidden is not supported; vary train.hidden "
                              "across configs instead");
        axes.push_back({suffix, doc.get_list(key)});
    }

    std::vector<std::map<std::string, std::string>> combos = {{}};
    for (const Axis& axis : axes) {
        std::vector<std::map<std::string, std::string>> next;
        for (const auto& combo : combos)
            for (const std::string& value : axis.values) {
                auto extended = combo;
                extended[axis.suffix] = value;
                next.push_back(std::move(extended));
            }
        combos = std::move(next);
    }

    const std::vector<std::uint64_t> seeds = resolve_seeds(doc, opts, 0, true);

    std::vector<RunSpec> runs;
    for (const auto& combo : combos) {
        std::string label;
        for (const Axis& axis : axes)
            label += (label.empty() ? "" : "_") + axis.suffix + "=" + combo.at(axis.suffix);
        if (label.empty()) label = "run";

        TrainConfig base = parse_train_config(doc, combo, dataset.gamma());
        for (const std::uint64_t seed : seeds) {
            RunSpec run;
            run.label = label;
            run.cfg = base;
            run.cfg.seed = seed;
            run.cfg.validate();  // fail before any training starts
            const std::string stem = label + "_seed" + std::to_string(seed);
            run.trace_path = opts.out_dir + "/trace_" + stem + ".csv";
            run.params_path = opts.out_dir + "/params_" + stem + ".txt";
            ConfigDoc prov = doc;
            for (const auto& [suffix, value] : combo) prov.set("train." + suffix, value);
            prov.set("run.variant", label);
            prov.set("run.seed", std::to_string(seed));
            run.provenance = prov.provenance();
            runs.push_back(std::move(run));
        }
    }
    doc.require_all_used();
    ensure_out_dir(opts.out_dir);

    std::vector<unsigned char> diverged(runs.size(), 0);
    std::vector<std::exception_ptr> errors(runs.size());
    std::atomic<std::size_t> next_run{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next_run.fetch_add(1);
            if (i >= runs.size()) return;
            try {
                Trainer trainer(dataset, runs[i].cfg);
                const MetricTrace trace = trainer.run(runs[i].provenance);
                write_metric_trace(trace, runs[i].trace_path);
                write_params(trainer.net().params, runs[i].params_path,
                             runs[i].provenance);
                diverged[i] = !trace.rows.empty() && trace.rows.back().diverged;
                log_info("train " + runs[i].label + " seed " +
                         std::to_string(runs[i].cfg.seed) +
                         (diverged[i] ? " DIVERGED" : " done") + " -> " +
                         runs[i].trace_path);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, opts.jobs);
    const std::size_t n_workers = std::min(jobs, runs.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    std::size_t n_diverged = 0;
    for (const unsigned char d : diverged) n_diverged += d;
    if (!runs.empty() && n_diverged == runs.size())
        throw NumericError("cmd_train: all " + std::to_string(runs.size()) +
                           " runs diverged");
    std::cout << "wrote " << runs.size() << " trace files to '" << opts.out_dir << "' ("
              << n_diverged << " diverged)\n";
}

// ---------------------------------------------------------------------------
// analyze

namespace {

double metric_value(const MetricRow& row, const std::string& name) {
    if (name == "loss") return row.loss;
    if (name == "mean_q") return row.mean_q;
    if (name == "feat_dot") return row.feat_dot;
    if (name == "cosine") return row.cosine;
    if (name == "srank") return static_cast<double>(row.srank);
    if (name == "eval_return") return row.eval_return;
    if (name == "r_td") return row.r_td;
    throw ConfigError("analyze.metric must be one of loss, mean_q, feat_dot, cosine, "
                      "srank, eval_return, r_td; got '" + name + "'");
}

std::string basename_of(const std::string& path) {
    const std::size_t slash = path.rfind('/');
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

// trace_<label>_seed<digits>.csv -> (label, seed); anything else keeps the
// basename (minus .csv) as its own single-run label.
std::pair<std::string, std::uint64_t> parse_trace_name(const std::string& path) {
    std::string name = basename_of(path);
    const std::string ext = ".csv";
    std::string fallback = name;
    if (fallback.size() > ext.size() &&
        fallback.compare(fallback.size() - ext.size(), ext.size(), ext) == 0)
        fallback = fallback.substr(0, fallback.size() - ext.size());

    const std::string prefix = "trace_";
    if (name.rfind(prefix, 0) != 0 ||
        name.size() <= prefix.size() + ext.size() ||
        name.compare(name.size() - ext.size(), ext.size(), ext) != 0)
        return {fallback, 0};
    const std::string middle =
        name.substr(prefix.size(), name.size() - prefix.size() - ext.size());
    const std::size_t seed_tag = middle.rfind("_seed");
    if (seed_tag == std::string::npos) return {fallback, 0};
    const std::string digits = middle.substr(seed_tag + 5);
    if (digits.empty()) return {fallback, 0};
    for (const char c : digits)
        if (!std::isdigit(static_cast<unsigned char>(c))) return {fallback, 0};
    const std::string label = middle.substr(0, seed_tag);
    if (label.empty()) return {fallback, 0};
    return {label, parse_uint_value("seed", digits)};
}

}  // namespace

void cmd_analyze(const std::vector<std::string>& trace_paths, const ConfigDoc& doc,
                 const CliOptions& opts) {
    if (trace_paths.empty()) throw ConfigError("analyze: need at least one trace file");
    const std::string metric = doc.get_string("analyze.metric", "eval_return");
    metric_value(MetricRow{}, metric);  // validate the name up front
    const std::uint64_t resamples = doc.get_uint("analyze.resamples", 1000);
    const double level = doc.get_double("analyze.level", 0.95);
    const std::uint64_t rng_seed =
        opts.seeds.empty() ? doc.get_uint("analyze.seed", 0) : opts.seeds[0];
    doc.require_all_used();

    struct RunScore {
        std::uint64_t seed;
        std::string path;
        double final_score;
        double avg_score;
        bool diverged;
    };
    std::map<std::string, std::vector<RunScore>> groups;
    for (const std::string& path : trace_paths) {
        const auto [label, seed] = parse_trace_name(path);
        const MetricTrace trace = read_metric_trace(path);
        RunScore score{seed, path, 0.0, 0.0, false};
        score.diverged = !trace.rows.empty() && trace.rows.back().diverged;
        double sum = 0.0;
        std::size_t used = 0;
        for (const MetricRow& row : trace.rows) {
            if (row.diverged) continue;
            const double v = metric_value(row, metric);
            if (!std::isfinite(v)) continue;
            score.final_score = v;
            sum += v;
            ++used;
        }
        if (used == 0)
            throw DomainError("analyze: trace '" + path + "' has no usable rows for '" +
                              metric + "'");
        score.avg_score = sum / static_cast<double>(used);
        groups[label].push_back(std::move(score));
    }
    for (auto& [label, scores] : groups)
        std::sort(scores.begin(), scores.end(), [](const RunScore& a, const RunScore& b) {
            return a.seed != b.seed ? a.seed < b.seed : a.path < b.path;
        });

    ConfigDoc prov = doc;
    prov.set("analyze.metric", metric);
    prov.set("analyze.resamples", std::to_string(resamples));
    prov.set("analyze.level", format_double(level));
    prov.set("analyze.seed", std::to_string(rng_seed));
    prov.set("analyze.inputs", join(trace_paths, ","));

    Rng rng(rng_seed);
    std::vector<SummaryRow> summary;
    std::vector<std::string> diverged_notes;
    for (const auto& [label, scores] : groups) {
        std::vector<double> finals, avgs;
        std::size_t n_diverged = 0;
        for (const RunScore& s : scores) {
            finals.push_back(s.final_score);
            avgs.push_back(s.avg_score);
            n_diverged += s.diverged;
        }
        diverged_notes.push_back(label + ":" + std::to_string(n_diverged) + "/" +
                                 std::to_string(scores.size()));
        const auto emit = [&](const std::string& task, const std::vector<double>& values) {
            SummaryRow row;
            row.task = task;
            double sum = 0.0;
            for (const double v : values) sum += v;
            row.mean = sum / static_cast<double>(values.size());
            row.iqm = iqm(values);
            std::tie(row.ci_lo, row.ci_hi) =
                percentile_bootstrap_ci(values, resamples, level, rng);
            summary.push_back(std::move(row));
        };
        emit(label + ".final", finals);
        emit(label + ".avg", avgs);
    }
    prov.set("analyze.diverged", join(diverged_notes, ","));

    std::vector<PairwiseRow> pairwise;
    std::vector<std::string> labels;
    for (const auto& [label, scores] : groups) labels.push_back(label);
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            RunScores x, y;
            for (const RunScore& s : groups.at(labels[i])) {
                x.by_task["final"].push_back(s.final_score);
                x.by_task["avg"].push_back(s.avg_score);
            }
            for (const RunScore& s : groups.at(labels[j])) {
                y.by_task["final"].push_back(s.final_score);
                y.by_task["avg"].push_back(s.avg_score);
            }
            pairwise.push_back({labels[i], labels[j], prob_improvement(x, y)});
        }

    ensure_out_dir(opts.out_dir);
    const std::string summary_path = opts.out_dir + "/summary.csv";
    const std::string pairwise_path = opts.out_dir + "/pairwise.csv";
    write_summary_csv(summary, summary_path, prov.provenance());
    write_pairwise_csv(pairwise, pairwise_path, prov.provenance());

    for (const SummaryRow& row : summary)
        std::cout << row.task << ": mean=" << format_double(row.mean)
                  << " iqm=" << format_double(row.iqm) << " ci=["
                  << format_double(row.ci_lo) << ", " << format_double(row.ci_hi)
                  << "]\n";
    for (const PairwiseRow& row : pairwise)
        std::cout << "P(" << row.alg_a << " > " << row.alg_b
                  << ") = " << format_double(row.p_improve) << "\n";
    log_info("analyze wrote " + summary_path + " and " + pairwise_path);
}

// ---------------------------------------------------------------------------
// stability

void cmd_stability(const ConfigDoc& doc, const CliOptions& opts) {
    FeaturePair features;
    std::vector<double> rewards;
    bool probe_rewards = false;

    if (doc.has("stability.phi") || doc.has("stability.phi_next")) {
        features.phi =
            read_matrix_csv(resolve_path(doc.get_string("stability.phi"), opts.out_dir));
        features.phi_next = read_matrix_csv(
            resolve_path(doc.get_string("stability.phi_next"), opts.out_dir));
        features.gamma = doc.get_double("stability.gamma", 0.95);
        rewards.assign(features.phi.rows(), 1.0);
        probe_rewards = true;
    } else if (doc.has("stability.dataset")) {
        const OfflineDataset dataset = read_dataset(
            resolve_path(doc.get_string("stability.dataset"), opts.out_dir));
        const MlpParams params =
            read_params(resolve_path(doc.get_string("stability.params"), opts.out_dir));
        const SelectorKind selector =
            selector_from_name(doc.get_string("stability.selector", "sarsa"));
        const double gamma = doc.get_double("stability.gamma", dataset.gamma());

        QNetwork net;
        net.params = params;
        net.target_params = params;
        StochasticPolicy behavior;
        const StochasticPolicy* behavior_ptr = nullptr;
        if (selector == SelectorKind::ExpectedBehavior) {
            behavior = make_behavior_policy(dataset.grid(),
                                            value_iteration(dataset.grid()),
                                            dataset.meta().p_opt);
            behavior_ptr = &behavior;
        }
        std::vector<std::size_t> all(dataset.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        features = selector_feature_pair(net, dataset, all, selector, gamma,
                                         behavior_ptr, 0);
        for (const Transition& tr : dataset.transitions())
            if (!tr.terminal) rewards.push_back(tr.reward);
        bool all_zero = true;
        for (const double r : rewards) all_zero &= (r == 0.0);
        if (all_zero) {
            rewards.assign(rewards.size(), 1.0);
            probe_rewards = true;
        }
    } else {
        throw ConfigError("stability: set stability.phi + stability.phi_next, or "
                          "stability.dataset + stability.params");
    }

    const double rel_tol = doc.get_double("stability.rel_tol", 1e-9);
    const StabilityReport report = stability_spectrum(features, rel_tol);

    std::cout << "eigenvalues:\n";
    for (const std::complex<double>& ev : report.eigenvalues) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "  %.10g %c %.10gi", ev.real(),
                      ev.imag() < 0 ? '-' : '+', std::fabs(ev.imag()));
        std::cout << buf << "\n";
    }
    std::cout << "verdict: " << verdict_name(report.verdict) << "\n"
              << "trace condition: "
              << (report.trace_condition_holds ? "holds" : "fails") << "\n"
              << "min real part: " << format_double(report.min_real_part) << "\n"
              << "tol: " << format_double(report.tol) << "\n";

    ConfigDoc prov = doc;
    prov.set("stability.verdict", verdict_name(report.verdict));
    prov.set("stability.trace_condition",
             report.trace_condition_holds ? "true" : "false");
    prov.set("stability.min_real_part", format_double(report.min_real_part));
    prov.set("stability.tol", format_double(report.tol));

    if (doc.get_bool("stability.simulate", false)) {
        const double eta = doc.get_double("stability.eta", 1e-3);
        const std::uint64_t steps = doc.get_uint("stability.steps", 200000);
        const LinearTdResult sim = simulate_linear_td(features, rewards, eta, steps);
        const std::string behavior = sim.diverged ? "diverged" : "converged";
        std::string agreement;
        if (report.verdict == Verdict::Borderline)
            agreement = "not compared (borderline verdict)";
        else if ((report.verdict == Verdict::NonConvergent) == sim.diverged)
            agreement = "agrees with verdict";
        else
            agreement = "disagrees with verdict";
        std::cout << "simulation: " << behavior << " (" << agreement << ")";
        if (probe_rewards) std::cout << " [unit probe rewards]";
        std::cout << "\n";
        prov.set("stability.simulation", behavior);
        prov.set("stability.agreement", agreement);
    }
    doc.require_all_used();

    ensure_out_dir(opts.out_dir);
    const std::string csv_path = opts.out_dir + "/stability.csv";
    std::ofstream out(csv_path);
    if (!out) throw IoError("cmd_stability: cannot open '" + csv_path + "' for writing");
    for (const std::string& line : prov.provenance()) out << "# " << line << '\n';
    out << "re,im\n";
    for (const std::complex<double>& ev : report.eigenvalues)
        out << format_double(ev.real()) << ',' << format_double(ev.imag()) << '\n';
    if (!out) throw IoError("cmd_stability: write to '" + csv_path + "' failed");
    log_info("stability wrote " + csv_path);
}

// ---------------------------------------------------------------------------
// list-presets + entry point

void cmd_list_presets() {
    for (const Preset& p : all_presets())
        std::cout << p.name << "  [" << p.kind << "]  " << p.description << "\n";
}

namespace {

struct SubArgs {
    std::string config;
    std::string preset;
    CliOptions opts;
    std::vector<std::string> traces;
};

void add_common_flags(CLI::App* sub, SubArgs& args, bool preset_allowed) {
    sub->add_option("--config", args.config, "path to a key = value config file");
    if (preset_allowed)
        sub->add_option("--preset", args.preset, "built-in preset name (see list-presets)");
    sub->add_option("--out", args.opts.out_dir, "output directory (default .)");
    sub->add_option("--seed", args.opts.seeds, "run seed; repeat for a seed sweep");
    sub->add_option("--jobs", args.opts.jobs, "parallel worker threads (default 1)");
}

// --preset and --config are alternatives; presets must match the subcommand.
ConfigDoc build_doc(const SubArgs& args, const std::string& expected_kind,
                    bool required) {
    if (!args.preset.empty() && !args.config.empty())
        throw ConfigError("pass either --preset or --config, not both");
    if (args.preset.empty() && args.config.empty()) {
        if (required) throw ConfigError("pass --preset NAME or --config PATH");
        return ConfigDoc();
    }
    if (!args.preset.empty()) {
        const Preset& p = find_preset(args.preset);
        if (p.kind != expected_kind)
            throw ConfigError("preset '" + p.name + "' is a " + p.kind +
                              " preset and does not fit this subcommand");
        return ConfigDoc::parse_text(p.text);
    }
    return ConfigDoc::parse_file(args.config);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"coadapt: an offline TD-learning laboratory for measuring and "
                 "counteracting feature co-adaptation"};
    app.require_subcommand(1);

    SubArgs gen_args, train_args, analyze_args, stability_args;
    CLI::App* gen = app.add_subcommand("gen-data", "collect an offline dataset");
    add_common_flags(gen, gen_args, true);
    CLI::App* train = app.add_subcommand("train", "run a training sweep");
    add_common_flags(train, train_args, true);
    CLI::App* analyze =
        app.add_subcommand("analyze", "aggregate metric traces into summary tables");
    analyze->add_option("traces", analyze_args.traces, "MetricTrace CSV files")
        ->required();
    add_common_flags(analyze, analyze_args, false);
    CLI::App* stability =
        app.add_subcommand("stability", "linear TD stability verdict for features");
    add_common_flags(stability, stability_args, false);
    app.add_subcommand("list-presets", "print the built-in presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        log_level();  // reject a bad COADAPT_LOG before doing any work
        if (gen->parsed()) {
            if (gen_args.opts.jobs == 0) throw ConfigError("--jobs must be >= 1");
            cmd_gen_data(build_doc(gen_args, "gen", true), gen_args.opts);
        } else if (train->parsed()) {
            if (train_args.opts.jobs == 0) throw ConfigError("--jobs must be >= 1");
            cmd_train(build_doc(train_args, "train", true), train_args.opts);
        } else if (analyze->parsed()) {
            cmd_analyze(analyze_args.traces, build_doc(analyze_args, "", false),
                        analyze_args.opts);
        } else if (stability->parsed()) {
            if (stability_args.config.empty())
                throw ConfigError("stability: pass --config PATH");
            cmd_stability(build_doc(stability_args, "", false), stability_args.opts);
        } else {
            cmd_list_presets();
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace coadapt
