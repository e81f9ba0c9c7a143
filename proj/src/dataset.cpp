#include "coadapt/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "coadapt/rng.hpp"

namespace coadapt {

namespace {

std::size_t sample_action(const StochasticPolicy& policy, std::size_t state, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t a = 0; a < kNumActions; ++a) {
        cum += policy.probs(state, a);
        if (u < cum) return a;
    }
    return kNumActions - 1;
}

char cell_char(Cell c) {
    switch (c) {
        case Cell::Empty: return 'E';
        case Cell::Wall: return 'W';
        case Cell::Lava: return 'L';
        case Cell::Goal: return 'G';
    }
    throw DomainError("cell_char: unknown cell");
}

Cell cell_from_char(char c) {
    switch (c) {
        case 'E': return Cell::Empty;
        case 'W': return Cell::Wall;
        case 'L': return Cell::Lava;
        case 'G': return Cell::Goal;
        default: throw ParseError(std::string("dataset: unknown cell character '") + c + "'");
    }
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& token, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("dataset: bad float '" + token + "' on line " +
                         std::to_string(line_no));
    return v;
}

std::uint64_t parse_u64(const std::string& token, std::size_t line_no) {
    char* end = nullptr;
    const std::uint64_t v = std::strtoull(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("dataset: bad integer '" + token + "' on line " +
                         std::to_string(line_no));
    return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        if (c == sep) {
            out.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    out.push_back(current);
    return out;
}

}  // namespace

OfflineDataset OfflineDataset::create(GridSpec grid, ObservationMap obs_map,
                                      std::vector<Transition> transitions,
                                      std::vector<std::size_t> boundaries,
                                      DatasetMeta meta) {
    if (transitions.empty()) throw DomainError("OfflineDataset: no transitions");
    if (boundaries.empty() || boundaries.back() != transitions.size())
        throw DomainError("OfflineDataset: boundaries must end at the transition count");
    std::size_t prev = 0;
    for (std::size_t b : boundaries) {
        if (b == 0 || b <= prev)
            throw DomainError("OfflineDataset: boundaries must be strictly ascending");
        prev = b;
    }
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const Transition& t = transitions[i];
        if (t.state >= grid.n_states() || t.next_state >= grid.n_states())
            throw DomainError("OfflineDataset: state index out of range");
        if (t.action >= kNumActions || t.next_action >= kNumActions)
            throw DomainError("OfflineDataset: action index out of range");
        if (!std::isfinite(t.reward))
            throw DomainError("OfflineDataset: non-finite reward");
        if (t.obs.size() != obs_map.dim || t.next_obs.size() != obs_map.dim)
            throw ShapeError("OfflineDataset: observation length disagrees with map");
    }
    // terminal transitions may only close a trajectory; consecutive
    // transitions inside one trajectory must chain states and actions
    std::size_t cursor = 0;
    for (std::size_t b : boundaries) {
        for (std::size_t i = cursor; i + 1 < b; ++i) {
            if (transitions[i].terminal)
                throw DomainError("OfflineDataset: terminal transition inside a trajectory");
            if (transitions[i].next_state != transitions[i + 1].state ||
                transitions[i].next_action != transitions[i + 1].action)
                throw DomainError("OfflineDataset: trajectory does not chain");
        }
        cursor = b;
    }
    OfflineDataset d;
    d.grid_ = std::move(grid);
    d.obs_map_ = std::move(obs_map);
    d.transitions_ = std::move(transitions);
    d.boundaries_ = std::move(boundaries);
    d.meta_ = std::move(meta);
    return d;
}

OfflineDataset collect_dataset(const GridSpec& grid, const ObservationMap& obs_map,
                               const StochasticPolicy& policy,
                               std::size_t n_transitions, std::size_t max_episode_len,
                               std::uint64_t seed, double p_opt) {
    if (n_transitions == 0)
        throw DomainError("collect_dataset: need at least one transition");
    if (max_episode_len == 0)
        throw DomainError("collect_dataset: max_episode_len must be positive");
    if (policy.probs.rows() != grid.n_states())
        throw ShapeError("collect_dataset: policy state count disagrees with grid");
    policy.validate();

    Rng rng(seed);
    std::vector<Transition> transitions;
    transitions.reserve(n_transitions);
    std::vector<std::size_t> boundaries;

    std::size_t x = grid.start_x, y = grid.start_y;
    std::size_t action = sample_action(policy, grid.index(x, y), rng);
    std::size_t ep_len = 0;
    while (transitions.size() < n_transitions) {
        const StepResult r = step(grid, x, y, static_cast<Action>(action));
        const std::size_t next_idx = grid.index(r.next_x, r.next_y);
        const std::size_t next_action = sample_action(policy, next_idx, rng);
        Transition t;
        t.state = grid.index(x, y);
        t.action = action;
        t.reward = r.reward;
        t.next_state = next_idx;
        t.next_action = next_action;
        t.terminal = r.terminal;
        t.obs = observe(obs_map, x, y);
        t.next_obs = observe(obs_map, r.next_x, r.next_y);
        transitions.push_back(std::move(t));
        ++ep_len;
        const bool done = transitions.size() == n_transitions;
        if (r.terminal || ep_len >= max_episode_len || done) {
            boundaries.push_back(transitions.size());
            if (done) break;
            x = grid.start_x;
            y = grid.start_y;
            action = sample_action(policy, grid.index(x, y), rng);
            ep_len = 0;
        } else {
            x = r.next_x;
            y = r.next_y;
            action = next_action;
        }
    }

    DatasetMeta meta;
    meta.env_id = grid.id;
    meta.seed = seed;
    meta.p_opt = p_opt;
    meta.policy_desc = "eps-optimal";
    meta.generated_at = static_cast<std::uint64_t>(std::time(nullptr));
    return OfflineDataset::create(grid, obs_map, std::move(transitions),
                                  std::move(boundaries), std::move(meta));
}

std::vector<double> mc_returns(const OfflineDataset& dataset) {
    const auto& ts = dataset.transitions();
    const double gamma = dataset.gamma();
    std::vector<double> returns(ts.size(), 0.0);
    std::size_t begin = 0;
    for (std::size_t b : dataset.boundaries()) {
        returns[b - 1] = ts[b - 1].reward;
        for (std::size_t i = b - 1; i-- > begin;)
            returns[i] = ts[i].reward + gamma * returns[i + 1];
        begin = b;
    }
    return returns;
}

void write_dataset(const OfflineDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_dataset: cannot open '" + path + "' for writing");
    const GridSpec& g = dataset.grid();
    const ObservationMap& m = dataset.obs_map();
    const DatasetMeta& meta = dataset.meta();

    out << "# coadapt-dataset v=1";
    out << " env=" << g.id;
    out << " width=" << g.width << " height=" << g.height;
    out << " start_x=" << g.start_x << " start_y=" << g.start_y;
    out << " gamma=" << format_double(g.gamma);
    out << " cells=";
    for (Cell c : g.cells) out << cell_char(c);
    out << " obs=" << obs_kind_name(m.kind);
    out << " obs_dim=" << m.dim << " obs_seed=" << m.seed << " radius=" << m.radius;
    out << " policy=" << meta.policy_desc << " p_opt=" << format_double(meta.p_opt);
    out << " seed=" << meta.seed;
    out << " transitions=" << dataset.size();
    out << " boundaries=";
    for (std::size_t i = 0; i < dataset.boundaries().size(); ++i) {
        if (i > 0) out << ',';
        out << dataset.boundaries()[i];
    }
    out << " generated_at=" << meta.generated_at;
    out << '\n';

    for (const Transition& t : dataset.transitions()) {
        out << t.state << ' ' << t.action << ' ' << format_double(t.reward) << ' '
            << t.next_state << ' ' << t.next_action << ' ' << (t.terminal ? 1 : 0);
        out << ' ';
        for (std::size_t i = 0; i < t.obs.size(); ++i) {
            if (i > 0) out << ',';
            out << format_double(t.obs[i]);
        }
        out << ' ';
        for (std::size_t i = 0; i < t.next_obs.size(); ++i) {
            if (i > 0) out << ',';
            out << format_double(t.next_obs[i]);
        }
        out << '\n';
    }
    if (!out) throw IoError("write_dataset: write to '" + path + "' failed");
}

OfflineDataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_dataset: cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in, header))
        throw ParseError("read_dataset: empty file '" + path + "'");
    const std::string magic = "# coadapt-dataset ";
    if (header.rfind(magic, 0) != 0)
        throw ParseError("read_dataset: '" + path + "' is not a dataset file");

    std::map<std::string, std::string> kv;
    {
        std::istringstream hs(header.substr(magic.size()));
        std::string token;
        while (hs >> token) {
            const std::size_t eq = token.find('=');
            if (eq == std::string::npos)
                throw ParseError("read_dataset: bad metadata token '" + token + "'");
            kv[token.substr(0, eq)] = token.substr(eq + 1);
        }
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw ParseError("read_dataset: metadata key '" + key + "' missing");
        return it->second;
    };

    const std::size_t width = parse_u64(need("width"), 1);
    const std::size_t height = parse_u64(need("height"), 1);
    const std::string cell_str = need("cells");
    if (cell_str.size() != width * height)
        throw ParseError("read_dataset: cells length disagrees with width*height");
    std::vector<Cell> cells(cell_str.size());
    for (std::size_t i = 0; i < cell_str.size(); ++i) cells[i] = cell_from_char(cell_str[i]);
    GridSpec grid = build_custom_grid(width, height, std::move(cells),
                                      parse_u64(need("start_x"), 1),
                                      parse_u64(need("start_y"), 1),
                                      parse_double(need("gamma"), 1), need("env"));

    const ObsKind kind = obs_kind_from_name(need("obs"));
    ObservationMap map = make_observation_map(kind, grid, parse_u64(need("obs_dim"), 1),
                                              parse_u64(need("obs_seed"), 1),
                                              parse_u64(need("radius"), 1));
    if (map.dim != parse_u64(need("obs_dim"), 1))
        throw ParseError("read_dataset: observation dim disagrees with kind");

    DatasetMeta meta;
    meta.env_id = need("env");
    meta.seed = parse_u64(need("seed"), 1);
    meta.p_opt = parse_double(need("p_opt"), 1);
    meta.policy_desc = need("policy");
    meta.generated_at = kv.count("generated_at") ? parse_u64(kv["generated_at"], 1) : 0;

    const std::size_t n = parse_u64(need("transitions"), 1);
    std::vector<std::size_t> boundaries;
    for (const std::string& token : split(need("boundaries"), ','))
        boundaries.push_back(parse_u64(token, 1));

    std::vector<Transition> transitions;
    transitions.reserve(n);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string s, a, r, ns, na, term, obs_csv, next_obs_csv;
        if (!(ls >> s >> a >> r >> ns >> na >> term >> obs_csv >> next_obs_csv))
            throw ParseError("read_dataset: malformed transition on line " +
                             std::to_string(line_no));
        std::string extra;
        if (ls >> extra)
            throw ParseError("read_dataset: trailing tokens on line " +
                             std::to_string(line_no));
        Transition t;
        t.state = parse_u64(s, line_no);
        t.action = parse_u64(a, line_no);
        t.reward = parse_double(r, line_no);
        t.next_state = parse_u64(ns, line_no);
        t.next_action = parse_u64(na, line_no);
        const std::uint64_t term_v = parse_u64(term, line_no);
        if (term_v > 1)
            throw ParseError("read_dataset: terminal flag must be 0/1 on line " +
                             std::to_string(line_no));
        t.terminal = term_v == 1;
        for (const std::string& token : split(obs_csv, ','))
            t.obs.push_back(parse_double(token, line_no));
        for (const std::string& token : split(next_obs_csv, ','))
            t.next_obs.push_back(parse_double(token, line_no));
        transitions.push_back(std::move(t));
    }
    if (transitions.size() != n)
        throw ParseError("read_dataset: expected " + std::to_string(n) +
                         " transitions, found " + std::to_string(transitions.size()));
    return OfflineDataset::create(std::move(grid), std::move(map), std::move(transitions),
                                  std::move(boundaries), std::move(meta));
}

double evaluate_policy(const GridSpec& grid, const ObservationMap& obs_map,
                       const MlpParams& params, std::size_t episodes,
                       std::size_t max_episode_len) {
    if (episodes == 0) throw DomainError("evaluate_policy: need at least one episode");
    double total = 0.0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        std::size_t x = grid.start_x, y = grid.start_y;
        double ep_return = 0.0;
        for (std::size_t k = 0; k < max_episode_len; ++k) {
            const std::vector<double> q =
                q_all_actions(params, observe(obs_map, x, y), kNumActions);
            std::size_t best = 0;
            for (std::size_t a = 1; a < kNumActions; ++a)
                if (q[a] > q[best]) best = a;
            const StepResult r = step(grid, x, y, static_cast<Action>(best));
            ep_return += r.reward;
            if (r.terminal) break;
            x = r.next_x;
            y = r.next_y;
        }
        total += ep_return;
    }
    return total / static_cast<double>(episodes);
}

}  // namespace coadapt
