#include "coadapt/gridworld.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "coadapt/rng.hpp"

namespace coadapt {

namespace {

void validate_grid(const GridSpec& grid) {
    if (grid.width == 0 || grid.height == 0)
        throw DomainError("GridSpec: width and height must be positive");
    if (grid.cells.size() != grid.n_states())
        throw ShapeError("GridSpec: cell count does not match width*height");
    if (grid.start_x >= grid.width || grid.start_y >= grid.height)
        throw DomainError("GridSpec: start lies outside the grid");
    if (grid.at(grid.start_x, grid.start_y) != Cell::Empty)
        throw DomainError("GridSpec: start cell must be Empty");
    if (!(grid.gamma >= 0.0 && grid.gamma < 1.0))
        throw DomainError("GridSpec: gamma must lie in [0, 1)");
    bool has_goal = false;
    for (Cell c : grid.cells)
        if (c == Cell::Goal) has_goal = true;
    if (!has_goal) throw DomainError("GridSpec: no Goal cell");
    const std::vector<std::size_t> dist = goal_distances(grid);
    if (dist[grid.index(grid.start_x, grid.start_y)] ==
        std::numeric_limits<std::size_t>::max())
        throw DomainError("GridSpec: no Goal reachable from the start cell");
}

GridSpec empty_grid16() {
    GridSpec grid;
    grid.width = 16;
    grid.height = 16;
    grid.cells.assign(256, Cell::Empty);
    grid.start_x = 8;
    grid.start_y = 8;
    grid.gamma = 0.95;
    grid.cells[grid.index(0, 0)] = Cell::Goal;
    return grid;
}

}  // namespace

GridSpec build_grid(GridPreset preset) {
    if (preset == GridPreset::Grid16Sparse) {
        GridSpec grid = empty_grid16();
        grid.id = "grid16-sparse";
        validate_grid(grid);
        return grid;
    }
    // Grid16Obstacles: scatter walls and lava from a fixed seed, retrying
    // (deterministically) until the goal stays reachable.
    for (std::uint64_t attempt = 0;; ++attempt) {
        GridSpec grid = empty_grid16();
        grid.id = "grid16-obstacles";
        Rng rng(0xC0ADA970ULL + attempt);
        std::size_t placed_walls = 0, placed_lava = 0;
        while (placed_walls < 36 || placed_lava < 12) {
            const std::size_t x = rng.uniform_int(16);
            const std::size_t y = rng.uniform_int(16);
            if ((x == grid.start_x && y == grid.start_y) || (x == 0 && y == 0)) continue;
            if (grid.at(x, y) != Cell::Empty) continue;
            if (placed_walls < 36) {
                grid.cells[grid.index(x, y)] = Cell::Wall;
                ++placed_walls;
            } else {
                grid.cells[grid.index(x, y)] = Cell::Lava;
                ++placed_lava;
            }
        }
        const std::vector<std::size_t> dist = goal_distances(grid);
        if (dist[grid.index(grid.start_x, grid.start_y)] !=
            std::numeric_limits<std::size_t>::max()) {
            validate_grid(grid);
            return grid;
        }
    }
}

GridSpec build_custom_grid(std::size_t width, std::size_t height,
                           std::vector<Cell> cells, std::size_t start_x,
                           std::size_t start_y, double gamma, std::string id) {
    GridSpec grid;
    grid.width = width;
    grid.height = height;
    grid.cells = std::move(cells);
    grid.start_x = start_x;
    grid.start_y = start_y;
    grid.gamma = gamma;
    grid.id = std::move(id);
    validate_grid(grid);
    return grid;
}

StepResult step(const GridSpec& grid, std::size_t x, std::size_t y, Action action) {
    if (x >= grid.width || y >= grid.height)
        throw DomainError("step: state lies outside the grid");
    if (grid.at(x, y) != Cell::Empty)
        throw DomainError("step: state must be a non-terminal Empty cell");

    std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x);
    std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y);
    switch (action) {
        case Action::Up: ny -= 1; break;
        case Action::Down: ny += 1; break;
        case Action::Left: nx -= 1; break;
        case Action::Right: nx += 1; break;
        case Action::Stay: break;
        default: throw DomainError("step: unknown action");
    }
    const bool off_grid = nx < 0 || ny < 0 ||
                          nx >= static_cast<std::ptrdiff_t>(grid.width) ||
                          ny >= static_cast<std::ptrdiff_t>(grid.height);
    if (off_grid || grid.at(static_cast<std::size_t>(nx),
                            static_cast<std::size_t>(ny)) == Cell::Wall) {
        nx = static_cast<std::ptrdiff_t>(x);
        ny = static_cast<std::ptrdiff_t>(y);
    }
    StepResult result;
    result.next_x = static_cast<std::size_t>(nx);
    result.next_y = static_cast<std::size_t>(ny);
    const Cell landed = grid.at(result.next_x, result.next_y);
    if (landed == Cell::Goal) {
        result.reward = 1.0;
        result.terminal = true;
    } else if (landed == Cell::Lava) {
        result.reward = 0.0;
        result.terminal = true;
    }
    return result;
}

std::vector<std::size_t> goal_distances(const GridSpec& grid) {
    constexpr std::size_t unreachable = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(grid.n_states(), unreachable);
    std::deque<std::size_t> frontier;
    for (std::size_t i = 0; i < grid.n_states(); ++i) {
        if (grid.cells[i] == Cell::Goal) {
            dist[i] = 0;
            frontier.push_back(i);
        }
    }
    // BFS backwards from goals through Empty cells.
    while (!frontier.empty()) {
        const std::size_t idx = frontier.front();
        frontier.pop_front();
        const std::size_t x = idx % grid.width, y = idx / grid.width;
        const std::ptrdiff_t moves[4][2] = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};
        for (const auto& m : moves) {
            const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + m[0];
            const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + m[1];
            if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(grid.width) ||
                ny >= static_cast<std::ptrdiff_t>(grid.height))
                continue;
            const std::size_t nidx = grid.index(static_cast<std::size_t>(nx),
                                                static_cast<std::size_t>(ny));
            if (grid.cells[nidx] != Cell::Empty) continue;
            if (dist[nidx] != unreachable) continue;
            dist[nidx] = dist[idx] + 1;
            frontier.push_back(nidx);
        }
    }
    return dist;
}

Matrix value_iteration(const GridSpec& grid, double tol) {
    if (tol <= 0.0) throw DomainError("value_iteration: tol must be positive");
    const std::size_t n = grid.n_states();
    Matrix q(n, kNumActions);
    // Precompute transitions once; the grid is deterministic.
    struct Edge {
        std::size_t next;
        double reward;
        bool terminal;
    };
    std::vector<Edge> edges(n * kNumActions);
    std::vector<bool> active(n, false);
    for (std::size_t y = 0; y < grid.height; ++y) {
        for (std::size_t x = 0; x < grid.width; ++x) {
            const std::size_t idx = grid.index(x, y);
            if (grid.cells[idx] != Cell::Empty) continue;
            active[idx] = true;
            for (std::size_t a = 0; a < kNumActions; ++a) {
                const StepResult r = step(grid, x, y, static_cast<Action>(a));
                edges[idx * kNumActions + a] =
                    Edge{grid.index(r.next_x, r.next_y), r.reward, r.terminal};
            }
        }
    }
    double residual = std::numeric_limits<double>::infinity();
    while (residual >= tol) {
        residual = 0.0;
        for (std::size_t idx = 0; idx < n; ++idx) {
            if (!active[idx]) continue;
            for (std::size_t a = 0; a < kNumActions; ++a) {
                const Edge& e = edges[idx * kNumActions + a];
                double value = e.reward;
                if (!e.terminal) {
                    double best = q(e.next, 0);
                    for (std::size_t b = 1; b < kNumActions; ++b)
                        best = std::max(best, q(e.next, b));
                    value += grid.gamma * best;
                }
                residual = std::max(residual, std::fabs(value - q(idx, a)));
                q(idx, a) = value;
            }
        }
    }
    return q;
}

void StochasticPolicy::validate() const {
    if (probs.cols() != kNumActions)
        throw ShapeError("StochasticPolicy: wrong action count");
    for (std::size_t s = 0; s < probs.rows(); ++s) {
        double sum = 0.0;
        for (std::size_t a = 0; a < kNumActions; ++a) {
            if (probs(s, a) < 0.0)
                throw DomainError("StochasticPolicy: negative probability");
            sum += probs(s, a);
        }
        if (std::fabs(sum - 1.0) > 1e-12)
            throw DomainError("StochasticPolicy: row does not sum to 1");
    }
}

StochasticPolicy make_behavior_policy(const GridSpec& grid, const Matrix& q_star,
                                      double p_opt) {
    if (q_star.rows() != grid.n_states() || q_star.cols() != kNumActions)
        throw ShapeError("make_behavior_policy: q table shape disagrees with grid");
    if (!(p_opt >= 0.0 && p_opt <= 1.0))
        throw DomainError("make_behavior_policy: p_opt must lie in [0, 1]");
    StochasticPolicy policy;
    policy.probs = Matrix(grid.n_states(), kNumActions);
    for (std::size_t s = 0; s < grid.n_states(); ++s) {
        double best = q_star(s, 0);
        for (std::size_t a = 1; a < kNumActions; ++a) best = std::max(best, q_star(s, a));
        const double tie_tol = 1e-9 * std::max(1.0, std::fabs(best));
        std::size_t n_opt = 0;
        for (std::size_t a = 0; a < kNumActions; ++a)
            if (q_star(s, a) >= best - tie_tol) ++n_opt;
        if (n_opt == kNumActions) {
            for (std::size_t a = 0; a < kNumActions; ++a)
                policy.probs(s, a) = 1.0 / static_cast<double>(kNumActions);
            continue;
        }
        const double p_one_opt = p_opt / static_cast<double>(n_opt);
        const double p_one_rest = (1.0 - p_opt) / static_cast<double>(kNumActions - n_opt);
        double sum = 0.0;
        for (std::size_t a = 0; a < kNumActions; ++a) {
            policy.probs(s, a) = q_star(s, a) >= best - tie_tol ? p_one_opt : p_one_rest;
            sum += policy.probs(s, a);
        }
        for (std::size_t a = 0; a < kNumActions; ++a) policy.probs(s, a) /= sum;
    }
    policy.validate();
    return policy;
}

}  // namespace coadapt
