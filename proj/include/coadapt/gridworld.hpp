#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coadapt/matrix.hpp"

namespace coadapt {

enum class Cell : std::uint8_t { Empty, Wall, Lava, Goal };

// Movement on the grid; Up decreases y. Moves into walls or off the grid are
// no-ops. Entering a Goal cell pays reward 1 and terminates; entering Lava
// pays 0 and terminates; everything else pays 0.
enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };
inline constexpr std::size_t kNumActions = 5;

struct GridSpec {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Cell> cells;  // row-major, index = y * width + x
    std::size_t start_x = 0;
    std::size_t start_y = 0;
    double gamma = 0.95;
    std::string id = "custom";

    std::size_t n_states() const { return width * height; }
    std::size_t index(std::size_t x, std::size_t y) const { return y * width + x; }
    Cell at(std::size_t x, std::size_t y) const { return cells[index(x, y)]; }
};

enum class GridPreset { Grid16Obstacles, Grid16Sparse };

// 16x16 grids with start at the center (8,8) and goal at the corner (0,0).
// Grid16Sparse is open; Grid16Obstacles scatters walls and lava from a fixed
// seeded pattern that keeps the goal reachable. Deterministic across calls.
GridSpec build_grid(GridPreset preset);

// Validates bounds, start cell, goal existence and reachability, gamma < 1.
GridSpec build_custom_grid(std::size_t width, std::size_t height,
                           std::vector<Cell> cells, std::size_t start_x,
                           std::size_t start_y, double gamma,
                           std::string id = "custom");

struct StepResult {
    std::size_t next_x = 0;
    std::size_t next_y = 0;
    double reward = 0.0;
    bool terminal = false;
};
StepResult step(const GridSpec& grid, std::size_t x, std::size_t y, Action action);

// Shortest number of moves from every Empty cell to a Goal, through Empty
// cells; SIZE_MAX where unreachable. BFS; used for oracles and validation.
std::vector<std::size_t> goal_distances(const GridSpec& grid);

// Q*(s,a) table (n_states x kNumActions) for the deterministic grid;
// rows of non-Empty cells are zero. Iterates until the sup-norm Bellman
// residual drops below tol.
Matrix value_iteration(const GridSpec& grid, double tol = 1e-10);

struct StochasticPolicy {
    Matrix probs;  // n_states x kNumActions
    void validate() const;
};

// Takes one of the optimal actions (ties split evenly) with total
// probability p_opt and spreads 1 - p_opt uniformly over the rest. States
// where every action is optimal get a uniform row.
StochasticPolicy make_behavior_policy(const GridSpec& grid, const Matrix& q_star,
                                      double p_opt);

}  // namespace coadapt
