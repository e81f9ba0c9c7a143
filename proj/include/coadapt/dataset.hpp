#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coadapt/gridworld.hpp"
#include "coadapt/mlp.hpp"
#include "coadapt/observe.hpp"

namespace coadapt {

// One logged step. next_action is the action the behavior policy drew at
// next_state during the same rollout; it is defined (and ignored) when the
// transition is terminal.
struct Transition {
    std::size_t state = 0;  // cell index, y * width + x
    std::size_t action = 0;
    double reward = 0.0;
    std::size_t next_state = 0;
    std::size_t next_action = 0;
    bool terminal = false;
    std::vector<double> obs;
    std::vector<double> next_obs;
};

struct DatasetMeta {
    std::string env_id = "custom";
    std::uint64_t seed = 0;
    double p_opt = 0.0;
    std::string policy_desc = "eps-optimal";
    std::uint64_t generated_at = 0;  // unix seconds; excluded from determinism checks
};

// Immutable container: transitions plus trajectory boundaries (exclusive end
// offsets, ascending, last == size) plus collection metadata and everything
// needed to rebuild the environment and observation map.
class OfflineDataset {
  public:
    static OfflineDataset create(GridSpec grid, ObservationMap obs_map,
                                 std::vector<Transition> transitions,
                                 std::vector<std::size_t> boundaries,
                                 DatasetMeta meta);

    const GridSpec& grid() const { return grid_; }
    const ObservationMap& obs_map() const { return obs_map_; }
    const std::vector<Transition>& transitions() const { return transitions_; }
    const std::vector<std::size_t>& boundaries() const { return boundaries_; }
    const DatasetMeta& meta() const { return meta_; }
    std::size_t size() const { return transitions_.size(); }
    std::size_t n_trajectories() const { return boundaries_.size(); }
    double gamma() const { return grid_.gamma; }
    std::size_t obs_dim() const { return obs_map_.dim; }

  private:
    OfflineDataset() = default;
    GridSpec grid_;
    ObservationMap obs_map_;
    std::vector<Transition> transitions_;
    std::vector<std::size_t> boundaries_;
    DatasetMeta meta_;
};

// Rolls out the behavior policy from the start state until n_transitions are
// logged; episodes restart on termination or after max_episode_len steps.
// Deterministic in (grid, map, policy, seed).
OfflineDataset collect_dataset(const GridSpec& grid, const ObservationMap& obs_map,
                               const StochasticPolicy& policy,
                               std::size_t n_transitions, std::size_t max_episode_len,
                               std::uint64_t seed, double p_opt = 0.0);

// Discounted return-to-go per transition, truncated at trajectory boundaries.
std::vector<double> mc_returns(const OfflineDataset& dataset);

// Line-oriented text format; round-trips exactly (%.17g floats).
void write_dataset(const OfflineDataset& dataset, const std::string& path);
OfflineDataset read_dataset(const std::string& path);

// Mean undiscounted return of the greedy policy (ties break to the lowest
// action index) over fresh episodes from the start state.
double evaluate_policy(const GridSpec& grid, const ObservationMap& obs_map,
                       const MlpParams& params, std::size_t episodes = 1,
                       std::size_t max_episode_len = 100);

}  // namespace coadapt
