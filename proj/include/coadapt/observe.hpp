#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coadapt/gridworld.hpp"
#include "coadapt/matrix.hpp"

namespace coadapt {

enum class ObsKind { OneHotXY, RandomProjection, SmoothedRandomProjection };

std::string obs_kind_name(ObsKind kind);
ObsKind obs_kind_from_name(const std::string& name);

// Maps grid coordinates to observation vectors. The random projection matrix
// is fixed at construction from the seed; (x, y) is normalized to [-1, 1]^2
// before projecting. SmoothedRandomProjection averages the raw projections of
// in-grid cells within `radius` Manhattan distance (cross pattern).
struct ObservationMap {
    ObsKind kind = ObsKind::RandomProjection;
    std::size_t dim = 64;
    std::size_t width = 0;
    std::size_t height = 0;
    std::uint64_t seed = 0;
    std::size_t radius = 1;
    Matrix projection;  // dim x 2; empty for OneHotXY
};

ObservationMap make_observation_map(ObsKind kind, const GridSpec& grid,
                                    std::size_t dim = 64, std::uint64_t seed = 0,
                                    std::size_t radius = 1);

std::vector<double> observe(const ObservationMap& map, std::size_t x, std::size_t y);

}  // namespace coadapt
