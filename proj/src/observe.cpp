#include "coadapt/observe.hpp"

#include "coadapt/rng.hpp"

namespace coadapt {

std::string obs_kind_name(ObsKind kind) {
    switch (kind) {
        case ObsKind::OneHotXY: return "onehot";
        case ObsKind::RandomProjection: return "random";
        case ObsKind::SmoothedRandomProjection: return "smoothed";
    }
    throw DomainError("obs_kind_name: unknown kind");
}

ObsKind obs_kind_from_name(const std::string& name) {
    if (name == "onehot") return ObsKind::OneHotXY;
    if (name == "random") return ObsKind::RandomProjection;
    if (name == "smoothed") return ObsKind::SmoothedRandomProjection;
    throw ParseError("obs_kind_from_name: unknown observation kind '" + name + "'");
}

ObservationMap make_observation_map(ObsKind kind, const GridSpec& grid,
                                    std::size_t dim, std::uint64_t seed,
                                    std::size_t radius) {
    ObservationMap map;
    map.kind = kind;
    map.width = grid.width;
    map.height = grid.height;
    map.seed = seed;
    map.radius = radius;
    if (kind == ObsKind::OneHotXY) {
        map.dim = grid.n_states();
        return map;
    }
    if (dim == 0) throw DomainError("make_observation_map: dim must be positive");
    if (kind == ObsKind::SmoothedRandomProjection && radius == 0)
        throw DomainError("make_observation_map: smoothing radius must be positive");
    map.dim = dim;
    Rng rng(seed);
    map.projection = Matrix(dim, 2);
    for (std::size_t i = 0; i < map.projection.size(); ++i)
        map.projection.data()[i] = rng.normal();
    return map;
}

namespace {

std::vector<double> raw_projection(const ObservationMap& map, std::size_t x,
                                   std::size_t y) {
    const double nx =
        map.width > 1 ? 2.0 * static_cast<double>(x) / (map.width - 1.0) - 1.0 : 0.0;
    const double ny =
        map.height > 1 ? 2.0 * static_cast<double>(y) / (map.height - 1.0) - 1.0 : 0.0;
    std::vector<double> out(map.dim);
    for (std::size_t i = 0; i < map.dim; ++i)
        out[i] = map.projection(i, 0) * nx + map.projection(i, 1) * ny;
    return out;
}

}  // namespace

std::vector<double> observe(const ObservationMap& map, std::size_t x, std::size_t y) {
    if (x >= map.width || y >= map.height)
        throw DomainError("observe: coordinates lie outside the grid");
    switch (map.kind) {
        case ObsKind::OneHotXY: {
            std::vector<double> out(map.width * map.height, 0.0);
            out[y * map.width + x] = 1.0;
            return out;
        }
        case ObsKind::RandomProjection:
            return raw_projection(map, x, y);
        case ObsKind::SmoothedRandomProjection: {
            std::vector<double> acc(map.dim, 0.0);
            std::size_t count = 0;
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(map.radius);
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    if (std::abs(dx) + std::abs(dy) > r) continue;
                    const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(x) + dx;
                    const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (cx < 0 || cy < 0 || cx >= static_cast<std::ptrdiff_t>(map.width) ||
                        cy >= static_cast<std::ptrdiff_t>(map.height))
                        continue;
                    const std::vector<double> raw = raw_projection(
                        map, static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
                    for (std::size_t i = 0; i < map.dim; ++i) acc[i] += raw[i];
                    ++count;
                }
            }
            for (double& v : acc) v /= static_cast<double>(count);
            return acc;
        }
    }
    throw DomainError("observe: unknown observation kind");
}

}  // namespace coadapt
