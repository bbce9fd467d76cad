#include "vplidar/indexing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vplidar/error.hpp"

namespace vplidar {
namespace {

std::int64_t raw_floor(double x) {
    return static_cast<std::int64_t>(std::floor(x));
}

void check_grid(const PillarGrid& grid) {
    if (!(grid.cell_length > 0.0) || !(grid.cell_width > 0.0)) {
        throw ConfigError("pillar voxel size must be positive");
    }
    if (grid.rows < 1 || grid.cols < 1) throw ConfigError("pillar grid must have at least one cell");
}

}  // namespace

FootprintCoords box_frame_coords(const Point& p, const BoundingBox& box) {
    const LocalCoords lc = to_box_local(p, box);
    return {lc.u + 0.5 * box.length, lc.v + 0.5 * box.width};
}

CellIndex pillar_index(double u, double v, const PillarGrid& grid) {
    check_grid(grid);
    const auto r = raw_floor((u - grid.u0) / grid.cell_length);
    const auto c = raw_floor((v - grid.v0) / grid.cell_width);
    if (r < 0 || r >= grid.rows || c < 0 || c >= grid.cols) {
        throw IndexOutOfRange("pillar index (" + std::to_string(r) + ", " + std::to_string(c) +
                                  ") outside " + std::to_string(grid.rows) + "x" +
                                  std::to_string(grid.cols) + " grid",
                              r, c);
    }
    return {static_cast<int>(r), static_cast<int>(c)};
}

CellIndex pillar_index_clamped(double u, double v, const PillarGrid& grid) {
    check_grid(grid);
    const auto r = std::clamp<std::int64_t>(raw_floor((u - grid.u0) / grid.cell_length), 0, grid.rows - 1);
    const auto c = std::clamp<std::int64_t>(raw_floor((v - grid.v0) / grid.cell_width), 0, grid.cols - 1);
    return {static_cast<int>(r), static_cast<int>(c)};
}

PillarGrid footprint_pillar_grid(const BoundingBox& box, double pillar_size) {
    if (!(pillar_size > 0.0)) throw ConfigError("pillar voxel size must be positive");
    PillarGrid g;
    g.cell_length = pillar_size;
    g.cell_width = pillar_size;
    // tolerate l being an exact multiple up to rounding
    g.rows = std::max(1, static_cast<int>(std::ceil(box.length / pillar_size - 1e-9)));
    g.cols = std::max(1, static_cast<int>(std::ceil(box.width / pillar_size - 1e-9)));
    return g;
}

VoxelSize adaptive_voxel_size(const BoundingBox& box, const BoxFrameGrid& grid) {
    if (grid.rows < 1 || grid.cols < 1) throw ConfigError("adaptive grid must have at least one cell");
    return {box.length / grid.rows, box.width / grid.cols};
}

AdaptiveIndexing adaptive_index(std::span<const Point> points, const BoundingBox& box,
                                const BoxFrameGrid& grid) {
    AdaptiveIndexing out;
    out.voxel = adaptive_voxel_size(box, grid);
    out.cells.reserve(points.size());
    for (const Point& p : points) {
        const FootprintCoords fc = box_frame_coords(p, box);
        const auto r = std::clamp<std::int64_t>(raw_floor(fc.u * grid.rows / box.length), 0, grid.rows - 1);
        const auto c = std::clamp<std::int64_t>(raw_floor(fc.v * grid.cols / box.width), 0, grid.cols - 1);
        out.cells.push_back({static_cast<int>(r), static_cast<int>(c)});
    }
    return out;
}

}  // namespace vplidar
