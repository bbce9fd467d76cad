#pragma once

#include <span>
#include <vector>

#include "vplidar/scene.hpp"

namespace vplidar {

struct CellIndex {
    int row = 0;
    int col = 0;

    auto operator<=>(const CellIndex&) const = default;
};

/// Ground-plane pillar grid in box-footprint coordinates.
struct PillarGrid {
    double u0 = 0.0;
    double v0 = 0.0;
    double cell_length = 0.16;  // along u
    double cell_width = 0.16;   // along v
    int rows = 1;
    int cols = 1;
};

/// Fixed-size grid stretched over each box footprint; the voxel size is
/// derived per object.
struct BoxFrameGrid {
    int rows = 64;
    int cols = 32;
};

inline constexpr double kDefaultPillarSize = 0.16;

/// Footprint coordinates: u along the box length, v along the width, origin at
/// the footprint corner with minimal (u, v). Height is dropped.
struct FootprintCoords {
    double u = 0.0;
    double v = 0.0;
};
FootprintCoords box_frame_coords(const Point& p, const BoundingBox& box);

/// floor((u - u0) / l_v), floor((v - v0) / w_v). Throws IndexOutOfRange
/// (carrying the raw index) outside the grid.
CellIndex pillar_index(double u, double v, const PillarGrid& grid);

/// Same as pillar_index but clamps to the grid instead of throwing.
CellIndex pillar_index_clamped(double u, double v, const PillarGrid& grid);

/// Pillar grid covering a box footprint: ceil(l / size) x ceil(w / size) cells
/// anchored at the footprint origin.
PillarGrid footprint_pillar_grid(const BoundingBox& box, double pillar_size = kDefaultPillarSize);

/// Voxel size (l/rows, w/cols) of the adaptive grid for one box.
struct VoxelSize {
    double length = 0.0;
    double width = 0.0;
};
VoxelSize adaptive_voxel_size(const BoundingBox& box, const BoxFrameGrid& grid);

struct AdaptiveIndexing {
    std::vector<CellIndex> cells;
    VoxelSize voxel;
};

/// Maps each point through box_frame_coords and floors with the adaptive
/// voxel size; points on or beyond the far edges clamp to the last cell.
AdaptiveIndexing adaptive_index(std::span<const Point> points, const BoundingBox& box,
                                const BoxFrameGrid& grid);

}  // namespace vplidar
