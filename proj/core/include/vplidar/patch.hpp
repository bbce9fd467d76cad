#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vplidar/saliency_map.hpp"
#include "vplidar/scene.hpp"

namespace vplidar {

enum class PatchKind { Edges, NearestCorner, Center, X, TopN, HalfEdges, CriticalX, WholeArea };

/// Grid a mask is defined on: the fixed-size pillar grid over the footprint
/// (manual patches) or the adaptive rows x cols box-frame grid (critical
/// patches).
enum class MaskFrame { Pillar, Adaptive };

std::string_view to_string(PatchKind kind);
PatchKind parse_patch_kind(std::string_view name);
std::string_view to_string(MaskFrame frame);
MaskFrame default_frame(PatchKind kind);

struct PatchMask {
    PatchKind kind = PatchKind::WholeArea;
    MaskFrame frame = MaskFrame::Pillar;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> selected;  // row-major
    std::map<std::string, double> params;
    bool warning = false;  // set when a saliency-driven mask came out empty

    PatchMask() = default;
    PatchMask(PatchKind kind_, MaskFrame frame_, int rows_, int cols_);

    bool at(int r, int c) const { return selected[static_cast<std::size_t>(r) * cols + c] != 0; }
    void set(int r, int c, bool on = true) {
        selected[static_cast<std::size_t>(r) * cols + c] = on ? 1 : 0;
    }
    std::size_t count() const;
    double fraction() const;

    bool operator==(const PatchMask&) const = default;
};

PatchMask mask_whole(int rows, int cols, MaskFrame frame = MaskFrame::Pillar);

/// Border band `thickness` cells wide on all four footprint edges.
PatchMask mvp_edges(int rows, int cols, int thickness = 3);

/// `block` x `block` cells at the footprint corner nearest to `sensor`
/// (ground-plane distance). Equidistant corners resolve to the lower
/// (row, col) anchor.
PatchMask mvp_nearest_corner(int rows, int cols, const BoundingBox& box, const Point& sensor = {},
                             int block = 8);

/// Concentric block of ceil(f * rows) x ceil(f * cols) cells.
PatchMask mvp_center(int rows, int cols, double fraction = 0.75);

/// Cells whose centre lies within `max_dist` cells of either footprint diagonal.
PatchMask mvp_x(int rows, int cols, double max_dist = 1.5);

/// The ceil(n% * positives) highest strictly-positive cells of `map`; ties by
/// (row, col). Empty with `warning` set when the map has no positive cell.
PatchMask cvp_top_n(const SaliencyMap& map, double n_percent);

/// Two full-length bands on the long edges, ceil(beta/2 * cols) cells thick.
/// With a map, only the band side with the larger saliency sum is kept, at
/// ceil(beta * cols) cells.
PatchMask cvp_half_edges(int rows, int cols, double beta, const SaliencyMap* map = nullptr);

/// X-shaped band: the footprint minus four open triangles whose areas match
/// the closed-form critical-X fraction.
PatchMask cvp_critical_x(int rows, int cols, double alpha, double beta);

/// Continuous membership of normalized footprint coordinates (u along length,
/// v along width, both in [0, 1]) in the critical-X region.
bool critical_x_contains(double u, double v, double alpha, double beta);

/// Covered fraction of the critical-X region:
/// 1 - (0.5-a)(1-2a)(1-b)/(1-a) - (0.5-b)(1-2b)(1-a)/(1-b).
double critical_x_fraction(double alpha, double beta);

struct AreaParams {
    double l_tar = 5.0;
    double w_tar = 2.5;
    double h_tar = 1.5;  // carried as metadata only
    double l_v = 0.05;
    double w_v = 0.05;
    double alpha = 0.1;
    double beta = 0.2;
    double n_percent = 30.0;
};

void validate(const AreaParams& params);

/// Pillars needed to spoof a patch of the given kind. Defined for WholeArea,
/// CriticalX, HalfEdges and TopN.
double area_pillars(const AreaParams& params, PatchKind kind);

// Mask file: JSON header line, then one line per row of run lengths
// alternating unselected/selected, starting with unselected.
std::string encode_mask(const PatchMask& mask);
PatchMask decode_mask(const std::string& text);
void save_mask(const std::filesystem::path& path, const PatchMask& mask);
PatchMask load_mask(const std::filesystem::path& path);
/// Binary PGM (P5), selected cells white, one pixel per cell.
void save_mask_pgm(const std::filesystem::path& path, const PatchMask& mask);

}  // namespace vplidar
