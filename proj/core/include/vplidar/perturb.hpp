#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplidar/indexing.hpp"
#include "vplidar/patch.hpp"
#include "vplidar/rng.hpp"
#include "vplidar/saliency_map.hpp"
#include "vplidar/scene.hpp"

namespace vplidar {

enum class SelectionStrategy { RandomSelection, CriticalFirst };

std::string_view to_string(SelectionStrategy s);
SelectionStrategy parse_strategy(std::string_view name);

/// Attack parameters. Shifts are displacements along the sensor ray, limited
/// to [-2, 2] m in whole metres.
struct AttackConfig {
    PatchKind patch = PatchKind::WholeArea;
    int budget = 200;
    std::vector<double> shift_set{-2.0, -1.0, 1.0, 2.0};
    SelectionStrategy strategy = SelectionStrategy::RandomSelection;
    std::uint64_t seed = 0;

    // patch geometry
    double pillar_size = kDefaultPillarSize;
    BoxFrameGrid grid{};
    int edge_thickness = 3;
    int corner_block = 8;
    double center_fraction = 0.75;
    double x_max_dist = 1.5;
    double alpha = 0.1;
    double beta = 0.2;
    double n_percent = 30.0;
    bool half_edges_single_band = false;
    Point sensor{};

    /// Universal map driving TopN, single-band HalfEdges and CriticalFirst.
    std::optional<SaliencyMap> saliency;
};

void validate(const AttackConfig& config);

/// Shift set used by ORA-Random: outward shifts only.
std::vector<double> ora_compat_shift_set();

struct ShiftRecord {
    std::size_t object = 0;
    std::size_t index = 0;  // point index in the scene cloud
    Point original;
    double shift = 0.0;  // R_d, metres; 0 when not applied
    Point shifted;
    bool applied = true;  // false: every shift in the set would cross the sensor
};

struct PerturbationRecord {
    std::vector<ShiftRecord> entries;
    std::size_t shifted_count() const;
};

/// Mask for `box` on the grid implied by the patch kind (pillar grid for
/// manual patches, adaptive grid for critical ones).
PatchMask build_mask(const BoundingBox& box, const AttackConfig& config);

/// Indices of `target` points whose cell is selected in `mask`.
std::vector<std::size_t> candidates(const PointCloud& cloud, std::span<const std::size_t> target,
                                    const BoundingBox& box, const PatchMask& mask,
                                    double pillar_size = kDefaultPillarSize);

/// Picks min(budget, |cands|) points. RandomSelection is a partial
/// Fisher-Yates shuffle of the ascending candidate list, so a smaller budget
/// selects a prefix of a larger one for the same rng state. CriticalFirst
/// orders by criticality (aligned with `cands`) descending, ties by index.
std::vector<std::size_t> select(std::span<const std::size_t> cands, int budget, SelectionStrategy strategy,
                                std::span<const double> criticality, Rng& rng);

/// Moves `p` by `d` metres along its ray from the sensor origin. nullopt when
/// p is the origin or radius + d <= 0.
std::optional<Point> try_radial_shift(const Point& p, double d);
/// Throwing variant of try_radial_shift.
Point radial_shift(const Point& p, double d);

/// Per-point criticality: the map value of each point's adaptive cell.
std::vector<double> point_criticality(const PointCloud& cloud, std::span<const std::size_t> indices,
                                      const BoundingBox& box, const SaliencyMap& map);

struct AttackResult {
    Scene adversarial;
    PerturbationRecord record;
    std::vector<std::size_t> candidate_counts;  // per attacked object, in call order
};

/// Extract -> index -> mask -> candidates -> select -> shift -> merge for one
/// box of the scene. Point order and count are preserved.
AttackResult apply(const Scene& scene, std::size_t box_index, const AttackConfig& config);

/// Attacks several boxes. Each object draws from its own stream
/// (object_seed(seed, scene id, box index)), so the output does not depend on
/// the order of `box_indices` or on `jobs`.
AttackResult apply_multi(const Scene& scene, std::span<const std::size_t> box_indices,
                         const AttackConfig& config, int jobs = 1);

/// One JSON object per line.
std::string records_to_jsonl(const PerturbationRecord& record);

}  // namespace vplidar
