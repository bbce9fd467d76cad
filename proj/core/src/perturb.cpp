#include "vplidar/perturb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vplidar/error.hpp"
#include "vplidar/parallel.hpp"

namespace vplidar {
namespace {

constexpr std::uint64_t kSelectStream = 1;
constexpr std::uint64_t kShiftStream = 2;

struct ObjectOutcome {
    std::vector<ShiftRecord> records;
    std::size_t candidate_count = 0;
};

ObjectOutcome attack_object(const Scene& scene, const Extraction& extraction, std::size_t box_index,
                            const AttackConfig& config) {
    ObjectOutcome out;
    const BoundingBox& box = scene.boxes[box_index];
    const auto& target = extraction.targets[box_index];
    if (config.budget == 0 || target.empty()) return out;

    const PatchMask mask = build_mask(box, config);
    const auto cands = candidates(scene.cloud, target, box, mask, config.pillar_size);
    out.candidate_count = cands.size();

    std::vector<double> crit;
    if (config.strategy == SelectionStrategy::CriticalFirst) {
        crit = point_criticality(scene.cloud, cands, box, *config.saliency);
    }
    const std::uint64_t seed = object_seed(config.seed, scene.id, box_index);
    Rng select_rng(derive_seed(seed, kSelectStream));
    Rng shift_rng(derive_seed(seed, kShiftStream));
    const auto chosen = select(cands, config.budget, config.strategy, crit, select_rng);

    for (std::size_t idx : chosen) {
        const Point& p = scene.cloud[idx];
        ShiftRecord rec;
        rec.object = box_index;
        rec.index = idx;
        rec.original = p;
        rec.shifted = p;
        rec.applied = false;
        std::vector<double> remaining = config.shift_set;
        while (!remaining.empty()) {
            const auto pick = static_cast<std::size_t>(uniform_below(shift_rng, remaining.size()));
            const double d = remaining[pick];
            if (auto moved = try_radial_shift(p, d)) {
                rec.shift = d;
                rec.shifted = *moved;
                rec.applied = true;
                break;
            }
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        out.records.push_back(rec);
    }
    return out;
}

}  // namespace

std::string_view to_string(SelectionStrategy s) {
    return s == SelectionStrategy::RandomSelection ? "random" : "critical";
}

SelectionStrategy parse_strategy(std::string_view name) {
    std::string lower(name);
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "random" || lower == "random_selection") return SelectionStrategy::RandomSelection;
    if (lower == "critical" || lower == "critical_first") return SelectionStrategy::CriticalFirst;
    throw ConfigError("unknown selection strategy '" + std::string(name) + "'");
}

void validate(const AttackConfig& config) {
    if (config.budget < 0) throw ConfigError("point budget must be >= 0");
    if (config.shift_set.empty()) throw ConfigError("shift set must not be empty");
    for (double d : config.shift_set) {
        if (!(d >= -2.0 && d <= 2.0) || d != std::round(d)) {
            throw ConfigError("shift " + std::to_string(d) + " m outside [-2, 2] or not a whole metre");
        }
    }
    if (!(config.pillar_size > 0.0)) throw ConfigError("pillar size must be positive");
    if (config.grid.rows < 1 || config.grid.cols < 1) throw ConfigError("adaptive grid must be at least 1x1");
    if (config.strategy == SelectionStrategy::CriticalFirst && !config.saliency) {
        throw ConfigError("critical-first selection needs a saliency map");
    }
    if (config.patch == PatchKind::TopN && !config.saliency) {
        throw ConfigError("top-n patch needs a saliency map");
    }
    if (config.patch == PatchKind::HalfEdges && config.half_edges_single_band && !config.saliency) {
        throw ConfigError("single-band half-edges needs a saliency map");
    }
    if (config.saliency && (config.saliency->rows != config.grid.rows || config.saliency->cols != config.grid.cols)) {
        throw ConfigError("saliency map dimensions do not match the adaptive grid");
    }
}

std::vector<double> ora_compat_shift_set() {
    return {1.0, 2.0};
}

std::size_t PerturbationRecord::shifted_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const ShiftRecord& r) { return r.applied; }));
}

PatchMask build_mask(const BoundingBox& box, const AttackConfig& config) {
    const PillarGrid pg = footprint_pillar_grid(box, config.pillar_size);
    const int ar = config.grid.rows;
    const int ac = config.grid.cols;
    switch (config.patch) {
        case PatchKind::WholeArea:
            return mask_whole(pg.rows, pg.cols, MaskFrame::Pillar);
        case PatchKind::Edges:
            return mvp_edges(pg.rows, pg.cols, config.edge_thickness);
        case PatchKind::NearestCorner:
            return mvp_nearest_corner(pg.rows, pg.cols, box, config.sensor, config.corner_block);
        case PatchKind::Center:
            return mvp_center(pg.rows, pg.cols, config.center_fraction);
        case PatchKind::X:
            return mvp_x(pg.rows, pg.cols, config.x_max_dist);
        case PatchKind::TopN:
            if (!config.saliency) throw ConfigError("top-n patch needs a saliency map");
            return cvp_top_n(*config.saliency, config.n_percent);
        case PatchKind::HalfEdges:
            return cvp_half_edges(ar, ac, config.beta,
                                  config.half_edges_single_band && config.saliency ? &*config.saliency : nullptr);
        case PatchKind::CriticalX:
            return cvp_critical_x(ar, ac, config.alpha, config.beta);
    }
    throw ConfigError("unsupported patch kind");
}

std::vector<std::size_t> candidates(const PointCloud& cloud, std::span<const std::size_t> target,
                                    const BoundingBox& box, const PatchMask& mask, double pillar_size) {
    std::vector<std::size_t> out;
    if (mask.frame == MaskFrame::Pillar) {
        const PillarGrid pg = footprint_pillar_grid(box, pillar_size);
        if (pg.rows != mask.rows || pg.cols != mask.cols) {
            throw ConfigError("pillar mask is " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                              " but the box footprint grid is " + std::to_string(pg.rows) + "x" +
                              std::to_string(pg.cols));
        }
        for (std::size_t idx : target) {
            const FootprintCoords fc = box_frame_coords(cloud.points.at(idx), box);
            const CellIndex cell = pillar_index_clamped(fc.u, fc.v, pg);
            if (mask.at(cell.row, cell.col)) out.push_back(idx);
        }
        return out;
    }
    const BoxFrameGrid grid{mask.rows, mask.cols};
    for (std::size_t idx : target) {
        const Point& p = cloud.points.at(idx);
        const CellIndex cell = adaptive_index(std::span<const Point>(&p, 1), box, grid).cells.front();
        if (mask.at(cell.row, cell.col)) out.push_back(idx);
    }
    return out;
}

std::vector<std::size_t> select(std::span<const std::size_t> cands, int budget, SelectionStrategy strategy,
                                std::span<const double> criticality, Rng& rng) {
    if (budget < 0) throw ConfigError("point budget must be >= 0");
    const std::size_t take = std::min(static_cast<std::size_t>(budget), cands.size());
    if (strategy == SelectionStrategy::CriticalFirst) {
        if (criticality.size() != cands.size()) {
            throw ConfigError("critical-first selection needs one criticality value per candidate");
        }
        std::vector<std::size_t> order(cands.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (criticality[a] != criticality[b]) return criticality[a] > criticality[b];
            return cands[a] < cands[b];
        });
        std::vector<std::size_t> out;
        out.reserve(take);
        for (std::size_t i = 0; i < take; ++i) out.push_back(cands[order[i]]);
        return out;
    }
    std::vector<std::size_t> pool(cands.begin(), cands.end());
    std::sort(pool.begin(), pool.end());
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

std::optional<Point> try_radial_shift(const Point& p, double d) {
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (r == 0.0 || !(r + d > 0.0)) return std::nullopt;
    if (d == 0.0) return p;
    // Same ray, new radius: equivalent to shifting R in spherical coordinates
    // and converting back.
    const double scale = (r + d) / r;
    return Point{p.x * scale, p.y * scale, p.z * scale, p.intensity};
}

Point radial_shift(const Point& p, double d) {
    auto moved = try_radial_shift(p, d);
    if (!moved) throw ConfigError("radial shift would place the point at or behind the sensor");
    return *moved;
}

std::vector<double> point_criticality(const PointCloud& cloud, std::span<const std::size_t> indices,
                                      const BoundingBox& box, const SaliencyMap& map) {
    const auto pts = gather(cloud, indices);
    const auto idx = adaptive_index(pts, box, BoxFrameGrid{map.rows, map.cols});
    std::vector<double> out;
    out.reserve(pts.size());
    for (const CellIndex& c : idx.cells) out.push_back(map.at(c.row, c.col));
    return out;
}

AttackResult apply(const Scene& scene, std::size_t box_index, const AttackConfig& config) {
    const std::size_t one[1] = {box_index};
    return apply_multi(scene, one, config, 1);
}

AttackResult apply_multi(const Scene& scene, std::span<const std::size_t> box_indices,
                         const AttackConfig& config, int jobs) {
    validate(config);
    for (std::size_t b : box_indices) {
        if (b >= scene.boxes.size()) throw ConfigError("box index " + std::to_string(b) + " not in scene");
    }
    const Extraction extraction = extract(scene);
    // Deterministic processing order regardless of how the caller listed boxes.
    std::vector<std::size_t> order(box_indices.begin(), box_indices.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    std::vector<ObjectOutcome> outcomes(order.size());
    parallel_for(order.size(), jobs,
                 [&](std::size_t i) { outcomes[i] = attack_object(scene, extraction, order[i], config); });

    AttackResult result;
    result.adversarial = scene;
    for (std::size_t b : box_indices) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(order.begin(), order.end(), b) - order.begin());
        result.candidate_counts.push_back(outcomes[pos].candidate_count);
    }
    for (const ObjectOutcome& o : outcomes) {
        for (const ShiftRecord& r : o.records) {
            if (r.applied) result.adversarial.cloud.points[r.index] = r.shifted;
            result.record.entries.push_back(r);
        }
    }
    return result;
}

std::string records_to_jsonl(const PerturbationRecord& record) {
    std::ostringstream out;
    for (const ShiftRecord& r : record.entries) {
        nlohmann::ordered_json j;
        j["object"] = r.object;
        j["index"] = r.index;
        j["original"] = {r.original.x, r.original.y, r.original.z};
        j["shift"] = r.shift;
        j["shifted"] = {r.shifted.x, r.shifted.y, r.shifted.z};
        j["status"] = r.applied ? "ok" : "unshifted";
        out << j.dump() << '\n';
    }
    return out.str();
}

}  // namespace vplidar
