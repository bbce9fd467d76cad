#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplidar/detector.hpp"
#include "vplidar/patch.hpp"
#include "vplidar/perturb.hpp"
#include "vplidar/scene.hpp"

namespace vplidar {

struct AttackOutcome {
    std::string scene_id;
    std::size_t object = 0;
    bool detected_before = false;
    bool detected_after = false;
    double iou_after = 0.0;  // best post-attack IOU among confident predictions of the same class
    int budget = 0;
    PatchKind patch = PatchKind::WholeArea;
};

/// Hidden objects over objects detected before the attack. 0 when nothing
/// was detected before. Throws ConfigError on empty input.
double asr(std::span<const AttackOutcome> outcomes);

/// Objects detected after the attack over all targeted objects.
double recall(std::span<const AttackOutcome> outcomes);

struct MatchRule {
    double iou_threshold = 0.7;
    double probability_threshold = 0.5;
};

/// Best IOU with `box` over predictions of the same class with probability
/// >= the rule's threshold; 0 when there are none.
double best_match_iou(std::span<const Prediction> predictions, const BoundingBox& box, const MatchRule& rule);
bool matched(std::span<const Prediction> predictions, const BoundingBox& box, const MatchRule& rule);

/// Where "detected before" comes from: ground-truth labels count as
/// detections, or the detector is run on the benign scene.
enum class BoxSource { GroundTruth, Detector };

std::string_view to_string(BoxSource source);
BoxSource parse_box_source(std::string_view name);

struct SweepConfig {
    std::vector<PatchKind> patches{PatchKind::WholeArea};
    std::vector<SelectionStrategy> strategies{SelectionStrategy::RandomSelection};
    std::vector<int> budgets{0, 10, 50, 100, 150, 200};
    AttackConfig attack{};  // patch, strategy, budget and seed are overridden per run
    ObjectClass target_class = ObjectClass::Car;
    double iou_threshold = 0.7;
    BoxSource box_source = BoxSource::GroundTruth;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct SweepRow {
    PatchKind patch = PatchKind::WholeArea;
    SelectionStrategy strategy = SelectionStrategy::RandomSelection;
    int budget = 0;
    double asr = 0.0;
    double recall = 0.0;
    std::size_t n_objects = 0;
    std::uint64_t seed = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // sorted by (patch, strategy, budget)
    std::vector<AttackOutcome> outcomes;  // row-major with rows, objects in scene order
};

/// Every (patch, strategy, budget) combination; each targeted object is
/// attacked on its own and re-scored with the scene's boxes as candidates.
SweepResult sweep(std::span<const Scene> scenes, Detector& detector, const SweepConfig& config);

inline constexpr const char* kSweepCsvHeader = "patch,strategy,budget,asr,recall,n_objects,seed";

/// Header line plus one line per row; rates printed with %.17g.
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace vplidar
