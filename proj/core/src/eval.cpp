#include "vplidar/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "vplidar/error.hpp"
#include "vplidar/iou.hpp"
#include "vplidar/parallel.hpp"

namespace vplidar {
namespace {

struct Combo {
    PatchKind patch;
    SelectionStrategy strategy;
    int budget;
};

std::string run_context(const Combo& c, const Scene& scene, std::size_t object) {
    return "scene " + scene.id + " object " + std::to_string(object) + " patch " +
           std::string(to_string(c.patch)) + " strategy " + std::string(to_string(c.strategy)) + " budget " +
           std::to_string(c.budget);
}

}  // namespace

double asr(std::span<const AttackOutcome> outcomes) {
    if (outcomes.empty()) throw ConfigError("ASR of an empty outcome set");
    std::size_t before = 0;
    std::size_t hidden = 0;
    for (const AttackOutcome& o : outcomes) {
        if (!o.detected_before) continue;
        ++before;
        if (!o.detected_after) ++hidden;
    }
    return before == 0 ? 0.0 : static_cast<double>(hidden) / static_cast<double>(before);
}

double recall(std::span<const AttackOutcome> outcomes) {
    if (outcomes.empty()) throw ConfigError("recall of an empty outcome set");
    const auto after = std::count_if(outcomes.begin(), outcomes.end(),
                                     [](const AttackOutcome& o) { return o.detected_after; });
    return static_cast<double>(after) / static_cast<double>(outcomes.size());
}

double best_match_iou(std::span<const Prediction> predictions, const BoundingBox& box, const MatchRule& rule) {
    double best = 0.0;
    for (const Prediction& p : predictions) {
        if (p.box.cls != box.cls || p.probability < rule.probability_threshold) continue;
        best = std::max(best, bev_iou(p.box, box));
    }
    return best;
}

bool matched(std::span<const Prediction> predictions, const BoundingBox& box, const MatchRule& rule) {
    return best_match_iou(predictions, box, rule) >= rule.iou_threshold;
}

std::string_view to_string(BoxSource source) {
    return source == BoxSource::GroundTruth ? "gt" : "detector";
}

BoxSource parse_box_source(std::string_view name) {
    std::string lower(name);
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "gt" || lower == "ground_truth") return BoxSource::GroundTruth;
    if (lower == "detector") return BoxSource::Detector;
    throw ConfigError("unknown box source '" + std::string(name) + "'");
}

SweepResult sweep(std::span<const Scene> scenes, Detector& detector, const SweepConfig& config) {
    if (config.patches.empty() || config.strategies.empty() || config.budgets.empty()) {
        throw ConfigError("sweep needs at least one patch, strategy and budget");
    }
    if (scenes.empty()) throw ConfigError("sweep needs at least one scene");
    if (!(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0)) {
        throw ConfigError("IOU threshold must be in (0, 1]");
    }
    const MatchRule rule{config.iou_threshold, detector.threshold()};

    std::vector<Combo> combos;
    for (PatchKind p : config.patches) {
        for (SelectionStrategy s : config.strategies) {
            for (int b : config.budgets) combos.push_back({p, s, b});
        }
    }
    std::sort(combos.begin(), combos.end(), [](const Combo& a, const Combo& b) {
        if (a.patch != b.patch) return a.patch < b.patch;
        if (a.strategy != b.strategy) return a.strategy < b.strategy;
        return a.budget < b.budget;
    });
    combos.erase(std::unique(combos.begin(), combos.end(),
                             [](const Combo& a, const Combo& b) {
                                 return a.patch == b.patch && a.strategy == b.strategy && a.budget == b.budget;
                             }),
                 combos.end());
    for (const Combo& c : combos) {
        AttackConfig ac = config.attack;
        ac.patch = c.patch;
        ac.strategy = c.strategy;
        ac.budget = c.budget;
        validate(ac);
    }

    // Targets and their benign detection state, per scene.
    std::vector<std::vector<std::size_t>> targets(scenes.size());
    std::vector<std::vector<char>> before(scenes.size());
    parallel_for(scenes.size(), config.jobs, [&](std::size_t s) {
        const Scene& scene = scenes[s];
        for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
            if (scene.boxes[b].cls == config.target_class) targets[s].push_back(b);
        }
        if (targets[s].empty()) return;
        if (config.box_source == BoxSource::GroundTruth) {
            before[s].assign(targets[s].size(), 1);
            return;
        }
        const auto preds = detector.predict(scene, scene.boxes);
        for (std::size_t b : targets[s]) before[s].push_back(matched(preds, scene.boxes[b], rule) ? 1 : 0);
    });

    // One task per (combination, scene).
    std::vector<std::vector<AttackOutcome>> cells(combos.size() * scenes.size());
    parallel_for(cells.size(), config.jobs, [&](std::size_t t) {
        const Combo& c = combos[t / scenes.size()];
        const std::size_t s = t % scenes.size();
        const Scene& scene = scenes[s];
        AttackConfig ac = config.attack;
        ac.patch = c.patch;
        ac.strategy = c.strategy;
        ac.budget = c.budget;
        ac.seed = config.seed;
        for (std::size_t i = 0; i < targets[s].size(); ++i) {
            const std::size_t b = targets[s][i];
            AttackOutcome o;
            o.scene_id = scene.id;
            o.object = b;
            o.budget = c.budget;
            o.patch = c.patch;
            o.detected_before = before[s][i] != 0;
            try {
                const AttackResult res = apply(scene, b, ac);
                const auto preds = detector.predict(res.adversarial, scene.boxes);
                o.iou_after = best_match_iou(preds, scene.boxes[b], rule);
            } catch (const DetectorError& e) {
                throw DetectorError(run_context(c, scene, b) + ": " + e.what());
            }
            o.detected_after = o.iou_after >= rule.iou_threshold;
            cells[t].push_back(o);
        }
    });

    SweepResult result;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        std::vector<AttackOutcome> row_outcomes;
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            const auto& cell = cells[ci * scenes.size() + s];
            row_outcomes.insert(row_outcomes.end(), cell.begin(), cell.end());
        }
        if (row_outcomes.empty()) throw ConfigError("no objects of the target class in the scene list");
        SweepRow row;
        row.patch = combos[ci].patch;
        row.strategy = combos[ci].strategy;
        row.budget = combos[ci].budget;
        row.asr = asr(row_outcomes);
        row.recall = recall(row_outcomes);
        row.n_objects = row_outcomes.size();
        row.seed = config.seed;
        result.rows.push_back(row);
        result.outcomes.insert(result.outcomes.end(), row_outcomes.begin(), row_outcomes.end());
    }
    return result;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << kSweepCsvHeader << '\n';
    char buf[64];
    for (const SweepRow& r : rows) {
        out << to_string(r.patch) << ',' << to_string(r.strategy) << ',' << r.budget << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.asr);
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.recall);
        out << buf << ',' << r.n_objects << ',' << r.seed << '\n';
    }
    return out.str();
}

}  // namespace vplidar
