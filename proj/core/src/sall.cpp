#include "vplidar/sall.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "vplidar/error.hpp"
#include "vplidar/iou.hpp"
#include "vplidar/parallel.hpp"
#include "vplidar/perturb.hpp"

namespace vplidar {
namespace {

double focus_score(Detector& detector, const Scene& scene, const FocusRegion& focus) {
    const auto preds = detector.predict(scene, scene.boxes);
    return iou_filter(preds, focus).logit;
}

struct ObjectJob {
    std::size_t scene = 0;
    std::size_t object = 0;
};

struct ObjectOutput {
    SallObjectReport report;
    SaliencyMap map;
    bool used = false;
};

}  // namespace

std::string_view to_string(BaselineKind kind) {
    return kind == BaselineKind::RadialPushout ? "radial_pushout" : "box_centroid";
}

BaselineKind parse_baseline(std::string_view name) {
    std::string lower(name);
    for (char& c : lower) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "radial_pushout" || lower == "radial") return BaselineKind::RadialPushout;
    if (lower == "box_centroid" || lower == "centroid") return BaselineKind::BoxCentroid;
    throw ConfigError("unknown IG baseline '" + std::string(name) + "'");
}

std::string_view to_string(QuadratureRule rule) {
    return rule == QuadratureRule::Right ? "right" : "midpoint";
}

QuadratureRule parse_quadrature_rule(std::string_view name) {
    std::string lower(name);
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "midpoint") return QuadratureRule::Midpoint;
    if (lower == "right") return QuadratureRule::Right;
    throw ConfigError("unknown IG quadrature rule '" + std::string(name) + "'");
}

void validate(const IGConfig& config) {
    if (config.steps < 1) throw ConfigError("IG steps must be >= 1");
    if (config.baseline == BaselineKind::RadialPushout && !(config.displacement > 0.0)) {
        throw ConfigError("radial push-out displacement must be positive");
    }
}

double quantize_attribution(double value) {
    return std::ldexp(std::nearbyint(std::ldexp(value, 40)), -40);
}

double AttributionVector::sum() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

std::vector<Point> ig_baseline(std::span<const Point> points, const BoundingBox& box, const IGConfig& config) {
    std::vector<Point> out;
    out.reserve(points.size());
    for (const Point& p : points) {
        if (config.baseline == BaselineKind::BoxCentroid) {
            out.push_back(Point{box.cx, box.cy, box.cz, p.intensity});
        } else {
            out.push_back(radial_shift(p, config.displacement));
        }
    }
    return out;
}

Prediction iou_filter(std::span<const Prediction> predictions, const FocusRegion& focus) {
    double best_iou = 0.0;
    const Prediction* best = nullptr;
    for (const Prediction& p : predictions) {
        const double iou = bev_iou(p.box, focus.box);
        if (iou > best_iou) {
            best_iou = iou;
            best = &p;
        }
    }
    if (best == nullptr) throw NoMatchError("no prediction overlaps the focus box");
    return *best;
}

AttributionVector ig_attribute(const Scene& scene, std::size_t target, Detector& detector, const IGConfig& config) {
    validate(config);
    if (target >= scene.boxes.size()) throw ConfigError("box index " + std::to_string(target) + " not in scene");
    const BoundingBox& box = scene.boxes[target];
    const Extraction extraction = extract(scene);

    AttributionVector attr;
    attr.scene_id = scene.id;
    attr.object = target;
    attr.indices = extraction.targets[target];
    attr.steps = config.steps;
    const std::size_t n = attr.indices.size();

    const auto input = gather(scene.cloud, attr.indices);
    const auto base = ig_baseline(input, box, config);
    const FocusRegion focus{box, box.cls, {0.0, 1e9}};

    Scene work = scene;
    auto place = [&](double alpha) {
        for (std::size_t i = 0; i < n; ++i) {
            Point& q = work.cloud.points[attr.indices[i]];
            q.x = base[i].x + alpha * (input[i].x - base[i].x);
            q.y = base[i].y + alpha * (input[i].y - base[i].y);
            q.z = base[i].z + alpha * (input[i].z - base[i].z);
        }
    };

    attr.score_input = focus_score(detector, scene, focus);
    place(0.0);
    attr.score_baseline = focus_score(detector, work, focus);

    std::vector<std::array<double, 3>> grad_sum(n, {0.0, 0.0, 0.0});
    for (int k = 1; k <= config.steps; ++k) {
        const double alpha = config.rule == QuadratureRule::Right
                                 ? static_cast<double>(k) / config.steps
                                 : (k - 0.5) / config.steps;
        place(alpha);
        ScoreGradient sg;
        try {
            const auto preds = detector.predict(work, scene.boxes);
            const Prediction best = iou_filter(preds, focus);
            sg = detector.score_gradient(work, best.box, attr.indices);
        } catch (const NoMatchError& e) {
            throw NoMatchError("IG step " + std::to_string(k) + "/" + std::to_string(config.steps) + ": " + e.what());
        } catch (const DetectorError& e) {
            throw DetectorError("IG step " + std::to_string(k) + "/" + std::to_string(config.steps) + ": " +
                                e.what());
        }
        if (sg.gradient.size() != n) {
            throw DetectorError("IG step " + std::to_string(k) + ": detector returned " +
                                std::to_string(sg.gradient.size()) + " gradients for " + std::to_string(n) +
                                " points");
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (int d = 0; d < 3; ++d) {
                const double g = sg.gradient[i][d];
                if (!std::isfinite(g)) {
                    throw DetectorError("IG step " + std::to_string(k) + ": non-finite gradient for point " +
                                        std::to_string(attr.indices[i]));
                }
                grad_sum[i][d] += g;
            }
        }
    }

    attr.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = input[i].x - base[i].x;
        const double dy = input[i].y - base[i].y;
        const double dz = input[i].z - base[i].z;
        const double v = (dx * grad_sum[i][0] + dy * grad_sum[i][1] + dz * grad_sum[i][2]) / config.steps;
        attr.values[i] = quantize_attribution(v);
    }
    attr.residual = std::abs(attr.sum() - (attr.score_input - attr.score_baseline));
    return attr;
}

SaliencyMap voxelize_attribution(const AttributionVector& attr, const PointCloud& cloud, const BoundingBox& box,
                                 const BoxFrameGrid& grid) {
    if (attr.values.size() != attr.indices.size()) {
        throw ConfigError("attribution vector has " + std::to_string(attr.values.size()) + " values for " +
                          std::to_string(attr.indices.size()) + " indices");
    }
    SaliencyMap map(grid.rows, grid.cols, SaliencyKind::PerObject);
    map.cls = box.cls;
    map.k = 1;
    map.ig_steps = attr.steps;
    const auto pts = gather(cloud, attr.indices);
    const auto idx = adaptive_index(pts, box, grid);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        map.at(idx.cells[i].row, idx.cells[i].col) += attr.values[i];
    }
    return map;
}

SaliencyMap aggregate(std::span<const SaliencyMap> maps) {
    if (maps.empty()) throw ConfigError("nothing to aggregate");
    const SaliencyMap& first = maps.front();
    SaliencyMap out(first.rows, first.cols, SaliencyKind::Universal);
    out.cls = first.cls;
    out.range_m = first.range_m;
    out.ig_steps = first.ig_steps;
    out.baseline = first.baseline;
    out.k = 0;
    for (std::size_t m = 0; m < maps.size(); ++m) {
        const SaliencyMap& s = maps[m];
        if (s.rows != first.rows || s.cols != first.cols) {
            throw ConfigError("map " + std::to_string(m) + " is " + std::to_string(s.rows) + "x" +
                              std::to_string(s.cols) + ", expected " + std::to_string(first.rows) + "x" +
                              std::to_string(first.cols));
        }
        if (s.cls != first.cls) throw ConfigError("map " + std::to_string(m) + " has a different object class");
        if (s.range_m != first.range_m) throw ConfigError("map " + std::to_string(m) + " has a different range bin");
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += s.values[i];
        out.k += s.k;
    }
    return out;
}

bool in_focus(const BoundingBox& box, const SallOptions& options) {
    if (box.cls != options.cls) return false;
    if (options.front_only && !(box.cx > 0.0)) return false;
    const double r = std::hypot(box.cx, box.cy);
    return r >= options.range_m[0] && r < options.range_m[1];
}

SallResult run_sall(std::span<const Scene> scenes, Detector& detector, const SallOptions& options) {
    validate(options.ig);
    if (!(options.range_m[0] < options.range_m[1])) throw ConfigError("range bin must satisfy lo < hi");

    std::vector<ObjectJob> jobs;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t b = 0; b < scenes[s].boxes.size(); ++b) {
            if (in_focus(scenes[s].boxes[b], options)) jobs.push_back({s, b});
        }
    }
    if (jobs.empty()) throw ConfigError("no objects match the class and range filters");
    // Stable: duplicated scene ids keep their list order.
    std::stable_sort(jobs.begin(), jobs.end(), [&](const ObjectJob& a, const ObjectJob& b) {
        const auto& ia = scenes[a.scene].id;
        const auto& ib = scenes[b.scene].id;
        if (ia != ib) return ia < ib;
        return a.object < b.object;
    });

    std::vector<ObjectOutput> outputs(jobs.size());
    parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
        const Scene& scene = scenes[jobs[j].scene];
        const BoundingBox& box = scene.boxes[jobs[j].object];
        ObjectOutput& out = outputs[j];
        out.report.scene_id = scene.id;
        out.report.object = jobs[j].object;
        AttributionVector attr;
        try {
            attr = ig_attribute(scene, jobs[j].object, detector, options.ig);
        } catch (const NoMatchError&) {
            out.report.status = "no_match";
            return;
        }
        out.report.points = attr.indices.size();
        out.report.score_input = attr.score_input;
        out.report.score_baseline = attr.score_baseline;
        out.report.attribution_sum = attr.sum();
        out.report.residual = attr.residual;
        if (attr.indices.empty()) {
            out.report.status = "no_points";
            return;
        }
        out.report.status = "ok";
        out.map = voxelize_attribution(attr, scene.cloud, box, options.grid);
        out.map.range_m = options.range_m;
        out.map.baseline = std::string(to_string(options.ig.baseline));
        out.used = true;
    });

    SallResult result;
    std::vector<SaliencyMap> maps;
    for (ObjectOutput& o : outputs) {
        result.objects.push_back(o.report);
        if (o.used) {
            maps.push_back(std::move(o.map));
            ++result.used;
        } else {
            ++result.skipped;
        }
    }
    if (maps.empty()) throw NoMatchError("every qualifying object was skipped");
    result.universal = aggregate(maps);
    return result;
}

}  // namespace vplidar
