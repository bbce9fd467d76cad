#include "vplidar/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "vplidar/error.hpp"
#include "vplidar/iou.hpp"
#include "vplidar/rng.hpp"

namespace vplidar {
namespace {

struct Face {
    // Box-local description: centre, outward normal, two tangent half extents.
    LocalCoords centre;
    LocalCoords normal;
    LocalCoords axis_a;
    LocalCoords axis_b;
    double half_a = 0.0;
    double half_b = 0.0;
    double weight = 0.0;
};

std::vector<Face> visible_faces(const BoundingBox& box) {
    const double hl = 0.5 * box.length;
    const double hw = 0.5 * box.width;
    const double hh = 0.5 * box.height;
    std::vector<Face> faces = {
        {{hl, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, hw, hh},
        {{-hl, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 1}, hw, hh},
        {{0, hw, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}, hl, hh},
        {{0, -hw, 0}, {0, -1, 0}, {1, 0, 0}, {0, 0, 1}, hl, hh},
        {{0, 0, hh}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0}, hl, hw},
    };
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    std::vector<Face> out;
    for (Face f : faces) {
        const Point centre = from_box_local(f.centre, box);
        const double nx = c * f.normal.u - s * f.normal.v;
        const double ny = s * f.normal.u + c * f.normal.v;
        const double nz = f.normal.t;
        const double dist = std::sqrt(centre.x * centre.x + centre.y * centre.y + centre.z * centre.z);
        if (dist == 0.0) continue;
        // cosine between the outward normal and the direction back to the sensor
        const double cos_inc = -(nx * centre.x + ny * centre.y + nz * centre.z) / dist;
        if (cos_inc <= 0.0) continue;
        f.weight = 4.0 * f.half_a * f.half_b * cos_inc;
        out.push_back(f);
    }
    return out;
}

}  // namespace

SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.id.empty()) throw ConfigError("synthetic scene id must be non-empty");
    if (spec.background_points < 0) throw ConfigError("background point count must be >= 0");
    if (!(spec.surface_inset > 0.0)) throw ConfigError("surface inset must be positive");
    for (const SynthObject& obj : spec.objects) {
        if (obj.points <= 0) throw ConfigError("points per object must be positive");
        validate(obj.box);
    }

    Rng rng(seed);
    SynthScene out;
    out.scene.id = spec.id;
    for (std::size_t oi = 0; oi < spec.objects.size(); ++oi) {
        const SynthObject& obj = spec.objects[oi];
        out.scene.boxes.push_back(obj.box);
        const auto faces = visible_faces(obj.box);
        if (faces.empty()) throw ConfigError("object " + std::to_string(oi) + " has no visible face");
        double total = 0.0;
        for (const Face& f : faces) total += f.weight;
        const double min_inset = std::min(0.005, 0.5 * spec.surface_inset);
        const double max_inset = std::min(spec.surface_inset,
                                          0.45 * std::min({obj.box.length, obj.box.width, obj.box.height}));
        for (int k = 0; k < obj.points; ++k) {
            double pick = uniform01(rng) * total;
            const Face* face = &faces.back();
            for (const Face& f : faces) {
                if (pick < f.weight) {
                    face = &f;
                    break;
                }
                pick -= f.weight;
            }
            constexpr double shrink = 1.0 - 1e-6;
            const double a = uniform_real(rng, -face->half_a, face->half_a) * shrink;
            const double b = uniform_real(rng, -face->half_b, face->half_b) * shrink;
            const double inset = uniform_real(rng, min_inset, max_inset);
            LocalCoords lc{face->centre.u + a * face->axis_a.u + b * face->axis_b.u -
                               inset * face->normal.u,
                           face->centre.v + a * face->axis_a.v + b * face->axis_b.v -
                               inset * face->normal.v,
                           face->centre.t + a * face->axis_a.t + b * face->axis_b.t -
                               inset * face->normal.t};
            out.scene.cloud.points.push_back(from_box_local(lc, obj.box, uniform01(rng)));
            out.membership.push_back(static_cast<int>(oi));
        }
    }

    int placed = 0;
    while (placed < spec.background_points) {
        const double x = uniform_real(rng, -spec.background_extent, spec.background_extent);
        const double y = uniform_real(rng, -spec.background_extent, spec.background_extent);
        const double intensity = uniform01(rng);
        if (x * x + y * y < 4.0) continue;
        const Point p{x, y, spec.ground_z, intensity};
        bool inside = false;
        for (const BoundingBox& box : out.scene.boxes) {
            // reject anything the extraction could attribute to an object
            LocalCoords lc = to_box_local(p, box);
            if (std::abs(lc.u) <= 0.5 * box.length + 0.05 && std::abs(lc.v) <= 0.5 * box.width + 0.05 &&
                std::abs(lc.t) <= 0.5 * box.height + 0.05) {
                inside = true;
                break;
            }
        }
        if (inside) continue;
        out.scene.cloud.points.push_back(p);
        out.membership.push_back(-1);
        ++placed;
    }
    return out;
}

SynthSpec random_car_spec(const CarSceneOptions& options, std::uint64_t seed, std::string id) {
    if (options.cars < 0) throw ConfigError("car count must be >= 0");
    if (options.points_per_car <= 0) throw ConfigError("points per car must be positive");
    if (!(options.min_range > 0.0) || !(options.max_range > options.min_range)) {
        throw ConfigError("car range must satisfy 0 < min < max");
    }
    Rng rng(derive_seed(seed, 0x6c61796f7574ULL));
    SynthSpec spec;
    spec.id = std::move(id);
    spec.background_points = options.background_points;
    const double max_bearing = options.max_bearing_deg * std::numbers::pi / 180.0;
    int attempts = 0;
    int stuck = 0;
    while (static_cast<int>(spec.objects.size()) < options.cars) {
        if (++attempts > 20000) throw ConfigError("cannot place the requested number of cars");
        // a bad early placement can leave no room; start the layout over
        if (++stuck > 500) {
            spec.objects.clear();
            stuck = 0;
        }
        BoundingBox box;
        box.length = uniform_real(rng, 3.6, 4.8);
        box.width = uniform_real(rng, 1.5, 1.9);
        box.height = uniform_real(rng, 1.4, 1.7);
        const double range = uniform_real(rng, options.min_range, options.max_range);
        const double bearing = uniform_real(rng, -max_bearing, max_bearing);
        box.cx = range * std::cos(bearing);
        box.cy = range * std::sin(bearing);
        box.cz = spec.ground_z + 0.5 * box.height;
        const double heading = uniform01(rng) < 0.5 ? 0.0 : std::numbers::pi;
        box.yaw = normalize_angle(heading + uniform_real(rng, -0.25, 0.25));
        box.cls = ObjectClass::Car;
        BoundingBox grown = box;
        grown.length += 0.3;
        grown.width += 0.3;
        bool clash = false;
        for (const SynthObject& other : spec.objects) {
            if (bev_intersection_area(grown, other.box) > 0.0) {
                clash = true;
                break;
            }
        }
        if (clash) continue;
        spec.objects.push_back({box, options.points_per_car});
        stuck = 0;
    }
    return spec;
}

std::vector<Scene> synth_car_scenes(int count, const CarSceneOptions& options, std::uint64_t seed,
                                    const std::string& prefix) {
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "%04d", i);
        const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
        SynthSpec spec = random_car_spec(options, s, prefix + suffix);
        scenes.push_back(synth_scene(spec, derive_seed(s, 1)).scene);
    }
    return scenes;
}

}  // namespace vplidar
