#include "vplidar/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "vplidar/error.hpp"

namespace vplidar {

std::string_view to_string(ObjectClass c) {
    switch (c) {
        case ObjectClass::Car:
            return "Car";
        case ObjectClass::Pedestrian:
            return "Pedestrian";
        case ObjectClass::Cyclist:
            return "Cyclist";
    }
    return "Car";
}

ObjectClass parse_object_class(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "car") return ObjectClass::Car;
    if (lower == "pedestrian") return ObjectClass::Pedestrian;
    if (lower == "cyclist") return ObjectClass::Cyclist;
    throw ConfigError("unknown object class '" + std::string(name) + "'");
}

double normalize_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(a + std::numbers::pi, two_pi);
    if (r < 0.0) r += two_pi;
    r -= std::numbers::pi;
    // fmod can land exactly on +pi after the shift for inputs just below -pi
    if (r >= std::numbers::pi) r -= two_pi;
    return r;
}

void validate(const BoundingBox& box) {
    if (!std::isfinite(box.cx) || !std::isfinite(box.cy) || !std::isfinite(box.cz) ||
        !std::isfinite(box.yaw)) {
        throw ConfigError("bounding box has a non-finite centre or yaw");
    }
    if (!(box.length > 0.0) || !(box.width > 0.0) || !(box.height > 0.0) ||
        !std::isfinite(box.length) || !std::isfinite(box.width) || !std::isfinite(box.height)) {
        throw ConfigError("bounding box dimensions must be positive and finite");
    }
}

void validate(const Point& p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw ConfigError("point has non-finite coordinates");
    }
    if (!(p.intensity >= 0.0 && p.intensity <= 1.0)) {
        throw ConfigError("point intensity outside [0, 1]");
    }
}

SphericalCoord to_spherical(const Point& p) {
    const double rxy2 = p.x * p.x + p.y * p.y;
    const double r = std::sqrt(rxy2 + p.z * p.z);
    if (r == 0.0) throw ConfigError("spherical coordinates are undefined at the origin");
    SphericalCoord s;
    s.radius = r;
    s.azimuth = normalize_angle(std::atan2(p.y, p.x));
    s.elevation = std::atan2(p.z, std::sqrt(rxy2));
    return s;
}

Point from_spherical(const SphericalCoord& s, double intensity) {
    const double ce = std::cos(s.elevation);
    return Point{s.radius * ce * std::cos(s.azimuth), s.radius * ce * std::sin(s.azimuth),
                 s.radius * std::sin(s.elevation), intensity};
}

LocalCoords to_box_local(const Point& p, const BoundingBox& box) {
    const double dx = p.x - box.cx;
    const double dy = p.y - box.cy;
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    return LocalCoords{c * dx + s * dy, -s * dx + c * dy, p.z - box.cz};
}

Point from_box_local(const LocalCoords& lc, const BoundingBox& box, double intensity) {
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    return Point{box.cx + c * lc.u - s * lc.v, box.cy + s * lc.u + c * lc.v, box.cz + lc.t,
                 intensity};
}

bool box_contains(const BoundingBox& box, const Point& p) {
    const LocalCoords lc = to_box_local(p, box);
    const double hl = 0.5 * box.length;
    const double hw = 0.5 * box.width;
    const double hh = 0.5 * box.height;
    return lc.u >= -hl && lc.u < hl && lc.v >= -hw && lc.v < hw && lc.t >= -hh && lc.t < hh;
}

Extraction extract(const Scene& scene) {
    Extraction out;
    out.targets.resize(scene.boxes.size());
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
        const Point& p = scene.cloud[i];
        std::size_t best = scene.boxes.size();
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
            const BoundingBox& box = scene.boxes[b];
            if (!box_contains(box, p)) continue;
            const double dx = p.x - box.cx;
            const double dy = p.y - box.cy;
            const double dz = p.z - box.cz;
            const double d2 = dx * dx + dy * dy + dz * dz;
            // strict < keeps the lower box index on ties
            if (d2 < best_d2) {
                best_d2 = d2;
                best = b;
            }
        }
        if (best < scene.boxes.size()) {
            out.targets[best].push_back(i);
        } else {
            out.background.push_back(i);
        }
    }
    return out;
}

std::vector<Point> gather(const PointCloud& cloud, std::span<const std::size_t> indices) {
    std::vector<Point> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(cloud.points.at(i));
    return out;
}

std::vector<Vec2> footprint_corners(const BoundingBox& box) {
    const double hl = 0.5 * box.length;
    const double hw = 0.5 * box.width;
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    const double local[4][2] = {{-hl, -hw}, {hl, -hw}, {hl, hw}, {-hl, hw}};
    std::vector<Vec2> out;
    out.reserve(4);
    for (const auto& l : local) {
        out.push_back({box.cx + c * l[0] - s * l[1], box.cy + s * l[0] + c * l[1]});
    }
    return out;
}

}  // namespace vplidar
