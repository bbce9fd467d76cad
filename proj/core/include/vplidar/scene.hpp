#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vplidar {

/// A single LiDAR return in the sensor frame (x forward, y left, z up).
/// Intensity is carried through every operation unchanged.
struct Point {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double intensity = 0.0;

    bool operator==(const Point&) const = default;
};

struct PointCloud {
    std::vector<Point> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
    const Point& operator[](std::size_t i) const { return points[i]; }
    Point& operator[](std::size_t i) { return points[i]; }

    bool operator==(const PointCloud&) const = default;
};

struct SphericalCoord {
    double radius = 0.0;
    double azimuth = 0.0;    // [-pi, pi)
    double elevation = 0.0;  // [-pi/2, pi/2]
};

enum class ObjectClass { Car, Pedestrian, Cyclist };

std::string_view to_string(ObjectClass c);
ObjectClass parse_object_class(std::string_view name);  // case-insensitive

struct BoundingBox {
    double cx = 0.0;
    double cy = 0.0;
    double cz = 0.0;
    double length = 1.0;  // along heading
    double width = 1.0;
    double height = 1.0;
    double yaw = 0.0;  // about z, [-pi, pi)
    ObjectClass cls = ObjectClass::Car;

    bool operator==(const BoundingBox&) const = default;
};

struct Scene {
    std::string id;
    PointCloud cloud;
    std::vector<BoundingBox> boxes;

    bool operator==(const Scene&) const = default;
};

/// Per-object point partition of a scene. `targets[i]` holds the indices of
/// points inside `boxes[i]`; everything else is in `background`.
struct Extraction {
    std::vector<std::vector<std::size_t>> targets;
    std::vector<std::size_t> background;
};

/// Wraps an angle into [-pi, pi).
double normalize_angle(double a);

/// Throws ConfigError when dimensions are non-positive or values non-finite.
void validate(const BoundingBox& box);
void validate(const Point& p);

SphericalCoord to_spherical(const Point& p);
/// Intensity is not part of the spherical representation; it is taken from
/// `intensity`.
Point from_spherical(const SphericalCoord& s, double intensity = 0.0);

/// Box-centred coordinates: (along length, along width, up), origin at the box
/// centre.
struct LocalCoords {
    double u = 0.0;
    double v = 0.0;
    double t = 0.0;
};
LocalCoords to_box_local(const Point& p, const BoundingBox& box);
Point from_box_local(const LocalCoords& c, const BoundingBox& box, double intensity = 0.0);

/// Half-open membership: [-l/2, l/2) x [-w/2, w/2) x [-h/2, h/2) in the box frame.
bool box_contains(const BoundingBox& box, const Point& p);

Extraction extract(const Scene& scene);

/// Points of `cloud` selected by `indices`, in index order.
std::vector<Point> gather(const PointCloud& cloud, std::span<const std::size_t> indices);

/// Footprint corners in world frame, counter-clockwise, starting at the
/// box-frame corner (-l/2, -w/2).
struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};
std::vector<Vec2> footprint_corners(const BoundingBox& box);

}  // namespace vplidar
