#pragma once

#include <vector>

#include "vplidar/scene.hpp"

namespace vplidar {

/// Signed area of a simple polygon (counter-clockwise positive).
double polygon_area(const std::vector<Vec2>& poly);

/// Intersection of two convex polygons, both counter-clockwise.
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip);

/// Intersection area of the yaw-aware ground-plane footprints.
double bev_intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Bird's-eye-view IOU in [0, 1].
double bev_iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace vplidar
