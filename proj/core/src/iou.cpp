#include "vplidar/iou.hpp"

#include <algorithm>
#include <cmath>

namespace vplidar {
namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 line_intersection(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const double a1 = cross(q1, q2, p1);
    const double a2 = cross(q1, q2, p2);
    const double t = a1 / (a1 - a2);
    return {p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y)};
}

}  // namespace

double polygon_area(const std::vector<Vec2>& poly) {
    double area = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % poly.size()];
        area += a.x * b.y - a.y * b.x;
    }
    return 0.5 * area;
}

// Sutherland-Hodgman: clip `subject` against each edge of `clip`.
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip) {
    std::vector<Vec2> out = subject;
    for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
        const Vec2& c1 = clip[e];
        const Vec2& c2 = clip[(e + 1) % clip.size()];
        std::vector<Vec2> in;
        in.swap(out);
        for (std::size_t i = 0; i < in.size(); ++i) {
            const Vec2& cur = in[i];
            const Vec2& prev = in[(i + in.size() - 1) % in.size()];
            const bool cur_in = cross(c1, c2, cur) >= 0.0;
            const bool prev_in = cross(c1, c2, prev) >= 0.0;
            if (cur_in) {
                if (!prev_in) out.push_back(line_intersection(prev, cur, c1, c2));
                out.push_back(cur);
            } else if (prev_in) {
                out.push_back(line_intersection(prev, cur, c1, c2));
            }
        }
    }
    return out;
}

double bev_intersection_area(const BoundingBox& a, const BoundingBox& b) {
    const auto pa = footprint_corners(a);
    const auto pb = footprint_corners(b);
    const auto inter = clip_convex(pa, pb);
    if (inter.size() < 3) return 0.0;
    return std::abs(polygon_area(inter));
}

double bev_iou(const BoundingBox& a, const BoundingBox& b) {
    const double inter = bev_intersection_area(a, b);
    const double uni = a.length * a.width + b.length * b.width - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace vplidar
