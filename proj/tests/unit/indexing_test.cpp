#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vplidar/error.hpp"
#include "vplidar/indexing.hpp"
#include "vplidar/iou.hpp"
#include "vplidar/rng.hpp"

using namespace vplidar;
using vplidar::testing::car_box;

namespace {

TEST(PillarIndex, FloorsAndReportsRawIndex) {
    PillarGrid g;
    g.cell_length = 0.5;
    g.cell_width = 0.25;
    g.rows = 4;
    g.cols = 4;
    EXPECT_EQ(pillar_index(0.0, 0.0, g), (CellIndex{0, 0}));
    EXPECT_EQ(pillar_index(1.99, 0.99, g), (CellIndex{3, 3}));
    EXPECT_EQ(pillar_index(0.5, 0.25, g), (CellIndex{1, 1}));
    try {
        pillar_index(2.6, -0.1, g);
        FAIL();
    } catch (const IndexOutOfRange& e) {
        EXPECT_EQ(e.raw_row(), 5);
        EXPECT_EQ(e.raw_col(), -1);
    }
    EXPECT_EQ(pillar_index_clamped(2.6, -0.1, g), (CellIndex{3, 0}));
}

TEST(FootprintPillarGrid, CeilsToCoverBox) {
    BoundingBox b = car_box(0.0, 0.0);
    const PillarGrid g = footprint_pillar_grid(b, 0.16);
    EXPECT_EQ(g.rows, 25);  // 4.0 / 0.16
    EXPECT_EQ(g.cols, 12);  // ceil(1.8 / 0.16) = ceil(11.25)
    EXPECT_THROW(footprint_pillar_grid(b, 0.0), ConfigError);
}

TEST(BoxFrameCoords, OriginAtMinCorner) {
    BoundingBox b = car_box(10.0, 2.0, 0.7);
    const Point corner = from_box_local({-2.0, -0.9, 0.0}, b);
    const auto fc = box_frame_coords(corner, b);
    EXPECT_NEAR(fc.u, 0.0, 1e-12);
    EXPECT_NEAR(fc.v, 0.0, 1e-12);
    const auto far = box_frame_coords(from_box_local({2.0, 0.9, 0.3}, b), b);
    EXPECT_NEAR(far.u, 4.0, 1e-12);
    EXPECT_NEAR(far.v, 1.8, 1e-12);
}

TEST(AdaptiveIndex, AlignsDifferentlySizedBoxes) {
    // the same normalized position lands in the same cell for any box size
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unit(0.0, 1.0), size(1.0, 6.0), ang(-3.0, 3.0);
    const BoxFrameGrid grid{64, 32};
    for (int i = 0; i < 2000; ++i) {
        const double a = unit(rng), c = unit(rng);
        BoundingBox b1 = car_box(5.0, 1.0, ang(rng));
        BoundingBox b2 = car_box(-3.0, 7.0, ang(rng));
        b1.length = size(rng);
        b1.width = size(rng);
        b2.length = size(rng);
        b2.width = size(rng);
        // keep away from cell borders so rounding cannot split the pair
        const double ua = (std::floor(a * 64) + 0.5) / 64, vc = (std::floor(c * 32) + 0.5) / 32;
        const Point p1 = from_box_local({(ua - 0.5) * b1.length, (vc - 0.5) * b1.width, 0.0}, b1);
        const Point p2 = from_box_local({(ua - 0.5) * b2.length, (vc - 0.5) * b2.width, 0.0}, b2);
        const auto i1 = adaptive_index(std::span<const Point>(&p1, 1), b1, grid).cells[0];
        const auto i2 = adaptive_index(std::span<const Point>(&p2, 1), b2, grid).cells[0];
        ASSERT_EQ(i1, i2);
        ASSERT_EQ(i1.row, static_cast<int>(std::floor(a * 64)));
        ASSERT_EQ(i1.col, static_cast<int>(std::floor(c * 32)));
    }
}

TEST(AdaptiveIndex, FarEdgeClampsToLastCell) {
    BoundingBox b = car_box(0.0, 0.0);
    const Point edge = from_box_local({2.0, 0.9, 0.0}, b);
    const auto r = adaptive_index(std::span<const Point>(&edge, 1), b, {64, 32});
    EXPECT_EQ(r.cells[0], (CellIndex{63, 31}));
    EXPECT_DOUBLE_EQ(r.voxel.length, 4.0 / 64);
    EXPECT_DOUBLE_EQ(r.voxel.width, 1.8 / 32);
}

// Independent oracle: Monte Carlo estimate of the overlap.
double mc_iou(const BoundingBox& a, const BoundingBox& b, int n, std::uint64_t seed) {
    Rng rng(seed);
    const double R = std::max(std::hypot(a.length, a.width), std::hypot(b.length, b.width));
    const double x0 = std::min(a.cx, b.cx) - R, x1 = std::max(a.cx, b.cx) + R;
    const double y0 = std::min(a.cy, b.cy) - R, y1 = std::max(a.cy, b.cy) + R;
    int in_a = 0, in_b = 0, both = 0;
    auto inside = [](const BoundingBox& box, double x, double y) {
        const auto lc = to_box_local({x, y, box.cz, 0.0}, box);
        return std::abs(lc.u) < box.length / 2 && std::abs(lc.v) < box.width / 2;
    };
    for (int i = 0; i < n; ++i) {
        const double x = uniform_real(rng, x0, x1), y = uniform_real(rng, y0, y1);
        const bool ia = inside(a, x, y), ib = inside(b, x, y);
        in_a += ia;
        in_b += ib;
        both += ia && ib;
    }
    return static_cast<double>(both) / static_cast<double>(in_a + in_b - both);
}

TEST(BevIou, ClosedFormCases) {
    BoundingBox a = car_box(0.0, 0.0);
    EXPECT_DOUBLE_EQ(bev_iou(a, a), 1.0);
    BoundingBox b = a;
    b.cx = 2.0;  // half overlap along the length: 3.6 / (14.4 - 3.6)
    EXPECT_NEAR(bev_iou(a, b), 3.6 / 10.8, 1e-12);
    b.cx = 10.0;
    EXPECT_EQ(bev_iou(a, b), 0.0);
    // yaw by pi is the same footprint
    b = a;
    b.yaw = -std::numbers::pi;
    EXPECT_NEAR(bev_iou(a, b), 1.0, 1e-12);
    // height is ignored
    b = a;
    b.cz = 5.0;
    EXPECT_NEAR(bev_iou(a, b), 1.0, 1e-12);
}

TEST(BevIou, MatchesMonteCarlo) {
    Rng rng(42);
    for (int t = 0; t < 8; ++t) {
        BoundingBox a = car_box(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1), uniform_real(rng, -3, 3));
        BoundingBox b = car_box(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1), uniform_real(rng, -3, 3));
        b.length = uniform_real(rng, 1.0, 5.0);
        const double exact = bev_iou(a, b);
        EXPECT_NEAR(exact, mc_iou(a, b, 400000, 100 + t), 0.01) << "case " << t;
        EXPECT_NEAR(exact, bev_iou(b, a), 1e-12);
    }
}

TEST(PolygonArea, SignFollowsOrientation) {
    std::vector<Vec2> sq{{0, 0}, {2, 0}, {2, 1}, {0, 1}};
    EXPECT_DOUBLE_EQ(polygon_area(sq), 2.0);
    std::reverse(sq.begin(), sq.end());
    EXPECT_DOUBLE_EQ(polygon_area(sq), -2.0);
}

TEST(Rng, DerivedStreamsDiffer) {
    EXPECT_NE(derive_seed(7, 1), derive_seed(7, 2));
    EXPECT_NE(object_seed(7, "a", 0), object_seed(7, "a", 1));
    EXPECT_NE(object_seed(7, "a", 0), object_seed(7, "b", 0));
    EXPECT_EQ(object_seed(7, "a", 3), object_seed(7, "a", 3));
    // FNV-1a reference values
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, UniformBelowStaysInRangeAndCoversIt) {
    Rng rng(3);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = uniform_below(rng, 7);
        ASSERT_LT(v, 7u);
        ++hist[v];
    }
    for (int h : hist) EXPECT_NEAR(h, 10000, 500);
    for (int i = 0; i < 1000; ++i) {
        const double u = uniform01(rng);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

}  // namespace
