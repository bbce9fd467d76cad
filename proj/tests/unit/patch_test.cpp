#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vplidar/error.hpp"
#include "vplidar/io.hpp"
#include "vplidar/iou.hpp"
#include "vplidar/patch.hpp"
#include "vplidar/rng.hpp"

using namespace vplidar;
using vplidar::testing::car_box;
using vplidar::testing::TempDir;

namespace {

TEST(PatchKind, NamesRoundTrip) {
    for (PatchKind k : {PatchKind::Edges, PatchKind::NearestCorner, PatchKind::Center, PatchKind::X, PatchKind::TopN,
                        PatchKind::HalfEdges, PatchKind::CriticalX, PatchKind::WholeArea}) {
        EXPECT_EQ(parse_patch_kind(to_string(k)), k);
    }
    EXPECT_EQ(parse_patch_kind("top_30"), PatchKind::TopN);
    EXPECT_EQ(parse_patch_kind("Critical-X"), PatchKind::CriticalX);
    EXPECT_THROW(parse_patch_kind("star"), ConfigError);
}

TEST(ManualPatches, EdgesBand) {
    const PatchMask m = mvp_edges(10, 8, 2);
    EXPECT_EQ(m.count(), 10u * 8u - 6u * 4u);
    EXPECT_TRUE(m.at(0, 4));
    EXPECT_TRUE(m.at(9, 4));
    EXPECT_TRUE(m.at(5, 1));
    EXPECT_FALSE(m.at(5, 2));
    EXPECT_THROW(mvp_edges(3, 8, 2), ConfigError);
}

TEST(ManualPatches, CenterBlockIsConcentric) {
    const PatchMask m = mvp_center(25, 12, 0.75);
    // ceil(18.75) x ceil(9) cells
    EXPECT_EQ(m.count(), 19u * 9u);
    int rmin = 99, rmax = -1;
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            if (!m.at(r, c)) continue;
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
        }
    }
    EXPECT_EQ(rmin, 3);
    EXPECT_EQ(rmax, 21);
}

TEST(ManualPatches, XIsSymmetricAndCoversDiagonals) {
    const PatchMask m = mvp_x(25, 12, 1.5);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            ASSERT_EQ(m.at(r, c), m.at(m.rows - 1 - r, c));
            ASSERT_EQ(m.at(r, c), m.at(r, m.cols - 1 - c));
        }
    }
    EXPECT_TRUE(m.at(0, 0));
    EXPECT_TRUE(m.at(24, 11));
    EXPECT_TRUE(m.at(12, 5) || m.at(12, 6));
    EXPECT_LT(m.fraction(), 0.5);
}

TEST(ManualPatches, NearestCornerFollowsSensor) {
    BoundingBox b = car_box(10.0, 5.0);
    // nearest footprint corner to the origin is (-l/2, -w/2) for a car ahead-left
    PatchMask m = mvp_nearest_corner(25, 12, b, {}, 4);
    EXPECT_EQ(m.count(), 16u);
    EXPECT_TRUE(m.at(0, 0));
    EXPECT_TRUE(m.at(3, 3));
    // rotated by pi the same world corner is the far (l/2, w/2) box corner
    b.yaw = -std::numbers::pi;
    m = mvp_nearest_corner(25, 12, b, {}, 4);
    EXPECT_TRUE(m.at(24, 11));
    EXPECT_TRUE(m.at(21, 8));
    EXPECT_FALSE(m.at(0, 0));
}

TEST(CriticalX, FractionMatchesTriangleAreas) {
    // Oracle: 1 minus the shoelace areas of the four excluded triangles.
    for (auto [a, b] : {std::pair{0.1, 0.2}, {0.05, 0.3}, {0.25, 0.25}, {0.4, 0.1}}) {
        const double ku = (1 - b) / (1 - a);
        const double kv = (1 - a) / (1 - b);
        const std::vector<Vec2> bottom{{a, 0}, {1 - a, 0}, {0.5, (0.5 - a) * ku}};
        const std::vector<Vec2> left{{0, 1 - b}, {0, b}, {(0.5 - b) * kv, 0.5}};
        const double excluded = 2 * std::abs(polygon_area(bottom)) + 2 * std::abs(polygon_area(left));
        EXPECT_NEAR(critical_x_fraction(a, b), 1.0 - excluded, 1e-14) << a << " " << b;
    }
}

TEST(CriticalX, MembershipAtKnownPoints) {
    EXPECT_TRUE(critical_x_contains(0.5, 0.5, 0.1, 0.2));
    EXPECT_TRUE(critical_x_contains(0.01, 0.01, 0.1, 0.2));  // corners are kept
    EXPECT_FALSE(critical_x_contains(0.5, 0.01, 0.1, 0.2));   // mid long edge
    EXPECT_FALSE(critical_x_contains(0.01, 0.5, 0.1, 0.2));   // mid short edge
    EXPECT_THROW(critical_x_fraction(0.5, 0.2), ConfigError);
    EXPECT_THROW(critical_x_fraction(0.1, 0.0), ConfigError);
}

TEST(CriticalX, GridMaskApproachesFraction) {
    const PatchMask m = cvp_critical_x(256, 128, 0.1, 0.2);
    EXPECT_NEAR(m.fraction(), critical_x_fraction(0.1, 0.2), 0.01);
    EXPECT_EQ(m.frame, MaskFrame::Adaptive);
}

TEST(HalfEdges, TwoBandsOrOneWithMap) {
    const PatchMask both = cvp_half_edges(64, 32, 0.2, nullptr);
    // ceil(0.1 * 32) = 4 columns on each side
    EXPECT_EQ(both.count(), 64u * 8u);
    EXPECT_TRUE(both.at(10, 3));
    EXPECT_TRUE(both.at(10, 28));
    EXPECT_FALSE(both.at(10, 4));

    SaliencyMap map(64, 32, SaliencyKind::Universal);
    for (int r = 0; r < 64; ++r) map.at(r, 31) = 1.0;
    const PatchMask one = cvp_half_edges(64, 32, 0.2, &map);
    // ceil(0.2 * 32) = 7 columns on the high side only
    EXPECT_EQ(one.count(), 64u * 7u);
    EXPECT_TRUE(one.at(0, 25));
    EXPECT_FALSE(one.at(0, 0));
}

TEST(TopN, PicksHighestPositiveCells) {
    SaliencyMap map(4, 4, SaliencyKind::Universal);
    map.at(0, 0) = 5.0;
    map.at(1, 1) = 3.0;
    map.at(2, 2) = 3.0;
    map.at(3, 3) = 1.0;
    map.at(0, 3) = -9.0;
    const PatchMask m = cvp_top_n(map, 50.0);
    EXPECT_EQ(m.count(), 2u);
    EXPECT_TRUE(m.at(0, 0));
    EXPECT_TRUE(m.at(1, 1));  // tie resolved by (row, col)
    EXPECT_FALSE(m.at(2, 2));

    const PatchMask none = cvp_top_n(SaliencyMap(4, 4), 30.0);
    EXPECT_EQ(none.count(), 0u);
    EXPECT_TRUE(none.warning);
}

TEST(Area, PaperFigureValuesAtS25) {
    AreaParams p;
    p.l_tar = 5.0;
    p.w_tar = 2.5;
    EXPECT_NEAR(area_pillars(p, PatchKind::WholeArea), 5000.0, 1e-9);
    EXPECT_NEAR(area_pillars(p, PatchKind::HalfEdges), 1000.0, 1e-9);
    EXPECT_NEAR(area_pillars(p, PatchKind::TopN), 1500.0, 1e-9);
    EXPECT_NEAR(area_pillars(p, PatchKind::CriticalX), 2565.3, 0.5);
    EXPECT_THROW(area_pillars(p, PatchKind::Edges), ConfigError);
}

TEST(Area, QuadraticInSizeWithConstantRatios) {
    double prev = 0.0;
    for (double s = 0.5; s <= 5.0; s += 0.5) {
        AreaParams p;
        p.l_tar = 2 * s;
        p.w_tar = s;
        const double whole = area_pillars(p, PatchKind::WholeArea);
        EXPECT_GT(whole, prev);
        prev = whole;
        EXPECT_NEAR(whole, 2 * s * s / 0.0025, 1e-9 * whole);
        EXPECT_NEAR(area_pillars(p, PatchKind::CriticalX) / whole, critical_x_fraction(0.1, 0.2), 1e-12);
        EXPECT_LE(area_pillars(p, PatchKind::HalfEdges), 0.5 * whole);
        EXPECT_LE(area_pillars(p, PatchKind::TopN), 0.5 * whole);
    }
    AreaParams bad;
    bad.l_v = 0.0;
    EXPECT_THROW(validate(bad), ConfigError);
}

TEST(MaskFile, RoundTripsThroughRunLengths) {
    TempDir dir("mask");
    PatchMask m = cvp_critical_x(64, 32, 0.1, 0.2);
    EXPECT_EQ(decode_mask(encode_mask(m)), m);
    m = mvp_edges(25, 12, 3);
    save_mask(dir / "e.mask", m);
    EXPECT_EQ(load_mask(dir / "e.mask"), m);
    EXPECT_THROW(decode_mask("{}\n"), FormatError);
}

TEST(MaskFile, PgmHeaderAndPixels) {
    TempDir dir("pgm");
    const PatchMask m = mvp_center(4, 2, 0.5);
    save_mask_pgm(dir / "c.pgm", m);
    const std::string text = read_text_file(dir / "c.pgm");
    const std::string header = "P5\n2 4\n255\n";
    ASSERT_EQ(text.substr(0, header.size()), header);
    ASSERT_EQ(text.size(), header.size() + 8);
    std::size_t white = 0;
    for (std::size_t i = header.size(); i < text.size(); ++i) white += static_cast<unsigned char>(text[i]) == 255;
    EXPECT_EQ(white, m.count());
}

}  // namespace
