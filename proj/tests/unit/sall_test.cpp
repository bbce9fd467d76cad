#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vplidar/error.hpp"
#include "vplidar/sall.hpp"
#include "vplidar/surrogate.hpp"
#include "vplidar/synth.hpp"

using namespace vplidar;
using vplidar::testing::car_box;

namespace {

std::vector<Scene> car_scenes(int n, std::uint64_t seed, int cars = 1) {
    CarSceneOptions opt;
    opt.cars = cars;
    return synth_car_scenes(n, opt, seed, "ig");
}

// Detector wrapper that counts calls and can be told to fail.
class CountingDetector final : public Detector {
public:
    std::vector<Prediction> predict(const Scene& s, std::span<const BoundingBox> c) override {
        ++predicts;
        if (empty_predictions) return {};
        return inner.predict(s, c);
    }
    ScoreGradient score_gradient(const Scene& s, const BoundingBox& b, std::span<const std::size_t> i) override {
        ++gradients;
        ScoreGradient g = inner.score_gradient(s, b, i);
        if (drop_gradient && !g.gradient.empty()) g.gradient.pop_back();
        if (poison && !g.gradient.empty()) g.gradient[0][0] = NAN;
        return g;
    }
    double threshold() const override { return inner.threshold(); }

    SurrogateDetector inner;
    int predicts = 0;
    int gradients = 0;
    bool empty_predictions = false;
    bool drop_gradient = false;
    bool poison = false;
};

// Independent straight-path IG computed directly on the scorer.
std::vector<double> reference_ig(const Scene& scene, std::size_t target, int m, const SurrogateParams& params,
                                 BaselineKind kind, bool right = false) {
    const BoundingBox& box = scene.boxes[target];
    const auto idx = extract(scene).targets[target];
    std::vector<Point> base;
    for (std::size_t i : idx) {
        const Point& p = scene.cloud[i];
        if (kind == BaselineKind::BoxCentroid) {
            base.push_back({box.cx, box.cy, box.cz, p.intensity});
        } else {
            const double s = (std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z) + 2.0) /
                             std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
            base.push_back({p.x * s, p.y * s, p.z * s, p.intensity});
        }
    }
    std::vector<double> out(idx.size(), 0.0);
    SurrogateDetector det(params);
    for (int k = 1; k <= m; ++k) {
        const double a = right ? static_cast<double>(k) / m : (k - 0.5) / m;
        Scene work = scene;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            Point& p = work.cloud.points[idx[j]];
            const Point& q = scene.cloud[idx[j]];
            p.x = base[j].x + a * (q.x - base[j].x);
            p.y = base[j].y + a * (q.y - base[j].y);
            p.z = base[j].z + a * (q.z - base[j].z);
        }
        const auto near = neighborhood(work.cloud, box, det.prefilter_margin());
        const ObjectScore sc = surrogate_score(gather(work.cloud, near), box, params);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto it = std::find(near.begin(), near.end(), idx[j]);
            if (it == near.end()) continue;
            const auto& g = sc.gradient[static_cast<std::size_t>(it - near.begin())];
            const Point& q = scene.cloud[idx[j]];
            out[j] += ((q.x - base[j].x) * g[0] + (q.y - base[j].y) * g[1] + (q.z - base[j].z) * g[2]) / m;
        }
    }
    return out;
}

TEST(Baseline, KindsAndParsing) {
    EXPECT_EQ(parse_baseline("radial-pushout"), BaselineKind::RadialPushout);
    EXPECT_EQ(parse_baseline("centroid"), BaselineKind::BoxCentroid);
    EXPECT_THROW(parse_baseline("zero"), ConfigError);
    const BoundingBox box = car_box(8.0, 1.0);
    const std::vector<Point> pts{{7.0, 1.0, -1.0, 0.4}};
    IGConfig c;
    EXPECT_EQ(c.baseline, BaselineKind::RadialPushout);
    c.baseline = BaselineKind::BoxCentroid;
    const auto centroid = ig_baseline(pts, box, c);
    EXPECT_EQ(centroid[0], (Point{8.0, 1.0, -0.9, 0.4}));
    c.baseline = BaselineKind::RadialPushout;
    const auto pushed = ig_baseline(pts, box, c);
    EXPECT_NEAR(to_spherical(pushed[0]).radius, to_spherical(pts[0]).radius + 2.0, 1e-12);
    c.steps = 0;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(IouFilter, BestOverlapFirstOnTies) {
    const BoundingBox focus_box = car_box(8.0, 0.0);
    std::vector<Prediction> preds(3);
    preds[0].box = car_box(20.0, 0.0);
    preds[1].box = car_box(8.5, 0.0);
    preds[1].logit = 1.0;
    preds[2].box = car_box(8.5, 0.0);
    preds[2].logit = 2.0;
    const FocusRegion f{focus_box, ObjectClass::Car, {0.0, 100.0}};
    EXPECT_EQ(iou_filter(preds, f).logit, 1.0);
    preds.resize(1);
    EXPECT_THROW(iou_filter(preds, f), NoMatchError);
    EXPECT_THROW(iou_filter({}, f), NoMatchError);
}

TEST(Quantize, SnapsToGrid) {
    EXPECT_EQ(quantize_attribution(0.0), 0.0);
    EXPECT_EQ(quantize_attribution(1.0), 1.0);
    const double q = quantize_attribution(0.1);
    EXPECT_NEAR(q, 0.1, kAttributionQuantum);
    EXPECT_EQ(std::ldexp(q, 40), std::nearbyint(std::ldexp(q, 40)));
}

TEST(IntegratedGradients, MatchesReferenceRiemannSum) {
    const auto scenes = car_scenes(2, 5);
    SurrogateDetector det;
    for (const Scene& s : scenes) {
        for (auto kind : {BaselineKind::RadialPushout, BaselineKind::BoxCentroid}) {
            IGConfig c;
            c.baseline = kind;
            const AttributionVector attr = ig_attribute(s, 0, det, c);
            const auto ref = reference_ig(s, 0, 25, det.params(), kind);
            ASSERT_EQ(attr.values.size(), ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(attr.values[i], ref[i], 1e-9);
        }
    }
}

TEST(IntegratedGradients, RightRuleMatchesReference) {
    const Scene s = car_scenes(1, 6).front();
    SurrogateDetector det;
    IGConfig c;
    c.rule = QuadratureRule::Right;
    const AttributionVector attr = ig_attribute(s, 0, det, c);
    const auto ref = reference_ig(s, 0, 25, det.params(), BaselineKind::RadialPushout, true);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(attr.values[i], ref[i], 1e-9);
    EXPECT_EQ(parse_quadrature_rule("Right"), QuadratureRule::Right);
    EXPECT_EQ(parse_quadrature_rule("midpoint"), QuadratureRule::Midpoint);
    EXPECT_THROW(parse_quadrature_rule("simpson"), ConfigError);
}

// Scores the target with a fixed logit and no gradient.
class ConstantDetector final : public Detector {
public:
    std::vector<Prediction> predict(const Scene&, std::span<const BoundingBox> c) override {
        std::vector<Prediction> out;
        for (const auto& b : c) out.push_back({b, 3.0, sigmoid(3.0)});
        return out;
    }
    ScoreGradient score_gradient(const Scene&, const BoundingBox&, std::span<const std::size_t> i) override {
        return {3.0, std::vector<std::array<double, 3>>(i.size(), {0.0, 0.0, 0.0}), false};
    }
    double threshold() const override { return 0.5; }
};

TEST(IntegratedGradients, ConstantDetectorGivesZeroAttribution) {
    ConstantDetector det;
    const Scene s = car_scenes(1, 2).front();
    for (auto rule : {QuadratureRule::Midpoint, QuadratureRule::Right}) {
        IGConfig c;
        c.rule = rule;
        const AttributionVector a = ig_attribute(s, 0, det, c);
        for (double v : a.values) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(a.residual, 0.0);
    }
}

TEST(IntegratedGradients, ManyStepsAgreeWithTrapezoidIntegral) {
    // five points on the near face of a box
    Scene s;
    s.id = "toy";
    s.boxes.push_back(car_box(8.0, 0.0));
    s.cloud.points = {{6.05, 0.0, -0.9, 0.5},
                      {6.05, 0.6, -0.5, 0.5},
                      {6.05, -0.6, -1.3, 0.5},
                      {6.5, 0.3, -0.2, 0.5},
                      {7.5, -0.4, -0.2, 0.5}};
    SurrogateDetector det;
    const BoundingBox& box = s.boxes[0];
    // path derivative dF/dalpha from the scorer's own gradient
    auto path_derivative = [&](double a) {
        std::vector<Point> pts;
        for (const Point& p : s.cloud.points) {
            pts.push_back({box.cx + a * (p.x - box.cx), box.cy + a * (p.y - box.cy), box.cz + a * (p.z - box.cz),
                           p.intensity});
        }
        const ObjectScore sc = surrogate_score(pts, box, det.params());
        double d = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Point& p = s.cloud.points[i];
            d += (p.x - box.cx) * sc.gradient[i][0] + (p.y - box.cy) * sc.gradient[i][1] +
                 (p.z - box.cz) * sc.gradient[i][2];
        }
        return d;
    };
    const int n = 4000;
    double integral = 0.5 * (path_derivative(0.0) + path_derivative(1.0));
    for (int k = 1; k < n; ++k) integral += path_derivative(static_cast<double>(k) / n);
    integral /= n;

    IGConfig c;
    c.steps = 200;
    c.baseline = BaselineKind::BoxCentroid;
    const AttributionVector a = ig_attribute(s, 0, det, c);
    ASSERT_GT(std::abs(integral), 1e-3);
    EXPECT_NEAR(a.sum(), integral, 1e-3 * std::abs(integral));
    // the right rule carries a first-order bias of (g(1) - g(0)) / 2m
    c.rule = QuadratureRule::Right;
    const double bias = (path_derivative(1.0) - path_derivative(0.0)) / (2 * c.steps);
    EXPECT_NEAR(ig_attribute(s, 0, det, c).sum(), integral + bias, 1e-3 * std::abs(integral));
}

TEST(IntegratedGradients, ResidualShrinksWithSteps) {
    SurrogateDetector det;
    for (const Scene& s : car_scenes(3, 40)) {
        double prev = INFINITY;
        for (int m : {5, 25, 100}) {
            IGConfig c;
            c.steps = m;
            const double r = ig_attribute(s, 0, det, c).residual;
            EXPECT_LE(r, prev + 1e-6) << s.id << " m=" << m;
            prev = r;
        }
    }
}

TEST(IntegratedGradients, CompletenessWithinFivePercent) {
    SurrogateDetector det;
    for (const Scene& s : car_scenes(4, 12)) {
        const AttributionVector a = ig_attribute(s, 0, det, IGConfig{});
        const double delta = a.score_input - a.score_baseline;
        ASSERT_GT(std::abs(delta), 1.0);
        EXPECT_LE(a.residual, 0.05 * std::abs(delta)) << s.id;
        EXPECT_NEAR(a.residual, std::abs(a.sum() - delta), 1e-12);
    }
}

TEST(IntegratedGradients, SingleStepAndCallCounts) {
    const Scene s = car_scenes(1, 3).front();
    CountingDetector det;
    IGConfig c;
    c.steps = 1;
    const AttributionVector a = ig_attribute(s, 0, det, c);
    EXPECT_EQ(a.steps, 1);
    EXPECT_EQ(det.gradients, 1);
    EXPECT_EQ(det.predicts, 3);  // input, baseline, one step
    EXPECT_FALSE(a.values.empty());
}

TEST(IntegratedGradients, DetectorFailuresCarryStepContext) {
    const Scene s = car_scenes(1, 3).front();
    CountingDetector det;
    det.drop_gradient = true;
    EXPECT_THROW(ig_attribute(s, 0, det, IGConfig{}), DetectorError);
    det.drop_gradient = false;
    det.poison = true;
    try {
        ig_attribute(s, 0, det, IGConfig{});
        FAIL();
    } catch (const DetectorError& e) {
        EXPECT_NE(std::string(e.what()).find("IG step 1"), std::string::npos);
    }
    det.poison = false;
    det.empty_predictions = true;
    EXPECT_THROW(ig_attribute(s, 0, det, IGConfig{}), NoMatchError);
    EXPECT_THROW(ig_attribute(s, 4, det, IGConfig{}), ConfigError);
}

TEST(Voxelize, ConservesTotalExactly) {
    SurrogateDetector det;
    for (const Scene& s : car_scenes(3, 8)) {
        const AttributionVector a = ig_attribute(s, 0, det, IGConfig{});
        const SaliencyMap m = voxelize_attribution(a, s.cloud, s.boxes[0], BoxFrameGrid{64, 32});
        EXPECT_EQ(m.total(), a.sum());
        EXPECT_EQ(m.kind, SaliencyKind::PerObject);
        EXPECT_EQ(m.k, 1);
        EXPECT_EQ(m.ig_steps, 25);
    }
}

TEST(Aggregate, FoldsAndChecksCompatibility) {
    SaliencyMap a(2, 2), b(2, 2);
    a.values = {1.0, 2.0, 3.0, 4.0};
    b.values = {0.5, -2.0, 0.0, 1.0};
    b.k = 3;
    const SaliencyMap u = aggregate(std::vector<SaliencyMap>{a, b});
    EXPECT_EQ(u.values, (std::vector<double>{1.5, 0.0, 3.0, 5.0}));
    EXPECT_EQ(u.k, 4);
    EXPECT_EQ(u.kind, SaliencyKind::Universal);
    SaliencyMap c(2, 3);
    EXPECT_THROW(aggregate(std::vector<SaliencyMap>{a, c}), ConfigError);
    SaliencyMap d(2, 2);
    d.cls = ObjectClass::Cyclist;
    EXPECT_THROW(aggregate(std::vector<SaliencyMap>{a, d}), ConfigError);
    SaliencyMap e(2, 2);
    e.range_m = {5.0, 8.0};
    EXPECT_THROW(aggregate(std::vector<SaliencyMap>{a, e}), ConfigError);
    EXPECT_THROW(aggregate(std::vector<SaliencyMap>{}), ConfigError);
}

TEST(Focus, ClassRangeAndDirection) {
    SallOptions o;
    EXPECT_TRUE(in_focus(car_box(6.0, 0.0), o));
    EXPECT_FALSE(in_focus(car_box(-6.0, 0.0), o));
    EXPECT_FALSE(in_focus(car_box(8.0, 0.0), o));  // upper bound is open
    EXPECT_FALSE(in_focus(car_box(4.0, 0.0), o));
    o.front_only = false;
    EXPECT_TRUE(in_focus(car_box(-6.0, 0.0), o));
    BoundingBox ped = car_box(6.0, 0.0);
    ped.cls = ObjectClass::Pedestrian;
    EXPECT_FALSE(in_focus(ped, o));
}

TEST(RunSall, DeterministicAcrossJobsAndDoublesOnDuplicates) {
    const auto scenes = car_scenes(4, 21, 2);
    SurrogateDetector det;
    SallOptions o;
    o.ig.steps = 5;
    o.jobs = 1;
    const SallResult one = run_sall(scenes, det, o);
    o.jobs = 3;
    const SallResult three = run_sall(scenes, det, o);
    EXPECT_EQ(one.universal.values, three.universal.values);
    EXPECT_EQ(one.used + one.skipped, one.objects.size());
    EXPECT_EQ(one.universal.k, static_cast<int>(one.used));
    EXPECT_EQ(one.universal.range_m, (std::array<double, 2>{5.0, 8.0}));
    EXPECT_EQ(one.universal.baseline, "radial_pushout");

    std::vector<Scene> doubled = scenes;
    doubled.insert(doubled.end(), scenes.begin(), scenes.end());
    const SallResult two = run_sall(doubled, det, o);
    ASSERT_EQ(two.universal.values.size(), one.universal.values.size());
    for (std::size_t i = 0; i < one.universal.values.size(); ++i) {
        ASSERT_EQ(two.universal.values[i], 2.0 * one.universal.values[i]) << i;
    }
    EXPECT_EQ(two.universal.k, 2 * one.universal.k);

    // reordering the scene list does not change the map
    std::vector<Scene> reversed(scenes.rbegin(), scenes.rend());
    EXPECT_EQ(run_sall(reversed, det, o).universal.values, one.universal.values);
}

TEST(RunSall, ErrorsWhenNothingQualifies) {
    const auto scenes = car_scenes(1, 2);
    SurrogateDetector det;
    SallOptions o;
    o.range_m = {50.0, 60.0};
    EXPECT_THROW(run_sall(scenes, det, o), ConfigError);
    o.range_m = {8.0, 5.0};
    EXPECT_THROW(run_sall(scenes, det, o), ConfigError);
    CountingDetector none;
    none.empty_predictions = true;
    EXPECT_THROW(run_sall(scenes, none, SallOptions{}), NoMatchError);
}

}  // namespace
