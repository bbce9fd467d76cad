#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vplidar/error.hpp"
#include "vplidar/eval.hpp"
#include "vplidar/surrogate.hpp"
#include "vplidar/synth.hpp"

using namespace vplidar;
using vplidar::testing::car_box;

namespace {

AttackOutcome outcome(bool before, bool after) {
    AttackOutcome o;
    o.detected_before = before;
    o.detected_after = after;
    return o;
}

TEST(Metrics, AsrCountsHiddenAmongDetected) {
    const std::vector<AttackOutcome> v{outcome(true, false), outcome(true, true), outcome(false, false),
                                       outcome(true, false)};
    EXPECT_DOUBLE_EQ(asr(v), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(recall(v), 1.0 / 4.0);
    const std::vector<AttackOutcome> none{outcome(false, false)};
    EXPECT_EQ(asr(none), 0.0);
    EXPECT_THROW(asr({}), ConfigError);
    EXPECT_THROW(recall({}), ConfigError);
}

TEST(Metrics, MatchNeedsClassProbabilityAndIou) {
    const BoundingBox gt = car_box(8.0, 0.0);
    Prediction p;
    p.box = gt;
    p.probability = 0.9;
    const MatchRule rule{0.7, 0.5};
    EXPECT_TRUE(matched(std::vector<Prediction>{p}, gt, rule));
    Prediction weak = p;
    weak.probability = 0.4;
    EXPECT_FALSE(matched(std::vector<Prediction>{weak}, gt, rule));
    EXPECT_EQ(best_match_iou(std::vector<Prediction>{weak}, gt, rule), 0.0);
    Prediction ped = p;
    ped.box.cls = ObjectClass::Pedestrian;
    EXPECT_FALSE(matched(std::vector<Prediction>{ped}, gt, rule));
    Prediction off = p;
    off.box.cx += 1.5;  // IOU 2.5 / 5.5
    EXPECT_NEAR(best_match_iou(std::vector<Prediction>{off}, gt, rule), 2.5 / 5.5, 1e-12);
    EXPECT_FALSE(matched(std::vector<Prediction>{off}, gt, rule));
    EXPECT_EQ(parse_box_source("GT"), BoxSource::GroundTruth);
    EXPECT_EQ(parse_box_source("detector"), BoxSource::Detector);
    EXPECT_THROW(parse_box_source("oracle"), ConfigError);
}

std::vector<Scene> scenes(int n, std::uint64_t seed) {
    CarSceneOptions opt;
    opt.cars = 2;
    return synth_car_scenes(n, opt, seed, "ev");
}

TEST(Sweep, RowsSortedDedupedAndCsvShaped) {
    SurrogateDetector det;
    SweepConfig c;
    c.patches = {PatchKind::X, PatchKind::WholeArea, PatchKind::X};
    c.budgets = {100, 0, 100};
    c.seed = 4;
    const auto sc = scenes(3, 1);
    const SweepResult r = sweep(sc, det, c);
    ASSERT_EQ(r.rows.size(), 4u);
    EXPECT_EQ(r.rows[0].patch, PatchKind::X);
    EXPECT_EQ(r.rows[0].budget, 0);
    EXPECT_EQ(r.rows[1].budget, 100);
    EXPECT_EQ(r.rows[2].patch, PatchKind::WholeArea);
    for (const SweepRow& row : r.rows) {
        EXPECT_EQ(row.n_objects, 6u);
        EXPECT_EQ(row.seed, 4u);
        if (row.budget == 0) {
            EXPECT_EQ(row.asr, 0.0);
            EXPECT_EQ(row.recall, 1.0);
        }
    }
    const std::string csv = sweep_to_csv(r.rows);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "patch,strategy,budget,asr,recall,n_objects,seed");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("x,random,0,0,1,6,4", 0), 0u) << line;
}

TEST(Sweep, WholePatchAtFullBudgetHidesCars) {
    SurrogateDetector det;
    SweepConfig c;
    c.budgets = {200};
    const SweepResult r = sweep(scenes(4, 2), det, c);
    EXPECT_GT(r.rows[0].asr, 0.5);
    EXPECT_NEAR(r.rows[0].recall, 1.0 - r.rows[0].asr, 1e-12);
}

TEST(Sweep, DetectorBoxSourceAndJobsInvariance) {
    SurrogateDetector det;
    SweepConfig c;
    c.budgets = {0, 50};
    c.box_source = BoxSource::Detector;
    c.jobs = 1;
    const auto sc = scenes(3, 3);
    const SweepResult a = sweep(sc, det, c);
    c.jobs = 4;
    const SweepResult b = sweep(sc, det, c);
    EXPECT_EQ(sweep_to_csv(a.rows), sweep_to_csv(b.rows));
    for (const AttackOutcome& o : a.outcomes) EXPECT_TRUE(o.detected_before);
}

TEST(Sweep, RejectsBadConfigs) {
    SurrogateDetector det;
    const auto sc = scenes(1, 1);
    SweepConfig c;
    c.budgets = {};
    EXPECT_THROW(sweep(sc, det, c), ConfigError);
    c = SweepConfig{};
    c.iou_threshold = 0.0;
    EXPECT_THROW(sweep(sc, det, c), ConfigError);
    c = SweepConfig{};
    c.patches = {PatchKind::TopN};  // needs a map
    EXPECT_THROW(sweep(sc, det, c), ConfigError);
    c = SweepConfig{};
    c.target_class = ObjectClass::Cyclist;
    EXPECT_THROW(sweep(sc, det, c), ConfigError);
    EXPECT_THROW(sweep({}, det, SweepConfig{}), ConfigError);
}

}  // namespace
