#include <cstring>

#include <gtest/gtest.h>

#include "vplidar/bridge.hpp"
#include "vplidar/error.hpp"
#include "vplidar/sall.hpp"
#include "vplidar/surrogate.hpp"
#include "vplidar/synth.hpp"

using namespace vplidar;

namespace {

BridgeOptions provider(const std::string& flag = "", int timeout_ms = 20000) {
    BridgeOptions o;
    o.command = std::string(VPLIDAR_FAKE_PROVIDER) + (flag.empty() ? "" : " --" + flag);
    o.timeout = std::chrono::milliseconds(timeout_ms);
    return o;
}

Scene one_car() {
    return synth_car_scenes(1, CarSceneOptions{}, 5, "br").front();
}

TEST(GradientPayload, LittleEndianFloatTriples) {
    const std::vector<std::array<double, 3>> g{{1.0, -2.0, 0.5}, {0.1, 0.0, 3.0}};
    const auto bytes = encode_gradient_payload(g);
    ASSERT_EQ(bytes.size(), 24u);
    // 1.0f is 0x3f800000
    EXPECT_EQ(bytes[0], std::byte{0x00});
    EXPECT_EQ(bytes[3], std::byte{0x3f});
    EXPECT_EQ(bytes[2], std::byte{0x80});
    const auto back = decode_gradient_payload(bytes);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], g[0]);
    EXPECT_EQ(back[1][0], static_cast<double>(0.1f));
    EXPECT_THROW(decode_gradient_payload(std::span(bytes).first(13)), FormatError);
    EXPECT_TRUE(decode_gradient_payload({}).empty());
}

TEST(Bridge, MatchesInProcessSurrogate) {
    BridgeDetector bridge(provider());
    EXPECT_EQ(bridge.info().at("name"), "fake");
    EXPECT_EQ(bridge.threshold(), 0.5);
    SurrogateDetector local;
    const Scene s = one_car();

    const auto a = bridge.predict(s, s.boxes);
    const auto b = local.predict(s, s.boxes);
    ASSERT_EQ(a.size(), b.size());
    // the scene snapshot goes through JSON, which round-trips doubles exactly
    EXPECT_EQ(a[0].logit, b[0].logit);
    EXPECT_EQ(a[0].box, b[0].box);

    const auto idx = extract(s).targets[0];
    const ScoreGradient ga = bridge.score_gradient(s, s.boxes[0], idx);
    const ScoreGradient gb = local.score_gradient(s, s.boxes[0], idx);
    EXPECT_EQ(ga.logit, gb.logit);
    ASSERT_EQ(ga.gradient.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (int d = 0; d < 3; ++d) EXPECT_EQ(ga.gradient[i][d], static_cast<double>(static_cast<float>(gb.gradient[i][d])));
    }
    EXPECT_TRUE(bridge.score_gradient(s, s.boxes[0], std::vector<std::size_t>{}).gradient.empty());
    // work files are removed after each request
    EXPECT_TRUE(std::filesystem::is_empty(bridge.work_dir()));
}

TEST(Bridge, IgThroughProviderTracksLocalIg) {
    BridgeDetector bridge(provider());
    SurrogateDetector local;
    const Scene s = one_car();
    IGConfig c;
    c.steps = 5;
    const AttributionVector a = ig_attribute(s, 0, bridge, c);
    const AttributionVector b = ig_attribute(s, 0, local, c);
    EXPECT_EQ(a.score_input, b.score_input);
    EXPECT_NEAR(a.sum(), b.sum(), 1e-4 * std::max(1.0, std::abs(b.sum())));
}

TEST(Bridge, RawRequestsAndUnknownOps) {
    BridgeDetector bridge(provider());
    const auto r = bridge.request({{"op", "teleport"}});
    EXPECT_EQ(r.at("status"), "error");
    EXPECT_NE(r.at("message").get<std::string>().find("teleport"), std::string::npos);
}

TEST(Bridge, ProviderFailuresBecomeDetectorErrors) {
    const Scene s = one_car();
    const auto idx = extract(s).targets[0];
    auto expect_error = [&](const std::string& flag, const std::string& fragment, bool score) {
        BridgeDetector bridge(provider(flag, flag == "hang" ? 300 : 20000));
        try {
            if (score) {
                bridge.score_gradient(s, s.boxes[0], idx);
            } else {
                bridge.predict(s, s.boxes);
            }
            ADD_FAILURE() << flag << " did not fail";
        } catch (const DetectorError& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << flag << ": " << e.what();
        }
    };
    expect_error("model-error", "CUDA out of memory", false);
    expect_error("bad-json", "malformed JSON", false);
    expect_error("wrong-id", "request id", false);
    expect_error("exit", "exited", false);
    expect_error("hang", "timeout", false);
    expect_error("count-mismatch", "gradients for", true);
    expect_error("short-gradient", "sidecar", true);
}

TEST(Bridge, HandshakeAndCommandErrors) {
    EXPECT_THROW(BridgeDetector(provider("bad-hello")), DetectorError);
    BridgeOptions none;
    EXPECT_THROW(BridgeDetector{none}, ConfigError);
    BridgeOptions missing;
    missing.command = "/nonexistent/provider";
    missing.timeout = std::chrono::milliseconds(2000);
    EXPECT_THROW(BridgeDetector{missing}, DetectorError);
}

}  // namespace
