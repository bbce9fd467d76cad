#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplidar/detector.hpp"

namespace vplidar {

inline constexpr int kProtocolVersion = 1;

// Gradient sidecar: count * 3 little-endian float32, (dx, dy, dz) per point.
std::vector<std::byte> encode_gradient_payload(std::span<const std::array<double, 3>> gradient);
std::vector<std::array<double, 3>> decode_gradient_payload(std::span<const std::byte> bytes);

struct BridgeOptions {
    std::string command;  // run with /bin/sh -c
    std::chrono::milliseconds timeout{60000};
    /// Keep scene snapshots and gradient sidecars after each request.
    bool keep_files = false;
};

/// Detector backed by an external provider process speaking the NDJSON
/// protocol on its stdin/stdout. Requests are serialized: one in flight at a
/// time per provider.
class BridgeDetector final : public Detector {
public:
    explicit BridgeDetector(BridgeOptions options);
    ~BridgeDetector() override;

    BridgeDetector(const BridgeDetector&) = delete;
    BridgeDetector& operator=(const BridgeDetector&) = delete;

    std::vector<Prediction> predict(const Scene& scene, std::span<const BoundingBox> candidates) override;
    ScoreGradient score_gradient(const Scene& scene, const BoundingBox& box,
                                 std::span<const std::size_t> indices) override;
    double threshold() const override { return threshold_; }

    /// Provider's reply to the handshake.
    const nlohmann::json& info() const noexcept { return info_; }
    const std::filesystem::path& work_dir() const noexcept { return work_dir_; }

    /// Sends a raw request (an "id" is assigned) and returns the response
    /// object, whatever its status.
    nlohmann::json request(nlohmann::json body);

private:
    nlohmann::json request_locked(nlohmann::json body);
    nlohmann::json checked(nlohmann::json body);
    std::filesystem::path snapshot(const Scene& scene, std::uint64_t id);
    std::string read_line();
    void shutdown() noexcept;

    BridgeOptions options_;
    std::filesystem::path work_dir_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::uint64_t next_id_ = 1;
    double threshold_ = 0.5;
    nlohmann::json info_;
    std::mutex mutex_;
};

}  // namespace vplidar
