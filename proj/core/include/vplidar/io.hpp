#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplidar/scene.hpp"

namespace vplidar {

// KITTI velodyne scans: headerless little-endian float32 (x, y, z, reflectance).
PointCloud decode_kitti_bin(std::span<const std::byte> bytes);
std::vector<std::byte> encode_kitti_bin(const PointCloud& cloud);
PointCloud load_kitti_bin(const std::filesystem::path& path);
void save_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud);

/// Rectification and velodyne-to-camera extrinsics from a KITTI calib file.
struct KittiCalib {
    std::array<double, 9> r0_rect{1, 0, 0, 0, 1, 0, 0, 0, 1};            // row-major 3x3
    std::array<double, 12> tr_velo_to_cam{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};  // row-major 3x4

    /// Rectified camera frame -> LiDAR frame.
    std::array<double, 3> rect_to_lidar(const std::array<double, 3>& rect) const;
    std::array<double, 3> lidar_to_rect(const std::array<double, 3>& lidar) const;
};

KittiCalib parse_kitti_calib(std::string_view text);
KittiCalib load_kitti_calib(const std::filesystem::path& path);

/// Converts KITTI label rows into LiDAR-frame boxes. DontCare and classes
/// other than Car/Pedestrian/Cyclist are skipped (Van, Truck, ... are not
/// attack targets here).
std::vector<BoundingBox> parse_kitti_labels(std::string_view text, const KittiCalib& calib);
std::vector<BoundingBox> load_kitti_labels(const std::filesystem::path& label_path,
                                           const std::filesystem::path& calib_path);

// Native scene JSON with canonical field order.
nlohmann::ordered_json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
Scene load_scene_json(const std::filesystem::path& path);
void save_scene_json(const std::filesystem::path& path, const Scene& scene);

nlohmann::ordered_json box_to_json(const BoundingBox& box);
BoundingBox box_from_json(const nlohmann::json& j);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::byte> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_binary_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace vplidar
