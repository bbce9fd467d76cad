#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "vplidar/scene.hpp"

namespace vplidar {

enum class SaliencyKind { PerObject, Universal };

/// rows x cols contribution matrix, row-major. Rows run along the box length.
struct SaliencyMap {
    int rows = 64;
    int cols = 32;
    SaliencyKind kind = SaliencyKind::PerObject;
    ObjectClass cls = ObjectClass::Car;
    std::array<double, 2> range_m{0.0, 0.0};
    int k = 1;
    // IG provenance, written to the header
    int ig_steps = 0;
    std::string baseline;
    std::vector<double> values;

    SaliencyMap() = default;
    SaliencyMap(int rows_, int cols_, SaliencyKind kind_ = SaliencyKind::PerObject);

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double total() const;
};

// File layout: one JSON header line, then rows*cols little-endian float64.
void save_saliency_map(const std::filesystem::path& path, const SaliencyMap& map);
SaliencyMap load_saliency_map(const std::filesystem::path& path);
std::string encode_saliency_map(const SaliencyMap& map);
SaliencyMap decode_saliency_map(const std::string& bytes);
void save_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map);

std::string_view to_string(SaliencyKind kind);

}  // namespace vplidar
