#include "vplidar/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>

#include "vplidar/error.hpp"

namespace vplidar {
namespace {

constexpr std::size_t kRecordBytes = 16;

float read_le_float(const std::byte* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | std::to_integer<std::uint32_t>(p[i]);
    return std::bit_cast<float>(bits);
}

void write_le_float(std::byte* p, float f) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) {
        p[i] = static_cast<std::byte>(bits & 0xffu);
        bits >>= 8;
    }
}

std::array<double, 9> invert3(const std::array<double, 9>& m) {
    const double a = m[0], b = m[1], c = m[2];
    const double d = m[3], e = m[4], f = m[5];
    const double g = m[6], h = m[7], i = m[8];
    const double A = e * i - f * h;
    const double B = -(d * i - f * g);
    const double C = d * h - e * g;
    const double det = a * A + b * B + c * C;
    if (std::abs(det) < 1e-12) throw FormatError("calibration matrix is singular");
    const double inv = 1.0 / det;
    return {A * inv, -(b * i - c * h) * inv, (b * f - c * e) * inv,
            B * inv, (a * i - c * g) * inv,  -(a * f - c * d) * inv,
            C * inv, -(a * h - b * g) * inv, (a * e - b * d) * inv};
}

std::array<double, 3> mul3(const std::array<double, 9>& m, const std::array<double, 3>& v) {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

std::vector<double> parse_numbers(std::string_view text) {
    std::vector<double> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw FormatError("not a number: '" + tok + "'");
        }
        if (used != tok.size()) throw FormatError("not a number: '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace

PointCloud decode_kitti_bin(std::span<const std::byte> bytes) {
    if (bytes.size() % kRecordBytes != 0) {
        const std::size_t offset = bytes.size() - bytes.size() % kRecordBytes;
        throw FormatError("KITTI bin size " + std::to_string(bytes.size()) +
                          " is not a multiple of 16; trailing record starts at byte offset " +
                          std::to_string(offset));
    }
    PointCloud cloud;
    cloud.points.reserve(bytes.size() / kRecordBytes);
    for (std::size_t off = 0; off < bytes.size(); off += kRecordBytes) {
        const std::byte* rec = bytes.data() + off;
        const float v[4] = {read_le_float(rec), read_le_float(rec + 4), read_le_float(rec + 8),
                            read_le_float(rec + 12)};
        for (float f : v) {
            if (!std::isfinite(f)) {
                throw FormatError("non-finite value in KITTI record " +
                                  std::to_string(off / kRecordBytes));
            }
        }
        cloud.points.push_back({v[0], v[1], v[2], v[3]});
    }
    return cloud;
}

std::vector<std::byte> encode_kitti_bin(const PointCloud& cloud) {
    std::vector<std::byte> out(cloud.size() * kRecordBytes);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud[i];
        std::byte* rec = out.data() + i * kRecordBytes;
        write_le_float(rec, static_cast<float>(p.x));
        write_le_float(rec + 4, static_cast<float>(p.y));
        write_le_float(rec + 8, static_cast<float>(p.z));
        write_le_float(rec + 12, static_cast<float>(p.intensity));
    }
    return out;
}

PointCloud load_kitti_bin(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    try {
        return decode_kitti_bin(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud) {
    write_binary_file(path, encode_kitti_bin(cloud));
}

std::array<double, 3> KittiCalib::rect_to_lidar(const std::array<double, 3>& rect) const {
    // X_velo = Tr^-1 * R0^-1 * X_rect, with Tr = [R | t]
    const auto ref = mul3(invert3(r0_rect), rect);
    const std::array<double, 9> rot = {tr_velo_to_cam[0], tr_velo_to_cam[1], tr_velo_to_cam[2],
                                       tr_velo_to_cam[4], tr_velo_to_cam[5], tr_velo_to_cam[6],
                                       tr_velo_to_cam[8], tr_velo_to_cam[9], tr_velo_to_cam[10]};
    const std::array<double, 3> shifted = {ref[0] - tr_velo_to_cam[3], ref[1] - tr_velo_to_cam[7],
                                           ref[2] - tr_velo_to_cam[11]};
    return mul3(invert3(rot), shifted);
}

std::array<double, 3> KittiCalib::lidar_to_rect(const std::array<double, 3>& lidar) const {
    const auto& t = tr_velo_to_cam;
    const std::array<double, 3> cam = {
        t[0] * lidar[0] + t[1] * lidar[1] + t[2] * lidar[2] + t[3],
        t[4] * lidar[0] + t[5] * lidar[1] + t[6] * lidar[2] + t[7],
        t[8] * lidar[0] + t[9] * lidar[1] + t[10] * lidar[2] + t[11]};
    return mul3(r0_rect, cam);
}

KittiCalib parse_kitti_calib(std::string_view text) {
    std::map<std::string, std::vector<double>, std::less<>> entries;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string key = line.substr(0, colon);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        entries[key] = parse_numbers(std::string_view(line).substr(colon + 1));
    }
    KittiCalib calib;
    const auto r0 = entries.find("R0_rect");
    const auto tr = entries.find("Tr_velo_to_cam");
    if (r0 == entries.end() || tr == entries.end()) {
        throw FormatError("calib is missing R0_rect or Tr_velo_to_cam");
    }
    if (r0->second.size() != 9) throw FormatError("R0_rect must have 9 values");
    if (tr->second.size() != 12) throw FormatError("Tr_velo_to_cam must have 12 values");
    std::copy(r0->second.begin(), r0->second.end(), calib.r0_rect.begin());
    std::copy(tr->second.begin(), tr->second.end(), calib.tr_velo_to_cam.begin());
    return calib;
}

KittiCalib load_kitti_calib(const std::filesystem::path& path) {
    try {
        return parse_kitti_calib(read_text_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<BoundingBox> parse_kitti_labels(std::string_view text, const KittiCalib& calib) {
    std::vector<BoundingBox> boxes;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream row(line);
        std::string type;
        if (!(row >> type)) continue;
        if (type == "DontCare") continue;
        std::string rest;
        std::getline(row, rest);
        std::vector<double> v;
        try {
            v = parse_numbers(rest);
        } catch (const FormatError& e) {
            throw FormatError("label line " + std::to_string(line_no) + ": " + e.what());
        }
        // truncation occlusion alpha x1 y1 x2 y2 h w l x y z ry [score]
        if (v.size() != 14 && v.size() != 15) {
            throw FormatError("label line " + std::to_string(line_no) + ": expected 15 fields, got " +
                              std::to_string(v.size() + 1));
        }
        ObjectClass cls;
        try {
            cls = parse_object_class(type);
        } catch (const ConfigError&) {
            continue;
        }
        const double h = v[7], w = v[8], l = v[9];
        const auto centre = calib.rect_to_lidar({v[10], v[11], v[12]});
        BoundingBox box;
        box.cx = centre[0];
        box.cy = centre[1];
        box.cz = centre[2] + 0.5 * h;
        box.length = l;
        box.width = w;
        box.height = h;
        box.yaw = normalize_angle(-v[13] - 0.5 * std::numbers::pi);
        box.cls = cls;
        try {
            validate(box);
        } catch (const ConfigError& e) {
            throw FormatError("label line " + std::to_string(line_no) + ": " + e.what());
        }
        boxes.push_back(box);
    }
    return boxes;
}

std::vector<BoundingBox> load_kitti_labels(const std::filesystem::path& label_path,
                                           const std::filesystem::path& calib_path) {
    const KittiCalib calib = load_kitti_calib(calib_path);
    try {
        return parse_kitti_labels(read_text_file(label_path), calib);
    } catch (const FormatError& e) {
        throw FormatError(label_path.string() + ": " + e.what());
    }
}

nlohmann::ordered_json box_to_json(const BoundingBox& box) {
    nlohmann::ordered_json j;
    j["center"] = {box.cx, box.cy, box.cz};
    j["lwh"] = {box.length, box.width, box.height};
    j["yaw"] = box.yaw;
    j["class"] = std::string(to_string(box.cls));
    return j;
}

BoundingBox box_from_json(const nlohmann::json& j) {
    BoundingBox box;
    const auto& c = j.at("center");
    const auto& d = j.at("lwh");
    if (c.size() != 3 || d.size() != 3) throw FormatError("box center/lwh must have 3 values");
    box.cx = c[0].get<double>();
    box.cy = c[1].get<double>();
    box.cz = c[2].get<double>();
    box.length = d[0].get<double>();
    box.width = d[1].get<double>();
    box.height = d[2].get<double>();
    box.yaw = j.at("yaw").get<double>();
    box.cls = parse_object_class(j.at("class").get<std::string>());
    validate(box);
    return box;
}

nlohmann::ordered_json scene_to_json(const Scene& scene) {
    nlohmann::ordered_json j;
    j["id"] = scene.id;
    auto pts = nlohmann::ordered_json::array();
    for (const Point& p : scene.cloud.points) pts.push_back({p.x, p.y, p.z, p.intensity});
    j["points"] = std::move(pts);
    auto boxes = nlohmann::ordered_json::array();
    for (const BoundingBox& b : scene.boxes) boxes.push_back(box_to_json(b));
    j["boxes"] = std::move(boxes);
    return j;
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    try {
        scene.id = j.at("id").get<std::string>();
        if (scene.id.empty()) throw FormatError("scene id must be non-empty");
        const auto& pts = j.at("points");
        scene.cloud.points.reserve(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& row = pts[i];
            if (row.size() != 4) {
                throw FormatError("point " + std::to_string(i) + " must have 4 values");
            }
            Point p{row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
                    row[3].get<double>()};
            try {
                validate(p);
            } catch (const ConfigError& e) {
                throw FormatError("point " + std::to_string(i) + ": " + e.what());
            }
            scene.cloud.points.push_back(p);
        }
        for (const auto& b : j.at("boxes")) scene.boxes.push_back(box_from_json(b));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scene JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("scene JSON: ") + e.what());
    }
    return scene;
}

Scene load_scene_json(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return scene_from_json(j);
}

void save_scene_json(const std::filesystem::path& path, const Scene& scene) {
    write_text_file(path, scene_to_json(scene).dump() + "\n");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::byte> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    if (!raw.empty()) std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace vplidar
