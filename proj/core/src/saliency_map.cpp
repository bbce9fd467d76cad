#include "vplidar/saliency_map.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vplidar/error.hpp"
#include "vplidar/io.hpp"

namespace vplidar {

SaliencyMap::SaliencyMap(int rows_, int cols_, SaliencyKind kind_) : rows(rows_), cols(cols_), kind(kind_) {
    if (rows < 1 || cols < 1) throw ConfigError("saliency map must have at least one cell");
    values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

double SaliencyMap::total() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

std::string_view to_string(SaliencyKind kind) {
    return kind == SaliencyKind::Universal ? "universal" : "per_object";
}

std::string encode_saliency_map(const SaliencyMap& map) {
    if (map.values.size() != static_cast<std::size_t>(map.rows) * map.cols) {
        throw ConfigError("saliency map value count does not match its dimensions");
    }
    nlohmann::ordered_json header;
    header["rows"] = map.rows;
    header["cols"] = map.cols;
    header["class"] = std::string(to_string(map.cls));
    header["range_m"] = {map.range_m[0], map.range_m[1]};
    header["k"] = map.k;
    header["kind"] = std::string(to_string(map.kind));
    header["ig_steps"] = map.ig_steps;
    header["baseline"] = map.baseline;
    std::string out = header.dump() + "\n";
    out.reserve(out.size() + map.values.size() * 8);
    for (double v : map.values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            out.push_back(static_cast<char>(bits & 0xffu));
            bits >>= 8;
        }
    }
    return out;
}

SaliencyMap decode_saliency_map(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw FormatError("saliency map: missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("saliency map header: ") + e.what());
    }
    SaliencyMap map;
    try {
        map = SaliencyMap(header.at("rows").get<int>(), header.at("cols").get<int>());
        map.cls = parse_object_class(header.at("class").get<std::string>());
        map.range_m = {header.at("range_m")[0].get<double>(), header.at("range_m")[1].get<double>()};
        map.k = header.at("k").get<int>();
        const auto kind = header.at("kind").get<std::string>();
        if (kind == "universal") {
            map.kind = SaliencyKind::Universal;
        } else if (kind == "per_object") {
            map.kind = SaliencyKind::PerObject;
        } else {
            throw FormatError("saliency map: unknown kind '" + kind + "'");
        }
        map.ig_steps = header.value("ig_steps", 0);
        map.baseline = header.value("baseline", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("saliency map header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("saliency map header: ") + e.what());
    }
    const std::size_t expected = map.values.size() * 8;
    if (bytes.size() - nl - 1 != expected) {
        throw FormatError("saliency map: expected " + std::to_string(expected) + " payload bytes, got " +
                          std::to_string(bytes.size() - nl - 1));
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[i * 8 + static_cast<std::size_t>(b)];
        map.values[i] = std::bit_cast<double>(bits);
    }
    return map;
}

void save_saliency_map(const std::filesystem::path& path, const SaliencyMap& map) {
    write_text_file(path, encode_saliency_map(map));
}

SaliencyMap load_saliency_map(const std::filesystem::path& path) {
    try {
        return decode_saliency_map(read_text_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map) {
    std::string out;
    char buf[40];
    for (int r = 0; r < map.rows; ++r) {
        for (int c = 0; c < map.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", map.at(r, c));
            if (c) out.push_back(',');
            out += buf;
        }
        out.push_back('\n');
    }
    write_text_file(path, out);
}

}  // namespace vplidar
