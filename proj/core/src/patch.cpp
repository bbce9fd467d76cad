#include "vplidar/patch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vplidar/error.hpp"
#include "vplidar/indexing.hpp"
#include "vplidar/io.hpp"

namespace vplidar {
namespace {

// ceil with slack for products like 0.1 * 32 that land a hair above an integer
int ceil_cells(double x) {
    return static_cast<int>(std::ceil(x - 1e-9));
}

void check_dims(int rows, int cols) {
    if (rows < 1 || cols < 1) throw ConfigError("mask grid must have at least one cell");
}

void check_alpha_beta(double alpha, double beta) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 0.5)");
    if (!(beta > 0.0 && beta < 0.5)) throw ConfigError("beta must lie in (0, 0.5)");
}

struct KindName {
    PatchKind kind;
    std::string_view name;
};

constexpr KindName kKindNames[] = {
    {PatchKind::Edges, "edges"},         {PatchKind::NearestCorner, "nearest_corner"},
    {PatchKind::Center, "center"},       {PatchKind::X, "x"},
    {PatchKind::TopN, "top_n"},          {PatchKind::HalfEdges, "half_edges"},
    {PatchKind::CriticalX, "critical_x"}, {PatchKind::WholeArea, "whole"},
};

}  // namespace

std::string_view to_string(PatchKind kind) {
    for (const auto& kn : kKindNames) {
        if (kn.kind == kind) return kn.name;
    }
    return "whole";
}

PatchKind parse_patch_kind(std::string_view name) {
    std::string lower(name);
    for (char& c : lower) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (c == '-') c = '_';
    }
    if (lower == "corner") return PatchKind::NearestCorner;
    if (lower == "whole_area") return PatchKind::WholeArea;
    if (lower.rfind("top", 0) == 0) return PatchKind::TopN;  // top_n, top_30, top30
    for (const auto& kn : kKindNames) {
        if (kn.name == lower) return kn.kind;
    }
    throw ConfigError("unknown patch kind '" + std::string(name) + "'");
}

std::string_view to_string(MaskFrame frame) {
    return frame == MaskFrame::Pillar ? "pillar" : "adaptive";
}

MaskFrame default_frame(PatchKind kind) {
    switch (kind) {
        case PatchKind::TopN:
        case PatchKind::HalfEdges:
        case PatchKind::CriticalX:
            return MaskFrame::Adaptive;
        default:
            return MaskFrame::Pillar;
    }
}

PatchMask::PatchMask(PatchKind kind_, MaskFrame frame_, int rows_, int cols_)
    : kind(kind_), frame(frame_), rows(rows_), cols(cols_) {
    check_dims(rows, cols);
    selected.assign(static_cast<std::size_t>(rows) * cols, 0);
}

std::size_t PatchMask::count() const {
    return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), std::uint8_t{1}));
}

double PatchMask::fraction() const {
    return selected.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(selected.size());
}

PatchMask mask_whole(int rows, int cols, MaskFrame frame) {
    PatchMask m(PatchKind::WholeArea, frame, rows, cols);
    std::fill(m.selected.begin(), m.selected.end(), std::uint8_t{1});
    return m;
}

PatchMask mvp_edges(int rows, int cols, int thickness) {
    check_dims(rows, cols);
    if (rows < 2 * thickness || cols < 2 * thickness) {
        throw ConfigError("edges patch needs at least " + std::to_string(2 * thickness) + "x" +
                          std::to_string(2 * thickness) + " cells, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    PatchMask m(PatchKind::Edges, MaskFrame::Pillar, rows, cols);
    m.params["thickness"] = thickness;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (r < thickness || r >= rows - thickness || c < thickness || c >= cols - thickness) m.set(r, c);
        }
    }
    return m;
}

PatchMask mvp_nearest_corner(int rows, int cols, const BoundingBox& box, const Point& sensor, int block) {
    check_dims(rows, cols);
    if (rows < block || cols < block) {
        throw ConfigError("nearest-corner patch needs at least " + std::to_string(block) + "x" +
                          std::to_string(block) + " cells, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    // footprint_corners order: (-l/2,-w/2), (l/2,-w/2), (l/2,w/2), (-l/2,w/2)
    const auto corners = footprint_corners(box);
    const CellIndex anchors[4] = {{0, 0}, {rows - block, 0}, {rows - block, cols - block}, {0, cols - block}};
    int best = -1;
    double best_d = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double d = std::hypot(corners[i].x - sensor.x, corners[i].y - sensor.y);
        const double tol = 1e-9 * std::max(1.0, d);
        if (best < 0 || d < best_d - tol ||
            (std::abs(d - best_d) <= tol && anchors[i] < anchors[best])) {
            best = i;
            best_d = d;
        }
    }
    PatchMask m(PatchKind::NearestCorner, MaskFrame::Pillar, rows, cols);
    m.params["block"] = block;
    m.params["anchor_row"] = anchors[best].row;
    m.params["anchor_col"] = anchors[best].col;
    for (int r = anchors[best].row; r < anchors[best].row + block; ++r) {
        for (int c = anchors[best].col; c < anchors[best].col + block; ++c) m.set(r, c);
    }
    return m;
}

PatchMask mvp_center(int rows, int cols, double fraction) {
    check_dims(rows, cols);
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("center fraction must lie in (0, 1]");
    PatchMask m(PatchKind::Center, MaskFrame::Pillar, rows, cols);
    m.params["fraction"] = fraction;
    const int br = std::min(rows, ceil_cells(fraction * rows));
    const int bc = std::min(cols, ceil_cells(fraction * cols));
    const int r0 = (rows - br) / 2;
    const int c0 = (cols - bc) / 2;
    for (int r = r0; r < r0 + br; ++r) {
        for (int c = c0; c < c0 + bc; ++c) m.set(r, c);
    }
    return m;
}

PatchMask mvp_x(int rows, int cols, double max_dist) {
    check_dims(rows, cols);
    if (!(max_dist >= 0.0)) throw ConfigError("X patch distance must be non-negative");
    PatchMask m(PatchKind::X, MaskFrame::Pillar, rows, cols);
    m.params["max_dist"] = max_dist;
    const double R = rows;
    const double C = cols;
    const double norm = std::hypot(R, C);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double a = r + 0.5;
            const double b = c + 0.5;
            // diagonals (0,0)-(R,C) and (0,C)-(R,0) in cell units
            const double d1 = std::abs(a * C - b * R) / norm;
            const double d2 = std::abs(a * C + b * R - R * C) / norm;
            if (std::min(d1, d2) <= max_dist) m.set(r, c);
        }
    }
    return m;
}

PatchMask cvp_top_n(const SaliencyMap& map, double n_percent) {
    if (!(n_percent > 0.0 && n_percent <= 100.0)) throw ConfigError("top-n percentage must lie in (0, 100]");
    PatchMask m(PatchKind::TopN, MaskFrame::Adaptive, map.rows, map.cols);
    m.params["n"] = n_percent;
    std::vector<std::size_t> positive;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (map.values[i] > 0.0) positive.push_back(i);
    }
    if (positive.empty()) {
        m.warning = true;
        return m;
    }
    const auto take = static_cast<std::size_t>(
        std::clamp(ceil_cells(n_percent / 100.0 * static_cast<double>(positive.size())), 1,
                   static_cast<int>(positive.size())));
    // row-major index order equals (row, col) order
    std::stable_sort(positive.begin(), positive.end(),
                     [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
    for (std::size_t i = 0; i < take; ++i) m.selected[positive[i]] = 1;
    return m;
}

PatchMask cvp_half_edges(int rows, int cols, double beta, const SaliencyMap* map) {
    check_dims(rows, cols);
    if (!(beta > 0.0 && beta < 0.5)) throw ConfigError("beta must lie in (0, 0.5)");
    PatchMask m(PatchKind::HalfEdges, MaskFrame::Adaptive, rows, cols);
    m.params["beta"] = beta;
    if (map == nullptr) {
        const int t = std::min(cols, std::max(1, ceil_cells(0.5 * beta * cols)));
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < t; ++c) {
                m.set(r, c);
                m.set(r, cols - 1 - c);
            }
        }
        return m;
    }
    if (map->rows != rows || map->cols != cols) throw ConfigError("saliency map does not match mask grid");
    const int t = std::min(cols, std::max(1, ceil_cells(beta * cols)));
    double low = 0.0;
    double high = 0.0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < t; ++c) {
            low += map->at(r, c);
            high += map->at(r, cols - 1 - c);
        }
    }
    const bool keep_low = low >= high;
    m.params["single_band"] = 1.0;
    m.params["band_side"] = keep_low ? 0.0 : 1.0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < t; ++c) m.set(r, keep_low ? c : cols - 1 - c);
    }
    return m;
}

bool critical_x_contains(double u, double v, double alpha, double beta) {
    // Band edges pass through (alpha, 0) -> (1, 1 - beta) and (0, beta) -> (1 - alpha, 1)
    // (plus mirror images). The four open triangles between them and the
    // footprint edges are excluded.
    const double ku = (1.0 - beta) / (1.0 - alpha);  // dv/du of the band edges
    const double kv = (1.0 - alpha) / (1.0 - beta);  // du/dv
    const bool bottom = v < (u - alpha) * ku && v < (1.0 - alpha - u) * ku;
    const bool top = (1.0 - v) < (u - alpha) * ku && (1.0 - v) < (1.0 - alpha - u) * ku;
    const bool left = u < (v - beta) * kv && u < (1.0 - beta - v) * kv;
    const bool right = (1.0 - u) < (v - beta) * kv && (1.0 - u) < (1.0 - beta - v) * kv;
    return !(bottom || top || left || right);
}

double critical_x_fraction(double alpha, double beta) {
    check_alpha_beta(alpha, beta);
    return 1.0 - (0.5 - alpha) * (1.0 - 2.0 * alpha) * (1.0 - beta) / (1.0 - alpha) -
           (0.5 - beta) * (1.0 - 2.0 * beta) * (1.0 - alpha) / (1.0 - beta);
}

PatchMask cvp_critical_x(int rows, int cols, double alpha, double beta) {
    check_dims(rows, cols);
    check_alpha_beta(alpha, beta);
    PatchMask m(PatchKind::CriticalX, MaskFrame::Adaptive, rows, cols);
    m.params["alpha"] = alpha;
    m.params["beta"] = beta;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (critical_x_contains((r + 0.5) / rows, (c + 0.5) / cols, alpha, beta)) m.set(r, c);
        }
    }
    return m;
}

void validate(const AreaParams& p) {
    if (!(p.l_tar > 0.0) || !(p.w_tar > 0.0)) throw ConfigError("target size must be positive");
    if (!(p.l_v > 0.0) || !(p.w_v > 0.0)) throw ConfigError("voxel size must be positive");
    check_alpha_beta(p.alpha, p.beta);
    if (!(p.n_percent > 0.0 && p.n_percent <= 100.0)) throw ConfigError("n must lie in (0, 100]");
}

double area_pillars(const AreaParams& p, PatchKind kind) {
    validate(p);
    const double whole = p.l_tar * p.w_tar / (p.l_v * p.w_v);
    switch (kind) {
        case PatchKind::WholeArea:
            return whole;
        case PatchKind::CriticalX:
            return critical_x_fraction(p.alpha, p.beta) * whole;
        case PatchKind::HalfEdges:
            return p.l_tar * p.beta * p.w_tar / (p.l_v * p.w_v);
        case PatchKind::TopN:
            return p.n_percent / 100.0 * whole;
        default:
            throw ConfigError("no closed-form area for patch kind '" + std::string(to_string(kind)) + "'");
    }
}

std::string encode_mask(const PatchMask& m) {
    nlohmann::ordered_json header;
    header["kind"] = std::string(to_string(m.kind));
    header["rows"] = m.rows;
    header["cols"] = m.cols;
    header["frame"] = std::string(to_string(m.frame));
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.params) params[k] = v;
    header["params"] = std::move(params);
    header["warning"] = m.warning;
    std::ostringstream out;
    out << header.dump() << '\n';
    for (int r = 0; r < m.rows; ++r) {
        bool current = false;
        int run = 0;
        bool first = true;
        for (int c = 0; c < m.cols; ++c) {
            if (m.at(r, c) == current) {
                ++run;
                continue;
            }
            out << (first ? "" : " ") << run;
            first = false;
            current = !current;
            run = 1;
        }
        out << (first ? "" : " ") << run << '\n';
    }
    return out.str();
}

PatchMask decode_mask(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("mask: missing header");
    PatchMask m;
    try {
        const auto header = nlohmann::json::parse(line);
        const auto frame = header.at("frame").get<std::string>();
        m = PatchMask(parse_patch_kind(header.at("kind").get<std::string>()),
                      frame == "adaptive" ? MaskFrame::Adaptive : MaskFrame::Pillar,
                      header.at("rows").get<int>(), header.at("cols").get<int>());
        for (const auto& [k, v] : header.at("params").items()) m.params[k] = v.get<double>();
        m.warning = header.value("warning", false);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("mask header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("mask header: ") + e.what());
    }
    for (int r = 0; r < m.rows; ++r) {
        if (!std::getline(in, line)) throw FormatError("mask: missing row " + std::to_string(r));
        std::istringstream row(line);
        int run = 0;
        int c = 0;
        bool on = false;
        while (row >> run) {
            if (run < 0 || c + run > m.cols) throw FormatError("mask: bad run length in row " + std::to_string(r));
            for (int i = 0; i < run; ++i) m.set(r, c++, on);
            on = !on;
        }
        if (c != m.cols) throw FormatError("mask: row " + std::to_string(r) + " does not cover all columns");
    }
    return m;
}

void save_mask(const std::filesystem::path& path, const PatchMask& mask) {
    write_text_file(path, encode_mask(mask));
}

PatchMask load_mask(const std::filesystem::path& path) {
    return decode_mask(read_text_file(path));
}

void save_mask_pgm(const std::filesystem::path& path, const PatchMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.cols) + " " + std::to_string(mask.rows) + "\n255\n";
    for (std::uint8_t s : mask.selected) out.push_back(static_cast<char>(s ? 255 : 0));
    write_text_file(path, out);
}

}  // namespace vplidar
