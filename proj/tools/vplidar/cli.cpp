#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vplidar/bridge.hpp"
#include "vplidar/error.hpp"
#include "vplidar/eval.hpp"
#include "vplidar/io.hpp"
#include "vplidar/iou.hpp"
#include "vplidar/patch.hpp"
#include "vplidar/perturb.hpp"
#include "vplidar/rng.hpp"
#include "vplidar/sall.hpp"
#include "vplidar/surrogate.hpp"
#include "vplidar/synth.hpp"

namespace vplidar::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kToolVersion = "0.1.0";
constexpr std::uint64_t kSceneStream = 3;

// ---------------------------------------------------------------- options

struct CommonOpts {
    std::string out = "vplidar-out";
    int jobs = 1;
    std::uint64_t seed = 0;
};

struct InputOpts {
    std::vector<std::string> scenes;
    std::string kitti_root;
    std::vector<std::string> frames;
    int synthetic = 0;
    int synthetic_cars = 1;
    int points_per_car = 300;
    int background_points = 200;
};

struct DetectorOpts {
    std::string kind = "surrogate";
    std::string bridge_cmd;
    std::string surrogate_config;
};

struct GeometryOpts {
    double pillar_size = kDefaultPillarSize;
    std::string grid = "64x32";
    int edge_thickness = 3;
    int corner_block = 8;
    double center_fraction = 0.75;
    double x_max_dist = 1.5;
    double alpha = 0.1;
    double beta = 0.2;
    double n_percent = 30.0;
    bool half_edges_single_band = false;
    std::string saliency;
};

enum class SceneFormat { Json, Kitti };

struct LoadedScene {
    Scene scene;
    SceneFormat format = SceneFormat::Json;
};

// ---------------------------------------------------------------- parsing helpers

BoxFrameGrid parse_grid(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument("x");
        std::size_t used = 0;
        const int rows = std::stoi(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument("rows");
        const std::string rest = text.substr(x + 1);
        const int cols = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("cols");
        if (rows < 1 || cols < 1) throw std::invalid_argument("size");
        return {rows, cols};
    } catch (const std::exception&) {
        throw ConfigError("grid must look like ROWSxCOLS with positive sizes, got '" + text + "'");
    }
}

std::array<double, 2> parse_range(const std::string& text) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument("colon");
        const double lo = std::stod(text.substr(0, colon));
        const double hi = std::stod(text.substr(colon + 1));
        if (!(lo >= 0.0 && lo < hi)) throw std::invalid_argument("order");
        return {lo, hi};
    } catch (const std::exception&) {
        throw ConfigError("range must look like LO:HI with 0 <= LO < HI, got '" + text + "'");
    }
}

std::vector<double> parse_sizes(const std::string& text) {
    std::vector<double> out;
    try {
        if (std::count(text.begin(), text.end(), ':') == 2) {
            const auto a = text.find(':');
            const auto b = text.find(':', a + 1);
            const double lo = std::stod(text.substr(0, a));
            const double hi = std::stod(text.substr(a + 1, b - a - 1));
            const double step = std::stod(text.substr(b + 1));
            if (!(lo > 0.0 && hi >= lo && step > 0.0)) throw std::invalid_argument("range");
            const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
            for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const double v = std::stod(item);
                if (!(v > 0.0)) throw std::invalid_argument("size");
                out.push_back(v);
            }
        }
    } catch (const std::exception&) {
        throw ConfigError("sizes must be LO:HI:STEP or a comma list of positive values, got '" + text + "'");
    }
    if (out.empty()) throw ConfigError("no sizes given");
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string file_digest(const fs::path& path) {
    const auto bytes = read_binary_file(path);
    return hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

ojson to_ojson(const nlohmann::json& j) {
    return ojson::parse(j.dump());
}

// ---------------------------------------------------------------- output directory

class OutputDir {
public:
    explicit OutputDir(const std::string& dir) : root_(dir) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec || !fs::is_directory(root_)) throw IoError("cannot create output directory " + root_.string());
    }

    fs::path path(const std::string& name) const { return root_ / name; }

    void text(const std::string& name, std::string_view content) {
        write_text_file(path(name), content);
        note(name);
    }
    void note(const std::string& name) {
        if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    }

    /// Writes manifest.json describing the run and digests of every output.
    void manifest(const std::string& subcommand, const std::vector<std::string>& args, ojson details) const {
        std::vector<std::string> names = files_;
        std::sort(names.begin(), names.end());
        ojson m;
        m["tool"] = "vplidar";
        m["version"] = kToolVersion;
        m["subcommand"] = subcommand;
        m["args"] = args;
        m["cwd"] = fs::current_path().string();
        m["details"] = std::move(details);
        ojson outs = ojson::array();
        for (const auto& n : names) outs.push_back({{"path", n}, {"fnv1a64", file_digest(path(n))}});
        m["outputs"] = outs;
        write_text_file(path("manifest.json"), m.dump(2) + "\n");
    }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

// ---------------------------------------------------------------- shared setup

void add_common(CLI::App* sub, CommonOpts& o, bool with_seed = true) {
    sub->add_option("--out", o.out, "Output directory (default: $VPLIDAR_OUT or ./vplidar-out)")
        ->envname("VPLIDAR_OUT")
        ->capture_default_str();
    sub->add_option("--jobs", o.jobs, "Worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    if (with_seed) sub->add_option("--seed", o.seed, "Master seed for every random draw")->capture_default_str();
}

void add_inputs(CLI::App* sub, InputOpts& o) {
    sub->add_option("--scene", o.scenes, "Native scene JSON file (repeatable)");
    sub->add_option("--kitti-root", o.kitti_root, "KITTI object directory with velodyne/, label_2/, calib/");
    sub->add_option("--frame", o.frames, "KITTI frame id under --kitti-root (repeatable)");
    sub->add_option("--synthetic", o.synthetic, "Generate N synthetic car scenes from --seed")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--synthetic-cars", o.synthetic_cars, "Cars per synthetic scene")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--points-per-car", o.points_per_car, "Returns per synthetic car")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--background-points", o.background_points, "Ground returns per synthetic scene")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

void add_detector(CLI::App* sub, DetectorOpts& o) {
    sub->add_option("--detector", o.kind, "Detector provider")
        ->check(CLI::IsMember({"surrogate", "bridge"}))
        ->capture_default_str();
    sub->add_option("--bridge-cmd", o.bridge_cmd, "Provider command for --detector bridge (run via /bin/sh -c)");
    sub->add_option("--surrogate-config", o.surrogate_config, "JSON file overriding surrogate parameters");
}

void add_geometry(CLI::App* sub, GeometryOpts& o) {
    sub->add_option("--pillar-size", o.pillar_size, "Pillar edge for manual patches, metres")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--grid", o.grid, "Adaptive grid ROWSxCOLS for critical patches and maps")->capture_default_str();
    sub->add_option("--edge-thickness", o.edge_thickness, "Edges patch band, cells")->capture_default_str();
    sub->add_option("--corner-block", o.corner_block, "Nearest-corner block side, cells")->capture_default_str();
    sub->add_option("--center-fraction", o.center_fraction, "Center patch side fraction")->capture_default_str();
    sub->add_option("--x-max-dist", o.x_max_dist, "X patch half-width around the diagonals, cells")
        ->capture_default_str();
    sub->add_option("--alpha", o.alpha, "Critical-X alpha")->capture_default_str();
    sub->add_option("--beta", o.beta, "Critical-X / half-edges beta")->capture_default_str();
    sub->add_option("--n-percent", o.n_percent, "Top-N share of positive cells, percent")->capture_default_str();
    sub->add_flag("--half-edges-single-band", o.half_edges_single_band,
                  "Keep only the half-edges band with the larger saliency sum");
    sub->add_option("--saliency", o.saliency, "Universal saliency map (top_n, critical-first, single band)");
}

std::vector<LoadedScene> load_inputs(const InputOpts& o, std::uint64_t seed) {
    std::vector<LoadedScene> out;
    for (const auto& p : o.scenes) out.push_back({load_scene_json(p), SceneFormat::Json});
    if (!o.frames.empty() && o.kitti_root.empty()) throw ConfigError("--frame needs --kitti-root");
    if (!o.kitti_root.empty() && o.frames.empty()) throw ConfigError("--kitti-root needs at least one --frame");
    for (const auto& f : o.frames) {
        const fs::path root(o.kitti_root);
        Scene s;
        s.id = f;
        s.cloud = load_kitti_bin(root / "velodyne" / (f + ".bin"));
        s.boxes = load_kitti_labels(root / "label_2" / (f + ".txt"), root / "calib" / (f + ".txt"));
        out.push_back({std::move(s), SceneFormat::Kitti});
    }
    if (o.synthetic > 0) {
        CarSceneOptions co;
        co.cars = o.synthetic_cars;
        co.points_per_car = o.points_per_car;
        co.background_points = o.background_points;
        for (auto& s : synth_car_scenes(o.synthetic, co, derive_seed(seed, kSceneStream), "synth")) {
            out.push_back({std::move(s), SceneFormat::Json});
        }
    }
    if (out.empty()) throw ConfigError("no input scenes: use --scene, --kitti-root/--frame or --synthetic");
    return out;
}

std::vector<Scene> scenes_only(const std::vector<LoadedScene>& loaded) {
    std::vector<Scene> out;
    out.reserve(loaded.size());
    for (const auto& l : loaded) out.push_back(l.scene);
    return out;
}

struct DetectorHandle {
    std::unique_ptr<Detector> detector;
    ojson description;
};

DetectorHandle make_detector(const DetectorOpts& o) {
    DetectorHandle h;
    if (o.kind == "bridge") {
        if (o.bridge_cmd.empty()) throw ConfigError("--detector bridge needs --bridge-cmd");
        BridgeOptions bo;
        bo.command = o.bridge_cmd;
        auto b = std::make_unique<BridgeDetector>(bo);
        h.description = {{"kind", "bridge"}, {"command", o.bridge_cmd}, {"provider", to_ojson(b->info())}};
        h.detector = std::move(b);
        return h;
    }
    if (!o.bridge_cmd.empty()) throw ConfigError("--bridge-cmd only applies to --detector bridge");
    SurrogateParams p;
    if (!o.surrogate_config.empty()) p = load_surrogate_params(o.surrogate_config);
    h.description = {{"kind", "surrogate"}, {"params", to_json(p)}};
    h.detector = std::make_unique<SurrogateDetector>(p);
    return h;
}

AttackConfig attack_config(const GeometryOpts& g) {
    AttackConfig c;
    c.pillar_size = g.pillar_size;
    c.grid = parse_grid(g.grid);
    c.edge_thickness = g.edge_thickness;
    c.corner_block = g.corner_block;
    c.center_fraction = g.center_fraction;
    c.x_max_dist = g.x_max_dist;
    c.alpha = g.alpha;
    c.beta = g.beta;
    c.n_percent = g.n_percent;
    c.half_edges_single_band = g.half_edges_single_band;
    if (!g.saliency.empty()) c.saliency = load_saliency_map(g.saliency);
    return c;
}

ojson geometry_json(const AttackConfig& c) {
    return {{"pillar_size", c.pillar_size},
            {"grid", {c.grid.rows, c.grid.cols}},
            {"edge_thickness", c.edge_thickness},
            {"corner_block", c.corner_block},
            {"center_fraction", c.center_fraction},
            {"x_max_dist", c.x_max_dist},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"n_percent", c.n_percent},
            {"half_edges_single_band", c.half_edges_single_band},
            {"saliency", c.saliency.has_value()}};
}

ojson scene_list(const std::vector<LoadedScene>& scenes) {
    ojson list = ojson::array();
    for (const auto& s : scenes) {
        list.push_back({{"id", s.scene.id},
                        {"format", s.format == SceneFormat::Json ? "json" : "kitti"},
                        {"points", s.scene.cloud.size()},
                        {"boxes", s.scene.boxes.size()}});
    }
    return list;
}

/// Tokens of the invocation minus the ones that must not influence outputs.
std::vector<std::string> recorded_args(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--out" || a == "--jobs") {
            ++i;
            continue;
        }
        if (a.rfind("--out=", 0) == 0 || a.rfind("--jobs=", 0) == 0) continue;
        out.push_back(a);
    }
    return out;
}

// Predictions line up with the candidate boxes for every built-in provider;
// a bridge provider may return fewer.
ojson logit_of(const std::vector<Prediction>& preds, const std::vector<BoundingBox>& boxes, std::size_t b) {
    if (preds.size() != boxes.size()) return nullptr;
    return preds[b].logit;
}

// ---------------------------------------------------------------- subcommands

struct AttackOpts {
    CommonOpts common;
    InputOpts inputs;
    DetectorOpts detector;
    GeometryOpts geometry;
    std::string patch = "whole";
    int budget = 200;
    std::vector<double> shift_set{-2.0, -1.0, 1.0, 2.0};
    bool ora_compat = false;
    std::string strategy = "random";
    std::vector<std::size_t> boxes;
    std::string cls = "car";
    double iou = 0.7;
};

int cmd_attack(const AttackOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    AttackConfig cfg = attack_config(o.geometry);
    cfg.patch = parse_patch_kind(o.patch);
    cfg.budget = o.budget;
    cfg.shift_set = o.ora_compat ? ora_compat_shift_set() : o.shift_set;
    cfg.strategy = parse_strategy(o.strategy);
    cfg.seed = o.common.seed;
    validate(cfg);
    const ObjectClass cls = parse_object_class(o.cls);

    const auto loaded = load_inputs(o.inputs, o.common.seed);
    DetectorHandle det = make_detector(o.detector);
    const MatchRule rule{o.iou, det.detector->threshold()};
    OutputDir dir(o.common.out);

    ojson objects = ojson::array();
    std::vector<AttackOutcome> outcomes;
    for (const auto& ls : loaded) {
        const Scene& scene = ls.scene;
        std::vector<std::size_t> targets;
        if (o.boxes.empty()) {
            for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
                if (scene.boxes[b].cls == cls) targets.push_back(b);
            }
        } else {
            targets = o.boxes;
        }
        const AttackResult res = apply_multi(scene, targets, cfg, o.common.jobs);

        if (ls.format == SceneFormat::Kitti) {
            save_kitti_bin(dir.path(scene.id + ".bin"), res.adversarial.cloud);
            dir.note(scene.id + ".bin");
        } else {
            save_scene_json(dir.path(scene.id + ".json"), res.adversarial);
            dir.note(scene.id + ".json");
        }
        dir.text(scene.id + ".records.jsonl", records_to_jsonl(res.record));

        const auto before = det.detector->predict(scene, scene.boxes);
        const auto after = det.detector->predict(res.adversarial, scene.boxes);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const std::size_t b = targets[i];
            std::size_t selected = 0, shifted = 0;
            for (const auto& r : res.record.entries) {
                if (r.object != b) continue;
                ++selected;
                if (r.applied) ++shifted;
            }
            AttackOutcome oc;
            oc.scene_id = scene.id;
            oc.object = b;
            oc.budget = o.budget;
            oc.patch = cfg.patch;
            oc.detected_before = matched(before, scene.boxes[b], rule);
            oc.iou_after = best_match_iou(after, scene.boxes[b], rule);
            oc.detected_after = oc.iou_after >= rule.iou_threshold;
            outcomes.push_back(oc);
            objects.push_back({{"scene", scene.id},
                               {"object", b},
                               {"class", to_string(scene.boxes[b].cls)},
                               {"candidates", res.candidate_counts[i]},
                               {"selected", selected},
                               {"shifted", shifted},
                               {"logit_before", logit_of(before, scene.boxes, b)},
                               {"logit_after", logit_of(after, scene.boxes, b)},
                               {"detected_before", oc.detected_before},
                               {"detected_after", oc.detected_after},
                               {"iou_after", oc.iou_after}});
        }
    }

    ojson metrics;
    metrics["patch"] = to_string(cfg.patch);
    metrics["strategy"] = to_string(cfg.strategy);
    metrics["budget"] = cfg.budget;
    metrics["shift_set"] = cfg.shift_set;
    metrics["iou_threshold"] = rule.iou_threshold;
    metrics["probability_threshold"] = rule.probability_threshold;
    if (!outcomes.empty()) {
        metrics["asr"] = asr(outcomes);
        metrics["recall"] = recall(outcomes);
    }
    metrics["objects"] = objects;
    dir.text("metrics.json", metrics.dump(2) + "\n");

    ojson details;
    details["scenes"] = scene_list(loaded);
    details["detector"] = det.description;
    details["attack"] = geometry_json(cfg);
    dir.manifest("attack", args, details);

    out << "attacked " << outcomes.size() << " objects in " << loaded.size() << " scenes";
    if (!outcomes.empty()) out << ": asr " << fmt_double(asr(outcomes)) << ", recall " << fmt_double(recall(outcomes));
    out << "\n";
    return kExitOk;
}

struct SaliencyOpts {
    CommonOpts common;
    InputOpts inputs;
    DetectorOpts detector;
    int steps = 25;
    std::string grid = "64x32";
    std::string cls = "car";
    std::string range = "5:8";
    std::string baseline = "radial_pushout";
    double displacement = 2.0;
    std::string rule = "midpoint";
    bool all_directions = false;
};

int cmd_saliency(const SaliencyOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    SallOptions so;
    so.cls = parse_object_class(o.cls);
    so.range_m = parse_range(o.range);
    so.front_only = !o.all_directions;
    so.grid = parse_grid(o.grid);
    so.ig.steps = o.steps;
    so.ig.baseline = parse_baseline(o.baseline);
    so.ig.displacement = o.displacement;
    so.ig.rule = parse_quadrature_rule(o.rule);
    so.jobs = o.common.jobs;
    validate(so.ig);

    const auto loaded = load_inputs(o.inputs, o.common.seed);
    DetectorHandle det = make_detector(o.detector);
    OutputDir dir(o.common.out);
    const auto scenes = scenes_only(loaded);
    const SallResult res = run_sall(scenes, *det.detector, so);

    save_saliency_map(dir.path("universal.map"), res.universal);
    dir.note("universal.map");
    save_saliency_csv(dir.path("universal.csv"), res.universal);
    dir.note("universal.csv");

    ojson report;
    report["used"] = res.used;
    report["skipped"] = res.skipped;
    report["k"] = res.universal.k;
    report["ig_rule"] = to_string(so.ig.rule);
    report["total"] = res.universal.total();
    double worst = 0.0;
    ojson objs = ojson::array();
    for (const auto& r : res.objects) {
        const double delta = std::abs(r.score_input - r.score_baseline);
        const double rel = delta > 0.0 ? r.residual / delta : 0.0;
        if (r.status == "ok") worst = std::max(worst, rel);
        objs.push_back({{"scene", r.scene_id},
                        {"object", r.object},
                        {"status", r.status},
                        {"points", r.points},
                        {"score_input", r.score_input},
                        {"score_baseline", r.score_baseline},
                        {"attribution_sum", r.attribution_sum},
                        {"residual", r.residual},
                        {"relative_residual", rel}});
    }
    report["worst_relative_residual"] = worst;
    report["objects"] = objs;
    dir.text("report.json", report.dump(2) + "\n");

    ojson details;
    details["scenes"] = scene_list(loaded);
    details["detector"] = det.description;
    details["ig"] = {{"steps", so.ig.steps},
                     {"baseline", to_string(so.ig.baseline)},
                     {"displacement", so.ig.displacement},
                     {"rule", to_string(so.ig.rule)}};
    details["filter"] = {{"class", to_string(so.cls)},
                         {"range_m", so.range_m},
                         {"front_only", so.front_only},
                         {"grid", {so.grid.rows, so.grid.cols}}};
    dir.manifest("saliency", args, details);

    out << "universal map from " << res.used << " objects (" << res.skipped << " skipped), worst completeness "
        << fmt_double(worst) << "\n";
    return kExitOk;
}

struct AreaOpts {
    CommonOpts common;
    double l_v = 0.05;
    double w_v = 0.05;
    double alpha = 0.1;
    double beta = 0.2;
    double n_percent = 30.0;
    double aspect = 2.0;
    double height = 1.5;
    std::string sizes = "0.5:5:0.5";
};

int cmd_area(const AreaOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    if (!(o.aspect > 0.0)) throw ConfigError("--aspect must be positive");
    const auto sizes = parse_sizes(o.sizes);
    const PatchKind kinds[] = {PatchKind::WholeArea, PatchKind::HalfEdges, PatchKind::TopN, PatchKind::CriticalX};
    std::ostringstream csv;
    csv << "S,length,width,whole,half_edges,top_n,critical_x\n";
    for (double s : sizes) {
        AreaParams p;
        p.l_tar = o.aspect * s;
        p.w_tar = s;
        p.h_tar = o.height;
        p.l_v = o.l_v;
        p.w_v = o.w_v;
        p.alpha = o.alpha;
        p.beta = o.beta;
        p.n_percent = o.n_percent;
        validate(p);
        csv << fmt_double(s) << ',' << fmt_double(p.l_tar) << ',' << fmt_double(p.w_tar);
        for (PatchKind k : kinds) csv << ',' << fmt_double(area_pillars(p, k));
        csv << '\n';
    }
    OutputDir dir(o.common.out);
    dir.text("area.csv", csv.str());
    ojson details = {{"l_v", o.l_v},     {"w_v", o.w_v},       {"alpha", o.alpha}, {"beta", o.beta},
                     {"n_percent", o.n_percent}, {"aspect", o.aspect}, {"sizes", sizes}};
    dir.manifest("area", args, details);
    out << csv.str();
    return kExitOk;
}

struct SweepOpts {
    CommonOpts common;
    InputOpts inputs;
    DetectorOpts detector;
    GeometryOpts geometry;
    std::vector<std::string> patches{"whole"};
    std::vector<std::string> strategies{"random"};
    std::vector<int> budgets{0, 10, 50, 100, 150, 200};
    std::vector<double> shift_set{-2.0, -1.0, 1.0, 2.0};
    int repeats = 1;
    double iou = 0.7;
    std::string box_source = "gt";
    std::string cls = "car";
};

int cmd_sweep(const SweepOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    SweepConfig sc;
    sc.attack = attack_config(o.geometry);
    sc.attack.shift_set = o.shift_set;
    sc.patches.clear();
    for (const auto& p : o.patches) sc.patches.push_back(parse_patch_kind(p));
    sc.strategies.clear();
    for (const auto& s : o.strategies) sc.strategies.push_back(parse_strategy(s));
    sc.budgets = o.budgets;
    sc.iou_threshold = o.iou;
    sc.box_source = parse_box_source(o.box_source);
    sc.target_class = parse_object_class(o.cls);
    sc.jobs = o.common.jobs;
    if (o.repeats < 1) throw ConfigError("--repeats must be >= 1");

    const auto loaded = load_inputs(o.inputs, o.common.seed);
    DetectorHandle det = make_detector(o.detector);
    const auto scenes = scenes_only(loaded);

    std::vector<SweepRow> rows;
    for (int r = 0; r < o.repeats; ++r) {
        sc.seed = o.common.seed + static_cast<std::uint64_t>(r);
        const SweepResult res = sweep(scenes, *det.detector, sc);
        rows.insert(rows.end(), res.rows.begin(), res.rows.end());
    }
    OutputDir dir(o.common.out);
    dir.text("sweep.csv", sweep_to_csv(rows));

    ojson details;
    details["scenes"] = scene_list(loaded);
    details["detector"] = det.description;
    details["iou_threshold"] = sc.iou_threshold;
    details["probability_threshold"] = det.detector->threshold();
    details["box_source"] = to_string(sc.box_source);
    details["class"] = to_string(sc.target_class);
    details["seeds"] = {o.common.seed, o.common.seed + static_cast<std::uint64_t>(o.repeats - 1)};
    details["shift_set"] = sc.attack.shift_set;
    details["attack"] = geometry_json(sc.attack);
    dir.manifest("sweep", args, details);
    out << "sweep: " << rows.size() << " rows\n";
    return kExitOk;
}

struct InspectOpts {
    CommonOpts common;
    InputOpts inputs;
    DetectorOpts detector;
};

int cmd_inspect(const InspectOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    const auto loaded = load_inputs(o.inputs, o.common.seed);
    DetectorHandle det = make_detector(o.detector);
    ojson scenes = ojson::array();
    char line[256];
    for (const auto& ls : loaded) {
        const Scene& s = ls.scene;
        const Extraction ex = extract(s);
        const auto preds = det.detector->predict(s, s.boxes);
        out << "scene " << s.id << ": " << s.cloud.size() << " points, " << s.boxes.size() << " boxes, "
            << ex.background.size() << " background\n";
        ojson boxes = ojson::array();
        for (std::size_t b = 0; b < s.boxes.size(); ++b) {
            const BoundingBox& box = s.boxes[b];
            const double range = std::hypot(box.cx, box.cy);
            std::snprintf(line, sizeof line,
                          "  [%zu] %-10s c=(%.2f, %.2f, %.2f) lwh=(%.2f, %.2f, %.2f) yaw=%.3f range=%.2f points=%zu "
                          "p=%.3f\n",
                          b, std::string(to_string(box.cls)).c_str(), box.cx, box.cy, box.cz, box.length, box.width,
                          box.height, box.yaw, range, ex.targets[b].size(),
                          preds.size() == s.boxes.size() ? preds[b].probability : std::nan(""));
            out << line;
            boxes.push_back({{"box", box_to_json(box)},
                             {"range_m", range},
                             {"points", ex.targets[b].size()},
                             {"logit", logit_of(preds, s.boxes, b)}});
        }
        scenes.push_back({{"id", s.id},
                          {"points", s.cloud.size()},
                          {"background", ex.background.size()},
                          {"boxes", boxes}});
    }
    OutputDir dir(o.common.out);
    dir.text("inspect.json", ojson{{"scenes", scenes}}.dump(2) + "\n");
    dir.manifest("inspect", args, {{"detector", det.description}});
    return kExitOk;
}

struct PatchExportOpts {
    CommonOpts common;
    GeometryOpts geometry;
    std::string patch = "critical_x";
    std::string scene;
    std::size_t box = 0;
    double length = 4.5;
    double width = 1.8;
    double cx = 10.0;
    double cy = 0.0;
};

int cmd_patch_export(const PatchExportOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    AttackConfig cfg = attack_config(o.geometry);
    cfg.patch = parse_patch_kind(o.patch);
    BoundingBox box;
    if (!o.scene.empty()) {
        const Scene s = load_scene_json(o.scene);
        if (o.box >= s.boxes.size()) {
            throw ConfigError("box index " + std::to_string(o.box) + " not in scene " + s.id);
        }
        box = s.boxes[o.box];
    } else {
        box.cx = o.cx;
        box.cy = o.cy;
        box.length = o.length;
        box.width = o.width;
        box.height = 1.5;
        validate(box);
    }
    const PatchMask mask = build_mask(box, cfg);
    OutputDir dir(o.common.out);
    const std::string stem(to_string(mask.kind));
    save_mask(dir.path(stem + ".mask"), mask);
    dir.note(stem + ".mask");
    save_mask_pgm(dir.path(stem + ".pgm"), mask);
    dir.note(stem + ".pgm");
    ojson details;
    details["box"] = box_to_json(box);
    details["patch"] = geometry_json(cfg);
    dir.manifest("patch-export", args, details);
    out << stem << ": " << mask.rows << "x" << mask.cols << " " << to_string(mask.frame) << " cells, "
        << mask.count() << " selected";
    if (mask.warning) out << " (warning: empty mask)";
    out << "\n";
    return kExitOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_replay(const std::string& manifest_path, const std::string& out_dir, int jobs, std::ostream& out,
               std::ostream& err) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path + ": " + e.what());
    }
    if (!m.contains("subcommand") || !m.contains("args") || !m.contains("outputs")) {
        throw FormatError(manifest_path + ": not a vplidar manifest");
    }
    if (out_dir.empty()) throw ConfigError("replay needs --out");
    const fs::path target = fs::absolute(out_dir);
    std::vector<std::string> args{m["subcommand"].get<std::string>()};
    for (const auto& a : m["args"]) args.push_back(a.get<std::string>());
    args.push_back("--out");
    args.push_back(target.string());
    args.push_back("--jobs");
    args.push_back(std::to_string(jobs));

    const fs::path here = fs::current_path();
    const fs::path recorded_cwd = m.value("cwd", here.string());
    std::error_code ec;
    fs::current_path(recorded_cwd, ec);
    if (ec) throw IoError("cannot enter recorded working directory " + recorded_cwd.string());
    int rc = kExitFailure;
    try {
        rc = dispatch(args, out, err);
    } catch (...) {
        fs::current_path(here, ec);
        throw;
    }
    fs::current_path(here, ec);
    if (rc != kExitOk) return rc;

    std::size_t mismatches = 0;
    for (const auto& entry : m["outputs"]) {
        const std::string name = entry.at("path").get<std::string>();
        const fs::path p = target / name;
        if (!fs::exists(p)) {
            err << "replay: missing output " << name << "\n";
            ++mismatches;
            continue;
        }
        if (file_digest(p) != entry.at("fnv1a64").get<std::string>()) {
            err << "replay: output differs: " << name << "\n";
            ++mismatches;
        }
    }
    if (mismatches > 0) return kExitFailure;
    out << "replay: " << m["outputs"].size() << " outputs identical\n";
    return kExitOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"VP-LiDAR / SALL point-cloud attack simulation toolkit", "vplidar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    AttackOpts attack;
    auto* sa = app.add_subcommand("attack", "Perturb object points inside a virtual patch");
    add_common(sa, attack.common);
    add_inputs(sa, attack.inputs);
    add_detector(sa, attack.detector);
    add_geometry(sa, attack.geometry);
    sa->add_option("--patch", attack.patch, "Patch kind")->capture_default_str();
    sa->add_option("--budget", attack.budget, "Point budget per object")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sa->add_option("--shift-set", attack.shift_set, "Radial shifts in metres, e.g. --shift-set=-2,-1,1,2")
        ->delimiter(',')
        ->capture_default_str();
    sa->add_flag("--ora-compat", attack.ora_compat, "Use the outward-only shift set {1, 2}");
    sa->add_option("--strategy", attack.strategy, "Point selection: random or critical")->capture_default_str();
    sa->add_option("--box", attack.boxes, "Box index to attack (repeatable; default: every box of --class)");
    sa->add_option("--class", attack.cls, "Target class when --box is not given")->capture_default_str();
    sa->add_option("--iou", attack.iou, "BEV IOU for a post-attack match")->capture_default_str();

    SaliencyOpts sal;
    auto* ss = app.add_subcommand("saliency", "Build a universal saliency map with Integrated Gradients");
    add_common(ss, sal.common);
    add_inputs(ss, sal.inputs);
    add_detector(ss, sal.detector);
    ss->add_option("--steps", sal.steps, "IG steps")->check(CLI::PositiveNumber)->capture_default_str();
    ss->add_option("--grid", sal.grid, "Map grid ROWSxCOLS")->capture_default_str();
    ss->add_option("--class", sal.cls, "Object class")->capture_default_str();
    ss->add_option("--range", sal.range, "Distance bin LO:HI in metres")->capture_default_str();
    ss->add_option("--baseline", sal.baseline, "IG baseline: radial_pushout or box_centroid")
        ->capture_default_str();
    ss->add_option("--displacement", sal.displacement, "Radial push-out distance, metres")->capture_default_str();
    ss->add_option("--ig-rule", sal.rule, "Path sampling: midpoint or right (alpha = k/m)")->capture_default_str();
    ss->add_flag("--all-directions", sal.all_directions, "Include objects behind the sensor (x <= 0)");

    AreaOpts area;
    auto* sr = app.add_subcommand("area", "Pillars needed per patch kind over a size sweep");
    add_common(sr, area.common, false);
    sr->add_option("--l-v", area.l_v, "Pillar length, metres")->capture_default_str();
    sr->add_option("--w-v", area.w_v, "Pillar width, metres")->capture_default_str();
    sr->add_option("--alpha", area.alpha, "Critical-X alpha")->capture_default_str();
    sr->add_option("--beta", area.beta, "Critical-X / half-edges beta")->capture_default_str();
    sr->add_option("--n-percent", area.n_percent, "Top-N percent")->capture_default_str();
    sr->add_option("--aspect", area.aspect, "Target length / width")->capture_default_str();
    sr->add_option("--sizes", area.sizes, "Target widths S as LO:HI:STEP or a comma list")->capture_default_str();

    SweepOpts sw;
    auto* sw_cmd = app.add_subcommand("sweep", "ASR and recall over patches x strategies x budgets");
    add_common(sw_cmd, sw.common);
    add_inputs(sw_cmd, sw.inputs);
    add_detector(sw_cmd, sw.detector);
    add_geometry(sw_cmd, sw.geometry);
    sw_cmd->add_option("--patches", sw.patches, "Comma-separated patch kinds")->delimiter(',')->capture_default_str();
    sw_cmd->add_option("--strategies", sw.strategies, "Comma-separated strategies")
        ->delimiter(',')
        ->capture_default_str();
    sw_cmd->add_option("--budgets", sw.budgets, "Comma-separated point budgets")
        ->delimiter(',')
        ->capture_default_str();
    sw_cmd->add_option("--shift-set", sw.shift_set, "Radial shifts in metres")->delimiter(',')->capture_default_str();
    sw_cmd->add_option("--repeats", sw.repeats, "Seeds seed .. seed+N-1")->capture_default_str();
    sw_cmd->add_option("--iou", sw.iou, "BEV IOU for a match")->capture_default_str();
    sw_cmd->add_option("--box-source", sw.box_source, "Detected-before source: gt or detector")
        ->capture_default_str();
    sw_cmd->add_option("--class", sw.cls, "Target class")->capture_default_str();

    InspectOpts insp;
    auto* si = app.add_subcommand("inspect", "Summarize scenes, boxes and detector scores");
    add_common(si, insp.common);
    add_inputs(si, insp.inputs);
    add_detector(si, insp.detector);

    PatchExportOpts pe;
    auto* sp = app.add_subcommand("patch-export", "Write a patch mask as run-length text and PGM");
    add_common(sp, pe.common, false);
    add_geometry(sp, pe.geometry);
    sp->add_option("--patch", pe.patch, "Patch kind")->capture_default_str();
    sp->add_option("--scene", pe.scene, "Scene JSON holding the box");
    sp->add_option("--box", pe.box, "Box index within --scene")->capture_default_str();
    sp->add_option("--length", pe.length, "Box length when no scene is given")->capture_default_str();
    sp->add_option("--width", pe.width, "Box width when no scene is given")->capture_default_str();
    sp->add_option("--cx", pe.cx, "Box centre x when no scene is given")->capture_default_str();
    sp->add_option("--cy", pe.cy, "Box centre y when no scene is given")->capture_default_str();

    std::string manifest_path;
    std::string replay_out;
    int replay_jobs = 1;
    auto* sy = app.add_subcommand("replay", "Re-run a recorded invocation and compare output digests");
    sy->add_option("manifest", manifest_path, "manifest.json written by an earlier run")->required();
    sy->add_option("--out", replay_out, "Directory for the replayed outputs")->required();
    sy->add_option("--jobs", replay_jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "vplidar: " << e.what() << "\n";
        return kExitConfig;
    }

    const std::vector<std::string> sub_args = recorded_args(std::vector<std::string>(args.begin() + 1, args.end()));
    if (sa->parsed()) return cmd_attack(attack, sub_args, out);
    if (ss->parsed()) return cmd_saliency(sal, sub_args, out);
    if (sr->parsed()) return cmd_area(area, sub_args, out);
    if (sw_cmd->parsed()) return cmd_sweep(sw, sub_args, out);
    if (si->parsed()) return cmd_inspect(insp, sub_args, out);
    if (sp->parsed()) return cmd_patch_export(pe, sub_args, out);
    if (sy->parsed()) return cmd_replay(manifest_path, replay_out, replay_jobs, out, err);
    return kExitConfig;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out, err);
    } catch (const ConfigError& e) {
        err << "vplidar: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IndexOutOfRange& e) {
        err << "vplidar: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        err << "vplidar: I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        err << "vplidar: I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DetectorError& e) {
        err << "vplidar: detector error: " << e.what() << "\n";
        return kExitDetector;
    } catch (const NoMatchError& e) {
        err << "vplidar: detector error: " << e.what() << "\n";
        return kExitDetector;
    } catch (const std::exception& e) {
        err << "vplidar: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace vplidar::cli
