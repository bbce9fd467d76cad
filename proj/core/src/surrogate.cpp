#include "vplidar/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "vplidar/error.hpp"
#include "vplidar/io.hpp"

namespace vplidar {
namespace {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

bool within_dilated(const LocalCoords& lc, const BoundingBox& box, double margin) {
    return std::abs(lc.u) <= 0.5 * box.length + margin && std::abs(lc.v) <= 0.5 * box.width + margin &&
           std::abs(lc.t) <= 0.5 * box.height + margin;
}

}  // namespace

double sigmoid(double x) {
    return logistic(x);
}

void validate(const SurrogateParams& p) {
    if (!(p.sigma > 0.0)) throw ConfigError("surrogate sigma must be positive");
    if (!(p.pillar_size > 0.0)) throw ConfigError("surrogate pillar size must be positive");
    for (double w : p.weights) {
        if (!std::isfinite(w)) throw ConfigError("surrogate weights must be finite");
    }
    if (!std::isfinite(p.bias)) throw ConfigError("surrogate bias must be finite");
    if (!(p.threshold > 0.0 && p.threshold < 1.0)) throw ConfigError("detection threshold must lie in (0, 1)");
    if (!(p.mass_prior > 0.0)) throw ConfigError("surrogate mass prior must be positive");
    if (!(p.shell_eps > 0.0)) throw ConfigError("surrogate shell epsilon must be positive");
    if (!(p.shell_width > 0.0)) throw ConfigError("surrogate shell width must be positive");
    if (!(p.mass_margin >= 0.0)) throw ConfigError("surrogate mass margin must be >= 0");
    if (!(p.shell_power >= 2.0) || p.shell_power != std::round(p.shell_power) ||
        static_cast<long>(p.shell_power) % 2 != 0) {
        throw ConfigError("surrogate shell power must be an even integer >= 2");
    }
}

nlohmann::ordered_json to_json(const SurrogateParams& p) {
    nlohmann::ordered_json j;
    j["pillar_size"] = p.pillar_size;
    j["sigma"] = p.sigma;
    j["weights"] = {{"occupancy", p.weights[0]}, {"height", p.weights[1]}, {"surface", p.weights[2]}};
    j["bias"] = p.bias;
    j["threshold"] = p.threshold;
    j["mass_prior"] = p.mass_prior;
    j["mass_margin"] = p.mass_margin;
    j["shell_power"] = p.shell_power;
    j["shell_width"] = p.shell_width;
    j["shell_eps"] = p.shell_eps;
    return j;
}

SurrogateParams surrogate_params_from_json(const nlohmann::json& j) {
    SurrogateParams p;
    try {
        p.pillar_size = j.value("pillar_size", p.pillar_size);
        p.sigma = j.value("sigma", p.sigma);
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            p.weights = {w.value("occupancy", p.weights[0]), w.value("height", p.weights[1]),
                         w.value("surface", p.weights[2])};
        }
        p.bias = j.value("bias", p.bias);
        p.threshold = j.value("threshold", p.threshold);
        p.mass_prior = j.value("mass_prior", p.mass_prior);
        p.mass_margin = j.value("mass_margin", p.mass_margin);
        p.shell_power = j.value("shell_power", p.shell_power);
        p.shell_width = j.value("shell_width", p.shell_width);
        p.shell_eps = j.value("shell_eps", p.shell_eps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("surrogate config: ") + e.what());
    }
    validate(p);
    return p;
}

SurrogateParams load_surrogate_params(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return surrogate_params_from_json(j);
}

ObjectScore surrogate_score(std::span<const Point> points, const BoundingBox& box, const SurrogateParams& params) {
    ObjectScore out;
    out.gradient.assign(points.size(), {0.0, 0.0, 0.0});
    const double sigma = params.sigma;

    std::vector<LocalCoords> local;
    local.reserve(points.size());
    bool any_near = false;
    for (const Point& p : points) {
        local.push_back(to_box_local(p, box));
        any_near = any_near || within_dilated(local.back(), box, params.mass_margin + 2.0 * sigma);
    }
    if (!any_near) {
        out.logit = params.bias;
        out.probability = logistic(out.logit);
        out.empty = true;
        return out;
    }

    const int nr = std::max(1, static_cast<int>(std::ceil(box.length / params.pillar_size - 1e-9)));
    const int nc = std::max(1, static_cast<int>(std::ceil(box.width / params.pillar_size - 1e-9)));
    const double pl = box.length / nr;
    const double pw = box.width / nc;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double invs2 = 1.0 / (sigma * sigma);
    const double hl = 0.5 * box.length;
    const double hw = 0.5 * box.width;
    const double hh = 0.5 * box.height;
    const std::size_t n = points.size();

    // Separable kernel: K_pij = ku[p][i] * kv[p][j]
    std::vector<double> ku(n * nr), kv(n * nc), dku(n * nr), dkv(n * nc);
    std::vector<double> hwin(n), dhwin(n);
    // mass windows: sigmoid boxes dilated by mass_margin on every side
    std::vector<double> wu(n), wv(n), wt(n), dwu(n), dwv(n), dwt(n);
    auto window = [sigma](double x, double half, double& value, double& deriv) {
        const double s1 = logistic((x + half) / sigma);
        const double s2 = logistic((half - x) / sigma);
        value = s1 * s2;
        deriv = value * (s2 - s1) / sigma;
    };
    const double mm = params.mass_margin;
    for (std::size_t p = 0; p < n; ++p) {
        const LocalCoords& lc = local[p];
        for (int i = 0; i < nr; ++i) {
            const double d = lc.u - (-hl + (i + 0.5) * pl);
            const double k = std::exp(-d * d * inv2s2);
            ku[p * nr + i] = k;
            dku[p * nr + i] = -k * d * invs2;
        }
        for (int j = 0; j < nc; ++j) {
            const double d = lc.v - (-hw + (j + 0.5) * pw);
            const double k = std::exp(-d * d * inv2s2);
            kv[p * nc + j] = k;
            dkv[p * nc + j] = -k * d * invs2;
        }
        window(lc.u, hl + mm, wu[p], dwu[p]);
        window(lc.v, hw + mm, wv[p], dwv[p]);
        window(lc.t, hh + mm, wt[p], dwt[p]);
        const double s1 = logistic((lc.t + hh) / sigma);
        const double s2 = logistic((hh - lc.t) / sigma);
        hwin[p] = s1 * s2;
        dhwin[p] = hwin[p] * (s2 - s1) / sigma;
    }

    // soft pillar counts
    std::vector<double> occ(static_cast<std::size_t>(nr) * nc, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        if (hwin[p] == 0.0) continue;
        for (int i = 0; i < nr; ++i) {
            const double a = hwin[p] * ku[p * nr + i];
            if (a == 0.0) continue;
            double* row = &occ[static_cast<std::size_t>(i) * nc];
            const double* kvp = &kv[p * nc];
            for (int j = 0; j < nc; ++j) row[j] += a * kvp[j];
        }
    }
    const double npil = static_cast<double>(nr) * nc;
    std::vector<double> ex(occ.size());
    double f_occ = 0.0;
    for (std::size_t k = 0; k < occ.size(); ++k) {
        ex[k] = std::exp(-occ[k]);
        f_occ += 1.0 - ex[k];
    }
    f_occ /= npil;

    // mass-weighted means
    std::vector<double> mass(n), q(n), rho(n), shell(n);
    std::vector<std::array<double, 3>> drho(n);
    const double sp = params.shell_power;
    const double inv2k2 = 1.0 / (2.0 * params.shell_width * params.shell_width);
    double total_mass = params.mass_prior;
    double a_h = 0.0;
    double a_s = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const LocalCoords& lc = local[p];
        mass[p] = wu[p] * wv[p] * wt[p];
        q[p] = lc.t / box.height + 0.5;
        // superellipse norm over normalized box coordinates: 1 on the faces
        const double xs[3] = {2.0 * lc.u / box.length, 2.0 * lc.v / box.width, 2.0 * lc.t / box.height};
        double acc = std::pow(params.shell_eps, sp);
        for (double x : xs) acc += std::pow(x, sp);
        rho[p] = std::pow(acc, 1.0 / sp);
        const double dev = rho[p] - 1.0;
        shell[p] = std::exp(-dev * dev * inv2k2);
        for (int d = 0; d < 3; ++d) drho[p][d] = std::pow(xs[d], sp - 1.0) * std::pow(rho[p], 1.0 - sp);
        total_mass += mass[p];
        a_h += mass[p] * q[p];
        a_s += mass[p] * shell[p];
    }
    const double f_h = a_h / total_mass;
    const double f_s = a_s / total_mass;

    out.features = {f_occ, f_h, f_s};
    const auto& w = params.weights;
    out.logit = w[0] * f_occ + w[1] * f_h + w[2] * f_s + params.bias;
    out.probability = logistic(out.logit);

    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    std::vector<double> gi(nr), gj(nc);
    for (std::size_t p = 0; p < n; ++p) {
        // occupancy: d/dp sum_ij (1 - exp(-o_ij)) = sum_ij exp(-o_ij) d o_ij
        double occ_u = 0.0, occ_v = 0.0, occ_t = 0.0;
        if (w[0] != 0.0) {
            std::fill(gj.begin(), gj.end(), 0.0);
            for (int i = 0; i < nr; ++i) {
                const double* exrow = &ex[static_cast<std::size_t>(i) * nc];
                const double* kvp = &kv[p * nc];
                double acc = 0.0;
                for (int j = 0; j < nc; ++j) {
                    acc += exrow[j] * kvp[j];
                    gj[j] += exrow[j] * ku[p * nr + i];
                }
                gi[i] = acc;
                occ_u += dku[p * nr + i] * acc;
                occ_t += ku[p * nr + i] * acc;
            }
            for (int j = 0; j < nc; ++j) occ_v += dkv[p * nc + j] * gj[j];
            occ_u *= hwin[p] / npil;
            occ_v *= hwin[p] / npil;
            occ_t *= dhwin[p] / npil;
        }
        const double dm_u = dwu[p] * wv[p] * wt[p];
        const double dm_v = wu[p] * dwv[p] * wt[p];
        const double dm_t = wu[p] * wv[p] * dwt[p];

        const double h_u = dm_u * (q[p] - f_h) / total_mass;
        const double h_v = dm_v * (q[p] - f_h) / total_mass;
        const double h_t = (dm_t * (q[p] - f_h) + mass[p] / box.height) / total_mass;

        // d shell / d rho, then rho through (u, v, t)
        const double ds = -shell[p] * (rho[p] - 1.0) * 2.0 * inv2k2;
        const double s_u = (dm_u * (shell[p] - f_s) + mass[p] * ds * drho[p][0] * 2.0 / box.length) / total_mass;
        const double s_v = (dm_v * (shell[p] - f_s) + mass[p] * ds * drho[p][1] * 2.0 / box.width) / total_mass;
        const double s_t = (dm_t * (shell[p] - f_s) + mass[p] * ds * drho[p][2] * 2.0 / box.height) / total_mass;

        const double gu = w[0] * occ_u + w[1] * h_u + w[2] * s_u;
        const double gv = w[0] * occ_v + w[1] * h_v + w[2] * s_v;
        const double gt = w[0] * occ_t + w[1] * h_t + w[2] * s_t;
        out.gradient[p] = {c * gu - s * gv, s * gu + c * gv, gt};
    }
    return out;
}

std::vector<std::size_t> neighborhood(const PointCloud& cloud, const BoundingBox& box, double margin) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (within_dilated(to_box_local(cloud[i], box), box, margin)) out.push_back(i);
    }
    return out;
}

double grad_check(std::span<const Point> points, const BoundingBox& box, const SurrogateParams& params, double h,
                  double floor) {
    if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
    if (!(floor > 0.0)) throw ConfigError("relative-error floor must be positive");
    const ObjectScore base = surrogate_score(points, box, params);
    std::vector<Point> work(points.begin(), points.end());
    double worst = 0.0;
    for (std::size_t p = 0; p < work.size(); ++p) {
        for (int axis = 0; axis < 3; ++axis) {
            double* coord = axis == 0 ? &work[p].x : axis == 1 ? &work[p].y : &work[p].z;
            const double orig = *coord;
            *coord = orig + h;
            const double up = surrogate_score(work, box, params).logit;
            *coord = orig - h;
            const double down = surrogate_score(work, box, params).logit;
            *coord = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = base.gradient[p][static_cast<std::size_t>(axis)];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

SurrogateDetector::SurrogateDetector(SurrogateParams params) : params_(params) {
    validate(params_);
}

std::vector<Prediction> SurrogateDetector::predict(const Scene& scene, std::span<const BoundingBox> candidates) {
    std::vector<Prediction> out;
    out.reserve(candidates.size());
    for (const BoundingBox& box : candidates) {
        const auto idx = neighborhood(scene.cloud, box, prefilter_margin());
        const auto pts = gather(scene.cloud, idx);
        const ObjectScore sc = surrogate_score(pts, box, params_);
        out.push_back({box, sc.logit, sc.probability});
    }
    return out;
}

ScoreGradient SurrogateDetector::score_gradient(const Scene& scene, const BoundingBox& box,
                                                std::span<const std::size_t> indices) {
    const auto idx = neighborhood(scene.cloud, box, prefilter_margin());
    const auto pts = gather(scene.cloud, idx);
    const ObjectScore sc = surrogate_score(pts, box, params_);
    std::unordered_map<std::size_t, std::size_t> slot;
    slot.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) slot.emplace(idx[k], k);
    ScoreGradient out;
    out.logit = sc.logit;
    out.empty = sc.empty;
    out.gradient.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= scene.cloud.size()) throw DetectorError("gradient requested for point " + std::to_string(i) + " not in scene");
        const auto it = slot.find(i);
        out.gradient.push_back(it == slot.end() ? std::array<double, 3>{0.0, 0.0, 0.0} : sc.gradient[it->second]);
    }
    return out;
}

std::vector<Prediction> detect(Detector& detector, const Scene& scene, std::span<const BoundingBox> candidates) {
    auto preds = detector.predict(scene, candidates);
    const double tau = detector.threshold();
    std::erase_if(preds, [tau](const Prediction& p) { return p.probability < tau; });
    std::stable_sort(preds.begin(), preds.end(),
                     [](const Prediction& a, const Prediction& b) { return a.probability > b.probability; });
    return preds;
}

}  // namespace vplidar
