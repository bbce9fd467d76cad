#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplidar/detector.hpp"
#include "vplidar/scene.hpp"

namespace vplidar {

/// Differentiable pillar scorer. Points are softly assigned to the pillars of
/// a grid tiling the box footprint with a Gaussian kernel of bandwidth sigma,
/// and to the box's vertical extent with a sigmoid window of the same width.
///
///   occupancy = mean over pillars of 1 - exp(-soft count)
///   height    = mass-weighted mean of normalized height above the box floor
///   surface   = mass-weighted mean of exp(-(rho - 1)^2 / (2 shell_width^2)),
///               rho = ((2u/l)^P + (2v/w)^P + (2t/h)^P + eps^P)^(1/P)
///   logit     = w . (occupancy, height, surface) + bias
///
/// rho is a smooth box norm (1 on the faces), so the surface term rewards
/// returns lying on the box shell and penalizes points displaced into the
/// interior or past the far side. Point mass for the weighted means is a
/// product of sigmoid windows over the box dilated by `mass_margin`. The means
/// use `mass_prior` as a pseudo-count in the denominator and fade to zero as
/// points leave the box.
///
/// The default weights and bias are calibrated on the synthetic car generator
/// (every benign car detected, surface returns dominate the logit).
struct SurrogateParams {
    double pillar_size = 0.16;
    double sigma = 0.1;
    std::array<double, 3> weights{1.0, 1.0, 40.0};
    double bias = -37.5;
    double threshold = 0.5;
    double mass_prior = 1.0;
    double mass_margin = 0.0;  // mass window dilation, metres
    double shell_power = 8.0;  // even exponent of the superellipse norm
    double shell_width = 0.2;  // in normalized box units
    double shell_eps = 0.01;
};

void validate(const SurrogateParams& params);
nlohmann::ordered_json to_json(const SurrogateParams& params);
SurrogateParams surrogate_params_from_json(const nlohmann::json& j);
SurrogateParams load_surrogate_params(const std::filesystem::path& path);

struct SurrogateFeatures {
    double occupancy = 0.0;
    double height = 0.0;
    double surface = 0.0;
};

struct ObjectScore {
    double logit = 0.0;
    double probability = 0.5;
    std::vector<std::array<double, 3>> gradient;  // d logit / d (x, y, z), aligned with the input points
    SurrogateFeatures features;
    bool empty = false;
};

/// Scores `points` against `box`. Every point contributes (far points
/// negligibly); when no point lies within the box dilated by
/// mass_margin + 2 sigma the result is (bias, zero gradient) with `empty` set.
ObjectScore surrogate_score(std::span<const Point> points, const BoundingBox& box, const SurrogateParams& params);

/// Points of `cloud` within the box dilated by `margin` metres on every side.
std::vector<std::size_t> neighborhood(const PointCloud& cloud, const BoundingBox& box, double margin);

/// Max relative error between the analytic gradient and central differences
/// of step h over every coordinate of every point. The denominator is
/// max(|analytic|, |numeric|, floor); the floor keeps near-zero components,
/// where cancellation noise dominates the difference quotient, from
/// counting as relative errors.
double grad_check(std::span<const Point> points, const BoundingBox& box, const SurrogateParams& params,
                  double h = 1e-5, double floor = 1e-4);

class SurrogateDetector final : public Detector {
public:
    explicit SurrogateDetector(SurrogateParams params = {});

    std::vector<Prediction> predict(const Scene& scene, std::span<const BoundingBox> candidates) override;
    ScoreGradient score_gradient(const Scene& scene, const BoundingBox& box,
                                 std::span<const std::size_t> indices) override;
    double threshold() const override { return params_.threshold; }

    const SurrogateParams& params() const noexcept { return params_; }

    /// Neighbourhood margin used to prefilter scene points: mass_margin plus
    /// 10 sigma, where kernel and window weights are below 4e-5 relative
    /// to the logistic tails and 1e-21 for the Gaussian.
    double prefilter_margin() const noexcept { return params_.mass_margin + 10.0 * params_.sigma; }

private:
    SurrogateParams params_;
};

}  // namespace vplidar
