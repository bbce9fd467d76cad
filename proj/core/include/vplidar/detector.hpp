#pragma once

#include <array>
#include <span>
#include <vector>

#include "vplidar/scene.hpp"

namespace vplidar {

struct Prediction {
    BoundingBox box;
    double logit = 0.0;
    double probability = 0.0;
};

/// Logit of one box plus d(logit)/d(x, y, z) for the requested points.
struct ScoreGradient {
    double logit = 0.0;
    std::vector<std::array<double, 3>> gradient;  // aligned with the requested indices
    bool empty = false;                           // no point near the box
};

double sigmoid(double x);

/// Detector provider contract shared by the built-in surrogate and external
/// providers. predict() scores every candidate box (no thresholding);
/// score_gradient() differentiates the logit of `box` with respect to the
/// coordinates of scene points `indices`.
class Detector {
public:
    virtual ~Detector() = default;

    virtual std::vector<Prediction> predict(const Scene& scene, std::span<const BoundingBox> candidates) = 0;
    virtual ScoreGradient score_gradient(const Scene& scene, const BoundingBox& box,
                                         std::span<const std::size_t> indices) = 0;
    virtual double threshold() const = 0;
};

/// Predictions with probability >= threshold, sorted by probability
/// descending (ties keep candidate order).
std::vector<Prediction> detect(Detector& detector, const Scene& scene, std::span<const BoundingBox> candidates);

}  // namespace vplidar
