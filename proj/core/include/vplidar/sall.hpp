#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vplidar/detector.hpp"
#include "vplidar/indexing.hpp"
#include "vplidar/saliency_map.hpp"
#include "vplidar/scene.hpp"

namespace vplidar {

enum class BaselineKind { RadialPushout, BoxCentroid };

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline(std::string_view name);

/// Where the path gradient is sampled in each of the m intervals.
/// Midpoint: alpha = (k - 1/2) / m. Right: alpha = k / m.
enum class QuadratureRule { Midpoint, Right };

std::string_view to_string(QuadratureRule rule);
QuadratureRule parse_quadrature_rule(std::string_view name);

struct IGConfig {
    int steps = 25;
    BaselineKind baseline = BaselineKind::RadialPushout;
    double displacement = 2.0;  // metres along each ray, RadialPushout only
    QuadratureRule rule = QuadratureRule::Midpoint;
};

void validate(const IGConfig& config);

/// Region of interest for one target object.
struct FocusRegion {
    BoundingBox box;
    ObjectClass cls = ObjectClass::Car;
    std::array<double, 2> range_m{0.0, 1e9};
};

/// Attributions are snapped to multiples of this quantum (2^-40). Sums of
/// such values stay exact while magnitudes are below 2^13, which makes
/// voxelization and cross-scene aggregation independent of summation order.
inline constexpr double kAttributionQuantum = 0x1.0p-40;
double quantize_attribution(double value);

struct AttributionVector {
    std::string scene_id;
    std::size_t object = 0;
    std::vector<std::size_t> indices;  // target point indices in the scene cloud
    std::vector<double> values;        // one contribution per target point
    int steps = 0;
    double score_input = 0.0;     // F(x)
    double score_baseline = 0.0;  // F(x')
    double residual = 0.0;        // |sum(values) - (F(x) - F(x'))|

    double sum() const;
};

/// Baseline positions of `points` for `box`.
std::vector<Point> ig_baseline(std::span<const Point> points, const BoundingBox& box, const IGConfig& config);

/// Best prediction by BEV IOU with the focus box (first on ties). Throws
/// NoMatchError when every IOU is zero or there are no predictions.
Prediction iou_filter(std::span<const Prediction> predictions, const FocusRegion& focus);

/// Integrated Gradients for object `target` of `scene`: target points move on
/// the straight line from the baseline to their input positions, merged with
/// the untouched rest of the scene at each of the m steps (right Riemann sum).
AttributionVector ig_attribute(const Scene& scene, std::size_t target, Detector& detector, const IGConfig& config);

/// Sums each point's contribution into its adaptive cell.
SaliencyMap voxelize_attribution(const AttributionVector& attr, const PointCloud& cloud, const BoundingBox& box,
                                 const BoxFrameGrid& grid);

/// Element-wise left fold in the given order; k is the sum of the inputs' k.
SaliencyMap aggregate(std::span<const SaliencyMap> maps);

struct SallOptions {
    ObjectClass cls = ObjectClass::Car;
    std::array<double, 2> range_m{5.0, 8.0};
    bool front_only = true;  // only objects with x > 0
    BoxFrameGrid grid{};
    IGConfig ig{};
    int jobs = 1;
};

struct SallObjectReport {
    std::string scene_id;
    std::size_t object = 0;
    std::string status;  // "ok", "no_match", "no_points"
    std::size_t points = 0;
    double score_input = 0.0;
    double score_baseline = 0.0;
    double attribution_sum = 0.0;
    double residual = 0.0;
};

struct SallResult {
    SaliencyMap universal;
    std::vector<SallObjectReport> objects;  // sorted by (scene id, object)
    std::size_t used = 0;
    std::size_t skipped = 0;
};

bool in_focus(const BoundingBox& box, const SallOptions& options);

/// Extraction -> per-object IG -> IOU filter -> voxelize -> aggregate.
/// Aggregation runs in ascending (scene id, object index) order.
SallResult run_sall(std::span<const Scene> scenes, Detector& detector, const SallOptions& options);

}  // namespace vplidar
