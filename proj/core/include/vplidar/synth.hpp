#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vplidar/scene.hpp"

namespace vplidar {

struct SynthObject {
    BoundingBox box;
    int points = 200;
};

/// Generator parameters. The sensor sits at the origin.
struct SynthSpec {
    std::string id = "synth";
    std::vector<SynthObject> objects;
    int background_points = 0;
    double ground_z = -1.73;
    double background_extent = 30.0;  // half-size of the square ground patch
    double surface_inset = 0.12;      // max inward offset of surface returns, metres
};

struct SynthScene {
    Scene scene;
    /// Ground-truth object index per point, -1 for background.
    std::vector<int> membership;
};

/// Samples object returns on the box faces visible from the origin (vertical
/// faces and roof), weighted by face area times the cosine of incidence.
/// Deterministic for a given seed.
SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed);

struct CarSceneOptions {
    int cars = 1;
    double min_range = 5.0;
    double max_range = 8.0;
    double max_bearing_deg = 30.0;
    int points_per_car = 300;
    int background_points = 200;
};

/// Random car layout in front of the sensor, cars non-overlapping.
SynthSpec random_car_spec(const CarSceneOptions& options, std::uint64_t seed, std::string id);

/// Convenience: `count` car scenes with ids "<prefix>0000", "<prefix>0001", ...
std::vector<Scene> synth_car_scenes(int count, const CarSceneOptions& options, std::uint64_t seed,
                                    const std::string& prefix = "synth");

}  // namespace vplidar
