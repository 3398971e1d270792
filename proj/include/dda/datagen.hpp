#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dda/tensor.hpp"

namespace dda {

enum class Domain { source, target };
enum class Split { train, val, test };

const char* to_string(Domain d);
const char* to_string(Split s);

/// One synthetic example: rectified stereo pair plus ground-truth depth for
/// the left view. Images are [1,3,H,W] in [0,1] (quantized to the 8-bit
/// grid), depth is [1,1,H,W] in [d_min, d_max].
struct SceneSample {
    Tensor<float> left;
    Tensor<float> right;
    Tensor<float> depth; // empty when hidden (target train split)
    Domain domain = Domain::source;
    std::uint64_t seed = 0;
};

/// Per-domain appearance: object palette, background gradient, multiplicative
/// texture, and depth-dependent fog.
struct StyleSpec {
    std::vector<std::array<float, 3>> palette;
    std::array<float, 3> bg_near{0.5f, 0.5f, 0.5f};
    std::array<float, 3> bg_far{0.8f, 0.8f, 0.8f};
    float texture_amp = 0.0f;
    float fog_density = 0.0f;
};

enum class Scenario { cross_camera, synthetic_to_real, adverse_weather };

const char* to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

struct DataConfig {
    Index height = 64, width = 96;
    float d_min = 1.0f, d_max = 20.0f;
    float focal = 48.0f;    // px
    float baseline = 0.25f; // length units
    int min_objects = 3, max_objects = 7;
    float obj_depth_min = 2.0f, obj_depth_max = 12.0f;
    float bg_near_depth = 6.0f, bg_far_depth = 20.0f;
    Scenario scenario = Scenario::synthetic_to_real;
    int train_count = 64, val_count = 16, test_count = 16;
    std::uint64_t seed = 1;
    StyleSpec style_source, style_target; // filled from the scenario preset

    void validate() const;
};

/// Scenario presets for the two domain styles.
void apply_scenario_styles(DataConfig& cfg);

/// Deterministic scene synthesis. Geometry is a function of (seed, config)
/// only, so the two domains share one generative geometry process; the
/// domain picks the style (palette, texture, fog) applied after geometry.
SceneSample gen_scene(std::uint64_t seed, Domain domain, const DataConfig& cfg);

/// File layout per sample: <prefix>.left.png, <prefix>.right.png and, when
/// depth is present, <prefix>.depth.f32 (magic "DDADEPTH", int32 h, w,
/// float32 row-major payload).
void write_sample(const std::string& prefix, const SceneSample& sample);
SceneSample read_sample(const std::string& prefix, Domain domain, bool expect_depth);

struct Dataset {
    DataConfig cfg;
    // [domain][split]
    std::vector<SceneSample> samples[2][3];

    std::vector<SceneSample>& at(Domain d, Split s) { return samples[int(d)][int(s)]; }
    const std::vector<SceneSample>& at(Domain d, Split s) const {
        return samples[int(d)][int(s)];
    }
};

/// In-memory synthesis of every split. The target train split's depth is
/// hidden (never available to losses); eval splits keep depth for metrics.
Dataset generate_dataset(const DataConfig& cfg);

/// Directory layout: <root>/<domain>/<split>/<index>.{left.png,right.png,
/// depth.f32} plus <root>/manifest.json with counts and the config hash.
void write_dataset(const std::string& root, const Dataset& ds);
Dataset load_dataset(const std::string& root);

std::uint64_t data_config_hash(const DataConfig& cfg);

} // namespace dda
