#pragma once

#include <string>
#include <vector>

#include "dda/datagen.hpp"
#include "dda/training.hpp"

namespace dda {

/// Full run configuration: data synthesis, model/training, evaluation. Every
/// field is addressable through the flat key registry (see keys()), parsed
/// from plain-text `key = value` files and `--set key=value` overrides.
struct RunConfig {
    DataConfig data;
    TrainConfig train;
    double eval_cap = 20.0;
    double eval_d_min = 1e-3;
    // negative = keep the scenario preset
    double fog_source = -1, fog_target = -1;
    double texture_source = -1, texture_target = -1;

    /// Desk-scale preset: 64x96 images, small stacks, published loss weights.
    static RunConfig desk();

    /// Propagate shared fields (depth range, stereo intrinsics, scenario
    /// styles plus overrides) and validate.
    void finalize();

    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    std::vector<std::string> keys() const;

    /// Canonical sorted `key = value` dump; hash() is FNV-1a over it.
    std::string dump() const;
    std::uint64_t hash() const;

    /// Parse a config file over the desk preset, then apply overrides
    /// ("key=value" strings), then finalize.
    static RunConfig load(const std::string& path, const std::vector<std::string>& overrides);
};

} // namespace dda
