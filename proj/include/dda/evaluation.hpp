#pragma once

#include <cstdint>
#include <vector>

#include "dda/datagen.hpp"
#include "dda/networks.hpp"
#include "dda/training.hpp"

namespace dda {

/// Standard monocular-depth error/accuracy suite over capped ground truth.
struct MetricReport {
    double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
    double delta1 = 0, delta2 = 0, delta3 = 0; // max-ratio < 1.25^n, strict
    std::int64_t valid_pixels = 0;
    double cap = 0;
};

/// Metrics over pixels with 0 < gt <= cap; predictions are clamped to
/// [d_min_eval, cap] first. Throws when no pixel is valid.
MetricReport depth_metrics(const Tensor<double>& pred, const Tensor<double>& gt, double cap,
                           double d_min_eval = 1e-3);

// ---------------------------------------------------------------------------
// complexity accounting (Table-6 style)

std::int64_t count_params(const std::vector<NamedTensor<float>>& params);

/// Closed-form parameter count from layer descriptions:
/// conv k^2*cin*cout + cout, separate BN 2*branches*channels.
std::int64_t closed_form_params(const std::vector<LayerInfo>& infos);

/// Conv MACs k^2*cin*cout*ho*wo walking a stage stack from (h, w); assumes
/// same-padding convolutions, halving on stride 2 and doubling on
/// upsample_before. Normalizations and activations are not counted.
std::int64_t macs_stack(const std::vector<LayerInfo>& infos, Index h, Index w);

/// Inference-path MACs: E_con + (with_style: E_sty_t, style adapter, second
/// trunk pass, 1x1 fusion plus its residual add) + decoder trunk + head.
/// Generator and discriminators are excluded by construction.
std::int64_t count_macs_inference(const Model<float>& model, Index h, Index w, bool with_style);

struct ComplexityReport {
    std::int64_t params_inference = 0;
    std::int64_t params_total = 0;
    std::int64_t macs_inference = 0;
};

ComplexityReport complexity(Model<float>& model, Index h, Index w, bool with_style);

// ---------------------------------------------------------------------------
// dataset evaluation

struct EvalOptions {
    double cap = 20.0;
    double d_min_eval = 1e-3;
    Variant variant = Variant::lfda_full;
    Domain route = Domain::target;
};

/// Eval-mode depth prediction for one sample through the routing the variant
/// trained: target routes use the target BN branch (and the style pathway
/// when the variant feeds style to the decoder); source routes use the
/// source branch without style.
Tensor<float> predict_depth(Model<float>& model, const SceneSample& sample, Variant variant,
                            Domain route);

struct PerImageMetrics {
    int index = 0;
    MetricReport m;
};

struct EvalResult {
    MetricReport mean; // per-image metrics, averaged per image
    std::vector<PerImageMetrics> per_image;
};

EvalResult evaluate(Model<float>& model, const std::vector<SceneSample>& samples,
                    const EvalOptions& opts);

/// Bilinear resize for single-channel maps (prediction -> gt resolution).
Tensor<double> resize_bilinear(const Tensor<double>& src, Index h, Index w);

} // namespace dda
