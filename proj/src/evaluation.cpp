#include "dda/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "dda/errors.hpp"

namespace dda {

MetricReport depth_metrics(const Tensor<double>& pred, const Tensor<double>& gt, double cap,
                           double d_min_eval) {
    require_same_shape(pred.shape, gt.shape, "depth_metrics");
    if (cap <= 0) throw ConfigError("depth_metrics: cap must be positive");
    MetricReport r;
    r.cap = cap;
    double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
    std::int64_t d1 = 0, d2 = 0, d3 = 0, count = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (Index i = 0; i < gt.size(); ++i) {
        const double g = gt.v[i];
        if (!(g > 0.0 && g <= cap)) continue;
        const double p = std::min(cap, std::max(d_min_eval, pred.v[i]));
        const double diff = p - g;
        abs_rel += std::abs(diff) / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        const double dl = std::log(p) - std::log(g);
        sq_log += dl * dl;
        const double ratio = std::max(p / g, g / p);
        d1 += ratio < t1;
        d2 += ratio < t2;
        d3 += ratio < t3;
        ++count;
    }
    if (count == 0) throw Error("depth_metrics: no valid ground-truth pixels");
    r.abs_rel = abs_rel / double(count);
    r.sq_rel = sq_rel / double(count);
    r.rmse = std::sqrt(sq / double(count));
    r.rmse_log = std::sqrt(sq_log / double(count));
    r.delta1 = double(d1) / double(count);
    r.delta2 = double(d2) / double(count);
    r.delta3 = double(d3) / double(count);
    r.valid_pixels = count;
    return r;
}

// ---------------------------------------------------------------------------

std::int64_t count_params(const std::vector<NamedTensor<float>>& params) {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.tensor->size();
    return n;
}

std::int64_t closed_form_params(const std::vector<LayerInfo>& infos) {
    std::int64_t n = 0;
    for (const auto& li : infos) {
        if (li.kind == LayerInfo::Kind::conv)
            n += li.k * li.k * li.cin * li.cout + li.cout;
        else
            n += 2 * li.bn_branches * li.cout;
    }
    return n;
}

namespace {

std::int64_t conv_macs(const LayerInfo& li, Index& h, Index& w) {
    if (li.upsample_before) {
        h *= 2;
        w *= 2;
    }
    if (li.kind != LayerInfo::Kind::conv) return 0;
    const Index pad = (li.k - 1) / 2;
    h = (h + 2 * pad - li.k) / li.stride + 1;
    w = (w + 2 * pad - li.k) / li.stride + 1;
    return std::int64_t(li.k) * li.k * li.cin * li.cout * h * w;
}

} // namespace

std::int64_t macs_stack(const std::vector<LayerInfo>& infos, Index h, Index w) {
    std::int64_t total = 0;
    for (const auto& li : infos) total += conv_macs(li, h, w);
    return total;
}

std::int64_t count_macs_inference(const Model<float>& model, Index h, Index w, bool with_style) {
    if (h % model.cfg.total_stride() != 0 || w % model.cfg.total_stride() != 0)
        throw ShapeError("count_macs_inference: input size not divisible by total stride");
    std::int64_t total = macs_stack(model.e_con.layer_infos(), h, w);
    const Index fh = h / model.cfg.total_stride();
    const Index fw = w / model.cfg.total_stride();

    const auto trunk = model.decoder.trunk_infos();
    total += macs_stack(trunk, fh, fw);
    Index th = fh, tw = fw;
    for (const auto& li : trunk) conv_macs(li, th, tw); // final trunk dims

    if (with_style) {
        total += macs_stack(model.e_sty_t.layer_infos(), h, w);
        Index ah = fh, aw = fw;
        LayerInfo adapter = model.decoder.style_in_info();
        total += conv_macs(adapter, ah, aw);
        total += macs_stack(trunk, fh, fw); // style pass through the trunk
        Index ch = th, cw = tw;
        LayerInfo fuse = model.decoder.fuse_info();
        total += conv_macs(fuse, ch, cw);
        total += std::int64_t(fuse.cout) * th * tw; // residual add
    }
    Index hh = th, hw = tw;
    LayerInfo head = model.decoder.head_info();
    total += conv_macs(head, hh, hw);
    return total;
}

ComplexityReport complexity(Model<float>& model, Index h, Index w, bool with_style) {
    ComplexityReport r;
    r.params_inference = count_params(model.params_inference());
    r.params_total = count_params(model.params_all());
    r.macs_inference = count_macs_inference(model, h, w, with_style);
    return r;
}

// ---------------------------------------------------------------------------

Tensor<float> predict_depth(Model<float>& model, const SceneSample& sample, Variant variant,
                            Domain route) {
    Tape<float> tape;
    Var<float> img = tape.leaf(sample.left);
    const bool target_route = route == Domain::target;
    const bool separate_branches =
        variant == Variant::tgt_con_2bn || variant == Variant::tgt_con_2bn_sty ||
        variant == Variant::lfda_full;
    const int content_branch = (target_route && separate_branches)
                                   ? ContentEncoder<float>::kTargetBranch
                                   : ContentEncoder<float>::kSourceBranch;
    const bool use_style =
        target_route &&
        (variant == Variant::tgt_con_2bn_sty || variant == Variant::lfda_full);
    const int style_branch = variant == Variant::lfda_full ? DepthDecoder<float>::kTargetStyle
                                                           : DepthDecoder<float>::kTargetContent;

    Var<float> z_con = model.e_con.forward(img, content_branch, Mode::eval);
    std::optional<Var<float>> z_sty;
    if (use_style) z_sty = model.e_sty_t.forward(img, Mode::eval);
    Var<float> depth = model.decoder.forward(z_con, z_sty,
                                             DepthRoute{content_branch, style_branch}, Mode::eval);
    return depth.value();
}

Tensor<double> resize_bilinear(const Tensor<double>& src, Index h, Index w) {
    if (src.shape.h == h && src.shape.w == w) return src;
    Tensor<double> out(Shape{src.shape.n, src.shape.c, h, w});
    for (Index n = 0; n < src.shape.n; ++n)
        for (Index c = 0; c < src.shape.c; ++c)
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x) {
                    const double sy = (double(y) + 0.5) * double(src.shape.h) / double(h) - 0.5;
                    const double sx = (double(x) + 0.5) * double(src.shape.w) / double(w) - 0.5;
                    const Index y0 = std::clamp<Index>(Index(std::floor(sy)), 0, src.shape.h - 1);
                    const Index x0 = std::clamp<Index>(Index(std::floor(sx)), 0, src.shape.w - 1);
                    const Index y1 = std::min(y0 + 1, src.shape.h - 1);
                    const Index x1 = std::min(x0 + 1, src.shape.w - 1);
                    const double fy = std::clamp(sy - double(y0), 0.0, 1.0);
                    const double fx = std::clamp(sx - double(x0), 0.0, 1.0);
                    out.at(n, c, y, x) =
                        (1 - fy) * ((1 - fx) * src.at(n, c, y0, x0) + fx * src.at(n, c, y0, x1)) +
                        fy * ((1 - fx) * src.at(n, c, y1, x0) + fx * src.at(n, c, y1, x1));
                }
    return out;
}

EvalResult evaluate(Model<float>& model, const std::vector<SceneSample>& samples,
                    const EvalOptions& opts) {
    if (samples.empty()) throw ConfigError("evaluate: empty split");
    EvalResult res;
    double sums[7] = {0, 0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SceneSample& s = samples[i];
        if (s.depth.empty())
            throw Error("evaluate: split sample " + std::to_string(i) + " has no ground truth");
        Tensor<double> pred = predict_depth(model, s, opts.variant, opts.route).cast<double>();
        Tensor<double> gt = s.depth.cast<double>();
        if (!(pred.shape == gt.shape)) pred = resize_bilinear(pred, gt.shape.h, gt.shape.w);
        MetricReport m = depth_metrics(pred, gt, opts.cap, opts.d_min_eval);
        res.per_image.push_back({int(i), m});
        sums[0] += m.abs_rel;
        sums[1] += m.sq_rel;
        sums[2] += m.rmse;
        sums[3] += m.rmse_log;
        sums[4] += m.delta1;
        sums[5] += m.delta2;
        sums[6] += m.delta3;
        res.mean.valid_pixels += m.valid_pixels;
    }
    const double n = double(samples.size());
    res.mean.abs_rel = sums[0] / n;
    res.mean.sq_rel = sums[1] / n;
    res.mean.rmse = sums[2] / n;
    res.mean.rmse_log = sums[3] / n;
    res.mean.delta1 = sums[4] / n;
    res.mean.delta2 = sums[5] / n;
    res.mean.delta3 = sums[6] / n;
    res.mean.cap = opts.cap;
    return res;
}

} // namespace dda
