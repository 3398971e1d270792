#pragma once

#include <array>
#include <optional>
#include <string>

#include "dda/networks.hpp"
#include "dda/ops.hpp"
#include "dda/perceptual.hpp"

namespace dda {

/// Objective weights. Defaults are the published values; everything is
/// overridable through the run config.
template <class T>
struct LossWeights {
    std::array<T, 5> w_trans_con{T(0), T(0), T(0), T(0.25), T(1)};
    std::array<T, 5> w_trans_sty{T(1), T(1), T(1), T(0), T(0)};
    std::array<T, 5> w_recon{T(1. / 32), T(1. / 16), T(1. / 8), T(1. / 4), T(1)};
    T eta = T(0.2);
    T lambda_geo = T(1);
    T lambda_sm = T(0.01);
    T lambda_align = T(0.01);
    T lambda_recon = T(0.5);
    T lambda_trans = T(0.05);
    T alpha_geo = T(0.425);
    T beta_geo = T(0.15);
    bool align_source_label_one = true; // score label polarity for Disc

    void validate() const {
        auto nn = [](T x, const char* n) {
            if (x < T(0)) throw ConfigError(std::string("LossWeights: negative ") + n);
        };
        for (T x : w_trans_con) nn(x, "w_trans_con");
        for (T x : w_trans_sty) nn(x, "w_trans_sty");
        for (T x : w_recon) nn(x, "w_recon");
        nn(eta, "eta");
        nn(lambda_geo, "lambda_geo");
        nn(lambda_sm, "lambda_sm");
        nn(lambda_align, "lambda_align");
        nn(lambda_recon, "lambda_recon");
        nn(lambda_trans, "lambda_trans");
        nn(alpha_geo, "alpha_geo");
        nn(beta_geo, "beta_geo");
    }
};

/// Every objective term of one training step. Fields are absent when the
/// active variant does not produce them; total is the weighted sum with
/// absent terms contributing zero.
struct LossReport {
    std::optional<double> de_s, de_s2t, geo, sm, align;
    std::optional<double> recon_s, recon_t, trans_s2t, trans_t2s;
    std::optional<double> disc_feat, disc_s2t, disc_t2s;
    double total = 0;
};

// ---------------------------------------------------------------------------
// building blocks

/// Element-averaged L1 between two feature pyramids, weighted per stage.
/// Zero-weight stages are skipped.
template <class T>
Var<T> perceptual_l1(const std::vector<Var<T>>& fa, const std::vector<Var<T>>& fb,
                     const std::array<T, 5>& w) {
    if (fa.size() != w.size() || fb.size() != w.size())
        throw ShapeError("perceptual_l1: expected 5 feature maps");
    Tape<T>* t = fa[0].tape;
    Var<T> acc = make_scalar(*t, T(0));
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[j] == T(0)) continue;
        acc = add(acc, affine(mean_all(abs_(sub(fa[j], fb[j]))), w[j], T(0)));
    }
    return acc;
}

/// L1 between channel-mean style statistics of two pyramids.
template <class T>
Var<T> style_stat_l1(const std::vector<Var<T>>& fa, const std::vector<Var<T>>& fb,
                     const std::array<T, 5>& w) {
    if (fa.size() != w.size() || fb.size() != w.size())
        throw ShapeError("style_stat_l1: expected 5 feature maps");
    Tape<T>* t = fa[0].tape;
    Var<T> acc = make_scalar(*t, T(0));
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[j] == T(0)) continue;
        acc = add(acc, affine(mean_all(abs_(sub(channel_mean(fa[j]), channel_mean(fb[j])))), w[j],
                              T(0)));
    }
    return acc;
}

/// Least-squares GAN objective for a discriminator update:
/// mean((real-1)^2) + mean(fake^2).
template <class T>
Var<T> lsgan_disc_loss(Var<T> real_scores, Var<T> fake_scores) {
    return add(mean_all(square(affine(real_scores, T(1), T(-1)))),
               mean_all(square(fake_scores)));
}

/// Generator-side least-squares term: mean((scores-1)^2).
template <class T>
Var<T> lsgan_gen_term(Var<T> scores) {
    return mean_all(square(affine(scores, T(1), T(-1))));
}

// ---------------------------------------------------------------------------
// objective terms

/// Translation loss over precomputed feature pyramids and discriminator
/// scores: content-perceptual L1 against the content reference,
/// style-statistic L1 against the style reference, and a least-squares
/// adversarial term pushing the translated image toward the real label.
template <class T>
Var<T> translation_loss_feats(const std::vector<Var<T>>& f_content_ref,
                              const std::vector<Var<T>>& f_style_ref,
                              const std::vector<Var<T>>& f_translated, Var<T> disc_scores,
                              const LossWeights<T>& w) {
    Var<T> con = perceptual_l1(f_content_ref, f_translated, w.w_trans_con);
    Var<T> sty = style_stat_l1(f_style_ref, f_translated, w.w_trans_sty);
    return add(add(con, sty), affine(lsgan_gen_term(disc_scores), w.eta, T(0)));
}

template <class T>
Var<T> translation_loss(const PerceptualExtractor<T>& extractor, Var<T> content_ref,
                        Var<T> style_ref, Var<T> translated, Discriminator<T>& image_disc,
                        const LossWeights<T>& w) {
    require_same_shape(content_ref.shape(), translated.shape(), "translation_loss");
    require_same_shape(style_ref.shape(), translated.shape(), "translation_loss");
    return translation_loss_feats(extractor.features(content_ref), extractor.features(style_ref),
                                  extractor.features(translated),
                                  image_disc.forward(translated), w);
}

/// Reconstruction loss: perceptual L1 between an image and its
/// content+style reconstruction.
template <class T>
Var<T> reconstruction_loss(const PerceptualExtractor<T>& extractor, Var<T> image,
                           Var<T> reconstructed, const LossWeights<T>& w) {
    require_same_shape(image.shape(), reconstructed.shape(), "reconstruction_loss");
    return perceptual_l1(extractor.features(image), extractor.features(reconstructed), w.w_recon);
}

template <class T>
struct AlignmentLoss {
    Var<T> encoder_loss; // gradient-reversed path; enters the full objective
    Var<T> disc_loss;    // detached path; the discriminator's own objective
};

/// Content feature alignment. The discriminator objective scores source
/// features toward label 1 and target features toward 0 (flip via config);
/// the encoder receives the adversarial signal through gradient reversal.
template <class T>
AlignmentLoss<T> alignment_loss(Var<T> z_s_con, Var<T> z_t_con, Discriminator<T>& feature_disc,
                                const LossWeights<T>& w, T grl_lambda) {
    if (z_s_con.shape().c != z_t_con.shape().c)
        throw ShapeError("alignment_loss: channel mismatch " + z_s_con.shape().str() + " vs " +
                         z_t_con.shape().str());
    const T ls = w.align_source_label_one ? T(1) : T(0);
    const T lt = T(1) - ls;
    auto term = [&](Var<T> scores, T label) {
        return mean_all(square(affine(scores, T(1), -label)));
    };
    Var<T> enc = add(term(feature_disc.forward(gradient_reverse(z_s_con, grl_lambda)), ls),
                     term(feature_disc.forward(gradient_reverse(z_t_con, grl_lambda)), lt));
    Var<T> dsc = add(term(feature_disc.forward(detach(z_s_con)), ls),
                     term(feature_disc.forward(detach(z_t_con)), lt));
    return {enc, dsc};
}

/// Mean absolute depth error over valid pixels.
template <class T>
Var<T> depth_l1(Var<T> pred_depth, Var<T> gt_depth, Tensor<T> valid_mask) {
    require_same_shape(pred_depth.shape(), gt_depth.shape(), "depth_l1");
    return masked_mean(abs_(sub(pred_depth, gt_depth)), std::move(valid_mask));
}

/// Edge-aware smoothness: mean(exp(-|dI/dx|)*|dY/dx|) + the y-axis twin.
/// Image gradient magnitudes are averaged over color channels; each axis term
/// is averaged over its own pixels and the two axis means are summed.
template <class T>
Var<T> smoothness_loss(Var<T> pred_depth, const Tensor<T>& image) {
    const Shape ds = pred_depth.shape(), is = image.shape;
    if (ds.h != is.h || ds.w != is.w || ds.n != is.n)
        throw ShapeError("smoothness_loss: depth " + ds.str() + " vs image " + is.str());
    Tensor<T> wx(Shape{is.n, 1, is.h, is.w - 1});
    Tensor<T> wy(Shape{is.n, 1, is.h - 1, is.w});
    for (Index n = 0; n < is.n; ++n)
        for (Index y = 0; y < is.h; ++y)
            for (Index x = 0; x < is.w; ++x) {
                if (x + 1 < is.w) {
                    T g = 0;
                    for (Index c = 0; c < is.c; ++c)
                        g += std::abs(image.at(n, c, y, x + 1) - image.at(n, c, y, x));
                    wx.at(n, 0, y, x) = std::exp(-g / T(is.c));
                }
                if (y + 1 < is.h) {
                    T g = 0;
                    for (Index c = 0; c < is.c; ++c)
                        g += std::abs(image.at(n, c, y + 1, x) - image.at(n, c, y, x));
                    wy.at(n, 0, y, x) = std::exp(-g / T(is.c));
                }
            }
    return add(mean_all(mul_const(abs_(dx_fwd(pred_depth)), std::move(wx))),
               mean_all(mul_const(abs_(dy_fwd(pred_depth)), std::move(wy))));
}

/// Local SSIM map with 3x3 uniform block statistics over valid windows,
/// stabilizers C1 = 0.01^2 and C2 = 0.03^2 for inputs in [0,1].
template <class T>
Var<T> ssim_map(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "ssim");
    const T c1 = T(1e-4), c2 = T(9e-4);
    Var<T> mu_a = box3_valid(a);
    Var<T> mu_b = box3_valid(b);
    Var<T> s_aa = sub(box3_valid(mul(a, a)), square(mu_a));
    Var<T> s_bb = sub(box3_valid(mul(b, b)), square(mu_b));
    Var<T> s_ab = sub(box3_valid(mul(a, b)), mul(mu_a, mu_b));
    Var<T> num = mul(affine(mul(mu_a, mu_b), T(2), c1), affine(s_ab, T(2), c2));
    Var<T> den = mul(affine(add(square(mu_a), square(mu_b)), T(1), c1),
                     affine(add(s_aa, s_bb), T(1), c2));
    return div_(num, den);
}

template <class T>
Var<T> ssim(Var<T> a, Var<T> b) {
    return mean_all(ssim_map(a, b));
}

/// alpha*(1 - ssim) + beta*l1; kept separate so the combination is testable
/// on its own.
template <class T>
T geometry_from_terms(T ssim_value, T l1_value, const LossWeights<T>& w) {
    return w.alpha_geo * (T(1) - ssim_value) + w.beta_geo * l1_value;
}

/// Photometric consistency between the target left image and the inverse-
/// warped right image, restricted to warp-valid pixels. SSIM windows must be
/// fully valid to count.
template <class T>
Var<T> geometry_loss(Var<T> target_left, Var<T> warped_left, const Tensor<T>& mask,
                     const LossWeights<T>& w) {
    require_same_shape(target_left.shape(), warped_left.shape(), "geometry_loss");
    const Shape ms = mask.shape;
    Var<T> l1 = masked_mean(abs_(sub(target_left, warped_left)), mask);
    // erode: a window survives only if all 9 mask entries are 1
    Tensor<T> eroded(Shape{ms.n, 1, ms.h - 2, ms.w - 2});
    for (Index n = 0; n < ms.n; ++n)
        for (Index y = 0; y + 2 < ms.h; ++y)
            for (Index x = 0; x + 2 < ms.w; ++x) {
                T all = T(1);
                for (Index dy = 0; dy < 3 && all > T(0); ++dy)
                    for (Index dx = 0; dx < 3; ++dx)
                        if (mask.at(n, 0, y + dy, x + dx) == T(0)) {
                            all = T(0);
                            break;
                        }
                eroded.at(n, 0, y, x) = all;
            }
    Var<T> s = masked_mean(ssim_map(target_left, warped_left), std::move(eroded));
    return add(affine(s, -w.alpha_geo, w.alpha_geo), affine(l1, w.beta_geo, T(0)));
}

// ---------------------------------------------------------------------------
// aggregate

/// Objective terms for one step; invalid Vars mark terms the active variant
/// does not produce.
template <class T>
struct LossParts {
    Var<T> de_s, de_s2t, geo, sm, align, recon_s, recon_t, trans_s2t, trans_t2s;
};

/// Weighted full objective:
/// (de_s + de_s2t) + l_geo*geo + l_sm*sm + l_align*align
/// + l_recon*(recon_s + recon_t) + l_trans*(trans_s2t + trans_t2s).
/// Absent parts contribute 0; negative parts are rejected.
template <class T>
Var<T> total_loss(Tape<T>& tape, const LossParts<T>& p, const LossWeights<T>& w) {
    Var<T> acc = make_scalar(tape, T(0));
    auto accum = [&](Var<T> part, T lambda, const char* name) {
        if (!part.valid()) return;
        if (scalar_of(part) < T(-1e-9))
            throw Error(std::string("total_loss: negative component ") + name);
        acc = add(acc, affine(part, lambda, T(0)));
    };
    accum(p.de_s, T(1), "de_s");
    accum(p.de_s2t, T(1), "de_s2t");
    accum(p.geo, w.lambda_geo, "geo");
    accum(p.sm, w.lambda_sm, "sm");
    accum(p.align, w.lambda_align, "align");
    accum(p.recon_s, w.lambda_recon, "recon_s");
    accum(p.recon_t, w.lambda_recon, "recon_t");
    accum(p.trans_s2t, w.lambda_trans, "trans_s2t");
    accum(p.trans_t2s, w.lambda_trans, "trans_t2s");
    return acc;
}

} // namespace dda
