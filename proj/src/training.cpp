#include "dda/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dda/errors.hpp"

namespace fs = std::filesystem;

namespace dda {

const char* to_string(Variant v) {
    switch (v) {
        case Variant::src_only: return "src_only";
        case Variant::tgt_al: return "tgt_al";
        case Variant::tgt_con_2bn: return "tgt_con_2bn";
        case Variant::tgt_con_2bn_sty: return "tgt_con_2bn_sty";
        default: return "lfda_full";
    }
}

Variant parse_variant(const std::string& name) {
    for (Variant v : {Variant::src_only, Variant::tgt_al, Variant::tgt_con_2bn,
                      Variant::tgt_con_2bn_sty, Variant::lfda_full})
        if (name == to_string(v)) return v;
    throw ConfigError("unknown variant: " + name);
}

void TrainConfig::validate() const {
    if (lr_task <= 0 || lr_other <= 0) throw ConfigError("TrainConfig: learning rates must be > 0");
    if (total_steps < 0) throw ConfigError("TrainConfig: total_steps < 0");
    if (batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2 for train-mode BN");
    if (grl_ramp_frac < 0 || grl_ramp_frac > 1)
        throw ConfigError("TrainConfig: grl_ramp_frac outside [0,1]");
    weights.validate();
}

double poly_decay(double lr0, int step, int total_steps, double power) {
    if (step < 0) throw ConfigError("poly_decay: negative step");
    if (total_steps <= 0 || step >= total_steps) return 0.0;
    return lr0 * std::pow(1.0 - double(step) / double(total_steps), power);
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<NamedTensor<float>> params, float beta1, float beta2, float eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        slots_[i].m = Tensor<float>::zeros(params_[i].tensor->shape);
        slots_[i].v = Tensor<float>::zeros(params_[i].tensor->shape);
    }
}

void Adam::step(Tape<float>& tape, float lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Tensor<float>* g = tape.grad_for(params_[i].tensor);
        if (!g) continue;
        Slot& s = slots_[i];
        s.t += 1;
        s.m.v = beta1_ * s.m.v + (1.0f - beta1_) * g->v;
        s.v.v = beta2_ * s.v.v + (1.0f - beta2_) * g->v.square();
        const float bc1 = 1.0f - std::pow(beta1_, float(s.t));
        const float bc2 = 1.0f - std::pow(beta2_, float(s.t));
        params_[i].tensor->v -= lr * (s.m.v / bc1) / ((s.v.v / bc2).sqrt() + eps_);
    }
}

// ---------------------------------------------------------------------------

Batch make_batch(const std::vector<SceneSample>& pool, const std::vector<Index>& ids) {
    if (pool.empty() || ids.empty()) throw ConfigError("make_batch: empty pool or index set");
    const Shape is = pool[0].left.shape;
    Batch b;
    b.left = Tensor<float>(Index(ids.size()), 3, is.h, is.w);
    b.right = Tensor<float>(Index(ids.size()), 3, is.h, is.w);
    const bool with_depth = !pool[0].depth.empty();
    if (with_depth) b.depth = Tensor<float>(Index(ids.size()), 1, is.h, is.w);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const SceneSample& s = pool[ids[k]];
        for (Index c = 0; c < 3; ++c) {
            b.left.plane(Index(k), c) = s.left.plane(0, c);
            b.right.plane(Index(k), c) = s.right.plane(0, c);
        }
        if (with_depth) b.depth.plane(Index(k), 0) = s.depth.plane(0, 0);
    }
    return b;
}

std::vector<Index> sample_indices(std::uint64_t seed, int step, const char* tag, Index pool_size,
                                  int batch) {
    Rng rng(mix_seed(mix_seed(seed, fnv1a(tag)), std::uint64_t(step)));
    std::vector<Index> ids(batch);
    for (auto& id : ids) id = rng.index(pool_size);
    return ids;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      model_(cfg.net, cfg.seed),
      extractor_(cfg.net.perceptual_channels, cfg.perceptual_seed),
      opt_task_(model_.params_task()),
      opt_other_(model_.params_other()),
      opt_disc_(model_.params_disc()) {
    cfg_.validate();
}

float Trainer::grl_lambda() const {
    const float ramp = cfg_.grl_ramp_frac * float(cfg_.total_steps);
    if (ramp <= 0) return 1.0f;
    return std::min(1.0f, float(step_) / ramp);
}

namespace {

void check_finite(const std::optional<double>& v, const char* name) {
    if (v && !std::isfinite(*v))
        throw NumericError(std::string("train_step: non-finite loss term ") + name);
}

std::optional<double> opt_of(Var<float> v) {
    return v.valid() ? std::optional<double>(double(scalar_of(v))) : std::nullopt;
}

} // namespace

LossReport Trainer::train_step(const Batch& source, const Batch& target) {
    const Variant variant = cfg_.variant;
    const bool use_target = variant != Variant::src_only;
    const bool use_decomp = variant == Variant::tgt_con_2bn ||
                            variant == Variant::tgt_con_2bn_sty ||
                            variant == Variant::lfda_full;
    const bool style_to_decoder =
        variant == Variant::tgt_con_2bn_sty || variant == Variant::lfda_full;
    // the degraded ablation routes style through the target-content branch
    const int style_branch = variant == Variant::lfda_full ? DepthDecoder<float>::kTargetStyle
                                                           : DepthDecoder<float>::kTargetContent;
    // conventional adversarial alignment shares one BN branch across domains
    const int target_branch = variant == Variant::tgt_al ? ContentEncoder<float>::kSourceBranch
                                                         : ContentEncoder<float>::kTargetBranch;
    const LossWeights<float>& w = cfg_.weights;

    Tape<float> tape;
    LossParts<float> parts;

    Var<float> i_s = tape.leaf(source.left);
    Var<float> y_s = tape.leaf(source.depth);
    const Tensor<float> full_mask = Tensor<float>::full(
        {source.depth.shape.n, 1, source.depth.shape.h, source.depth.shape.w}, 1.0f);

    Var<float> z_s_con = model_.e_con.forward(i_s, ContentEncoder<float>::kSourceBranch,
                                              Mode::train);
    Var<float> y_s_pred =
        model_.decoder.forward(z_s_con, std::nullopt, DepthRoute::source(), Mode::train);
    parts.de_s = depth_l1(y_s_pred, y_s, full_mask);

    Var<float> i_t, z_t_con, z_s_sty, z_t_sty, i_s2t, i_t2s;
    if (use_target) {
        i_t = tape.leaf(target.left);
        Var<float> i_t_right = tape.leaf(target.right);
        z_t_con = model_.e_con.forward(i_t, target_branch, Mode::train);

        if (use_decomp) {
            z_s_sty = model_.e_sty_s.forward(i_s, Mode::train);
            z_t_sty = model_.e_sty_t.forward(i_t, Mode::train);
        }

        // target depth path with self-supervision
        std::optional<Var<float>> style_for_decoder;
        if (style_to_decoder) style_for_decoder = z_t_sty;
        Var<float> y_t_pred = model_.decoder.forward(
            z_t_con, style_for_decoder, DepthRoute{target_branch, style_branch}, Mode::train);
        parts.sm = smoothness_loss(y_t_pred, target.left);
        auto warped = inverse_warp(i_t_right, y_t_pred, cfg_.focal, cfg_.baseline);
        parts.geo = geometry_loss(i_t, warped.image, warped.mask, w);

        auto align = alignment_loss(z_s_con, z_t_con, model_.disc_feat, w, grl_lambda());
        parts.align = align.encoder_loss;

        if (use_decomp) {
            i_s2t = model_.gen.forward(z_s_con, z_t_sty);
            i_t2s = model_.gen.forward(z_t_con, z_s_sty);
            Var<float> i_s2s = model_.gen.forward(z_s_con, z_s_sty);
            Var<float> i_t2t = model_.gen.forward(z_t_con, z_t_sty);

            const auto f_s = extractor_.features(i_s);
            const auto f_t = extractor_.features(i_t);
            parts.trans_s2t = translation_loss_feats(f_s, f_t, extractor_.features(i_s2t),
                                                     model_.disc_s2t.forward(i_s2t), w);
            parts.trans_t2s = translation_loss_feats(f_t, f_s, extractor_.features(i_t2s),
                                                     model_.disc_t2s.forward(i_t2s), w);
            parts.recon_s = perceptual_l1(f_s, extractor_.features(i_s2s), w.w_recon);
            parts.recon_t = perceptual_l1(f_t, extractor_.features(i_t2t), w.w_recon);

            // translated-image depth supervision; detached so the task loss
            // trains the task network, not the generator
            Var<float> i_s2t_det = detach(i_s2t);
            Var<float> z_s2t_con = model_.e_con.forward(
                i_s2t_det, ContentEncoder<float>::kTargetBranch, Mode::train);
            std::optional<Var<float>> s2t_style;
            if (style_to_decoder) s2t_style = model_.e_sty_t.forward(i_s2t_det, Mode::train);
            Var<float> y_s2t = model_.decoder.forward(
                z_s2t_con, s2t_style,
                DepthRoute{ContentEncoder<float>::kTargetBranch, style_branch}, Mode::train);
            parts.de_s2t = depth_l1(y_s2t, y_s, full_mask);
        }
    }

    Var<float> total = total_loss(tape, parts, w);

    LossReport report;
    report.de_s = opt_of(parts.de_s);
    report.de_s2t = opt_of(parts.de_s2t);
    report.geo = opt_of(parts.geo);
    report.sm = opt_of(parts.sm);
    report.align = opt_of(parts.align);
    report.recon_s = opt_of(parts.recon_s);
    report.recon_t = opt_of(parts.recon_t);
    report.trans_s2t = opt_of(parts.trans_s2t);
    report.trans_t2s = opt_of(parts.trans_t2s);
    report.total = double(scalar_of(total));
    check_finite(report.de_s, "de_s");
    check_finite(report.de_s2t, "de_s2t");
    check_finite(report.geo, "geo");
    check_finite(report.sm, "sm");
    check_finite(report.align, "align");
    check_finite(report.recon_s, "recon_s");
    check_finite(report.recon_t, "recon_t");
    check_finite(report.trans_s2t, "trans_s2t");
    check_finite(report.trans_t2s, "trans_t2s");
    check_finite(report.total, "total");

    tape.backward(total);
    const float lr_t = float(poly_decay(cfg_.lr_task, step_, cfg_.total_steps, cfg_.decay_power));
    const float lr_o = float(poly_decay(cfg_.lr_other, step_, cfg_.total_steps, cfg_.decay_power));
    opt_task_.step(tape, lr_t);
    opt_other_.step(tape, lr_o);

    // alternating discriminator update on detached inputs
    if (use_target) {
        Tape<float> dtape;
        Var<float> d_total;
        {
            const float ls = w.align_source_label_one ? 1.0f : 0.0f;
            Var<float> zs_d = dtape.leaf(z_s_con.value());
            Var<float> zt_d = dtape.leaf(z_t_con.value());
            Var<float> score_s = model_.disc_feat.forward(zs_d);
            Var<float> score_t = model_.disc_feat.forward(zt_d);
            Var<float> df = add(mean_all(square(affine(score_s, 1.0f, -ls))),
                                mean_all(square(affine(score_t, 1.0f, -(1.0f - ls)))));
            report.disc_feat = double(scalar_of(df));
            d_total = df;
        }
        if (use_decomp) {
            Var<float> real_t = dtape.leaf(target.left);
            Var<float> real_s = dtape.leaf(source.left);
            Var<float> d_s2t = lsgan_disc_loss(model_.disc_s2t.forward(real_t),
                                               model_.disc_s2t.forward(dtape.leaf(i_s2t.value())));
            Var<float> d_t2s = lsgan_disc_loss(model_.disc_t2s.forward(real_s),
                                               model_.disc_t2s.forward(dtape.leaf(i_t2s.value())));
            report.disc_s2t = double(scalar_of(d_s2t));
            report.disc_t2s = double(scalar_of(d_t2s));
            d_total = add(d_total, add(d_s2t, d_t2s));
        }
        check_finite(report.disc_feat, "disc_feat");
        check_finite(report.disc_s2t, "disc_s2t");
        check_finite(report.disc_t2s, "disc_t2s");
        dtape.backward(d_total);
        opt_disc_.step(dtape, lr_o);
    }

    ++step_;
    return report;
}

// ---------------------------------------------------------------------------

std::string step_record_json(const StepRecord& r) {
    std::ostringstream os;
    os.precision(10);
    os << "{\"step\":" << r.step << ",\"lr_task\":" << r.lr_task
       << ",\"lr_other\":" << r.lr_other;
    auto field = [&](const char* name, const std::optional<double>& v) {
        if (v) os << ",\"" << name << "\":" << *v;
    };
    field("de_s", r.losses.de_s);
    field("de_s2t", r.losses.de_s2t);
    field("geo", r.losses.geo);
    field("sm", r.losses.sm);
    field("align", r.losses.align);
    field("recon_s", r.losses.recon_s);
    field("recon_t", r.losses.recon_t);
    field("trans_s2t", r.losses.trans_s2t);
    field("trans_t2s", r.losses.trans_t2s);
    field("disc_feat", r.losses.disc_feat);
    field("disc_s2t", r.losses.disc_s2t);
    field("disc_t2s", r.losses.disc_t2s);
    os << ",\"total\":" << r.losses.total << "}";
    return os.str();
}

TrainResult train_loop(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir,
                       std::ostream* log_stream, const std::string& resume_from) {
    cfg.validate();
    const auto& src_pool = data.at(Domain::source, Split::train);
    const auto& tgt_pool = data.at(Domain::target, Split::train);
    if (src_pool.empty() || tgt_pool.empty())
        throw ConfigError("train_loop: empty training split");

    Trainer trainer(cfg);
    const std::uint64_t data_hash = data_config_hash(data.cfg);

    if (!resume_from.empty()) {
        const std::uint64_t stored_data_hash = load_checkpoint(resume_from, trainer);
        if (stored_data_hash != data_hash)
            throw ConfigError("train_loop: dataset hash mismatch on resume");
    }

    if (!out_dir.empty()) fs::create_directories(out_dir);

    TrainResult result;
    while (trainer.step() < cfg.total_steps) {
        const int step = trainer.step();
        const auto src_ids = sample_indices(cfg.seed, step, "source", Index(src_pool.size()),
                                            cfg.batch_size);
        const auto tgt_ids = sample_indices(cfg.seed, step, "target", Index(tgt_pool.size()),
                                            cfg.batch_size);
        StepRecord rec;
        rec.step = step;
        rec.lr_task = poly_decay(cfg.lr_task, step, cfg.total_steps, cfg.decay_power);
        rec.lr_other = poly_decay(cfg.lr_other, step, cfg.total_steps, cfg.decay_power);
        rec.losses = trainer.train_step(make_batch(src_pool, src_ids),
                                        make_batch(tgt_pool, tgt_ids));
        if (log_stream) (*log_stream) << step_record_json(rec) << "\n";
        result.log.push_back(rec);

        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.total_steps) {
            save_checkpoint((fs::path(out_dir) / ("checkpoint_" + std::to_string(step + 1) +
                                                  ".bin")).string(),
                            trainer, data_hash);
        }
    }

    if (!out_dir.empty()) {
        result.final_checkpoint = (fs::path(out_dir) / "checkpoint_final.bin").string();
        save_checkpoint(result.final_checkpoint, trainer, data_hash);
    }
    return result;
}

} // namespace dda
