#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dda/normalization.hpp"
#include "dda/ops.hpp"
#include "dda/random.hpp"

namespace dda {

struct NetConfig {
    std::vector<int> encoder_channels{32, 64, 128, 128};
    std::vector<int> encoder_strides{2, 2, 1, 1};
    std::vector<int> style_channels_seq{16, 32, 32, 32};
    std::vector<int> decoder_channels{64, 32, 16};
    std::vector<int> generator_channels{64, 32, 16};
    std::vector<int> discriminator_channels{32, 64};
    std::vector<int> perceptual_channels{16, 32, 64, 64, 64};
    double d_min = 1.0;
    double d_max = 20.0;
    double bn_momentum = 0.1;
    double bn_k = 1e-5;
    double leaky_slope = 0.2;

    int content_channels() const { return encoder_channels.back(); }
    int style_channels() const { return style_channels_seq.back(); }
    int total_stride() const {
        int s = 1;
        for (int v : encoder_strides) s *= v;
        return s;
    }
};

template <class T>
struct NamedTensor {
    std::string name;
    Tensor<T>* tensor;
};

/// Shape-level description of one layer, used by the complexity accounting.
struct LayerInfo {
    enum class Kind { conv, sbn };
    Kind kind = Kind::conv;
    Index cin = 0, cout = 0, k = 0, stride = 1;
    int bn_branches = 0;
    bool upsample_before = false;
};

// ---------------------------------------------------------------------------

template <class T>
struct ConvLayer {
    Tensor<T> w, b;
    int stride = 1;
    int pad = 0;

    ConvLayer() = default;
    ConvLayer(int cin, int cout, int k, int stride_, Rng& rng) : stride(stride_), pad((k - 1) / 2) {
        w = Tensor<T>(cout, cin, k, k);
        he_init(w, rng);
        b = Tensor<T>(1, cout, 1, 1);
    }

    Var<T> forward(Var<T> x) { return conv2d(x, x.tape->param(w), x.tape->param(b), stride, pad); }

    LayerInfo info() const {
        return {LayerInfo::Kind::conv, w.shape.c, w.shape.n, w.shape.h, stride, 0, false};
    }

    void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

template <class T>
void collect_bn(SeparateBNState<T>& bn, const std::string& prefix,
                std::vector<NamedTensor<T>>& params, std::vector<NamedTensor<T>>* state) {
    for (int i = 0; i < bn.num_branches(); ++i) {
        auto& br = bn.branches[i];
        const std::string p = prefix + ".bn" + std::to_string(i);
        params.push_back({p + ".gamma", &br.gamma});
        params.push_back({p + ".beta", &br.beta});
        if (state) {
            state->push_back({p + ".rmean", &br.running_mean});
            state->push_back({p + ".rvar", &br.running_var});
        }
    }
}

// ---------------------------------------------------------------------------

/// Shared content encoder: conv stages with 2-branch separate BN (source,
/// target) and ReLU. Convolutions are shared across domains; only the BN
/// branches are domain-specific.
template <class T>
class ContentEncoder {
  public:
    static constexpr int kSourceBranch = 0;
    static constexpr int kTargetBranch = 1;

    ContentEncoder() = default;
    ContentEncoder(const NetConfig& cfg, std::uint64_t seed) {
        Rng rng(seed);
        int cin = 3;
        for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
            const int cout = cfg.encoder_channels[i];
            stages_.push_back(Stage{ConvLayer<T>(cin, cout, 3, cfg.encoder_strides[i], rng),
                                    SeparateBNState<T>(cout, 2, T(cfg.bn_momentum), T(cfg.bn_k))});
            stride_total_ *= cfg.encoder_strides[i];
            cin = cout;
        }
        out_channels_ = cin;
    }

    Var<T> forward(Var<T> image, int branch, Mode mode) {
        const Shape s = image.shape();
        if (s.c != 3) throw ShapeError("encode_content: expected 3 channels, got " + s.str());
        if (s.h % stride_total_ != 0 || s.w % stride_total_ != 0)
            throw ShapeError("encode_content: spatial size " + s.str() +
                             " not divisible by total stride " + std::to_string(stride_total_));
        Var<T> x = image;
        for (auto& st : stages_) x = relu(sbn_forward(st.conv.forward(x), st.bn, branch, mode));
        return x;
    }

    int out_channels() const { return out_channels_; }
    int total_stride() const { return stride_total_; }

    void collect_params(const std::string& prefix, std::vector<NamedTensor<T>>& params,
                        std::vector<NamedTensor<T>>* state = nullptr) {
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const std::string p = prefix + ".s" + std::to_string(i);
            stages_[i].conv.collect(p, params);
            collect_bn(stages_[i].bn, p, params, state);
        }
    }

    std::vector<LayerInfo> layer_infos() const {
        std::vector<LayerInfo> out;
        for (const auto& st : stages_) {
            out.push_back(st.conv.info());
            out.push_back({LayerInfo::Kind::sbn, 0, Index(st.bn.channels), 0, 1,
                           st.bn.num_branches(), false});
        }
        return out;
    }

    SeparateBNState<T>& bn_state(std::size_t stage) { return stages_[stage].bn; }
    std::size_t num_stages() const { return stages_.size(); }

  private:
    struct Stage {
        ConvLayer<T> conv;
        SeparateBNState<T> bn;
    };
    std::vector<Stage> stages_;
    int stride_total_ = 1;
    int out_channels_ = 0;
};

/// Per-domain style encoder: same stage structure as the content encoder but
/// with ordinary single-branch BN. One independent instance per domain.
template <class T>
class StyleEncoder {
  public:
    StyleEncoder() = default;
    StyleEncoder(const NetConfig& cfg, std::uint64_t seed) {
        Rng rng(seed);
        int cin = 3;
        for (std::size_t i = 0; i < cfg.style_channels_seq.size(); ++i) {
            const int cout = cfg.style_channels_seq[i];
            stages_.push_back(Stage{ConvLayer<T>(cin, cout, 3, cfg.encoder_strides[i], rng),
                                    SeparateBNState<T>(cout, 1, T(cfg.bn_momentum), T(cfg.bn_k))});
            stride_total_ *= cfg.encoder_strides[i];
            cin = cout;
        }
        out_channels_ = cin;
    }

    Var<T> forward(Var<T> image, Mode mode) {
        const Shape s = image.shape();
        if (s.c != 3) throw ShapeError("encode_style: expected 3 channels, got " + s.str());
        if (s.h % stride_total_ != 0 || s.w % stride_total_ != 0)
            throw ShapeError("encode_style: spatial size " + s.str() +
                             " not divisible by total stride " + std::to_string(stride_total_));
        Var<T> x = image;
        for (auto& st : stages_) x = relu(sbn_forward(st.conv.forward(x), st.bn, 0, mode));
        return x;
    }

    int out_channels() const { return out_channels_; }

    void collect_params(const std::string& prefix, std::vector<NamedTensor<T>>& params,
                        std::vector<NamedTensor<T>>* state = nullptr) {
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const std::string p = prefix + ".s" + std::to_string(i);
            stages_[i].conv.collect(p, params);
            collect_bn(stages_[i].bn, p, params, state);
        }
    }

    std::vector<LayerInfo> layer_infos() const {
        std::vector<LayerInfo> out;
        for (const auto& st : stages_) {
            out.push_back(st.conv.info());
            out.push_back({LayerInfo::Kind::sbn, 0, Index(st.bn.channels), 0, 1, 1, false});
        }
        return out;
    }

  private:
    struct Stage {
        ConvLayer<T> conv;
        SeparateBNState<T> bn;
    };
    std::vector<Stage> stages_;
    int stride_total_ = 1;
    int out_channels_ = 0;
};

// ---------------------------------------------------------------------------

/// BN branch selection for the depth decoder trunk.
struct DepthRoute {
    int content_branch = 0; // 0 = source content, 1 = target content
    int style_branch = 2;   // trunk branch for the style pass (2 = dedicated)

    static DepthRoute source() { return {0, 2}; }
    static DepthRoute target() { return {1, 2}; }
};

/// Depth decoder: upsampling conv trunk with 3-branch separate BN
/// (source-content, target-content, target-style). An optional style feature
/// runs through the same trunk on its own BN branch and is fused into the
/// content path by a 1x1 convolution plus residual connection right before
/// the output head. Output is sigmoid-bounded and rescaled to [d_min, d_max].
template <class T>
class DepthDecoder {
  public:
    static constexpr int kSourceContent = 0;
    static constexpr int kTargetContent = 1;
    static constexpr int kTargetStyle = 2;

    DepthDecoder() = default;
    DepthDecoder(const NetConfig& cfg, std::uint64_t seed)
        : d_min_(T(cfg.d_min)), d_max_(T(cfg.d_max)) {
        Rng rng(seed);
        int ups_needed = 0;
        for (int s = cfg.total_stride(); s > 1; s /= 2) {
            if (s % 2 != 0) throw ConfigError("DepthDecoder: total stride must be a power of 2");
            ++ups_needed;
        }
        const int n_stages = int(cfg.decoder_channels.size());
        if (ups_needed > n_stages)
            throw ConfigError("DepthDecoder: fewer stages than required upsamplings");
        int cin = cfg.content_channels();
        for (int i = 0; i < n_stages; ++i) {
            const int cout = cfg.decoder_channels[i];
            const bool up = i >= n_stages - ups_needed;
            stages_.push_back(Stage{up, ConvLayer<T>(cin, cout, 3, 1, rng),
                                    SeparateBNState<T>(cout, 3, T(cfg.bn_momentum), T(cfg.bn_k))});
            cin = cout;
        }
        style_in_ = ConvLayer<T>(cfg.style_channels(), cfg.content_channels(), 1, 1, rng);
        fuse_ = ConvLayer<T>(2 * cin, cin, 1, 1, rng);
        head_ = ConvLayer<T>(cin, 1, 3, 1, rng);
    }

    Var<T> forward(Var<T> content, std::optional<Var<T>> style, DepthRoute route, Mode mode) {
        if (style && route.content_branch == kSourceContent)
            throw RoutingError("decode_depth: style feature with source route");
        if (style) {
            const Shape cs = content.shape(), ss = style->shape();
            if (cs.h != ss.h || cs.w != ss.w || cs.n != ss.n)
                throw ShapeError("decode_depth: style " + ss.str() + " vs content " + cs.str());
        }
        Var<T> c = trunk(content, route.content_branch, mode);
        Var<T> fused = c;
        if (style) {
            Var<T> s = trunk(style_in_.forward(*style), route.style_branch, mode);
            fused = add(c, fuse_.forward(concat_c(c, s)));
        }
        return affine(sigmoid(head_.forward(fused)), d_max_ - d_min_, d_min_);
    }

    void collect_params(const std::string& prefix, std::vector<NamedTensor<T>>& params,
                        std::vector<NamedTensor<T>>* state = nullptr) {
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const std::string p = prefix + ".s" + std::to_string(i);
            stages_[i].conv.collect(p, params);
            collect_bn(stages_[i].bn, p, params, state);
        }
        style_in_.collect(prefix + ".style_in", params);
        fuse_.collect(prefix + ".fuse", params);
        head_.collect(prefix + ".head", params);
    }

    std::vector<LayerInfo> trunk_infos() const {
        std::vector<LayerInfo> out;
        for (const auto& st : stages_) {
            LayerInfo li = st.conv.info();
            li.upsample_before = st.upsample;
            out.push_back(li);
            out.push_back({LayerInfo::Kind::sbn, 0, Index(st.bn.channels), 0, 1, 3, false});
        }
        return out;
    }
    LayerInfo style_in_info() const { return style_in_.info(); }
    LayerInfo fuse_info() const { return fuse_.info(); }
    LayerInfo head_info() const { return head_.info(); }

    ConvLayer<T>& fuse_layer() { return fuse_; }
    SeparateBNState<T>& bn_state(std::size_t stage) { return stages_[stage].bn; }
    std::size_t num_stages() const { return stages_.size(); }
    T d_min() const { return d_min_; }
    T d_max() const { return d_max_; }

  private:
    struct Stage {
        bool upsample = false;
        ConvLayer<T> conv;
        SeparateBNState<T> bn;
    };

    Var<T> trunk(Var<T> x, int branch, Mode mode) {
        for (auto& st : stages_) {
            if (st.upsample) x = upsample_nearest2(x);
            x = relu(sbn_forward(st.conv.forward(x), st.bn, branch, mode));
        }
        return x;
    }

    std::vector<Stage> stages_;
    ConvLayer<T> style_in_, fuse_, head_;
    T d_min_ = T(1), d_max_ = T(20);
};

// ---------------------------------------------------------------------------

/// Image generator: (content, style) -> RGB in [0,1] at the original size.
template <class T>
class Generator {
  public:
    Generator() = default;
    Generator(const NetConfig& cfg, std::uint64_t seed) {
        Rng rng(seed);
        int ups_needed = 0;
        for (int s = cfg.total_stride(); s > 1; s /= 2) ++ups_needed;
        const int n_stages = int(cfg.generator_channels.size());
        if (ups_needed > n_stages)
            throw ConfigError("Generator: fewer stages than required upsamplings");
        int cin = cfg.content_channels() + cfg.style_channels();
        for (int i = 0; i < n_stages; ++i) {
            const int cout = cfg.generator_channels[i];
            const bool up = i >= n_stages - ups_needed;
            stages_.push_back(Stage{up, ConvLayer<T>(cin, cout, 3, 1, rng)});
            cin = cout;
        }
        head_ = ConvLayer<T>(cin, 3, 3, 1, rng);
    }

    Var<T> forward(Var<T> content, Var<T> style) {
        const Shape cs = content.shape(), ss = style.shape();
        if (cs.h != ss.h || cs.w != ss.w || cs.n != ss.n)
            throw ShapeError("generate: style " + ss.str() + " vs content " + cs.str());
        Var<T> x = concat_c(content, style);
        for (auto& st : stages_) {
            if (st.upsample) x = upsample_nearest2(x);
            x = relu(st.conv.forward(x));
        }
        return sigmoid(head_.forward(x));
    }

    void collect_params(const std::string& prefix, std::vector<NamedTensor<T>>& params,
                        std::vector<NamedTensor<T>>* = nullptr) {
        for (std::size_t i = 0; i < stages_.size(); ++i)
            stages_[i].conv.collect(prefix + ".s" + std::to_string(i), params);
        head_.collect(prefix + ".head", params);
    }

    std::vector<LayerInfo> layer_infos() const {
        std::vector<LayerInfo> out;
        for (const auto& st : stages_) {
            LayerInfo li = st.conv.info();
            li.upsample_before = st.upsample;
            out.push_back(li);
        }
        out.push_back(head_.info());
        return out;
    }

  private:
    struct Stage {
        bool upsample = false;
        ConvLayer<T> conv;
    };
    std::vector<Stage> stages_;
    ConvLayer<T> head_;
};

/// Patch discriminator: strided conv stages with leaky ReLU and a 1-channel
/// score head. Instances are bound to an input kind via channel count.
template <class T>
class Discriminator {
  public:
    Discriminator() = default;
    Discriminator(int in_channels, const NetConfig& cfg, std::uint64_t seed)
        : in_channels_(in_channels), slope_(T(cfg.leaky_slope)) {
        Rng rng(seed);
        int cin = in_channels;
        for (int cout : cfg.discriminator_channels) {
            stages_.push_back(ConvLayer<T>(cin, cout, 3, 2, rng));
            cin = cout;
        }
        head_ = ConvLayer<T>(cin, 1, 3, 1, rng);
    }

    Var<T> forward(Var<T> x) {
        if (x.shape().c != in_channels_)
            throw ShapeError("discriminate: expected " + std::to_string(in_channels_) +
                             " channels, got " + x.shape().str());
        for (auto& st : stages_) x = leaky_relu(st.forward(x), slope_);
        return head_.forward(x);
    }

    void collect_params(const std::string& prefix, std::vector<NamedTensor<T>>& params,
                        std::vector<NamedTensor<T>>* = nullptr) {
        for (std::size_t i = 0; i < stages_.size(); ++i)
            stages_[i].collect(prefix + ".s" + std::to_string(i), params);
        head_.collect(prefix + ".head", params);
    }

    std::vector<LayerInfo> layer_infos() const {
        std::vector<LayerInfo> out;
        for (const auto& st : stages_) out.push_back(st.info());
        out.push_back(head_.info());
        return out;
    }

    int in_channels() const { return in_channels_; }

  private:
    std::vector<ConvLayer<T>> stages_;
    ConvLayer<T> head_;
    int in_channels_ = 0;
    T slope_ = T(0.2);
};

// ---------------------------------------------------------------------------

/// The eight sub-networks. At inference only e_con, e_sty_t and decoder are
/// exercised; everything else exists for training.
template <class T>
struct Model {
    NetConfig cfg;
    ContentEncoder<T> e_con;
    StyleEncoder<T> e_sty_s;
    StyleEncoder<T> e_sty_t;
    DepthDecoder<T> decoder;
    Generator<T> gen;
    Discriminator<T> disc_feat;
    Discriminator<T> disc_s2t;
    Discriminator<T> disc_t2s;

    Model() = default;
    Model(const NetConfig& cfg_, std::uint64_t seed)
        : cfg(cfg_),
          e_con(cfg_, mix_seed(seed, fnv1a("e_con"))),
          e_sty_s(cfg_, mix_seed(seed, fnv1a("e_sty_s"))),
          e_sty_t(cfg_, mix_seed(seed, fnv1a("e_sty_t"))),
          decoder(cfg_, mix_seed(seed, fnv1a("decoder"))),
          gen(cfg_, mix_seed(seed, fnv1a("gen"))),
          disc_feat(cfg_.content_channels(), cfg_, mix_seed(seed, fnv1a("disc_feat"))),
          disc_s2t(3, cfg_, mix_seed(seed, fnv1a("disc_s2t"))),
          disc_t2s(3, cfg_, mix_seed(seed, fnv1a("disc_t2s"))) {}

    std::vector<NamedTensor<T>> params_task() {
        std::vector<NamedTensor<T>> out;
        e_con.collect_params("e_con", out);
        decoder.collect_params("decoder", out);
        return out;
    }
    std::vector<NamedTensor<T>> params_other() {
        std::vector<NamedTensor<T>> out;
        e_sty_s.collect_params("e_sty_s", out);
        e_sty_t.collect_params("e_sty_t", out);
        gen.collect_params("gen", out);
        return out;
    }
    std::vector<NamedTensor<T>> params_disc() {
        std::vector<NamedTensor<T>> out;
        disc_feat.collect_params("disc_feat", out);
        disc_s2t.collect_params("disc_s2t", out);
        disc_t2s.collect_params("disc_t2s", out);
        return out;
    }
    std::vector<NamedTensor<T>> params_all() {
        auto out = params_task();
        for (auto& p : params_other()) out.push_back(p);
        for (auto& p : params_disc()) out.push_back(p);
        return out;
    }
    std::vector<NamedTensor<T>> params_inference() {
        std::vector<NamedTensor<T>> out;
        e_con.collect_params("e_con", out);
        e_sty_t.collect_params("e_sty_t", out);
        decoder.collect_params("decoder", out);
        return out;
    }
    /// BN running statistics (non-trainable state).
    std::vector<NamedTensor<T>> state_all() {
        std::vector<NamedTensor<T>> params, state;
        e_con.collect_params("e_con", params, &state);
        e_sty_s.collect_params("e_sty_s", params, &state);
        e_sty_t.collect_params("e_sty_t", params, &state);
        decoder.collect_params("decoder", params, &state);
        return state;
    }
};

} // namespace dda
