#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dda/networks.hpp"
#include "dda/ops.hpp"

namespace dda {

/// Channel-wise mean over spatial dims, [n,c,h,w] -> [n,c,1,1]. The style
/// statistic used by the translation loss.
template <class T>
Var<T> channel_mean(Var<T> x) {
    return mean_spatial(x);
}

/// Fixed five-stage feature extractor. Stage j reduces the input spatially by
/// {1,2,4,8,16} and applies conv+ReLU with frozen weights from a seeded
/// orthogonal-ish initializer. Weights are immutable after construction;
/// gradients flow through to the input but never into the weights. An
/// external weight file can replace the seeded weights (see load_weights).
template <class T>
class PerceptualExtractor {
  public:
    static constexpr int kStages = 5;
    static constexpr int kTotalReduction = 16;

    PerceptualExtractor() = default;
    PerceptualExtractor(const std::vector<int>& channels, std::uint64_t seed) {
        if (channels.size() != kStages)
            throw ConfigError("PerceptualExtractor: need " + std::to_string(kStages) +
                              " channel widths");
        Rng rng(seed);
        int cin = 3;
        const int strides[kStages] = {1, 2, 2, 2, 2};
        for (int i = 0; i < kStages; ++i) {
            Stage st;
            st.stride = strides[i];
            st.w = Tensor<T>(channels[i], cin, 3, 3);
            orthogonal_init(st.w, rng);
            st.b = Tensor<T>(1, channels[i], 1, 1);
            stages_.push_back(std::move(st));
            cin = channels[i];
        }
    }

    /// Five feature maps at spatial reductions {1,2,4,8,16}.
    std::vector<Var<T>> features(Var<T> image) const {
        const Shape s = image.shape();
        if (s.c != 3) throw ShapeError("features: expected 3 channels, got " + s.str());
        if (s.h % kTotalReduction != 0 || s.w % kTotalReduction != 0)
            throw ShapeError("features: spatial size " + s.str() + " not divisible by " +
                             std::to_string(kTotalReduction));
        Tape<T>* t = image.tape;
        std::vector<Var<T>> out;
        Var<T> x = image;
        for (const auto& st : stages_) {
            x = relu(conv2d(x, t->constant(st.w), t->constant(st.b), st.stride, 1));
            out.push_back(x);
        }
        return out;
    }

    /// FNV-1a over the raw weight bytes; used to assert frozen-ness.
    std::uint64_t weights_hash() const {
        std::uint64_t h = 1469598103934665603ull;
        auto eat = [&h](const Tensor<T>& t) {
            const auto* p = reinterpret_cast<const unsigned char*>(t.data());
            for (Index i = 0; i < t.size() * Index(sizeof(T)); ++i) {
                h ^= p[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& st : stages_) {
            eat(st.w);
            eat(st.b);
        }
        return h;
    }

    /// Weight file: magic "DDAPERC1", int32 stage count, per stage int32
    /// {cout,cin,kh,kw}, then per stage float32 weights followed by biases.
    void load_weights(const std::string& path) {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw IoError("load_weights: cannot open " + path);
        struct Closer {
            std::FILE* f;
            ~Closer() { std::fclose(f); }
        } closer{f};
        char magic[8];
        if (std::fread(magic, 1, 8, f) != 8 || std::string(magic, 8) != "DDAPERC1")
            throw IoError("load_weights: bad magic in " + path);
        std::int32_t n = 0;
        if (std::fread(&n, 4, 1, f) != 1 || n != kStages)
            throw IoError("load_weights: stage count mismatch in " + path);
        std::vector<std::array<std::int32_t, 4>> dims(kStages);
        for (auto& d : dims)
            if (std::fread(d.data(), 4, 4, f) != 4) throw IoError("load_weights: truncated header");
        for (int i = 0; i < kStages; ++i) {
            const Shape want = stages_[i].w.shape;
            if (dims[i][0] != want.n || dims[i][1] != want.c || dims[i][2] != want.h ||
                dims[i][3] != want.w)
                throw ConfigError("load_weights: stage " + std::to_string(i) +
                                  " shape mismatch vs configured extractor");
        }
        for (int i = 0; i < kStages; ++i) {
            if (!read_f32(f, stages_[i].w) || !read_f32(f, stages_[i].b))
                throw IoError("load_weights: truncated payload in " + path);
        }
    }

    void save_weights(const std::string& path) const {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw IoError("save_weights: cannot open " + path);
        std::fwrite("DDAPERC1", 1, 8, f);
        const std::int32_t n = kStages;
        std::fwrite(&n, 4, 1, f);
        for (const auto& st : stages_) {
            const std::int32_t d[4] = {std::int32_t(st.w.shape.n), std::int32_t(st.w.shape.c),
                                       std::int32_t(st.w.shape.h), std::int32_t(st.w.shape.w)};
            std::fwrite(d, 4, 4, f);
        }
        for (const auto& st : stages_) {
            write_f32(f, st.w);
            write_f32(f, st.b);
        }
        std::fclose(f);
    }

    std::vector<LayerInfo> layer_infos() const {
        std::vector<LayerInfo> out;
        for (const auto& st : stages_)
            out.push_back({LayerInfo::Kind::conv, st.w.shape.c, st.w.shape.n, 3, st.stride, 0,
                           false});
        return out;
    }

    const Tensor<T>& stage_weight(int i) const { return stages_[i].w; }
    const Tensor<T>& stage_bias(int i) const { return stages_[i].b; }
    int stage_stride(int i) const { return stages_[i].stride; }

  private:
    struct Stage {
        Tensor<T> w, b;
        int stride = 1;
    };

    static bool read_f32(std::FILE* f, Tensor<T>& t) {
        std::vector<float> buf(t.size());
        if (std::fread(buf.data(), 4, buf.size(), f) != buf.size()) return false;
        for (Index i = 0; i < t.size(); ++i) t.v[i] = T(buf[i]);
        return true;
    }
    static void write_f32(std::FILE* f, const Tensor<T>& t) {
        std::vector<float> buf(t.size());
        for (Index i = 0; i < t.size(); ++i) buf[i] = float(t.v[i]);
        std::fwrite(buf.data(), 4, buf.size(), f);
    }

    std::vector<Stage> stages_;
};

} // namespace dda
