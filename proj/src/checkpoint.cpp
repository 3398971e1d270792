// Checkpoint: versioned binary with named float32 blobs. Blob order is the
// deterministic registration order, so save -> load -> save is byte-identical.

#include <cstdio>
#include <cstring>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/training.hpp"

namespace dda {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'A', 'C', 'K', 'P', 'T', '1'};

struct Writer {
    std::FILE* f;
    void u32(std::uint32_t v) { std::fwrite(&v, 4, 1, f); }
    void u64(std::uint64_t v) { std::fwrite(&v, 8, 1, f); }
    void i64(std::int64_t v) { std::fwrite(&v, 8, 1, f); }
    void blob(const std::string& name, const Tensor<float>& t) {
        u32(std::uint32_t(name.size()));
        std::fwrite(name.data(), 1, name.size(), f);
        i64(t.shape.n);
        i64(t.shape.c);
        i64(t.shape.h);
        i64(t.shape.w);
        std::fwrite(t.data(), 4, t.size(), f);
    }
};

struct Reader {
    std::FILE* f;
    std::string path;
    void fail(const std::string& what) { throw IoError("checkpoint " + path + ": " + what); }
    std::uint32_t u32() {
        std::uint32_t v;
        if (std::fread(&v, 4, 1, f) != 1) fail("truncated");
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        if (std::fread(&v, 8, 1, f) != 1) fail("truncated");
        return v;
    }
    std::int64_t i64() {
        std::int64_t v;
        if (std::fread(&v, 8, 1, f) != 1) fail("truncated");
        return v;
    }
    void blob(const std::string& want_name, Tensor<float>& t) {
        const std::uint32_t len = u32();
        std::string name(len, '\0');
        if (std::fread(name.data(), 1, len, f) != len) fail("truncated name");
        if (name != want_name) fail("blob order mismatch: expected " + want_name + ", got " + name);
        Shape s{i64(), i64(), i64(), i64()};
        if (!(s == t.shape)) fail("shape mismatch for " + name);
        if (std::fread(t.data(), 4, t.size(), f) != std::size_t(t.size()))
            fail("truncated payload for " + name);
    }
};

template <class Fn>
void walk_blobs(Trainer& trainer, Fn&& visit) {
    Model<float>& m = trainer.model();
    for (auto& p : m.params_all()) visit(p.name, *p.tensor);
    for (auto& p : m.state_all()) visit(p.name, *p.tensor);
    auto opt = [&](const char* tag, Adam& a) {
        const auto& ps = a.params();
        auto& slots = a.slots();
        Tensor<float> tvec(1, 1, 1, Index(ps.size()));
        for (std::size_t i = 0; i < ps.size(); ++i) tvec.v[Index(i)] = float(slots[i].t);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            visit(std::string(tag) + "." + ps[i].name + ".m", slots[i].m);
            visit(std::string(tag) + "." + ps[i].name + ".v", slots[i].v);
        }
        // step counters round-trip through the visitor as a single vector
        visit(std::string(tag) + ".t", tvec);
        for (std::size_t i = 0; i < ps.size(); ++i) slots[i].t = std::int64_t(tvec.v[Index(i)]);
    };
    opt("adam_task", trainer.opt_task());
    opt("adam_other", trainer.opt_other());
    opt("adam_disc", trainer.opt_disc());
}

std::uint32_t count_blobs(Trainer& trainer) {
    std::uint32_t n = 0;
    walk_blobs(trainer, [&](const std::string&, Tensor<float>&) { ++n; });
    return n;
}

} // namespace

std::uint64_t train_config_hash(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(12);
    auto vec = [&](const std::vector<int>& v) {
        for (int x : v) os << x << ",";
        os << ";";
    };
    vec(cfg.net.encoder_channels);
    vec(cfg.net.encoder_strides);
    vec(cfg.net.style_channels_seq);
    vec(cfg.net.decoder_channels);
    vec(cfg.net.generator_channels);
    vec(cfg.net.discriminator_channels);
    vec(cfg.net.perceptual_channels);
    os << cfg.net.d_min << "," << cfg.net.d_max << "," << cfg.net.bn_momentum << ","
       << cfg.net.bn_k << "," << cfg.net.leaky_slope << ";";
    for (float x : cfg.weights.w_trans_con) os << x << ",";
    for (float x : cfg.weights.w_trans_sty) os << x << ",";
    for (float x : cfg.weights.w_recon) os << x << ",";
    os << cfg.weights.eta << "," << cfg.weights.lambda_geo << "," << cfg.weights.lambda_sm << ","
       << cfg.weights.lambda_align << "," << cfg.weights.lambda_recon << ","
       << cfg.weights.lambda_trans << "," << cfg.weights.alpha_geo << "," << cfg.weights.beta_geo
       << "," << cfg.weights.align_source_label_one << ";";
    os << cfg.lr_task << "," << cfg.lr_other << "," << cfg.decay_power << "," << cfg.total_steps
       << "," << cfg.batch_size << "," << cfg.seed << "," << cfg.perceptual_seed << ","
       << to_string(cfg.variant) << "," << cfg.grl_ramp_frac << "," << cfg.focal << ","
       << cfg.baseline;
    return fnv1a(os.str());
}

void save_checkpoint(const std::string& path, Trainer& trainer, std::uint64_t data_hash) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    Writer w{f};
    std::fwrite(kMagic, 1, 8, f);
    w.u64(train_config_hash(trainer.config()));
    w.u64(data_hash);
    w.i64(trainer.step());
    w.u32(count_blobs(trainer));
    walk_blobs(trainer, [&](const std::string& name, Tensor<float>& t) { w.blob(name, t); });
    std::fclose(f);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("read_checkpoint_info: cannot open " + path);
    Reader r{f, path};
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        std::fclose(f);
        throw IoError("checkpoint " + path + ": bad magic");
    }
    CheckpointInfo info;
    info.config_hash = r.u64();
    info.data_hash = r.u64();
    info.step = r.i64();
    std::fclose(f);
    return info;
}

std::uint64_t load_checkpoint(const std::string& path, Trainer& trainer) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("load_checkpoint: cannot open " + path);
    struct Closer {
        std::FILE* f;
        ~Closer() { std::fclose(f); }
    } closer{f};
    Reader r{f, path};
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0)
        r.fail("bad magic");
    const std::uint64_t config_hash = r.u64();
    if (config_hash != train_config_hash(trainer.config()))
        throw ConfigError("load_checkpoint: config hash mismatch for " + path);
    const std::uint64_t data_hash = r.u64();
    const std::int64_t step = r.i64();
    const std::uint32_t blob_count = r.u32();
    std::uint32_t seen = 0;
    walk_blobs(trainer, [&](const std::string& name, Tensor<float>& t) {
        r.blob(name, t);
        ++seen;
    });
    if (seen != blob_count) r.fail("blob count mismatch");
    trainer.set_step(int(step));
    return data_hash;
}

} // namespace dda
