#include "dda/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dda/errors.hpp"
#include "dda/png_io.hpp"
#include "dda/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dda {

const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::cross_camera: return "cross-camera";
        case Scenario::synthetic_to_real: return "synthetic-to-real";
        default: return "adverse-weather";
    }
}

Scenario parse_scenario(const std::string& name) {
    if (name == "cross-camera") return Scenario::cross_camera;
    if (name == "synthetic-to-real") return Scenario::synthetic_to_real;
    if (name == "adverse-weather") return Scenario::adverse_weather;
    throw ConfigError("unknown scenario: " + name);
}

void DataConfig::validate() const {
    if (height % 16 != 0 || width % 16 != 0)
        throw ConfigError("DataConfig: height/width must be divisible by 16");
    if (d_min <= 0) throw ConfigError("DataConfig: d_min must be positive");
    if (d_max <= d_min) throw ConfigError("DataConfig: d_max must exceed d_min");
    if (obj_depth_min < d_min || bg_far_depth > d_max || obj_depth_max > d_max)
        throw ConfigError("DataConfig: depth ranges outside [d_min, d_max]");
    if (min_objects < 0 || max_objects < min_objects)
        throw ConfigError("DataConfig: bad object count range");
    if (train_count <= 0 || val_count <= 0 || test_count <= 0)
        throw ConfigError("DataConfig: split counts must be positive");
    // keep warps mostly in-bounds
    if (focal * baseline / obj_depth_min > float(width) / 8.0f)
        throw ConfigError("DataConfig: max disparity exceeds width/8");
}

void apply_scenario_styles(DataConfig& cfg) {
    StyleSpec src, tgt;
    switch (cfg.scenario) {
        case Scenario::cross_camera:
            // warm bright camera vs cool dark camera
            src.palette = {{0.85f, 0.45f, 0.25f}, {0.9f, 0.75f, 0.3f}, {0.8f, 0.3f, 0.45f},
                           {0.75f, 0.6f, 0.5f}};
            src.bg_near = {0.75f, 0.6f, 0.45f};
            src.bg_far = {0.95f, 0.85f, 0.6f};
            src.texture_amp = 0.08f;
            tgt.palette = {{0.25f, 0.4f, 0.65f}, {0.2f, 0.55f, 0.6f}, {0.35f, 0.3f, 0.55f},
                           {0.3f, 0.45f, 0.5f}};
            tgt.bg_near = {0.3f, 0.35f, 0.45f};
            tgt.bg_far = {0.45f, 0.55f, 0.7f};
            tgt.texture_amp = 0.08f;
            break;
        case Scenario::synthetic_to_real:
            // flat synthetic colors vs textured, desaturated "real" footage
            src.palette = {{0.9f, 0.2f, 0.2f}, {0.2f, 0.8f, 0.25f}, {0.95f, 0.85f, 0.2f},
                           {0.9f, 0.5f, 0.1f}};
            src.bg_near = {0.85f, 0.75f, 0.55f};
            src.bg_far = {0.95f, 0.9f, 0.75f};
            src.texture_amp = 0.0f;
            tgt.palette = {{0.35f, 0.33f, 0.4f}, {0.3f, 0.42f, 0.45f}, {0.45f, 0.4f, 0.3f},
                           {0.38f, 0.35f, 0.33f}};
            tgt.bg_near = {0.35f, 0.38f, 0.4f};
            tgt.bg_far = {0.55f, 0.6f, 0.65f};
            tgt.texture_amp = 0.18f;
            tgt.fog_density = 0.02f;
            break;
        case Scenario::adverse_weather:
            // same palette family, target hazed out by depth-dependent fog
            src.palette = {{0.7f, 0.3f, 0.25f}, {0.25f, 0.55f, 0.7f}, {0.8f, 0.7f, 0.3f},
                           {0.4f, 0.6f, 0.35f}};
            src.bg_near = {0.55f, 0.5f, 0.45f};
            src.bg_far = {0.75f, 0.75f, 0.8f};
            src.texture_amp = 0.1f;
            tgt = src;
            tgt.fog_density = 0.09f;
            break;
    }
    cfg.style_source = src;
    cfg.style_target = tgt;
}

namespace {

struct Object {
    bool ellipse = false;
    float cx = 0, cy = 0, rx = 1, ry = 1; // left-view pixel coords
    float depth = 1;
    int color = 0;
    float tex_fx = 0, tex_fy = 0, tex_phase = 0;
};

struct SceneLayout {
    std::vector<Object> objects; // sorted far to near
    float bg_tex_fx = 0, bg_tex_fy = 0, bg_tex_phase = 0;
};

SceneLayout sample_layout(std::uint64_t seed, const DataConfig& cfg) {
    Rng rng(mix_seed(seed, fnv1a("geometry")));
    SceneLayout out;
    const int count =
        cfg.min_objects + int(rng.index(Index(cfg.max_objects - cfg.min_objects + 1)));
    for (int i = 0; i < count; ++i) {
        Object o;
        o.ellipse = rng.uniform(0, 1) < 0.5;
        o.cx = float(rng.uniform(0.1, 0.9)) * cfg.width;
        o.cy = float(rng.uniform(0.15, 0.85)) * cfg.height;
        o.rx = float(rng.uniform(0.06, 0.18)) * cfg.width;
        o.ry = float(rng.uniform(0.08, 0.22)) * cfg.height;
        o.depth = float(rng.uniform(cfg.obj_depth_min, cfg.obj_depth_max));
        o.color = int(rng.index(1 << 16)); // palette index modulo palette size
        o.tex_fx = float(rng.uniform(0.05, 0.25));
        o.tex_fy = float(rng.uniform(0.05, 0.25));
        o.tex_phase = float(rng.uniform(0, 6.283185));
        out.objects.push_back(o);
    }
    std::sort(out.objects.begin(), out.objects.end(),
              [](const Object& a, const Object& b) { return a.depth > b.depth; });
    out.bg_tex_fx = float(rng.uniform(0.02, 0.08));
    out.bg_tex_fy = float(rng.uniform(0.02, 0.08));
    out.bg_tex_phase = float(rng.uniform(0, 6.283185));
    return out;
}

inline float texture_factor(float amp, float fx, float fy, float phase, float u, float y) {
    return 1.0f + amp * std::sin(6.283185f * (fx * u + fy * y) + phase);
}

/// Paint one view. view_shift(depth) is 0 for the left view and the
/// (negative) disparity offset for the right view; texture coordinates stay
/// anchored to the surface (world column u), which keeps the stereo pair
/// photometrically consistent.
void render_view(Tensor<float>& img, Tensor<float>& depth_buf, const SceneLayout& layout,
                 const DataConfig& cfg, const StyleSpec& style, bool right_view) {
    const Index h = cfg.height, w = cfg.width;
    const float fb = cfg.focal * cfg.baseline;

    // background: horizontal ramp, near at the bottom
    for (Index y = 0; y < h; ++y) {
        const float t = float(y) / float(h - 1); // 0 top (far) .. 1 bottom (near)
        const float d = cfg.bg_far_depth + (cfg.bg_near_depth - cfg.bg_far_depth) * t;
        const float disp = right_view ? fb / d : 0.0f;
        for (Index x = 0; x < w; ++x) {
            const float u = float(x) + disp; // world column of this sample
            const float tex = texture_factor(style.texture_amp, layout.bg_tex_fx,
                                             layout.bg_tex_fy, layout.bg_tex_phase, u, float(y));
            for (Index c = 0; c < 3; ++c) {
                const float base =
                    style.bg_far[c] + (style.bg_near[c] - style.bg_far[c]) * t;
                img.at(0, c, y, x) = base * tex;
            }
            depth_buf.at(0, 0, y, x) = d;
        }
    }

    // painter's algorithm far to near: nearer objects overwrite farther ones
    for (const Object& o : layout.objects) {
        const float disp = right_view ? fb / o.depth : 0.0f;
        const float cx = o.cx - disp;
        const auto& col = style.palette[o.color % int(style.palette.size())];
        const Index x0 = Index(std::max(0.0f, std::floor(cx - o.rx)));
        const Index x1 = Index(std::min(float(w - 1), std::ceil(cx + o.rx)));
        const Index y0 = Index(std::max(0.0f, std::floor(o.cy - o.ry)));
        const Index y1 = Index(std::min(float(h - 1), std::ceil(o.cy + o.ry)));
        for (Index y = y0; y <= y1; ++y)
            for (Index x = x0; x <= x1; ++x) {
                const float dx = (float(x) - cx) / o.rx;
                const float dy = (float(y) - o.cy) / o.ry;
                const bool inside =
                    o.ellipse ? (dx * dx + dy * dy <= 1.0f)
                              : (std::abs(dx) <= 1.0f && std::abs(dy) <= 1.0f);
                if (!inside) continue;
                if (o.depth >= depth_buf.at(0, 0, y, x)) continue; // occluded
                const float u = float(x) + disp;
                const float tex = texture_factor(style.texture_amp, o.tex_fx, o.tex_fy,
                                                 o.tex_phase, u, float(y));
                for (Index c = 0; c < 3; ++c) img.at(0, c, y, x) = col[c] * tex;
                depth_buf.at(0, 0, y, x) = o.depth;
            }
    }

    // depth-dependent fog, then clamp and quantize to the 8-bit grid
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const float a = style.fog_density > 0
                                ? std::exp(-style.fog_density * depth_buf.at(0, 0, y, x))
                                : 1.0f;
            for (Index c = 0; c < 3; ++c) {
                float v = img.at(0, c, y, x);
                if (style.fog_density > 0) v = v * a + 0.65f * (1.0f - a);
                v = std::min(1.0f, std::max(0.0f, v));
                img.at(0, c, y, x) = float(std::lround(v * 255.0f)) / 255.0f;
            }
        }
}

std::string sample_prefix(const std::string& dir, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return dir + "/" + buf;
}

} // namespace

SceneSample gen_scene(std::uint64_t seed, Domain domain, const DataConfig& cfg) {
    cfg.validate();
    const SceneLayout layout = sample_layout(seed, cfg);
    const StyleSpec& style =
        domain == Domain::source ? cfg.style_source : cfg.style_target;
    if (style.palette.empty()) throw ConfigError("gen_scene: empty palette (styles not applied?)");

    SceneSample s;
    s.domain = domain;
    s.seed = seed;
    s.left = Tensor<float>(1, 3, cfg.height, cfg.width);
    s.right = Tensor<float>(1, 3, cfg.height, cfg.width);
    s.depth = Tensor<float>(1, 1, cfg.height, cfg.width);
    Tensor<float> right_depth(1, 1, cfg.height, cfg.width);
    render_view(s.left, s.depth, layout, cfg, style, false);
    render_view(s.right, right_depth, layout, cfg, style, true);
    return s;
}

void write_sample(const std::string& prefix, const SceneSample& sample) {
    write_png(prefix + ".left.png", tensor_to_u8(sample.left));
    write_png(prefix + ".right.png", tensor_to_u8(sample.right));
    if (!sample.depth.empty()) {
        const std::string path = prefix + ".depth.f32";
        std::FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw IoError("write_sample: cannot open " + path);
        std::fwrite("DDADEPTH", 1, 8, f);
        const std::int32_t dims[2] = {std::int32_t(sample.depth.shape.h),
                                      std::int32_t(sample.depth.shape.w)};
        std::fwrite(dims, 4, 2, f);
        std::fwrite(sample.depth.data(), 4, sample.depth.size(), f);
        std::fclose(f);
    }
}

SceneSample read_sample(const std::string& prefix, Domain domain, bool expect_depth) {
    SceneSample s;
    s.domain = domain;
    s.left = u8_to_tensor(read_png(prefix + ".left.png"));
    s.right = u8_to_tensor(read_png(prefix + ".right.png"));
    if (expect_depth) {
        const std::string path = prefix + ".depth.f32";
        std::FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw IoError("read_sample: cannot open " + path);
        struct Closer {
            std::FILE* f;
            ~Closer() { std::fclose(f); }
        } closer{f};
        char magic[8];
        if (std::fread(magic, 1, 8, f) != 8 || std::string(magic, 8) != "DDADEPTH")
            throw IoError("read_sample: bad depth header in " + path);
        std::int32_t dims[2];
        if (std::fread(dims, 4, 2, f) != 2 || dims[0] <= 0 || dims[1] <= 0)
            throw IoError("read_sample: bad depth dims in " + path);
        s.depth = Tensor<float>(1, 1, dims[0], dims[1]);
        if (std::fread(s.depth.data(), 4, s.depth.size(), f) != std::size_t(s.depth.size()))
            throw IoError("read_sample: truncated depth payload in " + path);
    }
    return s;
}

Dataset generate_dataset(const DataConfig& cfg_in) {
    DataConfig cfg = cfg_in;
    if (cfg.style_source.palette.empty() || cfg.style_target.palette.empty())
        apply_scenario_styles(cfg);
    cfg.validate();
    Dataset ds;
    ds.cfg = cfg;
    for (Domain d : {Domain::source, Domain::target})
        for (Split sp : {Split::train, Split::val, Split::test}) {
            const int count = sp == Split::train ? cfg.train_count
                              : sp == Split::val ? cfg.val_count
                                                 : cfg.test_count;
            auto& dst = ds.at(d, sp);
            for (int i = 0; i < count; ++i) {
                const std::uint64_t seed =
                    mix_seed(mix_seed(cfg.seed, fnv1a(to_string(sp))), std::uint64_t(i));
                SceneSample s = gen_scene(seed, d, cfg);
                if (d == Domain::target && sp == Split::train)
                    s.depth = Tensor<float>(); // unlabeled target: depth hidden
                dst.push_back(std::move(s));
            }
        }
    return ds;
}

std::uint64_t data_config_hash(const DataConfig& cfg) {
    std::string repr = std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "," +
                       std::to_string(cfg.d_min) + "," + std::to_string(cfg.d_max) + "," +
                       std::to_string(cfg.focal) + "," + std::to_string(cfg.baseline) + "," +
                       std::to_string(cfg.min_objects) + "," + std::to_string(cfg.max_objects) +
                       "," + std::to_string(cfg.obj_depth_min) + "," +
                       std::to_string(cfg.obj_depth_max) + "," + to_string(cfg.scenario) + "," +
                       std::to_string(cfg.train_count) + "," + std::to_string(cfg.val_count) +
                       "," + std::to_string(cfg.test_count) + "," + std::to_string(cfg.seed) +
                       "," + std::to_string(cfg.style_source.fog_density) + "," +
                       std::to_string(cfg.style_target.fog_density) + "," +
                       std::to_string(cfg.style_source.texture_amp) + "," +
                       std::to_string(cfg.style_target.texture_amp);
    return fnv1a(repr);
}

void write_dataset(const std::string& root, const Dataset& ds) {
    for (Domain d : {Domain::source, Domain::target})
        for (Split sp : {Split::train, Split::val, Split::test}) {
            const fs::path dir = fs::path(root) / to_string(d) / to_string(sp);
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec) throw IoError("write_dataset: cannot create " + dir.string());
            const auto& samples = ds.at(d, sp);
            for (std::size_t i = 0; i < samples.size(); ++i)
                write_sample(sample_prefix(dir.string(), int(i)), samples[i]);
        }
    json manifest;
    manifest["config_hash"] = data_config_hash(ds.cfg);
    manifest["height"] = ds.cfg.height;
    manifest["width"] = ds.cfg.width;
    manifest["scenario"] = to_string(ds.cfg.scenario);
    manifest["seed"] = ds.cfg.seed;
    manifest["focal"] = ds.cfg.focal;
    manifest["baseline"] = ds.cfg.baseline;
    manifest["d_min"] = ds.cfg.d_min;
    manifest["d_max"] = ds.cfg.d_max;
    manifest["min_objects"] = ds.cfg.min_objects;
    manifest["max_objects"] = ds.cfg.max_objects;
    manifest["obj_depth_min"] = ds.cfg.obj_depth_min;
    manifest["obj_depth_max"] = ds.cfg.obj_depth_max;
    manifest["bg_near_depth"] = ds.cfg.bg_near_depth;
    manifest["bg_far_depth"] = ds.cfg.bg_far_depth;
    manifest["train_count"] = ds.cfg.train_count;
    manifest["val_count"] = ds.cfg.val_count;
    manifest["test_count"] = ds.cfg.test_count;
    manifest["fog_source"] = ds.cfg.style_source.fog_density;
    manifest["fog_target"] = ds.cfg.style_target.fog_density;
    manifest["texture_source"] = ds.cfg.style_source.texture_amp;
    manifest["texture_target"] = ds.cfg.style_target.texture_amp;
    for (Domain d : {Domain::source, Domain::target})
        for (Split sp : {Split::train, Split::val, Split::test})
            manifest["counts"][to_string(d)][to_string(sp)] = ds.at(d, sp).size();
    std::ofstream out(fs::path(root) / "manifest.json");
    out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& root) {
    std::ifstream in(fs::path(root) / "manifest.json");
    if (!in) throw IoError("load_dataset: missing manifest in " + root);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError("load_dataset: bad manifest in " + root + ": " + e.what());
    }
    Dataset ds;
    ds.cfg.height = manifest.at("height").get<Index>();
    ds.cfg.width = manifest.at("width").get<Index>();
    ds.cfg.scenario = parse_scenario(manifest.at("scenario").get<std::string>());
    ds.cfg.seed = manifest.at("seed").get<std::uint64_t>();
    ds.cfg.focal = manifest.at("focal").get<float>();
    ds.cfg.baseline = manifest.at("baseline").get<float>();
    ds.cfg.d_min = manifest.at("d_min").get<float>();
    ds.cfg.d_max = manifest.at("d_max").get<float>();
    ds.cfg.min_objects = manifest.at("min_objects").get<int>();
    ds.cfg.max_objects = manifest.at("max_objects").get<int>();
    ds.cfg.obj_depth_min = manifest.at("obj_depth_min").get<float>();
    ds.cfg.obj_depth_max = manifest.at("obj_depth_max").get<float>();
    ds.cfg.bg_near_depth = manifest.at("bg_near_depth").get<float>();
    ds.cfg.bg_far_depth = manifest.at("bg_far_depth").get<float>();
    ds.cfg.train_count = manifest.at("train_count").get<int>();
    ds.cfg.val_count = manifest.at("val_count").get<int>();
    ds.cfg.test_count = manifest.at("test_count").get<int>();
    apply_scenario_styles(ds.cfg);
    ds.cfg.style_source.fog_density = manifest.at("fog_source").get<float>();
    ds.cfg.style_target.fog_density = manifest.at("fog_target").get<float>();
    ds.cfg.style_source.texture_amp = manifest.at("texture_source").get<float>();
    ds.cfg.style_target.texture_amp = manifest.at("texture_target").get<float>();
    for (Domain d : {Domain::source, Domain::target})
        for (Split sp : {Split::train, Split::val, Split::test}) {
            const int count =
                manifest.at("counts").at(to_string(d)).at(to_string(sp)).get<int>();
            const fs::path dir = fs::path(root) / to_string(d) / to_string(sp);
            const bool with_depth = !(d == Domain::target && sp == Split::train);
            for (int i = 0; i < count; ++i)
                ds.at(d, sp).push_back(
                    read_sample(sample_prefix(dir.string(), i), d, with_depth));
        }
    return ds;
}

} // namespace dda
