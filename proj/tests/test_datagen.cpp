#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dda/datagen.hpp"
#include "dda/png_io.hpp"
#include "dda/random.hpp"
#include "support/reference_ops.hpp"

using namespace dda;

namespace {

DataConfig small_config() {
    DataConfig cfg;
    cfg.height = 48;
    cfg.width = 64;
    cfg.train_count = 4;
    cfg.val_count = 2;
    cfg.test_count = 2;
    apply_scenario_styles(cfg);
    return cfg;
}

} // namespace

TEST_CASE("png round-trip") {
    ImageU8 img;
    img.h = 13;
    img.w = 17;
    img.channels = 3;
    img.pixels.resize(13 * 17 * 3);
    Rng rng(3);
    for (auto& p : img.pixels) p = (unsigned char)rng.index(256);
    const std::string path = "/tmp/dda_png_test.png";
    write_png(path, img);
    ImageU8 back = read_png(path);
    CHECK(back.h == img.h);
    CHECK(back.w == img.w);
    CHECK(back.channels == 3);
    CHECK(back.pixels == img.pixels);
    std::remove(path.c_str());
}

TEST_CASE("gen_scene is deterministic in (seed, domain, config)") {
    DataConfig cfg = small_config();
    SceneSample a = gen_scene(42, Domain::target, cfg);
    SceneSample b = gen_scene(42, Domain::target, cfg);
    CHECK((a.left.v == b.left.v).all());
    CHECK((a.right.v == b.right.v).all());
    CHECK((a.depth.v == b.depth.v).all());
    SceneSample c = gen_scene(43, Domain::target, cfg);
    CHECK_FALSE((a.left.v == c.left.v).all());
}

TEST_CASE("depth stays inside [d_min, d_max]") {
    DataConfig cfg = small_config();
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SceneSample s = gen_scene(seed, Domain::source, cfg);
        CHECK(s.depth.v.minCoeff() >= cfg.d_min);
        CHECK(s.depth.v.maxCoeff() <= cfg.d_max);
    }
}

TEST_CASE("adverse-weather: zero fog density reduces the target to the clean rendering") {
    DataConfig cfg = small_config();
    cfg.scenario = Scenario::adverse_weather;
    apply_scenario_styles(cfg);
    // in this scenario source and target differ only by fog
    REQUIRE(cfg.style_target.fog_density > 0);
    cfg.style_target.fog_density = 0;
    SceneSample tgt = gen_scene(7, Domain::target, cfg);
    SceneSample src = gen_scene(7, Domain::source, cfg);
    CHECK((tgt.left.v == src.left.v).all());
    CHECK((tgt.right.v == src.right.v).all());
}

TEST_CASE("uniform frontal plane: right image equals left shifted by f*B/d") {
    DataConfig cfg = small_config();
    cfg.min_objects = 0;
    cfg.max_objects = 0;
    const float d = 6.0f; // disparity = 48*0.25/6 = 2 px exactly
    cfg.bg_near_depth = d;
    cfg.bg_far_depth = d;
    SceneSample s = gen_scene(11, Domain::source, cfg);
    const Index shift = 2;
    double worst = 0;
    for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < cfg.height; ++y)
            for (Index x = 0; x + shift < cfg.width; ++x)
                worst = std::max(worst, double(std::abs(s.right.at(0, c, y, x) -
                                                        s.left.at(0, c, y, x + shift))));
    CHECK(worst <= 2.0 / 255.0); // both views quantized independently
}

TEST_CASE("stereo consistency: left(x) matches right(x - disparity) off occlusions") {
    DataConfig cfg = small_config();
    SceneSample s = gen_scene(19, Domain::source, cfg);
    const float fb = cfg.focal * cfg.baseline;
    Index checked = 0, consistent = 0;
    for (Index y = 0; y < cfg.height; ++y)
        for (Index x = 0; x < cfg.width; ++x) {
            const float disp = fb / s.depth.at(0, 0, y, x);
            const float sx = float(x) - disp;
            if (sx < 0 || sx > float(cfg.width - 1)) continue;
            const Index x0 = Index(sx);
            const float frac = sx - float(x0);
            const Index x1 = std::min(x0 + 1, cfg.width - 1);
            ++checked;
            double err = 0;
            for (Index c = 0; c < 3; ++c) {
                const float r = (1 - frac) * s.right.at(0, c, y, x0) +
                                frac * s.right.at(0, c, y, x1);
                err = std::max(err, double(std::abs(r - s.left.at(0, c, y, x))));
            }
            consistent += err < 0.05;
        }
    REQUIRE(checked > 0);
    // occluded and interpolation-boundary pixels may fail; the bulk must match
    CHECK(double(consistent) / double(checked) > 0.9);
}

TEST_CASE("occlusion: objects only ever bring depth nearer than the background") {
    DataConfig cfg = small_config();
    SceneSample s = gen_scene(23, Domain::source, cfg);
    bool any_object = false;
    for (Index y = 0; y < cfg.height; ++y) {
        const float t = float(y) / float(cfg.height - 1);
        const float bg = cfg.bg_far_depth + (cfg.bg_near_depth - cfg.bg_far_depth) * t;
        for (Index x = 0; x < cfg.width; ++x) {
            CHECK(s.depth.at(0, 0, y, x) <= bg + 1e-5f);
            any_object = any_object || s.depth.at(0, 0, y, x) < bg - 1e-3f;
        }
    }
    CHECK(any_object);
}

TEST_CASE("domain gap is style-dominated: colors differ, geometry matches") {
    DataConfig cfg = small_config();
    double src_mean[3] = {0, 0, 0}, tgt_mean[3] = {0, 0, 0};
    const int n = 6;
    for (int i = 0; i < n; ++i) {
        SceneSample a = gen_scene(100 + i, Domain::source, cfg);
        SceneSample b = gen_scene(100 + i, Domain::target, cfg);
        // identical generative geometry process -> identical depth
        CHECK((a.depth.v == b.depth.v).all());
        for (Index c = 0; c < 3; ++c) {
            src_mean[c] += a.left.plane(0, c).mean() / n;
            tgt_mean[c] += b.left.plane(0, c).mean() / n;
        }
    }
    double gap = 0;
    for (int c = 0; c < 3; ++c) gap += std::abs(src_mean[c] - tgt_mean[c]);
    CHECK(gap > 0.05); // configured floor for the color-histogram distance
}

TEST_CASE("sample round-trip is exact; corrupt header is rejected") {
    DataConfig cfg = small_config();
    SceneSample s = gen_scene(31, Domain::target, cfg);
    const std::string prefix = "/tmp/dda_sample_test";
    write_sample(prefix, s);
    SceneSample back = read_sample(prefix, Domain::target, true);
    CHECK((back.left.v == s.left.v).all());
    CHECK((back.right.v == s.right.v).all());
    CHECK((back.depth.v == s.depth.v).all());

    // corrupt the depth header
    {
        std::FILE* f = std::fopen((prefix + ".depth.f32").c_str(), "rb+");
        std::fwrite("JUNKJUNK", 1, 8, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_sample(prefix, Domain::target, true), IoError);
    for (const char* ext : {".left.png", ".right.png", ".depth.f32"})
        std::remove((prefix + ext).c_str());
}

TEST_CASE("dataset write/load: layout, hidden target-train depth, manifest") {
    DataConfig cfg = small_config();
    Dataset ds = generate_dataset(cfg);
    CHECK(ds.at(Domain::target, Split::train)[0].depth.empty());
    CHECK_FALSE(ds.at(Domain::target, Split::val)[0].depth.empty());
    CHECK_FALSE(ds.at(Domain::source, Split::train)[0].depth.empty());

    const std::string root = "/tmp/dda_dataset_test";
    std::filesystem::remove_all(root);
    write_dataset(root, ds);
    CHECK(std::filesystem::exists(root + "/source/train/000000.left.png"));
    CHECK(std::filesystem::exists(root + "/source/train/000000.depth.f32"));
    CHECK_FALSE(std::filesystem::exists(root + "/target/train/000000.depth.f32"));
    CHECK(std::filesystem::exists(root + "/manifest.json"));

    Dataset back = load_dataset(root);
    CHECK(back.at(Domain::source, Split::train).size() == 4);
    CHECK(back.at(Domain::target, Split::test).size() == 2);
    CHECK(back.at(Domain::target, Split::train)[0].depth.empty());
    CHECK((back.at(Domain::source, Split::val)[1].left.v ==
           ds.at(Domain::source, Split::val)[1].left.v)
              .all());
    CHECK(data_config_hash(back.cfg) == data_config_hash(ds.cfg));
    std::filesystem::remove_all(root);
}
