#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dda/training.hpp"

using namespace dda;

namespace {

// a deliberately small end-to-end setup so each step is a few milliseconds
TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.net.encoder_channels = {6, 8, 12, 12};
    cfg.net.encoder_strides = {2, 2, 1, 1};
    cfg.net.style_channels_seq = {4, 6, 6, 8};
    cfg.net.decoder_channels = {8, 6, 4};
    cfg.net.generator_channels = {8, 6, 4};
    cfg.net.discriminator_channels = {6, 8};
    cfg.net.perceptual_channels = {4, 6, 8, 8, 8};
    cfg.total_steps = 8;
    cfg.batch_size = 2;
    cfg.checkpoint_every = 0;
    cfg.focal = 24.0f;
    cfg.baseline = 0.25f;
    return cfg;
}

DataConfig tiny_data_config() {
    DataConfig cfg;
    cfg.height = 32;
    cfg.width = 48;
    cfg.focal = 24.0f;
    cfg.baseline = 0.25f;
    cfg.train_count = 6;
    cfg.val_count = 2;
    cfg.test_count = 2;
    apply_scenario_styles(cfg);
    return cfg;
}

struct Snapshot {
    std::vector<Tensor<float>> values;
    explicit Snapshot(const std::vector<NamedTensor<float>>& params) {
        for (const auto& p : params) values.push_back(*p.tensor);
    }
    bool unchanged(const std::vector<NamedTensor<float>>& params) const {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (!(params[i].tensor->v == values[i].v).all()) return false;
        return true;
    }
};

double recompute_total(const LossReport& r, const LossWeights<float>& w) {
    auto val = [](const std::optional<double>& v) { return v.value_or(0.0); };
    return val(r.de_s) + val(r.de_s2t) + double(w.lambda_geo) * val(r.geo) +
           double(w.lambda_sm) * val(r.sm) + double(w.lambda_align) * val(r.align) +
           double(w.lambda_recon) * (val(r.recon_s) + val(r.recon_t)) +
           double(w.lambda_trans) * (val(r.trans_s2t) + val(r.trans_t2s));
}

} // namespace

TEST_CASE("poly_decay: endpoints, midpoint value, clamping") {
    CHECK(poly_decay(1e-4, 0, 100, 0.9) == doctest::Approx(1e-4));
    CHECK(poly_decay(1e-4, 100, 100, 0.9) == 0.0);
    CHECK(poly_decay(1e-4, 150, 100, 0.9) == 0.0); // past the end clamps to 0
    CHECK(poly_decay(1e-4, 50, 100, 0.9) == doctest::Approx(5.35887e-5).epsilon(1e-4));
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    Tensor<float> p = Tensor<float>::scalar(5.0f);
    Adam opt({{"p", &p}});
    for (int i = 0; i < 200; ++i) {
        Tape<float> tape;
        auto v = tape.param(p);
        tape.backward(mul(v, v));
        opt.step(tape, 0.1f);
    }
    CHECK(std::abs(p.v[0]) < 1.0f);
}

TEST_CASE("adam skips parameters without gradients") {
    Tensor<float> used = Tensor<float>::scalar(1.0f);
    Tensor<float> unused = Tensor<float>::scalar(3.0f);
    Adam opt({{"used", &used}, {"unused", &unused}});
    Tape<float> tape;
    auto v = tape.param(used);
    tape.backward(mul(v, v));
    opt.step(tape, 0.01f);
    CHECK(used.v[0] != 1.0f);
    CHECK(unused.v[0] == 3.0f);
    CHECK(opt.slots()[0].t == 1);
    CHECK(opt.slots()[1].t == 0);
}

TEST_CASE("src_only: only de_s is reported and only task parameters move") {
    TrainConfig cfg = tiny_train_config();
    cfg.variant = Variant::src_only;
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);

    Snapshot other_before(trainer.model().params_other());
    Snapshot disc_before(trainer.model().params_disc());
    // target BN branches must stay untouched
    auto& enc_bn = trainer.model().e_con.bn_state(0);
    const auto tgt_rm = enc_bn.branches[1].running_mean.v.eval();
    auto& dec_bn = trainer.model().decoder.bn_state(0);
    const auto dec_tgt_rm = dec_bn.branches[1].running_mean.v.eval();
    const auto dec_sty_rm = dec_bn.branches[2].running_mean.v.eval();

    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {0, 1});
    LossReport r = trainer.train_step(src, tgt);

    CHECK(r.de_s.has_value());
    CHECK_FALSE(r.de_s2t.has_value());
    CHECK_FALSE(r.geo.has_value());
    CHECK_FALSE(r.sm.has_value());
    CHECK_FALSE(r.align.has_value());
    CHECK_FALSE(r.recon_s.has_value());
    CHECK_FALSE(r.trans_s2t.has_value());
    CHECK_FALSE(r.disc_feat.has_value());
    CHECK(r.total == doctest::Approx(*r.de_s));

    CHECK(other_before.unchanged(trainer.model().params_other()));
    CHECK(disc_before.unchanged(trainer.model().params_disc()));
    CHECK((enc_bn.branches[1].running_mean.v == tgt_rm).all());
    CHECK((dec_bn.branches[1].running_mean.v == dec_tgt_rm).all());
    CHECK((dec_bn.branches[2].running_mean.v == dec_sty_rm).all());
    // source branches did move
    CHECK_FALSE((enc_bn.branches[0].running_mean.v == 0.0f).all());
}

TEST_CASE("tgt_al: shared BN branch, alignment active, no decomposition") {
    TrainConfig cfg = tiny_train_config();
    cfg.variant = Variant::tgt_al;
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);

    Snapshot gen_before([&] {
        std::vector<NamedTensor<float>> ps;
        trainer.model().gen.collect_params("gen", ps);
        return ps;
    }());
    auto& enc_bn = trainer.model().e_con.bn_state(0);
    const auto tgt_rm = enc_bn.branches[1].running_mean.v.eval();

    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {0, 1});
    LossReport r = trainer.train_step(src, tgt);

    CHECK(r.de_s.has_value());
    CHECK(r.geo.has_value());
    CHECK(r.sm.has_value());
    CHECK(r.align.has_value());
    CHECK(r.disc_feat.has_value());
    CHECK_FALSE(r.recon_s.has_value());
    CHECK_FALSE(r.trans_s2t.has_value());
    CHECK_FALSE(r.de_s2t.has_value());

    std::vector<NamedTensor<float>> gen_ps;
    trainer.model().gen.collect_params("gen", gen_ps);
    CHECK(gen_before.unchanged(gen_ps));
    // both domains flow through the shared source branch
    CHECK((enc_bn.branches[1].running_mean.v == tgt_rm).all());
}

TEST_CASE("lfda_full: all terms present, total matches the weighted sum") {
    TrainConfig cfg = tiny_train_config();
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);
    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {2, 3});
    LossReport r = trainer.train_step(src, tgt);
    for (const auto* term : {&r.de_s, &r.de_s2t, &r.geo, &r.sm, &r.align, &r.recon_s, &r.recon_t,
                             &r.trans_s2t, &r.trans_t2s, &r.disc_feat, &r.disc_s2t, &r.disc_t2s})
        CHECK(term->has_value());
    CHECK(r.total == doctest::Approx(recompute_total(r, cfg.weights)).epsilon(1e-6));
}

TEST_CASE("tgt_con_2bn_sty leaves the dedicated style branch untouched") {
    TrainConfig cfg = tiny_train_config();
    cfg.variant = Variant::tgt_con_2bn_sty;
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);
    auto& dec_bn = trainer.model().decoder.bn_state(0);
    const auto sty_rm = dec_bn.branches[2].running_mean.v.eval();
    const auto sty_gamma = dec_bn.branches[2].gamma.v.eval();
    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {0, 1});
    LossReport r = trainer.train_step(src, tgt);
    CHECK(r.de_s2t.has_value());
    // style runs through the target-content branch in this ablation
    CHECK((dec_bn.branches[2].running_mean.v == sty_rm).all());
    CHECK((dec_bn.branches[2].gamma.v == sty_gamma).all());
}

TEST_CASE("lfda_full: every trainable parameter participates and stays finite") {
    TrainConfig cfg = tiny_train_config();
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);
    Snapshot task_before(trainer.model().params_task());
    Snapshot other_before(trainer.model().params_other());
    Snapshot disc_before(trainer.model().params_disc());
    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {2, 3});
    for (int s = 0; s < 2; ++s) trainer.train_step(src, tgt);

    auto moved_and_finite = [](const Snapshot& before,
                               const std::vector<NamedTensor<float>>& params) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].tensor->v.isFinite().all()) return false;
            if ((params[i].tensor->v == before.values[i].v).all()) return false;
        }
        return true;
    };
    CHECK(moved_and_finite(task_before, trainer.model().params_task()));
    CHECK(moved_and_finite(other_before, trainer.model().params_other()));
    CHECK(moved_and_finite(disc_before, trainer.model().params_disc()));
}

TEST_CASE("train_step determinism across fresh trainers") {
    TrainConfig cfg = tiny_train_config();
    Dataset data = generate_dataset(tiny_data_config());
    auto run = [&] {
        Trainer trainer(cfg);
        std::vector<double> totals;
        for (int s = 0; s < 3; ++s) {
            auto sid = sample_indices(cfg.seed, s, "source",
                                      Index(data.at(Domain::source, Split::train).size()),
                                      cfg.batch_size);
            auto tid = sample_indices(cfg.seed, s, "target",
                                      Index(data.at(Domain::target, Split::train).size()),
                                      cfg.batch_size);
            totals.push_back(trainer
                                 .train_step(make_batch(data.at(Domain::source, Split::train), sid),
                                             make_batch(data.at(Domain::target, Split::train), tid))
                                 .total);
        }
        return totals;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);
}

TEST_CASE("optimizer partitions are disjoint") {
    Trainer trainer(tiny_train_config());
    std::set<std::string> names;
    for (const auto& p : trainer.opt_task().params()) names.insert(p.name);
    for (const auto& p : trainer.opt_other().params()) CHECK(names.insert(p.name).second);
    for (const auto& p : trainer.opt_disc().params()) CHECK(names.insert(p.name).second);
}

TEST_CASE("non-finite loss aborts naming the offending term") {
    TrainConfig cfg = tiny_train_config();
    cfg.variant = Variant::src_only;
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);
    auto task = trainer.model().params_task();
    task[0].tensor->v[0] = std::nanf("");
    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {0, 1});
    try {
        trainer.train_step(src, tgt);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("de_s") != std::string::npos);
    }
}

TEST_CASE("checkpoint: save-load-save is byte-identical, config mismatch refused") {
    TrainConfig cfg = tiny_train_config();
    Dataset data = generate_dataset(tiny_data_config());
    Trainer trainer(cfg);
    auto src = make_batch(data.at(Domain::source, Split::train), {0, 1});
    auto tgt = make_batch(data.at(Domain::target, Split::train), {0, 1});
    trainer.train_step(src, tgt);

    const std::string p1 = "/tmp/dda_ckpt_a.bin", p2 = "/tmp/dda_ckpt_b.bin";
    save_checkpoint(p1, trainer, 777);

    Trainer loaded(cfg);
    CHECK(load_checkpoint(p1, loaded) == 777);
    CHECK(loaded.step() == 1);
    save_checkpoint(p2, loaded, 777);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());

    CheckpointInfo info = read_checkpoint_info(p1);
    CHECK(info.step == 1);
    CHECK(info.data_hash == 777);
    CHECK(info.config_hash == train_config_hash(cfg));

    TrainConfig other = cfg;
    other.lr_task *= 2;
    Trainer wrong(other);
    CHECK_THROWS_AS(load_checkpoint(p1, wrong), ConfigError);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("resume from a mid checkpoint reproduces the uninterrupted run") {
    TrainConfig cfg = tiny_train_config();
    cfg.total_steps = 6;
    cfg.checkpoint_every = 3;
    Dataset data = generate_dataset(tiny_data_config());

    const std::string dir = "/tmp/dda_resume_test";
    std::filesystem::remove_all(dir);
    TrainResult straight = train_loop(cfg, data, dir);
    REQUIRE(straight.log.size() == 6);

    const std::string mid = dir + "/checkpoint_3.bin";
    REQUIRE(std::filesystem::exists(mid));
    TrainResult resumed = train_loop(cfg, data, "", nullptr, mid);
    REQUIRE(resumed.log.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(resumed.log[i].step == straight.log[3 + i].step);
        CHECK(resumed.log[i].losses.total == straight.log[3 + i].losses.total);
    }

    // refuse resume against a different dataset
    DataConfig dc = tiny_data_config();
    dc.seed = 999;
    Dataset other = generate_dataset(dc);
    CHECK_THROWS_AS(train_loop(cfg, other, "", nullptr, mid), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("train_loop: zero steps leaves the model at initialization") {
    TrainConfig cfg = tiny_train_config();
    cfg.total_steps = 0;
    Dataset data = generate_dataset(tiny_data_config());
    Trainer reference(cfg);
    Snapshot init(reference.model().params_all());

    const std::string dir = "/tmp/dda_zero_steps";
    std::filesystem::remove_all(dir);
    TrainResult res = train_loop(cfg, data, dir);
    CHECK(res.log.empty());

    Trainer loaded(cfg);
    load_checkpoint(res.final_checkpoint, loaded);
    CHECK(init.unchanged(loaded.model().params_all()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("step records serialize as one JSON object per line") {
    StepRecord rec;
    rec.step = 3;
    rec.lr_task = 1e-4;
    rec.lr_other = 2e-5;
    rec.losses.de_s = 0.5;
    rec.losses.total = 0.5;
    const std::string line = step_record_json(rec);
    CHECK(line.find("\"step\":3") != std::string::npos);
    CHECK(line.find("\"de_s\":0.5") != std::string::npos);
    CHECK(line.find("de_s2t") == std::string::npos); // absent terms stay absent
    CHECK(line.front() == '{');
    CHECK(line.back() == '}');
}
