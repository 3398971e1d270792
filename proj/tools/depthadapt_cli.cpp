// depthadapt: domain-adaptive monocular depth estimation on synthetic stereo
// scenes. Subcommands: gen-data, train, eval, translate, ablate, complexity.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "dda/config.hpp"
#include "dda/evaluation.hpp"
#include "dda/png_io.hpp"
#include "dda/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dda;

namespace {

constexpr const char* kVersion = "depthadapt 0.1.0";

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::int64_t seed = -1;
    std::string variant;
    double cap = -1;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool out_required) {
    cmd->add_option("--config", a.config_path, "Config file (key = value lines)");
    cmd->add_option("--set", a.sets, "Override a config field, key=value (repeatable)");
    auto* out = cmd->add_option("--out", a.out_dir, "Output directory");
    if (out_required) out->required();
    cmd->add_option("--seed", a.seed, "Master seed (sets data.seed and train.seed)");
    cmd->add_option("--variant", a.variant,
                    "Training variant: src_only|tgt_al|tgt_con_2bn|tgt_con_2bn_sty|lfda_full");
    cmd->add_option("--cap", a.cap, "Depth cap for evaluation metrics");
}

RunConfig make_config(const CommonArgs& a) {
    RunConfig cfg = RunConfig::load(a.config_path, a.sets);
    if (a.seed >= 0) {
        cfg.data.seed = std::uint64_t(a.seed);
        cfg.train.seed = std::uint64_t(a.seed);
    }
    if (!a.variant.empty()) cfg.train.variant = parse_variant(a.variant);
    if (a.cap > 0) cfg.eval_cap = a.cap;
    cfg.finalize();
    return cfg;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const RunConfig& cfg, std::uint64_t data_hash) {
    fs::create_directories(out_dir);
    json m;
    m["version"] = kVersion;
    m["command"] = command;
    m["config_hash"] = cfg.hash();
    m["data_hash"] = data_hash;
    m["data_seed"] = cfg.data.seed;
    m["train_seed"] = cfg.train.seed;
    m["variant"] = to_string(cfg.train.variant);
    std::ofstream out(fs::path(out_dir) / "run_manifest.json");
    out << m.dump(2) << "\n";
    std::ofstream cfg_out(fs::path(out_dir) / "config.cfg");
    cfg_out << cfg.dump();
}

Dataset obtain_dataset(const RunConfig& cfg, const std::string& data_dir) {
    if (data_dir.empty()) return generate_dataset(cfg.data);
    return load_dataset(data_dir);
}

std::string metric_row(const MetricReport& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%8.4f %8.4f %8.4f %8.4f | %8.4f %8.4f %8.4f", m.abs_rel,
                  m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3);
    return buf;
}

void print_metric_header() {
    std::printf("%-18s  abs-rel   sq-rel     rmse rmse-log |     1.25   1.25^2   1.25^3\n",
                "");
}

json metric_json(const MetricReport& m) {
    json j;
    j["abs_rel"] = m.abs_rel;
    j["sq_rel"] = m.sq_rel;
    j["rmse"] = m.rmse;
    j["rmse_log"] = m.rmse_log;
    j["delta1"] = m.delta1;
    j["delta2"] = m.delta2;
    j["delta3"] = m.delta3;
    j["valid_pixels"] = m.valid_pixels;
    j["cap"] = m.cap;
    return j;
}

void write_per_image_csv(const std::string& path, const EvalResult& res) {
    std::ofstream out(path);
    out << "index,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,valid_pixels\n";
    char buf[256];
    for (const auto& r : res.per_image) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld\n", r.index,
                      r.m.abs_rel, r.m.sq_rel, r.m.rmse, r.m.rmse_log, r.m.delta1, r.m.delta2,
                      r.m.delta3, (long long)r.m.valid_pixels);
        out << buf;
    }
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split: " + s);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonArgs& a) {
    RunConfig cfg = make_config(a);
    Dataset ds = generate_dataset(cfg.data);
    write_dataset(a.out_dir, ds);
    write_run_manifest(a.out_dir, "gen-data", cfg, data_config_hash(ds.cfg));
    std::printf("wrote dataset to %s (%d train / %d val / %d test per domain)\n",
                a.out_dir.c_str(), cfg.data.train_count, cfg.data.val_count,
                cfg.data.test_count);
    return 0;
}

int cmd_train(const CommonArgs& a, const std::string& data_dir, const std::string& resume) {
    RunConfig cfg = make_config(a);
    Dataset ds = obtain_dataset(cfg, data_dir);
    write_run_manifest(a.out_dir, "train", cfg, data_config_hash(ds.cfg));
    std::ofstream log(fs::path(a.out_dir) / "log.jsonl");
    TrainResult result = train_loop(cfg.train, ds, a.out_dir, &log, resume);

    Trainer trainer(cfg.train);
    load_checkpoint(result.final_checkpoint, trainer);
    EvalOptions opts;
    opts.cap = cfg.eval_cap;
    opts.d_min_eval = cfg.eval_d_min;
    opts.variant = cfg.train.variant;
    EvalResult val = evaluate(trainer.model(), ds.at(Domain::target, Split::val), opts);
    std::ofstream mout(fs::path(a.out_dir) / "final_val_metrics.json");
    mout << metric_json(val.mean).dump(2) << "\n";
    std::printf("trained %d steps (%s); target-val metrics:\n", cfg.train.total_steps,
                to_string(cfg.train.variant));
    print_metric_header();
    std::printf("%-18s %s\n", to_string(cfg.train.variant), metric_row(val.mean).c_str());
    std::printf("checkpoint: %s\n", result.final_checkpoint.c_str());
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& data_dir, const std::string& checkpoint,
             const std::string& split_name, const std::string& route_name) {
    RunConfig cfg = make_config(a);
    Dataset ds = obtain_dataset(cfg, data_dir);
    Trainer trainer(cfg.train);
    load_checkpoint(checkpoint, trainer);

    EvalOptions opts;
    opts.cap = cfg.eval_cap;
    opts.d_min_eval = cfg.eval_d_min;
    opts.variant = cfg.train.variant;
    opts.route = route_name == "source" ? Domain::source : Domain::target;
    const Split split = parse_split(split_name);
    EvalResult res = evaluate(trainer.model(), ds.at(opts.route, split), opts);

    write_run_manifest(a.out_dir, "eval", cfg, data_config_hash(ds.cfg));
    std::ofstream mout(fs::path(a.out_dir) / "metrics.json");
    mout << metric_json(res.mean).dump(2) << "\n";
    write_per_image_csv((fs::path(a.out_dir) / "per_image.csv").string(), res);
    print_metric_header();
    std::printf("%-18s %s\n", (std::string(to_string(opts.route)) + "/" + split_name).c_str(),
                metric_row(res.mean).c_str());
    return 0;
}

int cmd_translate(const CommonArgs& a, const std::string& data_dir,
                  const std::string& checkpoint, int count) {
    RunConfig cfg = make_config(a);
    Dataset ds = obtain_dataset(cfg, data_dir);
    Trainer trainer(cfg.train);
    if (!checkpoint.empty()) load_checkpoint(checkpoint, trainer);
    write_run_manifest(a.out_dir, "translate", cfg, data_config_hash(ds.cfg));

    Model<float>& m = trainer.model();
    const auto& src = ds.at(Domain::source, Split::test);
    const auto& tgt = ds.at(Domain::target, Split::test);
    count = std::min(count, int(std::min(src.size(), tgt.size())));
    for (int i = 0; i < count; ++i) {
        Tape<float> tape;
        Var<float> i_s = tape.leaf(src[i].left);
        Var<float> i_t = tape.leaf(tgt[i].left);
        Var<float> z_s_con =
            m.e_con.forward(i_s, ContentEncoder<float>::kSourceBranch, Mode::eval);
        Var<float> z_t_con =
            m.e_con.forward(i_t, ContentEncoder<float>::kTargetBranch, Mode::eval);
        Var<float> z_s_sty = m.e_sty_s.forward(i_s, Mode::eval);
        Var<float> z_t_sty = m.e_sty_t.forward(i_t, Mode::eval);
        auto dump = [&](const char* tag, const Tensor<float>& img) {
            char name[64];
            std::snprintf(name, sizeof name, "%03d_%s.png", i, tag);
            write_png((fs::path(a.out_dir) / name).string(), tensor_to_u8(img));
        };
        dump("is", src[i].left);
        dump("it", tgt[i].left);
        dump("is2s", m.gen.forward(z_s_con, z_s_sty).value());
        dump("it2t", m.gen.forward(z_t_con, z_t_sty).value());
        dump("is2t", m.gen.forward(z_s_con, z_t_sty).value());
        dump("it2s", m.gen.forward(z_t_con, z_s_sty).value());
    }
    std::printf("wrote %d translation grids to %s\n", count, a.out_dir.c_str());
    return 0;
}

int cmd_ablate(const CommonArgs& a, const std::string& data_dir, int jobs) {
    RunConfig cfg = make_config(a);
    Dataset ds = obtain_dataset(cfg, data_dir);
    write_run_manifest(a.out_dir, "ablate", cfg, data_config_hash(ds.cfg));

    const Variant variants[5] = {Variant::src_only, Variant::tgt_al, Variant::tgt_con_2bn,
                                 Variant::tgt_con_2bn_sty, Variant::lfda_full};
    MetricReport results[5];
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < 5; i = next.fetch_add(1)) {
            RunConfig run = cfg;
            run.train.variant = variants[i];
            const std::string vdir = (fs::path(a.out_dir) / to_string(variants[i])).string();
            fs::create_directories(vdir);
            std::ofstream log(fs::path(vdir) / "log.jsonl");
            TrainResult tr = train_loop(run.train, ds, vdir, &log);
            Trainer trainer(run.train);
            load_checkpoint(tr.final_checkpoint, trainer);
            EvalOptions opts;
            opts.cap = run.eval_cap;
            opts.d_min_eval = run.eval_d_min;
            opts.variant = variants[i];
            results[i] =
                evaluate(trainer.model(), ds.at(Domain::target, Split::test), opts).mean;
        }
    };
    jobs = std::max(1, jobs);
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs - 1; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ofstream csv(fs::path(a.out_dir) / "ablation.csv");
    csv << "variant,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3\n";
    print_metric_header();
    char buf[256];
    for (int i = 0; i < 5; ++i) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      to_string(variants[i]), results[i].abs_rel, results[i].sq_rel,
                      results[i].rmse, results[i].rmse_log, results[i].delta1,
                      results[i].delta2, results[i].delta3);
        csv << buf;
        std::printf("%-18s %s\n", to_string(variants[i]), metric_row(results[i]).c_str());
    }
    return 0;
}

int cmd_complexity(const CommonArgs& a) {
    RunConfig cfg = make_config(a);
    Model<float> model(cfg.train.net, cfg.train.seed);
    const bool with_style = cfg.train.variant == Variant::lfda_full ||
                            cfg.train.variant == Variant::tgt_con_2bn_sty;
    ComplexityReport rep = complexity(model, cfg.data.height, cfg.data.width, with_style);
    std::printf("input size          : %lldx%lld\n", (long long)cfg.data.height,
                (long long)cfg.data.width);
    std::printf("inference params    : %lld\n", (long long)rep.params_inference);
    std::printf("total params        : %lld\n", (long long)rep.params_total);
    std::printf("inference MACs      : %lld\n", (long long)rep.macs_inference);
    if (!a.out_dir.empty()) {
        write_run_manifest(a.out_dir, "complexity", cfg, 0);
        json j;
        j["params_inference"] = rep.params_inference;
        j["params_total"] = rep.params_total;
        j["macs_inference"] = rep.macs_inference;
        j["height"] = cfg.data.height;
        j["width"] = cfg.data.width;
        std::ofstream out(fs::path(a.out_dir) / "complexity.json");
        out << j.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) +
                 " - content/style decomposition for domain-adaptive depth estimation"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, trans_args, ablate_args, cx_args;
    std::string train_data, train_resume;
    std::string eval_data, eval_ckpt, eval_split = "test", eval_route = "target";
    std::string trans_data, trans_ckpt;
    std::string ablate_data;
    int trans_count = 4, ablate_jobs = 1;

    auto* gen = app.add_subcommand("gen-data", "Synthesize the dual-domain stereo dataset");
    add_common(gen, gen_args, true);

    auto* train = app.add_subcommand("train", "Train a variant end-to-end");
    add_common(train, train_args, true);
    train->add_option("--data", train_data, "Dataset directory (default: synthesize in memory)");
    train->add_option("--resume", train_resume, "Checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with the depth metric suite");
    add_common(eval, eval_args, true);
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Dataset directory (default: synthesize in memory)");
    eval->add_option("--split", eval_split, "Split: train|val|test");
    eval->add_option("--route", eval_route, "Evaluation route: source|target");

    auto* trans = app.add_subcommand("translate",
                                     "Dump reconstruction/translation image grids");
    add_common(trans, trans_args, true);
    trans->add_option("--checkpoint", trans_ckpt, "Checkpoint file (optional)");
    trans->add_option("--data", trans_data, "Dataset directory (default: synthesize in memory)");
    trans->add_option("--count", trans_count, "Number of sample pairs to dump");

    auto* ablate = app.add_subcommand("ablate", "Run all five variants with shared data/seed");
    add_common(ablate, ablate_args, true);
    ablate->add_option("--data", ablate_data,
                       "Dataset directory (default: synthesize in memory)");
    ablate->add_option("--jobs", ablate_jobs, "Parallel training runs");

    auto* cx = app.add_subcommand("complexity", "Report parameter and MAC counts");
    add_common(cx, cx_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (train->parsed()) return cmd_train(train_args, train_data, train_resume);
        if (eval->parsed())
            return cmd_eval(eval_args, eval_data, eval_ckpt, eval_split, eval_route);
        if (trans->parsed())
            return cmd_translate(trans_args, trans_data, trans_ckpt, trans_count);
        if (ablate->parsed()) return cmd_ablate(ablate_args, ablate_data, ablate_jobs);
        if (cx->parsed()) return cmd_complexity(cx_args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
