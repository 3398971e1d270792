#include "dda/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dda/errors.hpp"

namespace dda {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double to_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number '" + s + "' for " + key);
    }
}

long long to_int(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer '" + s + "' for " + key);
    }
}

bool to_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: bad bool '" + s + "' for " + key);
}

std::string fmt_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<int> to_ints(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(int(to_int(item, key)));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

std::string fmt_arr5(const std::array<float, 5>& v) {
    std::string out;
    for (int i = 0; i < 5; ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

std::array<float, 5> to_arr5(const std::string& s, const std::string& key) {
    std::array<float, 5> out{};
    std::stringstream ss(s);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 5) throw ConfigError("config: expected 5 values for " + key);
        out[i++] = float(to_double(item, key));
    }
    if (i != 5) throw ConfigError("config: expected 5 values for " + key);
    return out;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::map<std::string, Field>& registry() {
    static const std::map<std::string, Field> fields = [] {
        std::map<std::string, Field> m;
        auto add = [&m](const std::string& key, auto getter, auto setter) {
            m[key] = Field{getter, setter};
        };
        // data
        add("data.height", [](const RunConfig& c) { return std::to_string(c.data.height); },
            [](RunConfig& c, const std::string& v) { c.data.height = to_int(v, "data.height"); });
        add("data.width", [](const RunConfig& c) { return std::to_string(c.data.width); },
            [](RunConfig& c, const std::string& v) { c.data.width = to_int(v, "data.width"); });
        add("data.d_min", [](const RunConfig& c) { return fmt_double(c.data.d_min); },
            [](RunConfig& c, const std::string& v) {
                c.data.d_min = float(to_double(v, "data.d_min"));
            });
        add("data.d_max", [](const RunConfig& c) { return fmt_double(c.data.d_max); },
            [](RunConfig& c, const std::string& v) {
                c.data.d_max = float(to_double(v, "data.d_max"));
            });
        add("data.focal", [](const RunConfig& c) { return fmt_double(c.data.focal); },
            [](RunConfig& c, const std::string& v) {
                c.data.focal = float(to_double(v, "data.focal"));
            });
        add("data.baseline", [](const RunConfig& c) { return fmt_double(c.data.baseline); },
            [](RunConfig& c, const std::string& v) {
                c.data.baseline = float(to_double(v, "data.baseline"));
            });
        add("data.min_objects",
            [](const RunConfig& c) { return std::to_string(c.data.min_objects); },
            [](RunConfig& c, const std::string& v) {
                c.data.min_objects = int(to_int(v, "data.min_objects"));
            });
        add("data.max_objects",
            [](const RunConfig& c) { return std::to_string(c.data.max_objects); },
            [](RunConfig& c, const std::string& v) {
                c.data.max_objects = int(to_int(v, "data.max_objects"));
            });
        add("data.obj_depth_min",
            [](const RunConfig& c) { return fmt_double(c.data.obj_depth_min); },
            [](RunConfig& c, const std::string& v) {
                c.data.obj_depth_min = float(to_double(v, "data.obj_depth_min"));
            });
        add("data.obj_depth_max",
            [](const RunConfig& c) { return fmt_double(c.data.obj_depth_max); },
            [](RunConfig& c, const std::string& v) {
                c.data.obj_depth_max = float(to_double(v, "data.obj_depth_max"));
            });
        add("data.bg_near_depth",
            [](const RunConfig& c) { return fmt_double(c.data.bg_near_depth); },
            [](RunConfig& c, const std::string& v) {
                c.data.bg_near_depth = float(to_double(v, "data.bg_near_depth"));
            });
        add("data.bg_far_depth",
            [](const RunConfig& c) { return fmt_double(c.data.bg_far_depth); },
            [](RunConfig& c, const std::string& v) {
                c.data.bg_far_depth = float(to_double(v, "data.bg_far_depth"));
            });
        add("data.scenario", [](const RunConfig& c) { return to_string(c.data.scenario); },
            [](RunConfig& c, const std::string& v) { c.data.scenario = parse_scenario(v); });
        add("data.train_count",
            [](const RunConfig& c) { return std::to_string(c.data.train_count); },
            [](RunConfig& c, const std::string& v) {
                c.data.train_count = int(to_int(v, "data.train_count"));
            });
        add("data.val_count", [](const RunConfig& c) { return std::to_string(c.data.val_count); },
            [](RunConfig& c, const std::string& v) {
                c.data.val_count = int(to_int(v, "data.val_count"));
            });
        add("data.test_count",
            [](const RunConfig& c) { return std::to_string(c.data.test_count); },
            [](RunConfig& c, const std::string& v) {
                c.data.test_count = int(to_int(v, "data.test_count"));
            });
        add("data.seed", [](const RunConfig& c) { return std::to_string(c.data.seed); },
            [](RunConfig& c, const std::string& v) {
                c.data.seed = std::uint64_t(to_int(v, "data.seed"));
            });
        add("data.fog_source", [](const RunConfig& c) { return fmt_double(c.fog_source); },
            [](RunConfig& c, const std::string& v) {
                c.fog_source = to_double(v, "data.fog_source");
            });
        add("data.fog_target", [](const RunConfig& c) { return fmt_double(c.fog_target); },
            [](RunConfig& c, const std::string& v) {
                c.fog_target = to_double(v, "data.fog_target");
            });
        add("data.texture_source",
            [](const RunConfig& c) { return fmt_double(c.texture_source); },
            [](RunConfig& c, const std::string& v) {
                c.texture_source = to_double(v, "data.texture_source");
            });
        add("data.texture_target",
            [](const RunConfig& c) { return fmt_double(c.texture_target); },
            [](RunConfig& c, const std::string& v) {
                c.texture_target = to_double(v, "data.texture_target");
            });
        // net
        add("net.encoder_channels",
            [](const RunConfig& c) { return fmt_ints(c.train.net.encoder_channels); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.encoder_channels = to_ints(v, "net.encoder_channels");
            });
        add("net.encoder_strides",
            [](const RunConfig& c) { return fmt_ints(c.train.net.encoder_strides); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.encoder_strides = to_ints(v, "net.encoder_strides");
            });
        add("net.style_channels",
            [](const RunConfig& c) { return fmt_ints(c.train.net.style_channels_seq); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.style_channels_seq = to_ints(v, "net.style_channels");
            });
        add("net.decoder_channels",
            [](const RunConfig& c) { return fmt_ints(c.train.net.decoder_channels); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.decoder_channels = to_ints(v, "net.decoder_channels");
            });
        add("net.generator_channels",
            [](const RunConfig& c) { return fmt_ints(c.train.net.generator_channels); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.generator_channels = to_ints(v, "net.generator_channels");
            });
        add("net.discriminator_channels",
            [](const RunConfig& c) { return fmt_ints(c.train.net.discriminator_channels); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.discriminator_channels = to_ints(v, "net.discriminator_channels");
            });
        add("net.perceptual_channels",
            [](const RunConfig& c) { return fmt_ints(c.train.net.perceptual_channels); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.perceptual_channels = to_ints(v, "net.perceptual_channels");
            });
        add("net.bn_momentum",
            [](const RunConfig& c) { return fmt_double(c.train.net.bn_momentum); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.bn_momentum = to_double(v, "net.bn_momentum");
            });
        add("net.bn_k", [](const RunConfig& c) { return fmt_double(c.train.net.bn_k); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.bn_k = to_double(v, "net.bn_k");
            });
        add("net.leaky_slope",
            [](const RunConfig& c) { return fmt_double(c.train.net.leaky_slope); },
            [](RunConfig& c, const std::string& v) {
                c.train.net.leaky_slope = to_double(v, "net.leaky_slope");
            });
        // loss
        add("loss.w_trans_con",
            [](const RunConfig& c) { return fmt_arr5(c.train.weights.w_trans_con); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.w_trans_con = to_arr5(v, "loss.w_trans_con");
            });
        add("loss.w_trans_sty",
            [](const RunConfig& c) { return fmt_arr5(c.train.weights.w_trans_sty); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.w_trans_sty = to_arr5(v, "loss.w_trans_sty");
            });
        add("loss.w_recon", [](const RunConfig& c) { return fmt_arr5(c.train.weights.w_recon); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.w_recon = to_arr5(v, "loss.w_recon");
            });
        add("loss.eta", [](const RunConfig& c) { return fmt_double(c.train.weights.eta); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.eta = float(to_double(v, "loss.eta"));
            });
        add("loss.lambda_geo",
            [](const RunConfig& c) { return fmt_double(c.train.weights.lambda_geo); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.lambda_geo = float(to_double(v, "loss.lambda_geo"));
            });
        add("loss.lambda_sm",
            [](const RunConfig& c) { return fmt_double(c.train.weights.lambda_sm); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.lambda_sm = float(to_double(v, "loss.lambda_sm"));
            });
        add("loss.lambda_align",
            [](const RunConfig& c) { return fmt_double(c.train.weights.lambda_align); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.lambda_align = float(to_double(v, "loss.lambda_align"));
            });
        add("loss.lambda_recon",
            [](const RunConfig& c) { return fmt_double(c.train.weights.lambda_recon); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.lambda_recon = float(to_double(v, "loss.lambda_recon"));
            });
        add("loss.lambda_trans",
            [](const RunConfig& c) { return fmt_double(c.train.weights.lambda_trans); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.lambda_trans = float(to_double(v, "loss.lambda_trans"));
            });
        add("loss.alpha_geo",
            [](const RunConfig& c) { return fmt_double(c.train.weights.alpha_geo); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.alpha_geo = float(to_double(v, "loss.alpha_geo"));
            });
        add("loss.beta_geo",
            [](const RunConfig& c) { return fmt_double(c.train.weights.beta_geo); },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.beta_geo = float(to_double(v, "loss.beta_geo"));
            });
        add("loss.align_source_label_one",
            [](const RunConfig& c) {
                return c.train.weights.align_source_label_one ? "true" : "false";
            },
            [](RunConfig& c, const std::string& v) {
                c.train.weights.align_source_label_one =
                    to_bool(v, "loss.align_source_label_one");
            });
        // train
        add("train.lr_task", [](const RunConfig& c) { return fmt_double(c.train.lr_task); },
            [](RunConfig& c, const std::string& v) {
                c.train.lr_task = float(to_double(v, "train.lr_task"));
            });
        add("train.lr_other", [](const RunConfig& c) { return fmt_double(c.train.lr_other); },
            [](RunConfig& c, const std::string& v) {
                c.train.lr_other = float(to_double(v, "train.lr_other"));
            });
        add("train.decay_power",
            [](const RunConfig& c) { return fmt_double(c.train.decay_power); },
            [](RunConfig& c, const std::string& v) {
                c.train.decay_power = float(to_double(v, "train.decay_power"));
            });
        add("train.total_steps",
            [](const RunConfig& c) { return std::to_string(c.train.total_steps); },
            [](RunConfig& c, const std::string& v) {
                c.train.total_steps = int(to_int(v, "train.total_steps"));
            });
        add("train.batch_size",
            [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
            [](RunConfig& c, const std::string& v) {
                c.train.batch_size = int(to_int(v, "train.batch_size"));
            });
        add("train.seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, const std::string& v) {
                c.train.seed = std::uint64_t(to_int(v, "train.seed"));
            });
        add("train.perceptual_seed",
            [](const RunConfig& c) { return std::to_string(c.train.perceptual_seed); },
            [](RunConfig& c, const std::string& v) {
                c.train.perceptual_seed = std::uint64_t(to_int(v, "train.perceptual_seed"));
            });
        add("train.variant", [](const RunConfig& c) { return to_string(c.train.variant); },
            [](RunConfig& c, const std::string& v) { c.train.variant = parse_variant(v); });
        add("train.grl_ramp_frac",
            [](const RunConfig& c) { return fmt_double(c.train.grl_ramp_frac); },
            [](RunConfig& c, const std::string& v) {
                c.train.grl_ramp_frac = float(to_double(v, "train.grl_ramp_frac"));
            });
        add("train.checkpoint_every",
            [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); },
            [](RunConfig& c, const std::string& v) {
                c.train.checkpoint_every = int(to_int(v, "train.checkpoint_every"));
            });
        // eval
        add("eval.cap", [](const RunConfig& c) { return fmt_double(c.eval_cap); },
            [](RunConfig& c, const std::string& v) { c.eval_cap = to_double(v, "eval.cap"); });
        add("eval.d_min", [](const RunConfig& c) { return fmt_double(c.eval_d_min); },
            [](RunConfig& c, const std::string& v) {
                c.eval_d_min = to_double(v, "eval.d_min");
            });
        return m;
    }();
    return fields;
}

} // namespace

RunConfig RunConfig::desk() {
    RunConfig c;
    c.data.height = 64;
    c.data.width = 96;
    c.data.scenario = Scenario::synthetic_to_real;
    c.data.train_count = 64;
    c.data.val_count = 16;
    c.data.test_count = 16;
    c.train.net.encoder_channels = {12, 24, 48, 48};
    c.train.net.encoder_strides = {2, 2, 1, 1};
    c.train.net.style_channels_seq = {8, 16, 16, 16};
    c.train.net.decoder_channels = {24, 12, 8};
    c.train.net.generator_channels = {24, 12, 8};
    c.train.net.discriminator_channels = {12, 24};
    c.train.net.perceptual_channels = {8, 16, 32, 32, 32};
    c.train.total_steps = 2000;
    c.train.batch_size = 2;
    c.train.lr_other = 6e-5f; // desk-scale retune; the type default stays 2e-5
    c.eval_cap = 20.0;
    c.finalize();
    return c;
}

void RunConfig::finalize() {
    train.net.d_min = data.d_min;
    train.net.d_max = data.d_max;
    train.focal = data.focal;
    train.baseline = data.baseline;
    apply_scenario_styles(data);
    if (fog_source >= 0) data.style_source.fog_density = float(fog_source);
    if (fog_target >= 0) data.style_target.fog_density = float(fog_target);
    if (texture_source >= 0) data.style_source.texture_amp = float(texture_source);
    if (texture_target >= 0) data.style_target.texture_amp = float(texture_target);
    data.validate();
    train.validate();
    if (eval_cap <= 0) throw ConfigError("config: eval.cap must be positive");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = registry().find(key);
    if (it == registry().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
    auto it = registry().find(key);
    if (it == registry().end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second.get(*this);
}

std::vector<std::string> RunConfig::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, f] : registry()) out.push_back(k);
    return out;
}

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& [k, f] : registry()) out += k + " = " + f.get(*this) + "\n";
    return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a(dump()); }

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig c = desk();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash_pos = line.find('#');
            if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: override '" + ov + "' is not key=value");
        c.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    c.finalize();
    return c;
}

} // namespace dda
