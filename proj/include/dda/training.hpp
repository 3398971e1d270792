#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dda/datagen.hpp"
#include "dda/losses.hpp"
#include "dda/networks.hpp"
#include "dda/perceptual.hpp"

namespace dda {

/// Ablation variants, ordered by how much of the framework they enable.
enum class Variant { src_only, tgt_al, tgt_con_2bn, tgt_con_2bn_sty, lfda_full };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

struct TrainConfig {
    NetConfig net;
    LossWeights<float> weights;
    float lr_task = 1e-4f;  // E_con and D
    float lr_other = 2e-5f; // style encoders, generator, discriminators
    float decay_power = 0.9f;
    int total_steps = 2000;
    int batch_size = 2; // per domain
    std::uint64_t seed = 1;
    std::uint64_t perceptual_seed = 7;
    Variant variant = Variant::lfda_full;
    float grl_ramp_frac = 0.2f; // GRL lambda ramps 0 -> 1 over this fraction
    int checkpoint_every = 500;
    // stereo intrinsics for the inverse warp; must match the dataset
    float focal = 48.0f;
    float baseline = 0.25f;

    void validate() const;
};

/// lr0 * (1 - step/total)^power, clamped to 0 past the end.
double poly_decay(double lr0, int step, int total_steps, double power);

/// Adam with per-parameter moment buffers and step counts. Parameters that
/// did not receive a gradient on the given tape are left untouched.
class Adam {
  public:
    struct Slot {
        Tensor<float> m, v;
        std::int64_t t = 0;
    };

    Adam() = default;
    explicit Adam(std::vector<NamedTensor<float>> params, float beta1 = 0.9f,
                  float beta2 = 0.999f, float eps = 1e-8f);

    void step(Tape<float>& tape, float lr);

    const std::vector<NamedTensor<float>>& params() const { return params_; }
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }

  private:
    std::vector<NamedTensor<float>> params_;
    std::vector<Slot> slots_;
    float beta1_ = 0.9f, beta2_ = 0.999f, eps_ = 1e-8f;
};

/// Mini-batch of stacked samples; depth is empty for unlabeled target data.
struct Batch {
    Tensor<float> left, right, depth;
};

Batch make_batch(const std::vector<SceneSample>& pool, const std::vector<Index>& ids);

/// Deterministic per-step index draw.
std::vector<Index> sample_indices(std::uint64_t seed, int step, const char* tag, Index pool_size,
                                  int batch);

/// Owns the model, the frozen extractor, and the three optimizers, and runs
/// the alternating adversarial updates for the configured variant.
class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    /// One optimizer step on the full objective plus one discriminator step.
    /// Throws NumericError naming the first non-finite term.
    LossReport train_step(const Batch& source, const Batch& target);

    const TrainConfig& config() const { return cfg_; }
    Model<float>& model() { return model_; }
    const PerceptualExtractor<float>& extractor() const { return extractor_; }
    int step() const { return step_; }
    void set_step(int s) { step_ = s; }
    float grl_lambda() const;

    Adam& opt_task() { return opt_task_; }
    Adam& opt_other() { return opt_other_; }
    Adam& opt_disc() { return opt_disc_; }

  private:
    TrainConfig cfg_;
    Model<float> model_;
    PerceptualExtractor<float> extractor_;
    Adam opt_task_, opt_other_, opt_disc_;
    int step_ = 0;
};

struct StepRecord {
    int step = 0;
    double lr_task = 0, lr_other = 0;
    LossReport losses;
};

std::string step_record_json(const StepRecord& r);

struct TrainResult {
    std::vector<StepRecord> log;
    std::string final_checkpoint; // empty when out_dir was empty
};

/// Runs cfg.total_steps steps over the dataset with polynomial decay,
/// periodic checkpoints (when out_dir is set) and one structured log record
/// per step (when log_stream is set). resume_from restores a checkpoint and
/// refuses config or dataset mismatches.
TrainResult train_loop(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir,
                       std::ostream* log_stream = nullptr,
                       const std::string& resume_from = "");

// checkpoint.cpp
std::uint64_t train_config_hash(const TrainConfig& cfg);
void save_checkpoint(const std::string& path, Trainer& trainer, std::uint64_t data_hash);
/// Returns the stored data hash after restoring the trainer's state.
std::uint64_t load_checkpoint(const std::string& path, Trainer& trainer);
/// Reads only the header (config hash, step, data hash).
struct CheckpointInfo {
    std::uint64_t config_hash = 0;
    std::uint64_t data_hash = 0;
    std::int64_t step = 0;
};
CheckpointInfo read_checkpoint_info(const std::string& path);

} // namespace dda
