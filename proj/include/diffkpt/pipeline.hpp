#pragma once

#include "diffkpt/diffusion.hpp"
#include "diffkpt/heatmap.hpp"
#include "diffkpt/metrics.hpp"
#include "diffkpt/model.hpp"
#include "diffkpt/priors.hpp"
#include "diffkpt/rng.hpp"
#include "diffkpt/synthdata.hpp"
#include "diffkpt/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace diffkpt {

// Flat key=value experiment config. serialize_train_config writes every
// key in a fixed order so resolved copies are byte-stable.
struct TrainConfig {
    std::size_t channels = 32;
    std::size_t prior_d = 64;
    std::size_t heads = 4;
    double sigma = 2.0;           // heatmap target width, cells
    double vis_threshold = 0.3;
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::string loss_target = "x0";  // or "eps"
    bool mask_loss = true;
    int epochs = 30;
    std::size_t batch_size = 16;
    double lr = 5e-4;
    double weight_decay = 1e-4;
    double lr_decay_factor = 0.1;
    std::vector<int> lr_decay_epochs = {24, 29};
    std::string infer_mode = "literal";  // or "ddim"
    std::uint64_t seed = 1;

    void validate() const;
};

TrainConfig parse_train_config(const std::string& text);
std::string serialize_train_config(const TrainConfig& cfg);

ModelConfig model_config_for(const TrainConfig& cfg, std::size_t n_keypoints,
                             std::size_t img_h, std::size_t img_w);

// Epochs are 1-indexed; the rate multiplies by lr_decay_factor at each
// boundary epoch and stays there.
double effective_lr(const TrainConfig& cfg, int epoch);

// Decoupled weight decay: the decay term bypasses the moment estimates.
struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v;  // parallel to DenoiserParams::named()

    void init(const DenoiserParams& params);
    void update(DenoiserParams& params, double lr, double weight_decay);
};

// One optimization step over a batch per the training procedure: sample t,
// corrupt the target heatmaps, run the conditional denoiser, masked MSE,
// backprop, AdamW update. Returns the batch loss.
double train_step(const Dataset& ds, const std::vector<std::size_t>& batch,
                  DenoiserParams& params, AdamW& opt, const DiffusionSchedule& sched,
                  const SemanticPrior& prior, const TrainConfig& tcfg, const ModelConfig& mcfg,
                  double lr, Rng& rng);

struct InferOptions {
    std::string mode = "literal";  // or "ddim"
    std::string loss_target = "x0";
    double vis_threshold = 0.3;
};

// T-step reverse pass from pure noise; params are read-only throughout.
KeypointSet infer_one(const Tensor& image, const DenoiserParams& params,
                      const DiffusionSchedule& sched, const SemanticPrior& prior,
                      const ModelConfig& mcfg, Rng& rng, const InferOptions& opts);

struct Checkpoint {
    TrainConfig cfg;
    ModelConfig mcfg;
    DenoiserParams params;
    AdamW opt;
    int epoch = 0;
    long global_step = 0;
    std::uint64_t rng_seed = 0, rng_stream = 0, rng_counter = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
// expected_n, when nonzero, must match the stored keypoint count.
Checkpoint load_checkpoint(const std::string& path, std::size_t expected_n = 0);

struct TrainResult {
    std::string final_checkpoint;
    std::string csv_path;
    std::vector<std::string> epoch_checkpoints;
    double final_loss = 0.0;
};

// Full training driver: writes the resolved config, a per-step CSV log
// (step,epoch,loss,lr), wall times to a separate timing csv, an epoch
// checkpoint after every epoch, and a final checkpoint. resume_path
// continues a saved run bit-exactly.
TrainResult train(const Dataset& ds, const SemanticPrior& prior, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& resume_path = "");

// Predictions for every image of a split, ids aligned with the dataset.
std::vector<EvalInstance> infer_split(const Dataset& ds, const Checkpoint& ck,
                                      const SemanticPrior& prior, std::uint64_t seed,
                                      const std::string& mode);

} // namespace diffkpt
