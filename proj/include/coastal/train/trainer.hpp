#pragma once

#include <string>
#include <vector>

#include "coastal/data/dataset.hpp"
#include "coastal/loss/losses.hpp"
#include "coastal/metrics/metrics.hpp"
#include "coastal/model/model.hpp"

namespace coastal::train {

struct TrainConfig {
    double lr = 1e-4;
    int lr_halve_at = 600;    // 30000 at paper scale
    int total_iters = 2000;   // 100000 at paper scale
    int batch = 8;            // 24 at paper scale
    uint64_t seed = 0;
    int checkpoint_every = 500;
    int val_every = 100;
    int val_max_samples = 32;
    loss::LossWeights<float> weights;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    bool grad_clip = false;
    double clip_norm = 1.0;
    model::Ablation ablation;
    int patch = 64;  // 0 trains on full frames

    void validate() const {
        if (!(lr > 0)) throw ConfigError("lr must be positive");
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
        if (lr_halve_at > total_iters && total_iters > 0)
            throw ConfigError("lr_halve_at must be <= total_iters");
    }

    double lr_at(int iter) const { return iter >= lr_halve_at ? lr * 0.5 : lr; }
};

/// Dataset held in memory, indexed by sample id.
struct Dataset {
    data::DatasetManifest manifest;
    std::string dir;
    std::vector<data::SamplePair> samples;

    const data::SamplePair& sample(int id) const { return samples[(size_t)id]; }
};

Dataset load_dataset(const std::string& dir);

struct TrainResult {
    double initial_loss = 0;
    double final_loss = 0;
    double best_val_rmse = -1;
    std::string ckpt_best, ckpt_last;
    int iters = 0;
};

/// Adam training loop with the halving schedule, per-iteration CSV logging,
/// periodic validation and best/last checkpoints. Deterministic for a fixed
/// seed; aborts with the offending batch ids when the loss is not finite.
TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& ds,
                  const std::string& out_dir);

/// Model-free prediction (first frame, temporal midpoint, second frame).
std::vector<float> baseline_st_interp(const data::SamplePair& s);

struct EvalSummary {
    std::vector<metrics::SampleMetrics> model_rows, baseline_rows;
    metrics::Aggregate model_all, baseline_all;
    metrics::Aggregate model_intra, model_inter, baseline_intra, baseline_inter;
};

/// Per-sample per-frame per-channel metrics for the model and the
/// interpolation baseline on the given sample ids (full frames). When
/// out_dir is non-empty, predictions and metric CSVs are written there.
EvalSummary evaluate(const model::Params<float>& params, const Dataset& ds, const std::vector<int>& ids,
                     const model::Ablation& ab, const std::string& out_dir = "");

/// One ablation cell: a named flag combination trained and evaluated
/// identically to the others.
struct AblationCell {
    std::string name;
    model::Ablation ablation;
    bool use_lp = true;
    bool use_diff = true;
};

struct AblationOutcome {
    std::string name;
    metrics::Aggregate all, intra, inter;
    double mae_intra = 0, mae_inter = 0;
};

/// Trains every cell with the same data, seed and schedule, evaluates each
/// on the test split, and writes ablation_report.csv (metric rows, one
/// column per cell) plus ablation_frames.csv (intra vs inter breakdown).
std::vector<AblationOutcome> run_ablation(const std::vector<AblationCell>& cells,
                                          const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                                          const Dataset& ds, const std::string& out_dir);

}  // namespace coastal::train
