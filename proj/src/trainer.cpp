#include "coastal/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coastal/model/checkpoint.hpp"

namespace fs = std::filesystem;

namespace coastal::train {

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.dir = dir;
    ds.manifest = data::load_manifest(dir);
    const int n = ds.manifest.total();
    ds.samples.reserve((size_t)n);
    for (int id = 0; id < n; ++id) ds.samples.push_back(data::load_sample(dir, ds.manifest, id));
    return ds;
}

std::vector<float> baseline_st_interp(const data::SamplePair& s) {
    const int64_t fr = (int64_t)3 * s.h * s.w;
    std::vector<float> out((size_t)(3 * fr));
    for (int64_t i = 0; i < fr; ++i) {
        const float a = s.lr[(size_t)i], b = s.lr[(size_t)(fr + i)];
        out[(size_t)i] = a;
        out[(size_t)(fr + i)] = 0.5f * (a + b);
        out[(size_t)(2 * fr + i)] = b;
    }
    return out;
}

namespace {

nn::Tensor<float> sample_input(const data::SamplePair& s) {
    return nn::Tensor<float>({2, 3, s.h, s.w}, s.lr);
}

nn::Tensor<float> sample_target(const data::SamplePair& s) {
    return nn::Tensor<float>({3, 3, s.h, s.w}, s.hr);
}

nn::Tensor<float> sample_mask(const data::SamplePair& s) {
    nn::Tensor<float> m({s.h, s.w});
    for (size_t i = 0; i < s.mask.size(); ++i) m.v[i] = s.mask[i] ? 1.0f : 0.0f;
    return m;
}

template <class Vec>
void apply_mask(Vec& pred, const std::vector<uint8_t>& mask) {
    const size_t plane = mask.size();
    for (size_t i = 0; i < pred.size(); ++i)
        if (!mask[i % plane]) pred[i] = 0.0f;
}

/// Masked RMSE across all frames and channels of a prediction triple.
template <class VecA, class VecB>
double triple_rmse(const VecA& pred, const VecB& gt, const std::vector<uint8_t>& mask) {
    const size_t plane = mask.size();
    double s = 0;
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i % plane]) {
            const double d = (double)pred[i] - (double)gt[i];
            s += d * d;
            ++n;
        }
    return std::sqrt(s / (double)n);
}

struct FlatParams {
    std::vector<float*> ptr;
    std::vector<int64_t> len;
    int64_t total = 0;

    explicit FlatParams(model::Params<float>& p) {
        for (auto& t : p.values) {
            ptr.push_back(t.data());
            len.push_back(t.size());
            total += t.size();
        }
    }
};

loss::LossWeights<float> cell_weights(const loss::LossWeights<float>& base, bool use_lp, bool use_diff) {
    loss::LossWeights<float> w = base;
    if (!use_lp) w.a_lp = 0;
    if (!use_diff) w.a_diff = 0;
    return w;
}

}  // namespace

TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& ds,
                  const std::string& out_dir) {
    mcfg.validate();
    tcfg.validate();
    if (ds.manifest.train.empty()) throw ConfigError("train: empty training split");
    fs::create_directories(out_dir);

    model::Params<float> params = model::init_params<float>(mcfg, tcfg.seed);
    Rng rng(tcfg.seed ^ 0x5e111aull);

    TrainResult result;
    result.ckpt_best = out_dir + "/ckpt_best.bin";
    result.ckpt_last = out_dir + "/ckpt_last.bin";

    std::ofstream train_log(out_dir + "/train_log.csv");
    std::ofstream val_log(out_dir + "/val_log.csv");
    train_log << "iter,lr,total,mae,lp,diff\n";
    val_log << "iter,val_rmse,val_rmse_baseline\n";

    const std::vector<int>& train_ids = ds.manifest.train;
    std::vector<int> val_ids = ds.manifest.val;
    if ((int)val_ids.size() > tcfg.val_max_samples) val_ids.resize((size_t)tcfg.val_max_samples);

    auto validate = [&](int iter) {
        if (val_ids.empty()) return;
        double rm = 0, rb = 0;
        for (int id : val_ids) {
            const auto& s = ds.sample(id);
            auto pred = model::predict(params, sample_input(s), tcfg.ablation).v;
            apply_mask(pred, s.mask);
            rm += triple_rmse(pred, s.hr, s.mask);
            rb += triple_rmse(baseline_st_interp(s), s.hr, s.mask);
        }
        rm /= (double)val_ids.size();
        rb /= (double)val_ids.size();
        val_log << iter << "," << rm << "," << rb << "\n";
        if (result.best_val_rmse < 0 || rm < result.best_val_rmse) {
            result.best_val_rmse = rm;
            model::save_checkpoint(result.ckpt_best, params, iter);
        }
    };

    if (tcfg.total_iters == 0) {
        model::save_checkpoint(result.ckpt_last, params, 0);
        model::save_checkpoint(result.ckpt_best, params, 0);
        return result;
    }

    FlatParams flat(params);
    std::vector<double> m((size_t)flat.total, 0.0), v((size_t)flat.total, 0.0);
    std::vector<double> grad((size_t)flat.total);

    for (int iter = 1; iter <= tcfg.total_iters; ++iter) {
        const double lr = tcfg.lr_at(iter);
        std::fill(grad.begin(), grad.end(), 0.0);
        double mean_total = 0, mean_mae = 0, mean_lp = 0, mean_diff = 0;
        std::vector<int> batch_ids;

        for (int b = 0; b < tcfg.batch; ++b) {
            const int id = train_ids[(size_t)rng.below(train_ids.size())];
            batch_ids.push_back(id);
            data::SamplePair s = ds.sample(id);
            if (tcfg.patch > 0 && (tcfg.patch < s.h || tcfg.patch < s.w))
                s = data::crop_patch(s, tcfg.patch, rng);
            s = data::augment(s, rng);

            nn::Tape<float> tape;
            auto bp = model::bind(tape, params, true);
            nn::Node<float>* pred = model::forward_sample(tape, bp, mcfg, sample_input(s), tcfg.ablation);
            auto lb = loss::total_loss(pred, sample_target(s), sample_mask(s), tcfg.weights);
            const double total = (double)lb.total->val.v[0];
            if (!std::isfinite(total)) {
                std::ostringstream os;
                os << "non-finite loss at iteration " << iter << "; batch sample ids:";
                for (int bid : batch_ids) os << " " << bid;
                throw NumericsError(os.str());
            }
            mean_total += total;
            mean_mae += lb.mae;
            mean_lp += lb.lp;
            mean_diff += lb.diff;
            tape.backward(lb.total);
            const auto g = bp.collect_grad();
            for (int64_t i = 0; i < flat.total; ++i) grad[(size_t)i] += (double)g[(size_t)i];
        }

        const double inv_b = 1.0 / tcfg.batch;
        mean_total *= inv_b;
        mean_mae *= inv_b;
        mean_lp *= inv_b;
        mean_diff *= inv_b;
        for (auto& g : grad) g *= inv_b;
        if (tcfg.grad_clip) {
            double norm2 = 0;
            for (double g : grad) norm2 += g * g;
            const double norm = std::sqrt(norm2);
            if (norm > tcfg.clip_norm)
                for (auto& g : grad) g *= tcfg.clip_norm / norm;
        }

        // Adam with bias correction; parameters stay float32, moments double.
        const double bc1 = 1.0 - std::pow(tcfg.beta1, iter);
        const double bc2 = 1.0 - std::pow(tcfg.beta2, iter);
        int64_t off = 0;
        for (size_t t = 0; t < flat.ptr.size(); ++t) {
            float* p = flat.ptr[t];
            for (int64_t i = 0; i < flat.len[t]; ++i, ++off) {
                const double g = grad[(size_t)off];
                m[(size_t)off] = tcfg.beta1 * m[(size_t)off] + (1.0 - tcfg.beta1) * g;
                v[(size_t)off] = tcfg.beta2 * v[(size_t)off] + (1.0 - tcfg.beta2) * g * g;
                const double mh = m[(size_t)off] / bc1;
                const double vh = v[(size_t)off] / bc2;
                p[i] = (float)((double)p[i] - lr * mh / (std::sqrt(vh) + tcfg.adam_eps));
            }
        }

        train_log << iter << "," << lr << "," << mean_total << "," << mean_mae << "," << mean_lp << ","
                  << mean_diff << "\n";
        if (iter == 1) result.initial_loss = mean_total;
        result.final_loss = mean_total;
        if (tcfg.val_every > 0 && iter % tcfg.val_every == 0) validate(iter);
        if (tcfg.checkpoint_every > 0 && iter % tcfg.checkpoint_every == 0)
            model::save_checkpoint(result.ckpt_last, params, iter);
    }

    model::save_checkpoint(result.ckpt_last, params, tcfg.total_iters);
    if (result.best_val_rmse < 0) model::save_checkpoint(result.ckpt_best, params, tcfg.total_iters);
    result.iters = tcfg.total_iters;
    return result;
}

EvalSummary evaluate(const model::Params<float>& params, const Dataset& ds, const std::vector<int>& ids,
                     const model::Ablation& ab, const std::string& out_dir) {
    EvalSummary out;
    const int h = ds.manifest.h, w = ds.manifest.w;
    const int64_t plane = (int64_t)h * w;
    if (!out_dir.empty()) fs::create_directories(out_dir);

    for (int id : ids) {
        const auto& s = ds.sample(id);
        auto pred = model::predict(params, sample_input(s), ab).v;
        apply_mask(pred, s.mask);
        const auto base = baseline_st_interp(s);
        const std::vector<uint8_t> mask(s.mask.begin(), s.mask.end());

        auto channel_plane = [&](const float* buf, int t, int c) {
            std::vector<double> p((size_t)plane);
            const float* src = buf + ((size_t)t * 3 + c) * plane;
            for (int64_t i = 0; i < plane; ++i) p[(size_t)i] = (double)src[i];
            return p;
        };

        for (int t = 0; t < 3; ++t)
            for (int c = 0; c < 3; ++c) {
                const auto gt = channel_plane(s.hr.data(), t, c);
                for (int which = 0; which < 2; ++which) {
                    const auto pr = channel_plane(which == 0 ? pred.data() : base.data(), t, c);
                    metrics::SampleMetrics row;
                    row.sample_id = id;
                    row.frame = t;
                    row.channel = c;
                    row.inter = (t == 1);
                    row.rmse = metrics::rmse(pr, gt, mask);
                    row.mae = metrics::mae(pr, gt, mask);
                    row.ssim = metrics::ssim(pr, gt, mask, h, w);
                    row.gmsd = metrics::gmsd(pr, gt, mask, h, w);
                    (which == 0 ? out.model_rows : out.baseline_rows).push_back(row);
                }
            }
        if (!out_dir.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "/pred_%06d.bin", id);
            std::ofstream f(out_dir + buf, std::ios::binary);
            f.write(reinterpret_cast<const char*>(pred.data()), (std::streamsize)(pred.size() * 4));
        }
    }

    out.model_all = metrics::aggregate(out.model_rows);
    out.baseline_all = metrics::aggregate(out.baseline_rows);
    out.model_intra = metrics::aggregate(out.model_rows, 0);
    out.model_inter = metrics::aggregate(out.model_rows, 1);
    out.baseline_intra = metrics::aggregate(out.baseline_rows, 0);
    out.baseline_inter = metrics::aggregate(out.baseline_rows, 1);

    if (!out_dir.empty()) {
        metrics::write_report_csv(out_dir + "/metrics_model.csv", out.model_rows);
        metrics::write_report_csv(out_dir + "/metrics_baseline.csv", out.baseline_rows);
        std::ofstream f(out_dir + "/summary.csv");
        f << "method,rmse,mae,ssim,gmsd,rmse_intra,rmse_inter\n";
        f << "model," << out.model_all.rmse << "," << out.model_all.mae << "," << out.model_all.ssim << ","
          << out.model_all.gmsd << "," << out.model_intra.rmse << "," << out.model_inter.rmse << "\n";
        f << "st_interp," << out.baseline_all.rmse << "," << out.baseline_all.mae << ","
          << out.baseline_all.ssim << "," << out.baseline_all.gmsd << "," << out.baseline_intra.rmse << ","
          << out.baseline_inter.rmse << "\n";
    }
    return out;
}

std::vector<AblationOutcome> run_ablation(const std::vector<AblationCell>& cells,
                                          const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                                          const Dataset& ds, const std::string& out_dir) {
    if (cells.empty()) throw ConfigError("ablation: empty matrix");
    fs::create_directories(out_dir);
    std::vector<AblationOutcome> outcomes;

    for (const auto& cell : cells) {
        TrainConfig cfg = tcfg;  // shared seed and data across cells
        cfg.ablation = cell.ablation;
        cfg.weights = cell_weights(tcfg.weights, cell.use_lp, cell.use_diff);
        const std::string cell_dir = out_dir + "/" + cell.name;
        train(mcfg, cfg, ds, cell_dir);
        const auto ck = model::load_checkpoint(cell_dir + "/ckpt_last.bin");
        const auto ev = evaluate(ck.params, ds, ds.manifest.test, cell.ablation, cell_dir + "/eval");

        AblationOutcome oc;
        oc.name = cell.name;
        oc.all = ev.model_all;
        oc.intra = ev.model_intra;
        oc.inter = ev.model_inter;
        oc.mae_intra = ev.model_intra.mae;
        oc.mae_inter = ev.model_inter.mae;
        outcomes.push_back(oc);
    }

    // metric rows, one column per flag combination
    std::ofstream rep(out_dir + "/ablation_report.csv");
    rep << "metric";
    for (const auto& oc : outcomes) rep << "," << oc.name;
    rep << "\n";
    auto row = [&](const std::string& name, auto get) {
        rep << name;
        for (const auto& oc : outcomes) rep << "," << get(oc);
        rep << "\n";
    };
    row("rmse", [](const AblationOutcome& o) { return o.all.rmse; });
    row("mae", [](const AblationOutcome& o) { return o.all.mae; });
    row("ssim", [](const AblationOutcome& o) { return o.all.ssim; });
    row("gmsd", [](const AblationOutcome& o) { return o.all.gmsd; });
    row("rmse_intra", [](const AblationOutcome& o) { return o.intra.rmse; });
    row("rmse_inter", [](const AblationOutcome& o) { return o.inter.rmse; });

    // intra vs inter breakdown per cell
    std::ofstream fr(out_dir + "/ablation_frames.csv");
    fr << "cell,rmse_intra,rmse_inter,mae_intra,mae_inter\n";
    for (const auto& oc : outcomes)
        fr << oc.name << "," << oc.intra.rmse << "," << oc.inter.rmse << "," << oc.mae_intra << ","
           << oc.mae_inter << "\n";
    return outcomes;
}

}  // namespace coastal::train
