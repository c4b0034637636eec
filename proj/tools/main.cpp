// coastal: batch pipeline for paired shallow-water simulation, spatiotemporal
// downscaling training, evaluation and reporting.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "coastal/data/png_io.hpp"
#include "coastal/errors.hpp"
#include "coastal/model/checkpoint.hpp"
#include "coastal/train/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace coastal;

namespace {

// ---------------------------------------------------------------------------
// config plumbing
// ---------------------------------------------------------------------------

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed JSON in " + path);
    return j;
}

json parse_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);  // fall back to a plain string
    return v;
}

/// Applies dotted-key overrides; every key must already exist in the config.
void apply_overrides(json& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
        const std::string key = kv.substr(0, eq);
        json* node = &cfg;
        size_t pos = 0;
        while (true) {
            const size_t dot = key.find('.', pos);
            const std::string part = key.substr(pos, dot - pos);
            if (!node->is_object() || !node->contains(part))
                throw ConfigError("override references unknown config key: " + key);
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            pos = dot + 1;
        }
        *node = parse_value(kv.substr(eq + 1));
    }
}

uint64_t resolve_seed(const CLI::Option* seed_opt, uint64_t flag_value, const json& cfg) {
    if (seed_opt->count() > 0) return flag_value;
    if (cfg.is_object() && cfg.contains("seed")) return cfg["seed"].get<uint64_t>();
    if (const char* env = std::getenv("ST_DOWNSCALER_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

json default_sim_json() {
    sim::SimConfig c;
    json cons = json::array();
    for (const auto& k : c.constituents)
        cons.push_back({{"amplitude", k.amplitude}, {"divisor", k.divisor}, {"phase", k.phase}});
    return {{"nx", c.nx},           {"ny", c.ny},
            {"dx", c.dx},           {"dy", c.dy},
            {"dt", c.dt},           {"t_end", c.t_end},
            {"g", c.g},             {"f_c", c.f_c},
            {"C_f", c.c_f},         {"H_min", c.h_min},
            {"output_stride", c.output_stride},
            {"basin", c.basin},     {"constituents", cons}};
}

sim::SimConfig sim_from_json(const json& j) {
    sim::SimConfig c;
    c.nx = j.value("nx", c.nx);
    c.ny = j.value("ny", c.ny);
    c.dx = j.value("dx", c.dx);
    c.dy = j.value("dy", c.dy);
    c.dt = j.value("dt", c.dt);
    c.t_end = j.value("t_end", c.t_end);
    c.g = j.value("g", c.g);
    c.f_c = j.value("f_c", c.f_c);
    c.c_f = j.value("C_f", c.c_f);
    c.h_min = j.value("H_min", c.h_min);
    c.output_stride = j.value("output_stride", c.output_stride);
    c.basin = j.value("basin", c.basin);
    if (j.contains("constituents")) {
        c.constituents.clear();
        for (const auto& k : j["constituents"])
            c.constituents.push_back({k.at("amplitude"), k.at("divisor"), k.at("phase")});
    }
    return c;
}

json default_model_json() {
    model::ModelConfig c;
    return {{"feat", c.feat},     {"n_rcab", c.n_rcab},   {"reduction", c.reduction},
            {"window", c.window}, {"n_heads", c.n_heads}};
}

model::ModelConfig model_from_json(const json& j) {
    model::ModelConfig c;
    c.feat = j.value("feat", c.feat);
    c.n_rcab = j.value("n_rcab", c.n_rcab);
    c.reduction = j.value("reduction", c.reduction);
    c.window = j.value("window", c.window);
    c.n_heads = j.value("n_heads", c.n_heads);
    return c;
}

json default_train_json() {
    train::TrainConfig c;
    return {{"lr", c.lr},
            {"lr_halve_at", c.lr_halve_at},
            {"total_iters", c.total_iters},
            {"batch", c.batch},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"val_every", c.val_every},
            {"val_max_samples", c.val_max_samples},
            {"patch", c.patch},
            {"grad_clip", c.grad_clip},
            {"clip_norm", c.clip_norm},
            {"weights", {{"a_mae", 4.0}, {"a_lp", 1.0}, {"a_diff", 100.0}, {"eps", 1e-8}}},
            {"ablation",
             {{"use_st_attn", true},
              {"use_fsr", true},
              {"use_pos", true},
              {"axes", "hvd"},
              {"use_lp", true},
              {"use_diff", true}}}};
}

train::TrainConfig train_from_json(const json& j) {
    train::TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.lr_halve_at = j.value("lr_halve_at", c.lr_halve_at);
    c.total_iters = j.value("total_iters", c.total_iters);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.val_every = j.value("val_every", c.val_every);
    c.val_max_samples = j.value("val_max_samples", c.val_max_samples);
    c.patch = j.value("patch", c.patch);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        c.weights.a_mae = w.value("a_mae", 4.0);
        c.weights.a_lp = w.value("a_lp", 1.0);
        c.weights.a_diff = w.value("a_diff", 100.0);
        c.weights.eps = w.value("eps", 1e-8);
    }
    if (j.contains("ablation")) {
        const auto& a = j["ablation"];
        c.ablation.st_attn = a.value("use_st_attn", true);
        c.ablation.fsr = a.value("use_fsr", true);
        c.ablation.pos = a.value("use_pos", true);
        const std::string axes = a.value("axes", "hvd");
        c.ablation.axis_h = axes.find('h') != std::string::npos;
        c.ablation.axis_v = axes.find('v') != std::string::npos;
        c.ablation.axis_d = axes.find('d') != std::string::npos;
        if (!a.value("use_lp", true)) c.weights.a_lp = 0;
        if (!a.value("use_diff", true)) c.weights.a_diff = 0;
    }
    return c;
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

int cmd_simulate(const json& cfg_json, const std::string& out, const std::string& resolution, uint64_t seed) {
    sim::SimConfig cfg = sim_from_json(cfg_json);
    if (resolution == "fine") {
        cfg.nx *= 2;
        cfg.ny *= 2;
        cfg.dx *= 0.5;
        cfg.dy *= 0.5;
        cfg.dt *= 0.5;
    } else if (resolution != "coarse") {
        throw ConfigError("--resolution must be coarse or fine");
    }
    cfg.validate();
    const auto frames = sim::run(cfg, seed, out);
    const double m0 = sim::total_mass(frames.front(), cfg);
    const double m1 = sim::total_mass(frames.back(), cfg);
    std::cout << "wrote " << frames.size() << " frames to " << out << "\n";
    std::cout << "mass: initial " << m0 << " m^3, final " << m1 << " m^3, drift "
              << (m1 - m0) / std::max(std::abs(m0), 1.0) << " (relative; boundary flux included for open basins)\n";
    return 0;
}

int cmd_make_dataset(const std::string& coarse, const std::string& fine, const std::string& out, int patch,
                     const std::string& split, uint64_t seed) {
    std::array<double, 3> ratios{};
    if (std::sscanf(split.c_str(), "%lf:%lf:%lf", &ratios[0], &ratios[1], &ratios[2]) != 3)
        throw ConfigError("--split must look like 6:2:2");
    const double sum = ratios[0] + ratios[1] + ratios[2];
    for (auto& r : ratios) r /= sum;
    const auto m = data::make_dataset(coarse, fine, out, patch, ratios, seed);
    std::cout << "dataset " << out << ": " << m.total() << " samples (train " << m.train.size() << ", val "
              << m.val.size() << ", test " << m.test.size() << "), " << m.h << "x" << m.w << " px\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out, const json& mj, const json& tj) {
    const model::ModelConfig mcfg = model_from_json(mj);
    const train::TrainConfig tcfg = train_from_json(tj);
    const auto ds = train::load_dataset(data_dir);
    const auto params = model::init_params<float>(mcfg, tcfg.seed);
    std::cout << "model parameters: " << params.total_count() << "\n";
    const auto result = train::train(mcfg, tcfg, ds, out);
    std::cout << "trained " << result.iters << " iterations; loss " << result.initial_loss << " -> "
              << result.final_loss << "; best val rmse " << result.best_val_rmse << "\n";
    std::cout << "checkpoints: " << result.ckpt_best << ", " << result.ckpt_last << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& out) {
    const auto ck = model::load_checkpoint(ckpt);
    const auto ds = train::load_dataset(data_dir);
    const std::vector<int>* ids = &ds.manifest.test;
    if (split == "val")
        ids = &ds.manifest.val;
    else if (split == "train")
        ids = &ds.manifest.train;
    else if (split != "test")
        throw ConfigError("--split must be train, val or test");
    const auto ev = train::evaluate(ck.params, ds, *ids, model::Ablation{}, out);
    std::ofstream meta(out + "/eval_meta.json");
    meta << json{{"data", data_dir}, {"split", split}, {"ids", *ids}}.dump(2) << "\n";
    std::cout << "method,rmse,mae,ssim,gmsd\n";
    std::cout << "model," << ev.model_all.rmse << "," << ev.model_all.mae << "," << ev.model_all.ssim << ","
              << ev.model_all.gmsd << "\n";
    std::cout << "st_interp," << ev.baseline_all.rmse << "," << ev.baseline_all.mae << ","
              << ev.baseline_all.ssim << "," << ev.baseline_all.gmsd << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::vector<std::string>& frames, const std::string& meta_path,
              const std::string& data_dir, const std::string& out) {
    if (frames.size() != 2) throw ConfigError("--frames needs exactly two input frame files");
    const auto ck = model::load_checkpoint(ckpt);
    const auto manifest = data::load_manifest(data_dir);

    // grid geometry of the raw frames
    const json meta = load_json(meta_path);
    const int ny = meta.at("ny"), nx = meta.at("nx");
    const int64_t plane = (int64_t)ny * nx;
    std::vector<float> cell_mask((size_t)plane, 1.0f);
    {
        const fs::path mask_path = fs::path(meta_path).parent_path() / "mask.bin";
        std::ifstream mf(mask_path, std::ios::binary);
        if (mf) mf.read(reinterpret_cast<char*>(cell_mask.data()), (std::streamsize)(plane * 4));
    }

    const int h = manifest.h, w = manifest.w;
    std::vector<float> input((size_t)(2 * 3 * h * w));
    std::vector<uint8_t> mask;
    for (int k = 0; k < 2; ++k) {
        std::ifstream f(frames[(size_t)k], std::ios::binary);
        if (!f) throw ConfigError("cannot read frame " + frames[(size_t)k]);
        std::vector<float> planes((size_t)(3 * plane));
        f.read(reinterpret_cast<char*>(planes.data()), (std::streamsize)(planes.size() * 4));
        if (!f) throw ConfigError("frame file too short: " + frames[(size_t)k]);
        const auto img = data::render_planes(planes.data(), cell_mask.data(), ny, nx, 0.0, h, w, manifest.norm);
        std::copy(img.data.begin(), img.data.end(), input.begin() + (size_t)k * 3 * h * w);
        mask = img.mask;
    }

    nn::Tensor<float> x({2, 3, h, w}, input);
    auto pred = model::predict(ck.params, x).v;
    for (size_t i = 0; i < pred.size(); ++i)
        if (!mask[i % ((size_t)h * w)]) pred[i] = 0.0f;

    fs::create_directories(out);
    for (int t = 0; t < 3; ++t) {
        // de-normalize to physical units and write the CSF frame layout (xi, U, V)
        std::vector<float> planes((size_t)(3 * h * w));
        data::FrameImage img;
        img.h = h;
        img.w = w;
        img.norm = manifest.norm;
        img.mask = mask;
        img.data.assign(pred.begin() + (size_t)t * 3 * h * w, pred.begin() + (size_t)(t + 1) * 3 * h * w);
        const auto u = data::denormalize_channel(img, 0);
        const auto v = data::denormalize_channel(img, 1);
        const auto xi = data::denormalize_channel(img, 2);
        for (int64_t i = 0; i < (int64_t)h * w; ++i) {
            planes[(size_t)i] = (float)xi[(size_t)i];
            planes[(size_t)(h * w + i)] = (float)u[(size_t)i];
            planes[(size_t)(2 * h * w + i)] = (float)v[(size_t)i];
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "/frame_%06d.bin", t);
        std::ofstream f(out + buf, std::ios::binary);
        f.write(reinterpret_cast<const char*>(planes.data()), (std::streamsize)(planes.size() * 4));
        std::snprintf(buf, sizeof(buf), "/frame_%06d", t);
        data::export_frame_pngs(out + buf, img.data.data(), mask.data(), h, w);
    }
    std::ofstream mf(out + "/meta.json");
    mf << json{{"ny", h}, {"nx", w}, {"frame_count", 3}, {"dtype", "f32"}, {"endianness", "little"}}.dump(2)
       << "\n";
    std::cout << "wrote 3 frames to " << out << "\n";
    return 0;
}

int cmd_report(const std::string& eval_dir, const std::string& data_dir, const std::string& out) {
    const json meta = load_json(eval_dir + "/eval_meta.json");
    const auto ds = train::load_dataset(data_dir);
    const std::vector<int> ids = meta.at("ids").get<std::vector<int>>();
    fs::create_directories(out + "/maps");

    std::vector<metrics::SampleMetrics> rows;
    const int h = ds.manifest.h, w = ds.manifest.w;
    const int64_t plane = (int64_t)h * w;
    int maps_written = 0;
    for (int id : ids) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "/pred_%06d.bin", id);
        std::ifstream pf(eval_dir + buf, std::ios::binary);
        if (!pf) throw ConfigError("missing prediction for sample " + std::to_string(id));
        std::vector<float> pred((size_t)(9 * plane));
        pf.read(reinterpret_cast<char*>(pred.data()), (std::streamsize)(pred.size() * 4));
        const auto& s = ds.sample(id);
        const std::vector<uint8_t> mask(s.mask.begin(), s.mask.end());

        for (int t = 0; t < 3; ++t)
            for (int c = 0; c < 3; ++c) {
                std::vector<double> pr((size_t)plane), gt((size_t)plane);
                for (int64_t i = 0; i < plane; ++i) {
                    pr[(size_t)i] = pred[((size_t)t * 3 + c) * plane + i];
                    gt[(size_t)i] = s.hr[((size_t)t * 3 + c) * plane + i];
                }
                metrics::SampleMetrics row;
                row.sample_id = id;
                row.frame = t;
                row.channel = c;
                row.inter = t == 1;
                row.rmse = metrics::rmse(pr, gt, mask);
                row.mae = metrics::mae(pr, gt, mask);
                row.ssim = metrics::ssim(pr, gt, mask, h, w);
                row.gmsd = metrics::gmsd(pr, gt, mask, h, w);
                rows.push_back(row);
                if (maps_written < 8) {
                    std::snprintf(buf, sizeof(buf), "/maps/s%06d_f%d_c%d_res.png", id, t, c);
                    data::write_png_gray(out + buf, metrics::residual_map(pr, gt, 50.0), h, w);
                }
            }
        if (maps_written < 8) {
            // temporal-change map between the outer ground-truth frames
            for (int c = 0; c < 3; ++c) {
                std::vector<double> g0((size_t)plane), g2((size_t)plane);
                for (int64_t i = 0; i < plane; ++i) {
                    g0[(size_t)i] = s.hr[(size_t)c * plane + i];
                    g2[(size_t)i] = s.hr[((size_t)2 * 3 + c) * plane + i];
                }
                std::snprintf(buf, sizeof(buf), "/maps/s%06d_c%d_tdiff.png", id, c);
                data::write_png_gray(out + buf, metrics::residual_map(g2, g0, 20.0), h, w);
            }
            ++maps_written;
        }
    }
    metrics::write_report_csv(out + "/report.csv", rows);
    std::cout << "report.csv: " << rows.size() << " rows; maps under " << out << "/maps\n";
    return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& matrix_path, const std::string& out,
               const json& mj, const json& tj) {
    const json matrix = load_json(matrix_path);
    if (!matrix.is_array() || matrix.empty()) throw ConfigError("ablation matrix must be a non-empty array");
    std::vector<train::AblationCell> cells;
    for (const auto& c : matrix) {
        train::AblationCell cell;
        cell.name = c.at("name");
        cell.ablation.st_attn = c.value("use_st_attn", true);
        cell.ablation.fsr = c.value("use_fsr", true);
        cell.ablation.pos = c.value("use_pos", true);
        const std::string axes = c.value("axes", "hvd");
        cell.ablation.axis_h = axes.find('h') != std::string::npos;
        cell.ablation.axis_v = axes.find('v') != std::string::npos;
        cell.ablation.axis_d = axes.find('d') != std::string::npos;
        cell.use_lp = c.value("use_lp", true);
        cell.use_diff = c.value("use_diff", true);
        cells.push_back(cell);
    }
    const auto ds = train::load_dataset(data_dir);
    const auto outcomes =
        train::run_ablation(cells, model_from_json(mj), train_from_json(tj), ds, out);
    std::cout << "cell,rmse,rmse_intra,rmse_inter\n";
    for (const auto& oc : outcomes)
        std::cout << oc.name << "," << oc.all.rmse << "," << oc.intra.rmse << "," << oc.inter.rmse << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coastal: shallow-water simulation, downscaling network training and evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resolution = "coarse";
    std::vector<std::string> overrides;
    uint64_t seed = 0;

    auto* sim_cmd = app.add_subcommand("simulate", "run the shallow-water solver and write a CSF directory");
    sim_cmd->add_option("--config", config_path, "simulation config JSON (defaults to the tidal-bay basin)");
    sim_cmd->add_option("--out", out_dir, "output CSF directory")->required();
    sim_cmd->add_option("--resolution", resolution, "coarse | fine (fine halves dt and dx/dy, doubles nx/ny)");
    auto* sim_seed = sim_cmd->add_option("--seed", seed, "seed recorded in the metadata");
    sim_cmd->add_option("--set", overrides, "dotted-key config overrides, key=value");

    std::string coarse_dir, fine_dir;
    int patch = 64;
    std::string split = "6:2:2";
    auto* mk = app.add_subcommand("make-dataset", "pair coarse/fine CSF series into training samples");
    mk->add_option("--coarse", coarse_dir, "coarse CSF directory")->required();
    mk->add_option("--fine", fine_dir, "fine CSF directory")->required();
    mk->add_option("--out", out_dir, "dataset output directory")->required();
    mk->add_option("--patch", patch, "training patch size recorded in the manifest");
    mk->add_option("--split", split, "train:val:test ratios");
    auto* mk_seed = mk->add_option("--seed", seed, "split shuffle seed");

    std::string data_dir, model_cfg_path, train_cfg_path;
    auto* tr = app.add_subcommand("train", "train the downscaling network");
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir, "run output directory")->required();
    tr->add_option("--model-cfg", model_cfg_path, "model config JSON");
    tr->add_option("--train-cfg", train_cfg_path, "training config JSON");
    auto* tr_seed = tr->add_option("--seed", seed, "training seed");
    tr->add_option("--set", overrides, "dotted-key overrides into the training config, key=value");

    std::string ckpt_path, eval_split = "test";
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against the interpolation baseline");
    ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--split", eval_split, "train | val | test");
    ev->add_option("--out", out_dir, "evaluation output directory")->required();

    std::vector<std::string> frame_files;
    std::string meta_path;
    auto* in = app.add_subcommand("infer", "downscale two raw coastal frames");
    in->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    in->add_option("--frames", frame_files, "two CSF frame files (xi,U,V float32)")->expected(2)->required();
    in->add_option("--meta", meta_path, "meta.json describing the frame grid")->required();
    in->add_option("--data", data_dir, "dataset directory providing the normalization ranges")->required();
    in->add_option("--out", out_dir, "output directory")->required();

    std::string matrix_path;
    auto* ab = app.add_subcommand("ablate", "train and evaluate a matrix of flag combinations");
    ab->add_option("--data", data_dir, "dataset directory")->required();
    ab->add_option("--matrix", matrix_path, "JSON array of ablation cells")->required();
    ab->add_option("--out", out_dir, "ablation output directory")->required();
    ab->add_option("--model-cfg", model_cfg_path, "model config JSON");
    ab->add_option("--train-cfg", train_cfg_path, "training config JSON");
    auto* ab_seed = ab->add_option("--seed", seed, "shared seed for every cell");
    ab->add_option("--set", overrides, "dotted-key overrides into the training config, key=value");

    std::string eval_dir;
    auto* rp = app.add_subcommand("report", "write report.csv and residual-map PNGs from an eval directory");
    rp->add_option("--eval-dir", eval_dir, "directory written by eval")->required();
    rp->add_option("--data", data_dir, "dataset directory")->required();
    rp->add_option("--out", out_dir, "report output directory")->required();

    auto* ms = app.add_subcommand("model-summary", "print parameter names, shapes and the total count");
    ms->add_option("--model-cfg", model_cfg_path, "model config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (sim_cmd->parsed()) {
            json cfg = config_path.empty() ? default_sim_json() : load_json(config_path);
            apply_overrides(cfg, overrides);
            return cmd_simulate(cfg, out_dir, resolution, resolve_seed(sim_seed, seed, cfg));
        }
        if (mk->parsed())
            return cmd_make_dataset(coarse_dir, fine_dir, out_dir, patch, split,
                                    resolve_seed(mk_seed, seed, json::object()));
        if (tr->parsed()) {
            json mj = model_cfg_path.empty() ? default_model_json() : load_json(model_cfg_path);
            json tj = train_cfg_path.empty() ? default_train_json() : load_json(train_cfg_path);
            apply_overrides(tj, overrides);
            tj["seed"] = resolve_seed(tr_seed, seed, tj);
            return cmd_train(data_dir, out_dir, mj, tj);
        }
        if (ev->parsed()) return cmd_eval(ckpt_path, data_dir, eval_split, out_dir);
        if (in->parsed()) return cmd_infer(ckpt_path, frame_files, meta_path, data_dir, out_dir);
        if (ab->parsed()) {
            json mj = model_cfg_path.empty() ? default_model_json() : load_json(model_cfg_path);
            json tj = train_cfg_path.empty() ? default_train_json() : load_json(train_cfg_path);
            apply_overrides(tj, overrides);
            tj["seed"] = resolve_seed(ab_seed, seed, tj);
            return cmd_ablate(data_dir, matrix_path, out_dir, mj, tj);
        }
        if (rp->parsed()) return cmd_report(eval_dir, data_dir, out_dir);
        if (ms->parsed()) {
            json mj = model_cfg_path.empty() ? default_model_json() : load_json(model_cfg_path);
            const auto params = model::init_params<float>(model_from_json(mj), 0);
            std::cout << model::summarize(params);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericsError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
