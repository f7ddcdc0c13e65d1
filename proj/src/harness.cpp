// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "mvdiff/errors.hpp"
#include "mvdiff/metrics.hpp"

namespace mvd {

namespace fs = std::filesystem;

Dataset generate_dataset(const DataOptions& opt) {
    const SceneSpec scene = make_scene(opt.seed);
    double elevation = opt.elevation_deg;
    if (opt.random_elevation) {
        std::mt19937_64 rng(opt.seed ^ 0x5eed0e1e7a710000ull);
        elevation = std::uniform_real_distribution<double>(-30.0, 30.0)(rng);
    }
    const ViewRing ring = ViewRing::uniform(opt.views, opt.width, opt.height, elevation);
    return Dataset{render_views(scene, ring), opt.seed, describe_scene(scene)};
}

double learning_rate(const TrainOptions& opt, int step) {
    if (step < opt.warmup) return opt.lr * static_cast<double>(step + 1) / static_cast<double>(opt.warmup);
    const double span = std::max(1, opt.steps - opt.warmup);
    const double progress = static_cast<double>(step - opt.warmup) / span;
    return opt.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

ModelConfig config_for(const Dataset& data, ModelConfig base) {
    const ViewRing& ring = data.set.ring;
    if (ring.width % 4 != 0 || ring.height % 4 != 0) {
        throw DomainError("image size must be a multiple of the latent stride 4");
    }
    base.views = ring.views;
    base.latent_width = static_cast<std::size_t>(ring.width / 4);
    base.latent_height = static_cast<std::size_t>(ring.height / 4);
    base.latent_channels = 3;
    base.validate();
    return base;
}

TrainingExample make_example(const Dataset& data, const ModelConfig& config) {
    const ToyTextEncoder enc(config.text_dim);
    const std::string prompt = data.prompt.empty() ? std::string("an object") : data.prompt;
    return TrainingExample{encode_latents(data.set), data.set.ring, Conditioning::from(enc.encode(prompt)),
                           Conditioning::from(enc.null_embedding())};
}

TrainResult train(const Dataset& data, const TrainOptions& opt, const TrainLog& log) {
    if (opt.steps < 1) throw DomainError("training needs at least one step");
    if (!(opt.lr > 0.0)) throw DomainError("learning rate must be positive");
    const ModelConfig config = config_for(data, opt.model);
    const TrainingExample ex = make_example(data, config);
    const NoiseSchedule sched = NoiseSchedule::named(config.schedule);

    TrainResult out;
    Checkpoint& ck = out.checkpoint;
    ck.model = Model::init(config, opt.seed);
    ck.ring = data.set.ring;
    ck.prompt = data.prompt.empty() ? std::string("an object") : data.prompt;
    std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ull);

    const std::size_t window = std::max<std::size_t>(1, opt.loss_window);
    double window_sum = 0.0;
    for (int step = 0; step < opt.steps; ++step) {
        const StepOutcome s = training_step(ck.model, ex, sched, rng, opt.samples_per_step);
        ck.optimizer.step(ck.model.params, s.grads, learning_rate(opt, step));
        out.losses.push_back(s.loss);
        window_sum += s.loss;
        if (out.losses.size() > window) window_sum -= out.losses[out.losses.size() - 1 - window];
        const double avg = window_sum / static_cast<double>(std::min(window, out.losses.size()));
        if (log && ((opt.log_every > 0 && (step + 1) % opt.log_every == 0) || step + 1 == opt.steps)) {
            log(step + 1, s.loss, avg);
        }
    }
    // Recompute from scratch so the reported value does not carry running-sum rounding.
    double tail = 0.0;
    const std::size_t n = std::min(window, out.losses.size());
    for (std::size_t i = out.losses.size() - n; i < out.losses.size(); ++i) tail += out.losses[i];
    out.final_loss = tail / static_cast<double>(n);
    ck.step = opt.steps;
    std::ostringstream state;
    state << rng;
    ck.rng_state = state.str();
    return out;
}

std::vector<double> window_means(const std::vector<double>& losses, std::size_t window) {
    if (window == 0) throw DomainError("window must be >= 1");
    std::vector<double> out;
    for (std::size_t start = 0; start + window <= losses.size(); start += window) {
        double s = 0.0;
        for (std::size_t i = start; i < start + window; ++i) s += losses[i];
        out.push_back(s / static_cast<double>(window));
    }
    return out;
}

Tensor sample_latents(const Checkpoint& ckpt, const SampleOptions& opt, std::uint64_t seed) {
    const ModelConfig& cfg = ckpt.model.config;
    const ToyTextEncoder enc(cfg.text_dim);
    const Conditioning cond = Conditioning::from(enc.encode(ckpt.prompt));
    const Conditioning null_cond = Conditioning::from(enc.null_embedding());
    const EpsFn eps = [&](const Tensor& z, int t, bool conditional) {
        return denoise(ckpt.model, z, t, conditional ? cond : null_cond, ckpt.ring, false);
    };
    const Shape shape{static_cast<std::size_t>(ckpt.ring.views), cfg.latent_channels, cfg.latent_height,
                      cfg.latent_width};
    return ddim_sample(eps, shape, NoiseSchedule::named(cfg.schedule), DdimOptions{opt.steps, opt.guidance, opt.clip_x0}, seed);
}

double median(std::vector<double> v) {
    if (v.empty()) throw DomainError("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data, const SampleOptions& opt,
                    const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw DomainError("evaluation needs at least one sampling seed");
    if (ckpt.ring.views != data.set.ring.views || ckpt.ring.width != data.set.ring.width ||
        ckpt.ring.height != data.set.ring.height) {
        throw DimensionError("checkpoint ring does not match the dataset ring");
    }
    const auto pairs = ring_correspondences(data.set);
    EvalResult out;
    out.ground_truth_consistency = consistency_metric(data.set.images, pairs);
    std::vector<double> cons, ps;
    for (std::uint64_t seed : seeds) {
        SampleEval s;
        s.seed = seed;
        s.images = decode_latents(sample_latents(ckpt, opt, seed), static_cast<std::size_t>(data.set.ring.width) /
                                                                       ckpt.model.config.latent_width);
        s.consistency = consistency_metric(s.images, pairs);
        s.psnr_vs_gt = psnr(s.images, data.set.images);
        cons.push_back(s.consistency);
        ps.push_back(s.psnr_vs_gt);
        out.samples.push_back(std::move(s));
    }
    out.median_consistency = median(cons);
    out.median_psnr = median(ps);
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts.

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string csv_line(const CsvRow& r) {
    std::string s = r.run_id + "," + r.stack + "," + r.scan_strategy + "," + std::to_string(r.seed) + "," +
                    std::to_string(r.step) + "," + fmt(r.train_loss) + ",";
    if (r.consistency >= 0.0) s += fmt(r.consistency);
    s += ",";
    if (r.psnr_vs_gt >= 0.0) s += fmt(r.psnr_vs_gt);
    return s;
}

void write_csv(const fs::path& path, const std::vector<CsvRow>& rows) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string(), path.string());
    os << kCsvHeader << "\n";
    for (const auto& r : rows) os << csv_line(r) << "\n";
    if (!os) throw IoError("write failed: " + path.string(), path.string());
}

std::string run_id(const ModelConfig& config, std::uint64_t seed) {
    return config.modules.label() + "_" + to_string(config.scan) + "_s" + std::to_string(seed);
}

void write_views(const fs::path& dir, const std::vector<Tensor>& images) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%02zu.ppm", i);
        write_ppm(dir / name, images[i]);
    }
}

namespace {

nlohmann::json run_manifest(const AblationRun& run, const AblationOptions& opt, const Dataset& data) {
    nlohmann::json m;
    m["run_id"] = run.id;
    m["config"] = run.config;
    m["seed"] = opt.train.seed;
    m["train"] = {{"steps", opt.train.steps},
                  {"lr", opt.train.lr},
                  {"warmup", opt.train.warmup},
                  {"samples_per_step", opt.train.samples_per_step},
                  {"loss_window", opt.train.loss_window}};
    m["sample"] = {{"steps", opt.sample.steps}, {"guidance", opt.sample.guidance}, {"clip_x0", opt.sample.clip_x0}};
    m["sample_seeds"] = opt.sample_seeds;
    m["dataset"] = {{"seed", data.seed}, {"prompt", data.prompt}, {"views", data.set.ring.views}};
    m["train_loss"] = fmt(run.train.final_loss);
    m["median_consistency"] = fmt(run.eval.median_consistency);
    m["median_psnr_vs_gt"] = fmt(run.eval.median_psnr);
    return m;
}

}  // namespace

std::vector<AblationRun> run_ablation(const Dataset& data, const AblationOptions& opt, const fs::path& out,
                                      std::ostream* progress) {
    if (opt.stacks.empty()) throw DomainError("ablation needs at least one module stack");
    if (opt.scans.empty()) throw DomainError("ablation needs at least one scan strategy");
    fs::create_directories(out);
    std::vector<AblationRun> runs;
    std::vector<CsvRow> rows;
    for (const ModuleFlags& stack : opt.stacks) {
        for (ScanStrategy scan : opt.scans) {
            // Without the scan stage the strategy has no effect; run it once.
            if (!stack.rg && scan != opt.scans.front()) continue;
            AblationRun run;
            TrainOptions topt = opt.train;
            topt.model.modules = stack;
            topt.model.scan = scan;
            run.config = config_for(data, topt.model);
            run.id = run_id(run.config, topt.seed);
            const fs::path dir = out / run.id;
            if (progress) *progress << "[" << run.id << "] training " << topt.steps << " steps" << std::endl;

            std::vector<CsvRow> log_rows;
            auto log = [&](int step, double, double avg) {
                log_rows.push_back(CsvRow{run.id, stack.label(), to_string(scan), topt.seed, step, avg, -1.0, -1.0});
                if (progress) *progress << "[" << run.id << "] step " << step << " loss(avg) " << fmt(avg) << std::endl;
            };
            const auto t0 = std::chrono::steady_clock::now();
            run.train = train(data, topt, log);
            run.eval = evaluate(run.train.checkpoint, data, opt.sample, opt.sample_seeds);
            run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            write_csv(dir / "train.csv", log_rows);
            save_checkpoint(run.train.checkpoint, dir / "checkpoint");
            for (const auto& s : run.eval.samples) write_views(dir / ("seed_" + std::to_string(s.seed)), s.images);
            {
                std::ofstream os(dir / "run_manifest.json");
                os << run_manifest(run, opt, data).dump(2) << "\n";
            }
            rows.push_back(CsvRow{run.id, stack.label(), to_string(scan), topt.seed, topt.steps, run.train.final_loss,
                                  run.eval.median_consistency, run.eval.median_psnr});
            if (progress) {
                *progress << "[" << run.id << "] loss " << fmt(run.train.final_loss) << " consistency "
                          << fmt(run.eval.median_consistency) << " psnr " << fmt(run.eval.median_psnr) << std::endl;
            }
            runs.push_back(std::move(run));
        }
    }
    write_csv(out / "ablation.csv", rows);
    return runs;
}

std::vector<ModuleFlags> parse_stack_list(const std::string& list) {
    std::vector<ModuleFlags> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(ModuleFlags::parse(item));
    if (out.empty()) throw DomainError("empty stack list");
    return out;
}

std::vector<ScanStrategy> parse_scan_list(const std::string& list) {
    std::vector<ScanStrategy> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_scan_strategy(item));
    if (out.empty()) throw DomainError("empty scan list");
    return out;
}

}  // namespace mvd
