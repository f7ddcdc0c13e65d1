// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline glue behind the command-line tool: dataset generation, training,
// sampling, evaluation and module ablations. Every function is pure given
// its options and writes only below the output directory it is handed.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mvdiff/checkpoint.hpp"
#include "mvdiff/denoiser.hpp"
#include "mvdiff/synthetic.hpp"

namespace mvd {

// ---------------------------------------------------------------------------
// Data.

struct DataOptions {
    std::uint64_t seed = 0;
    int views = 12;
    int width = 32;
    int height = 32;
    double elevation_deg = 0.0;
    bool random_elevation = false;  // draw elevation in [-30, 30] from the seed instead
};

// Renders make_scene(seed) on a uniform ring; the prompt describes the scene.
Dataset generate_dataset(const DataOptions& opt);

// ---------------------------------------------------------------------------
// Training.

struct TrainOptions {
    ModelConfig model;
    int steps = 3000;
    double lr = 3e-3;             // peak; cosine decay to zero
    int warmup = 100;             // linear warmup steps
    std::uint64_t seed = 0;       // model init and training draws
    std::size_t samples_per_step = 1;
    std::size_t loss_window = 100;  // moving average reported as the training loss
    int log_every = 250;
};

double learning_rate(const TrainOptions& opt, int step);

// Model config matched to a dataset (views, latent size = image / 4).
ModelConfig config_for(const Dataset& data, ModelConfig base);

TrainingExample make_example(const Dataset& data, const ModelConfig& config);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> losses;  // per step
    double final_loss = 0.0;     // mean of the last loss_window steps
};

// log(step, loss, moving average) every log_every steps and at the end.
using TrainLog = std::function<void(int step, double loss, double moving_avg)>;

TrainResult train(const Dataset& data, const TrainOptions& opt, const TrainLog& log = {});

// Mean of each consecutive `window` losses.
std::vector<double> window_means(const std::vector<double>& losses, std::size_t window);

// ---------------------------------------------------------------------------
// Sampling and evaluation.

struct SampleOptions {
    int steps = 50;
    double guidance = 7.5;
    bool clip_x0 = true;
};

// DDIM latents [f, 3, h, w] for the checkpoint's ring and prompt.
Tensor sample_latents(const Checkpoint& ckpt, const SampleOptions& opt, std::uint64_t seed);

struct SampleEval {
    std::uint64_t seed = 0;
    std::vector<Tensor> images;
    double consistency = 0.0;
    double psnr_vs_gt = 0.0;
};

struct EvalResult {
    std::vector<SampleEval> samples;
    double median_consistency = 0.0;
    double median_psnr = 0.0;
    double ground_truth_consistency = 0.0;
};

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data, const SampleOptions& opt,
                    const std::vector<std::uint64_t>& seeds);

double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Artifacts.

struct CsvRow {
    std::string run_id;
    std::string stack;
    std::string scan_strategy;
    std::uint64_t seed = 0;
    long step = 0;
    double train_loss = 0.0;
    double consistency = -1.0;  // negative -> empty cell
    double psnr_vs_gt = -1.0;
};

inline constexpr const char* kCsvHeader = "run_id,stack,scan_strategy,seed,step,train_loss,consistency,psnr_vs_gt";

std::string csv_line(const CsvRow& row);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

std::string run_id(const ModelConfig& config, std::uint64_t seed);

// Writes view_%02d.ppm for each image.
void write_views(const std::filesystem::path& dir, const std::vector<Tensor>& images);

// ---------------------------------------------------------------------------
// Ablation: one training run per (stack, scan) pair.

struct AblationOptions {
    TrainOptions train;
    SampleOptions sample;
    std::vector<ModuleFlags> stacks;
    std::vector<ScanStrategy> scans{ScanStrategy::SpiralBidirectional};
    std::vector<std::uint64_t> sample_seeds{1, 2, 3};
};

struct AblationRun {
    ModelConfig config;
    std::string id;
    TrainResult train;
    EvalResult eval;
    double seconds = 0.0;  // wall time for training and evaluation; not written to disk
};

// Writes <out>/ablation.csv (one row per run), <out>/<id>/train.csv,
// <out>/<id>/seed_<s>/view_%02d.ppm and <out>/<id>/run_manifest.json.
std::vector<AblationRun> run_ablation(const Dataset& data, const AblationOptions& opt,
                                      const std::filesystem::path& out, std::ostream* progress = nullptr);

// Parses "aa,aa+dr,full" into stacks.
std::vector<ModuleFlags> parse_stack_list(const std::string& list);
std::vector<ScanStrategy> parse_scan_list(const std::string& list);

}  // namespace mvd
