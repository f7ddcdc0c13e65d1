// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// mvdiff gen-data | train | sample | eval | gradcheck | ablate
//
// Exit codes:
//   0 success            4 manifest error        7 numeric failure
//   1 check failed       5 shape mismatch        8 other I/O error
//   2 usage / config     6 corrupt payload
//   3 missing file

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "mvdiff/checkpoint.hpp"
#include "mvdiff/errors.hpp"
#include "mvdiff/harness.hpp"
#include "mvdiff/metrics.hpp"

using namespace mvd;
namespace fs = std::filesystem;

namespace {

enum Exit : int {
    kOk = 0,
    kCheckFailed = 1,
    kUsage = 2,
    kMissingFile = 3,
    kManifest = 4,
    kShapeMismatch = 5,
    kCorrupt = 6,
    kNumeric = 7,
    kIo = 8,
};

struct Args {
    std::string out;
    std::string data;
    std::string checkpoint;
    std::uint64_t seed = 0;
    int views = 12;
    int size = 32;
    double elevation = 0.0;
    bool random_elevation = false;
    std::string stack = "full";
    std::string scan = "spiral";
    int train_steps = 3000;
    double lr = 3e-3;
    std::string schedule = "scaled-linear";
    std::size_t channels = 32;
    std::size_t check_channels = 8;
    std::size_t samples_per_step = 1;
    int steps = 50;
    double guidance = 7.5;
    std::string seeds = "1,2,3";
    std::uint64_t data_seed = 0;
};

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw DomainError("bad seed '" + item + "' in '" + list + "'");
        }
    }
    if (out.empty()) throw DomainError("empty seed list");
    return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string(), path.string());
    os << j.dump(2) << "\n";
}

// Module stack and scan strategy are left at their defaults; callers set them.
TrainOptions train_options(const Args& a) {
    TrainOptions t;
    t.model.channels = a.channels;
    t.model.guidance = a.guidance;
    t.model.schedule = a.schedule;
    t.steps = a.train_steps;
    t.lr = a.lr;
    t.seed = a.seed;
    t.samples_per_step = a.samples_per_step;
    return t;
}

Dataset load_or_generate(const Args& a) {
    if (!a.data.empty()) return read_dataset(a.data);
    DataOptions d;
    d.seed = a.data_seed;
    d.views = a.views;
    d.width = d.height = a.size;
    return generate_dataset(d);
}

int cmd_gen_data(const Args& a) {
    DataOptions d;
    d.seed = a.seed;
    d.views = a.views;
    d.width = d.height = a.size;
    d.elevation_deg = a.elevation;
    d.random_elevation = a.random_elevation;
    const Dataset data = generate_dataset(d);
    write_dataset(data, a.out);
    write_json(fs::path(a.out) / "scene.json", nlohmann::json(make_scene(a.seed)));
    std::cout << "wrote " << data.set.ring.views << " views of '" << data.prompt << "' to " << a.out << "\n";
    return kOk;
}

int cmd_train(const Args& a) {
    const Dataset data = read_dataset(a.data);
    TrainOptions opt = train_options(a);
    opt.model.modules = ModuleFlags::parse(a.stack);
    opt.model.scan = parse_scan_strategy(a.scan);
    const fs::path out(a.out);
    fs::create_directories(out);
    const std::string id = run_id(config_for(data, opt.model), opt.seed);
    std::vector<CsvRow> rows;
    auto log = [&](int step, double, double avg) {
        rows.push_back(CsvRow{id, opt.model.modules.label(), to_string(opt.model.scan), opt.seed, step, avg});
        std::cout << "step " << step << " loss(avg) " << avg << std::endl;
    };
    const TrainResult r = train(data, opt, log);
    save_checkpoint(r.checkpoint, out / "checkpoint");
    write_csv(out / "train.csv", rows);
    nlohmann::json m;
    m["run_id"] = id;
    m["config"] = r.checkpoint.model.config;
    m["seed"] = opt.seed;
    m["steps"] = opt.steps;
    m["lr"] = opt.lr;
    m["dataset"] = a.data;
    m["train_loss"] = r.final_loss;
    write_json(out / "run_manifest.json", m);
    std::cout << "final loss (mean of last " << opt.loss_window << " steps) " << r.final_loss << "\n";
    return kOk;
}

int cmd_sample(const Args& a) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const SampleOptions opt{a.steps, a.guidance, true};
    const Tensor z = sample_latents(ck, opt, a.seed);
    const auto images = decode_latents(z, static_cast<std::size_t>(ck.ring.width) / ck.model.config.latent_width);
    write_views(a.out, images);
    nlohmann::json m;
    m["checkpoint"] = a.checkpoint;
    m["prompt"] = ck.prompt;
    m["seed"] = a.seed;
    m["steps"] = opt.steps;
    m["guidance"] = opt.guidance;
    m["views"] = images.size();
    write_json(fs::path(a.out) / "sample_manifest.json", m);
    std::cout << "wrote " << images.size() << " views to " << a.out << "\n";
    return kOk;
}

int cmd_eval(const Args& a) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Dataset data = read_dataset(a.data);
    const SampleOptions opt{a.steps, a.guidance, true};
    const EvalResult r = evaluate(ck, data, opt, parse_seeds(a.seeds));
    const fs::path out(a.out);
    fs::create_directories(out);
    const ModelConfig& cfg = ck.model.config;
    std::vector<CsvRow> rows;
    for (const auto& s : r.samples) {
        rows.push_back(CsvRow{run_id(cfg, s.seed), cfg.modules.label(), to_string(cfg.scan), s.seed, ck.step, 0.0,
                              s.consistency, s.psnr_vs_gt});
        write_views(out / ("seed_" + std::to_string(s.seed)), s.images);
        std::cout << "seed " << s.seed << " consistency " << s.consistency << " psnr " << s.psnr_vs_gt << "\n";
    }
    write_csv(out / "eval.csv", rows);
    std::cout << "median consistency " << r.median_consistency << " (ground truth " << r.ground_truth_consistency
              << ")\n";
    return kOk;
}

int cmd_gradcheck(const Args& a) {
    ModelConfig c;
    c.channels = a.check_channels;
    c.latent_height = c.latent_width = 4;
    c.views = 2;
    c.text_dim = 6;
    c.state_dim = 3;
    c.score_hidden = 5;
    c.camera_freqs = 2;
    c.modules = ModuleFlags::parse(a.stack);
    c.scan = parse_scan_strategy(a.scan);
    const Model m = Model::init(c, a.seed);
    const auto ring = ViewRing::uniform(2, 16, 16);
    const ToyTextEncoder enc(c.text_dim);
    const Conditioning cond = Conditioning::from(enc.encode("a red box"));
    const Tensor z = standard_normal({2, c.latent_channels, 4, 4}, a.seed + 1);
    const Tensor probe = standard_normal(z.shape(), a.seed + 2);

    double worst = 0.0;
    bool ok = true;
    for (const auto& [name, value] : m.params) {
        auto fn = [&, target = name](Tape& tape, Var x) {
            VarMap p;
            for (const auto& [n, t] : m.params) p.emplace(n, n == target ? x : tape.constant(t));
            return ag::sum(ag::mul(ag::denoise(tape, c, p, tape.constant(z), 321, cond, ring, false),
                                   tape.constant(probe)));
        };
        const auto r = grad_check(fn, value);
        worst = std::max(worst, r.max_rel_error);
        ok = ok && r.passed;
        std::printf("%-24s %8zu  max rel %.3e%s\n", name.c_str(), value.size(), r.max_rel_error,
                    r.passed ? "" : "  FAIL");
    }
    std::printf("worst relative error %.3e (tolerance 1e-4): %s\n", worst, ok ? "PASS" : "FAIL");
    return ok ? kOk : kCheckFailed;
}

int cmd_ablate(const Args& a) {
    const Dataset data = load_or_generate(a);
    AblationOptions opt;
    opt.train = train_options(a);
    opt.stacks = parse_stack_list(a.stack);
    opt.scans = parse_scan_list(a.scan);
    opt.sample = SampleOptions{a.steps, a.guidance, true};
    opt.sample_seeds = parse_seeds(a.seeds);
    const auto runs = run_ablation(data, opt, a.out, &std::cout);
    std::cout << "wrote " << runs.size() << " rows to " << (fs::path(a.out) / "ablation.csv").string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale multiview latent diffusion toolkit"};
    app.require_subcommand(1);
    Args a;

    auto* gen = app.add_subcommand("gen-data", "Render a seeded synthetic scene on a camera ring");
    gen->add_option("--out", a.out, "Dataset directory")->required();
    gen->add_option("--seed", a.seed, "Scene seed");
    gen->add_option("--views", a.views, "Number of ring views")->check(CLI::PositiveNumber);
    gen->add_option("--size", a.size, "Image width and height in pixels")->check(CLI::PositiveNumber);
    gen->add_option("--elevation", a.elevation, "Camera elevation in degrees");
    gen->add_flag("--random-elevation", a.random_elevation, "Draw the elevation in [-30, 30] from the seed");

    auto add_model = [&a](CLI::App* sub) {
        sub->add_option("--stack", a.stack, "Module stack, e.g. aa, aa+dr, aa+dr+rg+air, full");
        sub->add_option("--scan", a.scan, "Scan strategy: spiral | spatial-first | row-major");
        sub->add_option("--channels", a.channels, "Feature channels")->check(CLI::PositiveNumber);
    };
    auto add_training = [&a](CLI::App* sub) {
        sub->add_option("--train-steps", a.train_steps, "Optimiser steps")->check(CLI::PositiveNumber);
        sub->add_option("--lr", a.lr, "Peak learning rate");
        sub->add_option("--schedule", a.schedule, "Noise schedule: scaled-linear | linear");
        sub->add_option("--samples-per-step", a.samples_per_step, "Noise draws averaged per step");
    };
    auto add_sampling = [&a](CLI::App* sub) {
        sub->add_option("--steps", a.steps, "DDIM steps")->check(CLI::PositiveNumber);
        sub->add_option("--guidance", a.guidance, "Classifier-free guidance scale")->check(CLI::NonNegativeNumber);
    };

    auto* tr = app.add_subcommand("train", "Overfit the denoiser to one dataset");
    tr->add_option("--data", a.data, "Dataset directory")->required();
    tr->add_option("--out", a.out, "Run directory")->required();
    tr->add_option("--seed", a.seed, "Init and training seed");
    add_model(tr);
    add_training(tr);

    auto* sa = app.add_subcommand("sample", "DDIM-sample every view from a checkpoint");
    sa->add_option("--checkpoint", a.checkpoint, "Checkpoint directory")->required();
    sa->add_option("--out", a.out, "Output directory")->required();
    sa->add_option("--seed", a.seed, "Sampling seed");
    add_sampling(sa);

    auto* ev = app.add_subcommand("eval", "Sample with several seeds and score consistency and PSNR");
    ev->add_option("--checkpoint", a.checkpoint, "Checkpoint directory")->required();
    ev->add_option("--data", a.data, "Dataset directory")->required();
    ev->add_option("--out", a.out, "Output directory")->required();
    ev->add_option("--seeds", a.seeds, "Comma-separated sampling seeds");
    add_sampling(ev);

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the miniature denoiser");
    gc->add_option("--seed", a.seed, "Init seed");
    gc->add_option("--channels", a.check_channels, "Feature channels")->check(CLI::PositiveNumber);
    gc->add_option("--stack", a.stack, "Module stack");
    gc->add_option("--scan", a.scan, "Scan strategy");

    auto* ab = app.add_subcommand("ablate", "Train and evaluate one run per module stack and scan strategy");
    ab->add_option("--out", a.out, "Output directory")->required();
    ab->add_option("--data", a.data, "Dataset directory (generated from --data-seed when omitted)");
    ab->add_option("--data-seed", a.data_seed, "Scene seed when generating");
    ab->add_option("--seed", a.seed, "Init and training seed");
    ab->add_option("--seeds", a.seeds, "Comma-separated sampling seeds");
    add_model(ab);
    add_training(ab);
    add_sampling(ab);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(a);
        if (tr->parsed()) return cmd_train(a);
        if (sa->parsed()) return cmd_sample(a);
        if (ev->parsed()) return cmd_eval(a);
        if (gc->parsed()) return cmd_gradcheck(a);
        if (ab->parsed()) return cmd_ablate(a);
    } catch (const MissingFileError& e) {
        std::cerr << "error: missing file: " << e.what() << "\n";
        return kMissingFile;
    } catch (const ManifestError& e) {
        std::cerr << "error: manifest: " << e.what() << "\n";
        return kManifest;
    } catch (const ShapeMismatchError& e) {
        std::cerr << "error: shape mismatch: " << e.what() << "\n";
        return kShapeMismatch;
    } catch (const CorruptPayloadError& e) {
        std::cerr << "error: corrupt payload: " << e.what() << "\n";
        return kCorrupt;
    } catch (const IoError& e) {
        std::cerr << "error: i/o: " << e.what() << "\n";
        return kIo;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kNumeric;
    } catch (const DomainError& e) {
        std::cerr << "error: invalid argument: " << e.what() << "\n";
        return kUsage;
    } catch (const DimensionError& e) {
        std::cerr << "error: invalid configuration: " << e.what() << "\n";
        return kUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: i/o: " << e.what() << "\n";
        return kIo;
    }
    return kUsage;
}
