// nexus: synthetic phantom generation, two-phase training, whole-volume
// segmentation and evaluation for the nexus CNN family.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nexus/error.hpp"
#include "nexus/metrics.hpp"
#include "nexus/model.hpp"
#include "nexus/morphology.hpp"
#include "nexus/overlay.hpp"
#include "nexus/parallel.hpp"
#include "nexus/phantom.hpp"
#include "nexus/segment.hpp"
#include "nexus/selfcheck.hpp"
#include "nexus/train.hpp"
#include "nexus/volume.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct SizeSpec {
    std::size_t d = 48, h = 64, w = 64;
};

SizeSpec parse_size(const std::string& text) {
    SizeSpec s;
    if (std::sscanf(text.c_str(), "%zu,%zu,%zu", &s.d, &s.h, &s.w) != 3 || s.d == 0 ||
        s.h == 0 || s.w == 0)
        throw CLI::ValidationError("--size", "expected D,H,W with positive extents");
    return s;
}

std::vector<fs::path> list_volumes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".nxv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

nexus::LabelMap load_labels_from(const std::string& path) {
    try {
        return nexus::read_labelmap(path);
    } catch (const nexus::Error&) {
        nexus::VolumeSet vol = nexus::read_volume(path);
        if (!vol.labels) throw nexus::IoError("no labels in " + path);
        return *vol.labels;
    }
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, std::size_t count,
              const std::string& size_text, bool tumor_free, double radius, double noise) {
    const SizeSpec size = parse_size(size_text);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream manifest(fs::path(out_dir) / "manifest.csv");
    if (ec || !manifest) throw nexus::ParamError("--out is not writable: " + out_dir);
    manifest << "file,seed,tumor_free,radius,noise_std\n";
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t vol_seed = seed + i;
        nexus::TumorSpec spec;
        spec.radius = tumor_free ? 0.0 : radius;
        spec.noise_std = noise;
        const nexus::VolumeSet vol =
            nexus::generate_phantom(vol_seed, size.d, size.h, size.w, spec);
        char name[32];
        std::snprintf(name, sizeof(name), "vol_%03zu.nxv", i);
        nexus::write_volume(vol, (fs::path(out_dir) / name).string());
        manifest << name << "," << vol_seed << "," << (tumor_free ? 1 : 0) << ","
                 << spec.radius << "," << spec.noise_std << "\n";
    }
    std::cout << "wrote " << count << " phantom volume(s) to " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& arch_text, const std::string& data_dir,
              const std::string& config_path, const std::string& out_ckpt, double desk_scale,
              unsigned threads) {
    nexus::RunConfig rc;
    if (!config_path.empty()) rc = nexus::load_run_config(config_path);
    if (desk_scale > 0.0) rc.train.desk_scale = desk_scale;
    if (threads > 0) rc.threads = threads;
    nexus::set_threads(rc.threads);

    const nexus::Arch arch = nexus::arch_from_string(arch_text);

    std::vector<nexus::VolumeSet> vols;
    for (const fs::path& p : list_volumes(data_dir)) vols.push_back(nexus::read_volume(p));
    if (vols.empty()) throw nexus::ConfigError("no .nxv volumes in " + data_dir);
    for (const nexus::VolumeSet& v : vols)
        if (!v.labels) throw nexus::ConfigError("training volumes must carry labels");

    // Held-out validation split: 20% of volumes, seeded shuffle.
    std::vector<std::size_t> order(vols.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    nexus::Rng split_rng = nexus::Rng(rc.train.seed).child(8);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.below(i)]);
    const std::size_t val_count = vols.size() / 5;
    std::vector<nexus::VolumeSet> train_vols, val_vols;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < val_count)
            val_vols.push_back(std::move(vols[order[i]]));
        else
            train_vols.push_back(std::move(vols[order[i]]));
    }

    nexus::Rng init_rng = nexus::Rng(rc.train.seed).child(0);
    nexus::NexusModel model = nexus::build_model(arch, rc.model, init_rng);
    model.check_dims();

    const nexus::TrainLog log =
        nexus::train(model, train_vols, val_vols, rc.train, out_ckpt);

    std::ofstream log_file(out_ckpt + ".train.csv");
    if (!log_file) throw nexus::IoError("cannot write training log next to " + out_ckpt);
    nexus::write_train_log(log, log_file);

    if (!log.rows.empty()) {
        const auto& last = log.rows.back();
        std::cout << "final phase " << last.phase << " epoch " << last.epoch
                  << ": train_loss=" << last.train_loss << " val_loss=" << last.val_loss
                  << " lr=" << last.lr << "\n";
    }
    std::cout << "checkpoint: " << out_ckpt << "\n";
    return kExitOk;
}

int cmd_segment(const std::string& ckpt, const std::string& in_path,
                const std::string& out_path, bool no_postproc, const std::string& overlay_dir,
                const std::string& config_path, unsigned workers) {
    nexus::set_threads(workers);
    nexus::RunConfig rc;
    if (!config_path.empty()) rc = nexus::load_run_config(config_path);

    const std::string arch_text = nexus::checkpoint_arch(ckpt);
    nexus::Rng dummy(0);
    nexus::NexusModel model =
        nexus::build_model(nexus::arch_from_string(arch_text), rc.model, dummy);
    nexus::load_checkpoint(model, ckpt);

    const nexus::VolumeSet vol = nexus::read_volume(in_path);
    nexus::LabelMap labels = nexus::segment_volume(model, vol);
    if (!no_postproc) labels = nexus::morph_cleanup(labels);
    nexus::write_labelmap(labels, out_path);

    const auto hist = labels.histogram();
    std::cout << "labels:";
    for (std::size_t c = 0; c < hist.size(); ++c) std::cout << " " << c << ":" << hist[c];
    std::cout << "\n";

    if (!overlay_dir.empty()) {
        fs::create_directories(overlay_dir);
        nexus::write_overlays(vol, labels, overlay_dir);
        std::cout << "overlays in " << overlay_dir << "\n";
    }
    return kExitOk;
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path,
                 const std::string& out_csv, unsigned workers) {
    nexus::set_threads(workers);
    std::vector<std::pair<std::string, std::string>> files; // (pred, truth) paths

    const bool dirs = fs::is_directory(pred_path);
    if (dirs != fs::is_directory(truth_path))
        throw nexus::ConfigError("--pred and --truth must both be files or both directories");
    if (dirs) {
        for (const fs::path& p : list_volumes(pred_path)) {
            const fs::path t = fs::path(truth_path) / p.filename();
            if (!fs::exists(t))
                throw nexus::IoError("no matching truth volume for " + p.filename().string());
            files.emplace_back(p.string(), t.string());
        }
        if (files.empty()) throw nexus::ConfigError("no .nxv volumes in " + pred_path);
    } else {
        files.emplace_back(pred_path, truth_path);
    }

    std::vector<nexus::SegReport> reports;
    std::ofstream out(out_csv);
    if (!out) throw nexus::IoError("cannot write " + out_csv);
    out << "volume,region,dice,sensitivity,specificity,tp,fp,tn,fn,flags\n";
    for (const auto& [pred_file, truth_file] : files) {
        const nexus::LabelMap pred = load_labels_from(pred_file);
        const nexus::LabelMap truth = load_labels_from(truth_file);
        const nexus::SegReport rep = nexus::evaluate(pred, truth);
        reports.push_back(rep);
        std::ostringstream block;
        nexus::write_report_csv(rep, block, /*header=*/false);
        std::istringstream lines(block.str());
        std::string line;
        const std::string name = fs::path(pred_file).filename().string();
        while (std::getline(lines, line)) out << name << "," << line << "\n";
    }

    // Aggregate mean/median block over all volumes.
    const std::vector<nexus::BoxStats> stats = nexus::report_boxstats(reports);
    for (const nexus::BoxStats& b : stats) {
        std::ostringstream os;
        os.precision(17);
        os << "aggregate_mean," << b.region << "_" << b.metric << "," << b.mean;
        out << os.str() << ",,,,,,,\n";
        std::ostringstream os2;
        os2.precision(17);
        os2 << "aggregate_median," << b.region << "_" << b.metric << "," << b.median;
        out << os2.str() << ",,,,,,,\n";
    }

    if (dirs) {
        std::ofstream box(out_csv + ".boxstats.csv");
        if (!box) throw nexus::IoError("cannot write " + out_csv + ".boxstats.csv");
        nexus::write_boxstats_csv(stats, box);
    }

    for (const nexus::SegReport& rep : reports)
        for (const nexus::RegionReport& r : rep.regions)
            std::cout << r.region << ": dice=" << r.dice << " sens=" << r.sensitivity
                      << " spec=" << r.specificity << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nexus brain-lesion segmentation pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate labeled phantom volumes");
    std::string synth_out;
    std::uint64_t synth_seed = 1;
    std::size_t synth_count = 1;
    std::string synth_size = "48,64,64";
    bool synth_tumor_free = false;
    double synth_radius = 10.0, synth_noise = 4.0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "base seed (volume i uses seed+i)");
    synth->add_option("--count", synth_count, "number of volumes")->check(CLI::PositiveNumber);
    synth->add_option("--size", synth_size, "volume extents D,H,W");
    synth->add_flag("--tumor-free", synth_tumor_free, "generate healthy phantoms");
    synth->add_option("--radius", synth_radius, "tumor radius in voxels");
    synth->add_option("--noise", synth_noise, "intensity noise std");

    // train
    auto* train = app.add_subcommand("train", "two-phase training on labeled volumes");
    std::string train_arch, train_data, train_config, train_out;
    double train_desk = 0.0;
    unsigned train_threads = 0;
    train->add_option("--arch", train_arch, "LN, TPN, TLinear, IN or ILinear")->required();
    train->add_option("--data", train_data, "directory of .nxv volumes")->required();
    train->add_option("--config", train_config, "key=value run configuration");
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--desk-scale", train_desk, "patch-count multiplier override");
    train->add_option("--threads", train_threads, "worker threads (0 = hardware)");

    // segment
    auto* segment = app.add_subcommand("segment", "label every brain pixel of a volume");
    std::string seg_ckpt, seg_in, seg_out, seg_overlay, seg_config;
    bool seg_no_post = false;
    unsigned seg_workers = 0;
    segment->add_option("--ckpt", seg_ckpt, "trained checkpoint")->required();
    segment->add_option("--in", seg_in, "input .nxv volume")->required();
    segment->add_option("--out", seg_out, "output label map (.nxv)")->required();
    segment->add_flag("--no-postproc", seg_no_post, "skip morphological cleanup");
    segment->add_option("--overlay", seg_overlay, "directory for per-slice PPM overlays");
    segment->add_option("--config", seg_config, "run configuration used at training time");
    segment->add_option("--workers", seg_workers, "worker threads (0 = hardware)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "overlap metrics against ground truth");
    std::string eval_pred, eval_truth, eval_out;
    unsigned eval_workers = 0;
    evaluate->add_option("--pred", eval_pred, "predicted label map or directory")->required();
    evaluate->add_option("--truth", eval_truth, "ground-truth labels or directory")->required();
    evaluate->add_option("--out", eval_out, "report CSV path")->required();
    evaluate->add_option("--workers", eval_workers, "worker threads (0 = hardware)");

    // check
    auto* check = app.add_subcommand("check", "dimension contracts and invariant self-test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_out, synth_seed, synth_count, synth_size, synth_tumor_free,
                             synth_radius, synth_noise);
        if (train->parsed())
            return cmd_train(train_arch, train_data, train_config, train_out, train_desk,
                             train_threads);
        if (segment->parsed())
            return cmd_segment(seg_ckpt, seg_in, seg_out, seg_no_post, seg_overlay, seg_config,
                               seg_workers);
        if (evaluate->parsed()) return cmd_evaluate(eval_pred, eval_truth, eval_out, eval_workers);
        if (check->parsed()) return nexus::selfcheck::run_all(std::cout) ? kExitOk : 1;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nexus::ParamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nexus::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const nexus::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
