#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nexus/model.hpp"
#include "nexus/optim.hpp"
#include "nexus/volume.hpp"

namespace nexus {

/// Two-phase training configuration. Phase 1 trains every parameter on
/// class-balanced patches with uniform loss weights; phase 2 retrains the
/// output layer only, on balanced patches with the class-weighted loss
/// (default weights 8/1/2/1/1 for labels 0..4). desk_scale multiplies the
/// patch counts (not the epochs) for reduced runs.
struct TrainConfig {
    std::size_t phase1_patches = 200000;
    std::size_t phase1_epochs = 20;
    std::size_t phase2_patches = 30000;
    std::size_t phase2_epochs = 5;
    std::vector<double> phase2_weights = {8.0, 1.0, 2.0, 1.0, 1.0};

    std::size_t batch_size = 128;
    SgdMode optimizer = SgdMode::nesterov;
    double momentum = 0.9;
    double lr_start = 0.01;
    double lr_end = 1e-6;
    std::size_t lr_span = 0; // 0: decay spans phase1_epochs + phase2_epochs

    std::uint64_t seed = 42;
    double desk_scale = 1.0;
    std::size_t val_patches = 500;

    std::size_t scaled(std::size_t count) const;
    std::size_t scaled_phase1_patches() const { return scaled(phase1_patches); }
    std::size_t scaled_phase2_patches() const { return scaled(phase2_patches); }
};

struct TrainLog {
    struct Row {
        int phase = 1;
        std::size_t epoch = 0; // within the phase
        double train_loss = 0.0;
        double val_loss = 0.0;
        double lr = 0.0;
        double seconds = 0.0;
    };
    std::vector<Row> rows;
};

/// CSV schema: phase,epoch,train_loss,val_loss,lr,seconds
void write_train_log(const TrainLog& log, std::ostream& out);

/// Runs the two-phase protocol in place. Volumes are raw (the pipeline
/// normalizes internally); both lists must carry labels. A checkpoint is
/// written to checkpoint_path after every epoch when the path is nonempty.
/// Deterministic for a fixed config, seed and volume list.
TrainLog train(NexusModel& model, const std::vector<VolumeSet>& train_vols,
               const std::vector<VolumeSet>& val_vols, const TrainConfig& cfg,
               const std::string& checkpoint_path = "");

/// Flat key=value run configuration (UTF-8, '#' comments). Keys mirror
/// TrainConfig/ModelConfig fields; every key has a documented default
/// (see README). Unknown keys are a ConfigError.
struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    unsigned threads = 0; // 0: hardware concurrency
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

} // namespace nexus
