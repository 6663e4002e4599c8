#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cupi/dataset.hpp"
#include "cupi/eval.hpp"
#include "cupi/training.hpp"

namespace cupi {

// Dataset sourcing: the in-process digit renderer or an IDX file pair.
struct DatasetConfig {
    std::string source = "synthetic-digits";
    int num_train = 2500;
    int num_test = 1000;
    int channels = 1;
    std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
};

// Watermark geometry/pattern; the pixel block is built per dataset channels.
struct WatermarkConfig {
    int row = 1, col = 1;
    int height = 5, width = 5;
    std::string pattern = "checker";  // checker | solid
    double value = 1.0;
};

// The whole experiment in one file. Defaults follow the training recipe the
// rest of the toolkit assumes: 30 epochs, batch 32, learning rate 1e-4.
struct ExperimentConfig {
    int schema_version = 1;
    std::uint64_t seed = 7;
    std::string output_dir = "runs/out";
    DatasetConfig dataset;

    int backbone_levels = 3;
    std::vector<int> backbone_widths = {16, 32, 64};
    int bottleneck_dim = 64;

    std::string train_mode = "target-specified";
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-4;
    int checkpoint_every = 0;  // 0 = final checkpoint only
    bool shuffle_style_pairing = false;

    LossWeights loss;

    DomainShiftSpec shift{ShiftKind::color_invert, 11, 1.0};
    std::vector<DomainShiftSpec> eval_shifts;
    SynthesisSpec synthesis{0.35, true, 13};
    WatermarkConfig watermark;
    double verify_threshold = 50.0;

    std::string attack_method = "ftal";
    int attack_epochs = 5;
    double attack_learning_rate = 1e-4;
    double attack_data_fraction = 0.1;
    int attack_batch_size = 32;

    int authz_scheme = 3;
};

// Strict parse: unknown keys are rejected, every violation is reported in one
// ConfigError. An empty file yields all defaults.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& j);

nlohmann::json serialize(const ExperimentConfig& cfg);

// FNV-1a over the canonical (key-sorted) serialization.
std::string config_hash(const ExperimentConfig& cfg);

// ---- Materialization --------------------------------------------------------

struct DatasetPair {
    LabeledDataset train;
    LabeledDataset test;
};

DatasetPair build_datasets(const ExperimentConfig& cfg);

BackboneConfig build_backbone(const ExperimentConfig& cfg, const LabeledDataset& reference);
TrainConfig build_train_config(const ExperimentConfig& cfg, const LabeledDataset& reference);
WatermarkPatchSpec build_patch(const ExperimentConfig& cfg, int channels);
AttackConfig build_attack_config(const ExperimentConfig& cfg, int channels);

}  // namespace cupi
