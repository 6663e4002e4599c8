#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cupi/dataset.hpp"
#include "cupi/dimb.hpp"
#include "cupi/losses.hpp"
#include "cupi/model_bundle.hpp"

namespace cupi {

enum class TrainMode { target_specified, target_free, baseline };

TrainMode train_mode_from_string(const std::string& s);
const char* to_string(TrainMode mode);

struct TrainConfig {
    TrainMode mode = TrainMode::target_specified;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
    BackboneConfig backbone;
    LossWeights loss;
    std::optional<SynthesisSpec> synthesis;  // target-free only
    bool shuffle_style_pairing = false;      // shuffle style rows within the batch

    void validate() const;
};

struct StepRecord {
    int epoch = 0;
    int step = 0;
    LossReport loss;
};

struct EpochRecord {
    int epoch = 0;
    double alpha = 0.0;
    double mean_total = 0.0;
    double mean_l_s = 0.0;
};

struct TrainResult {
    ModelBundle bundle;
    DIMBState banks;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    bool diverged = false;
    int completed_epochs = 0;
};

using EpochCallback = std::function<void(int epoch, const ModelBundle&)>;

// Three-stream training against a known unauthorized domain. The CUPI stream
// starts as a copy of the unauthorized set with its labels.
TrainResult train_target_specified(const TrainConfig& cfg, const LabeledDataset& authorized,
                                   const LabeledDataset& unauthorized, const EpochCallback* on_epoch = nullptr);

// Builds the unauthorized role by restyling the authorized set, then runs the
// same loop.
TrainResult train_target_free(const TrainConfig& cfg, const LabeledDataset& authorized,
                              const EpochCallback* on_epoch = nullptr);

// Plain supervised reference; the loss is alpha * CE so an all-disabled
// ablation run matches it bit for bit.
TrainResult train_baseline(const TrainConfig& cfg, const LabeledDataset& authorized,
                           const EpochCallback* on_epoch = nullptr);

// Frozen-parameter traversal filling every bank row, then the class centers.
DIMBState init_dimb(const ModelBundle& model, const LabeledDataset& authorized,
                    const LabeledDataset& cupi_init, int batch_size = 128);

// Plain cross-entropy fine-tuning of an existing bundle over the backbone
// parameters (the attack harness; the generator is not part of the deployed
// artifact and stays untouched).
void fine_tune(ModelBundle& bundle, const LabeledDataset& data, int epochs, int batch_size,
               double learning_rate, std::uint64_t seed);

// ---- Step-level access (gradient checks, oracles) ---------------------------

struct StepBatch {
    Tensor4 x;
    std::vector<int> labels;
    std::vector<int> indices;
};

StepBatch gather_batch(const LabeledDataset& ds, const std::vector<int>& order, int step, int batch_size);

// Joint loss for one batch triple against a frozen bank state.
LossReport training_step_loss(const ModelBundle& bundle, const DIMBState& banks,
                              const StepBatch& s, const StepBatch& i, const StepBatch& t,
                              double a, const LossWeights& w);

// Same, also accumulating gradients for every backbone and generator
// parameter. Bank contents enter as constants.
LossReport training_step_gradients(const ModelBundle& bundle, const DIMBState& banks,
                                   const StepBatch& s, const StepBatch& i, const StepBatch& t,
                                   double a, const LossWeights& w,
                                   ModelGrads& g_model, GeneratorGrads& g_gen);

}  // namespace cupi
