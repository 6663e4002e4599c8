#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cupi/dataset.hpp"
#include "cupi/model_bundle.hpp"
#include "cupi/training.hpp"

namespace cupi {

// Accuracy over a full dataset in percent; the generator path is never used
// at inference time.
double evaluate_accuracy(const ModelBundle& model, const LabeledDataset& ds, int batch_size = 256);

// One row of the paper-style grid: the authorized cell plus named
// unauthorized cells.
struct AccuracyGrid {
    double authorized = 0.0;
    std::vector<std::pair<std::string, double>> targets;
};

struct DropPair {
    double absolute = 0.0;
    double relative = 0.0;  // percent of the SL accuracy
};

struct DropReport {
    double authorized_acc_sl = 0.0;
    double authorized_acc_method = 0.0;
    std::vector<std::pair<std::string, double>> unauthorized_acc_sl;
    std::vector<std::pair<std::string, double>> unauthorized_acc_method;
    DropPair authorized_drop;
    DropPair unauthorized_drop;  // mean over targets; relative is the mean of per-target ratios
};

DropReport compute_drops(const AccuracyGrid& sl, const AccuracyGrid& method);

struct OwnershipVerdict {
    double acc_without_patch = 0.0;
    double acc_with_patch = 0.0;
    double threshold = 50.0;
    bool signal_present = false;
};

// Ownership check: a protected model collapses on patched inputs, so a gap of
// at least `threshold` points signals the defense.
OwnershipVerdict verify_ownership(const ModelBundle& model, const LabeledDataset& authorized_clean,
                                  const WatermarkPatchSpec& patch, double threshold = 50.0);

enum class AttackMethod { ftal, rtal, overwrite };

AttackMethod attack_method_from_string(const std::string& s);
const char* to_string(AttackMethod m);

struct AttackConfig {
    AttackMethod method = AttackMethod::ftal;
    int epochs = 5;
    double learning_rate = 1e-4;
    double data_fraction = 0.1;  // share of the clean authorized training set
    int batch_size = 32;
    std::uint64_t seed = 0;
    WatermarkPatchSpec overwrite_patch;  // overwrite method only

    void validate() const;
};

// Watermark-removal attacks. ftal fine-tunes everything; rtal re-initializes
// the classifier head first; overwrite fine-tunes on attacker-patched data
// with original labels. The input bundle is never mutated.
ModelBundle attack(const ModelBundle& model, const AttackConfig& cfg, const LabeledDataset& attacker_data);

// Deterministic attacker data budget: a seeded sample of the clean set.
LabeledDataset select_attacker_subset(const LabeledDataset& clean_train, double fraction, std::uint64_t seed);

// ---- Applicability authorization ------------------------------------------

struct AuthzData {
    LabeledDataset authorized_train;
    LabeledDataset authorized_test;
    WatermarkPatchSpec patch;
    SynthesisSpec synthesis;
    std::vector<DomainShiftSpec> eval_shifts;  // unseen test-time domains
};

struct AuthzResult {
    ModelBundle bundle;
    double authorized_acc = 0.0;
    std::vector<std::pair<std::string, double>> other_cells;
    std::vector<std::pair<std::string, double>> info_cells;  // reported, not scored
    double drop_abs = 0.0;
    double drop_rel = 0.0;
};

// Scheme 1: patched authorized vs {clean authorized, synthesized,
// patched synthesized}. Scheme 2: clean authorized vs {patched authorized,
// synthesized, patched synthesized}. Scheme 3: clean authorized vs
// synthesized only (the patch does not flip the domain).
AuthzResult run_authz_scheme(int scheme, const TrainConfig& cfg, const AuthzData& data);

}  // namespace cupi
