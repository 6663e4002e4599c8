#include "cupi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "cupi/errors.hpp"
#include "cupi/rng.hpp"

namespace cupi {

double evaluate_accuracy(const ModelBundle& model, const LabeledDataset& ds, int batch_size) {
    if (ds.size() == 0) throw ConfigError("evaluate: dataset is empty");
    int correct = 0;
    for (int start = 0; start < ds.size(); start += batch_size) {
        const int n = std::min(batch_size, ds.size() - start);
        Tensor4 x(n, ds.images.c, ds.images.h, ds.images.w);
        for (int k = 0; k < n; ++k) {
            std::memcpy(x.sample(k), ds.images.sample(start + k), ds.images.sample_stride() * sizeof(double));
        }
        const std::vector<int> pred = predict(model.params, model.config, x);
        for (int k = 0; k < n; ++k) {
            if (pred[k] == ds.labels[start + k]) ++correct;
        }
    }
    return 100.0 * correct / ds.size();
}

DropReport compute_drops(const AccuracyGrid& sl, const AccuracyGrid& method) {
    if (sl.targets.size() != method.targets.size()) {
        throw ConfigError("drop report: SL and method grids cover different targets");
    }
    for (std::size_t i = 0; i < sl.targets.size(); ++i) {
        if (sl.targets[i].first != method.targets[i].first) {
            throw ConfigError("drop report: target name mismatch at position " + std::to_string(i));
        }
    }
    DropReport r;
    r.authorized_acc_sl = sl.authorized;
    r.authorized_acc_method = method.authorized;
    r.unauthorized_acc_sl = sl.targets;
    r.unauthorized_acc_method = method.targets;
    r.authorized_drop.absolute = sl.authorized - method.authorized;
    r.authorized_drop.relative = sl.authorized != 0.0 ? 100.0 * r.authorized_drop.absolute / sl.authorized : 0.0;
    double sum_abs = 0.0, sum_rel = 0.0;
    for (std::size_t i = 0; i < sl.targets.size(); ++i) {
        const double drop = sl.targets[i].second - method.targets[i].second;
        sum_abs += drop;
        sum_rel += sl.targets[i].second != 0.0 ? drop / sl.targets[i].second : 0.0;
    }
    if (!sl.targets.empty()) {
        r.unauthorized_drop.absolute = sum_abs / static_cast<double>(sl.targets.size());
        r.unauthorized_drop.relative = 100.0 * sum_rel / static_cast<double>(sl.targets.size());
    }
    return r;
}

OwnershipVerdict verify_ownership(const ModelBundle& model, const LabeledDataset& authorized_clean,
                                  const WatermarkPatchSpec& patch, double threshold) {
    OwnershipVerdict v;
    v.threshold = threshold;
    v.acc_without_patch = evaluate_accuracy(model, authorized_clean);
    v.acc_with_patch = evaluate_accuracy(model, apply_watermark(authorized_clean, patch));
    v.signal_present = (v.acc_without_patch - v.acc_with_patch) >= threshold;
    return v;
}

AttackMethod attack_method_from_string(const std::string& s) {
    if (s == "ftal") return AttackMethod::ftal;
    if (s == "rtal") return AttackMethod::rtal;
    if (s == "overwrite") return AttackMethod::overwrite;
    throw ConfigError("unknown attack method: " + s);
}

const char* to_string(AttackMethod m) {
    switch (m) {
        case AttackMethod::ftal: return "ftal";
        case AttackMethod::rtal: return "rtal";
        case AttackMethod::overwrite: return "overwrite";
    }
    return "?";
}

void AttackConfig::validate() const {
    if (epochs < 0) throw ConfigError("attack: epochs must be >= 0");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
        throw ConfigError("attack: data_fraction must lie in (0,1]");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("attack: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("attack: batch_size must be >= 1");
}

LabeledDataset select_attacker_subset(const LabeledDataset& clean_train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("attack: data_fraction must lie in (0,1]");
    const int n = std::max(1, static_cast<int>(fraction * clean_train.size()));
    std::vector<int> order(clean_train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "attacker-subset"));
    rng.shuffle(order);
    order.resize(n);
    return subset(clean_train, order);
}

ModelBundle attack(const ModelBundle& model, const AttackConfig& cfg, const LabeledDataset& attacker_data) {
    cfg.validate();
    ModelBundle attacked = model;
    if (cfg.method == AttackMethod::rtal) {
        // surgical reset of the classifier head only
        Rng rng(derive_seed(cfg.seed, "rtal-reinit"));
        Mat& w = attacked.params.classifier.weight;
        const double stddev = std::sqrt(2.0 / static_cast<double>(w.cols()));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.gaussian(0.0, stddev);
        }
        attacked.params.classifier.bias.setZero();
    }
    LabeledDataset data = attacker_data;
    if (cfg.method == AttackMethod::overwrite) {
        data = apply_watermark(attacker_data, cfg.overwrite_patch);
    }
    fine_tune(attacked, data, cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.seed);
    attacked.provenance.mode = model.provenance.mode + "+" + to_string(cfg.method);
    return attacked;
}

namespace {

std::string cell_name(const std::string& base, bool patched) {
    return patched ? base + "+patch" : base;
}

}  // namespace

AuthzResult run_authz_scheme(int scheme, const TrainConfig& cfg, const AuthzData& data) {
    if (scheme < 1 || scheme > 3) throw ConfigError("authz: scheme must be 1, 2 or 3");
    if (cfg.mode != TrainMode::target_specified) {
        throw ConfigError("authz: schemes train in target-specified mode");
    }
    data.patch.validate();
    data.synthesis.validate();

    const LabeledDataset synth = synthesize_unauthorized(data.authorized_train, data.synthesis);
    const LabeledDataset synth_patched = apply_watermark(synth, data.patch);
    const LabeledDataset auth_patched = apply_watermark(data.authorized_train, data.patch);

    LabeledDataset auth_role, unauth_role;
    switch (scheme) {
        case 1:
            auth_role = retag(auth_patched, DomainTag::authorized);
            unauth_role = concat_datasets({&data.authorized_train, &synth, &synth_patched},
                                          DomainTag::unauthorized);
            break;
        case 2:
            auth_role = data.authorized_train;
            unauth_role = concat_datasets({&auth_patched, &synth, &synth_patched}, DomainTag::unauthorized);
            break;
        default:
            auth_role = data.authorized_train;
            unauth_role = retag(synth, DomainTag::unauthorized);
            break;
    }

    AuthzResult result;
    TrainResult trained = train_target_specified(cfg, auth_role, unauth_role);
    result.bundle = std::move(trained.bundle);

    const LabeledDataset test_clean = data.authorized_test;
    const LabeledDataset test_patched = apply_watermark(test_clean, data.patch);
    auto acc = [&](const LabeledDataset& ds) { return evaluate_accuracy(result.bundle, ds); };

    if (scheme == 1) {
        result.authorized_acc = acc(test_patched);
        result.other_cells.emplace_back("authorized", acc(test_clean));
    } else {
        result.authorized_acc = acc(test_clean);
        if (scheme == 2) {
            result.other_cells.emplace_back("authorized+patch", acc(test_patched));
        } else {
            // the patch is not supposed to flip the domain in scheme 3
            result.info_cells.emplace_back("authorized+patch", acc(test_patched));
        }
    }
    for (const auto& shift : data.eval_shifts) {
        const LabeledDataset shifted = apply_domain_shift(test_clean, shift);
        result.other_cells.emplace_back(cell_name(shift.name(), false), acc(shifted));
        result.other_cells.emplace_back(cell_name(shift.name(), true),
                                        acc(apply_watermark(shifted, data.patch)));
    }

    double sum = 0.0;
    for (const auto& [name, a] : result.other_cells) sum += a;
    const double mean_others = result.other_cells.empty() ? 0.0 : sum / result.other_cells.size();
    result.drop_abs = result.authorized_acc - mean_others;
    result.drop_rel = result.authorized_acc != 0.0 ? 100.0 * result.drop_abs / result.authorized_acc : 0.0;
    return result;
}

}  // namespace cupi
