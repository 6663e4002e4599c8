#include "cupi/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "cupi/checkpoint.hpp"
#include "cupi/config.hpp"
#include "cupi/errors.hpp"
#include "cupi/eval.hpp"
#include "cupi/metrics.hpp"

namespace cupi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file")->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides config and CUPI_OUT)");
    cmd->add_option("--seed", args.seed, "seed override");
}

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg = parse_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out_dir.empty()) {
        cfg.output_dir = args.out_dir;
    } else if (const char* env = std::getenv("CUPI_OUT"); env && *env) {
        cfg.output_dir = env;
    }
    return cfg;
}

RunManifest start_manifest(const ExperimentConfig& cfg) {
    RunManifest m;
    m.config_hash = config_hash(cfg);
    m.started_at = iso8601_now();
    return m;
}

json accuracy_cells(const ModelBundle& bundle, const ExperimentConfig& cfg, const DatasetPair& data,
                    const LabeledDataset* unauthorized_test) {
    json cells;
    cells["authorized"] = evaluate_accuracy(bundle, data.test);
    if (unauthorized_test) cells["unauthorized"] = evaluate_accuracy(bundle, *unauthorized_test);
    for (const auto& shift : cfg.eval_shifts) {
        cells[shift.name()] = evaluate_accuracy(bundle, apply_domain_shift(data.test, shift));
    }
    return cells;
}

int cmd_train(const CommonArgs& args, const std::string& mode_flag) {
    ExperimentConfig cfg = load_config(args);
    if (!mode_flag.empty()) cfg.train_mode = mode_flag;
    RunManifest manifest = start_manifest(cfg);

    const DatasetPair data = build_datasets(cfg);
    TrainConfig tc = build_train_config(cfg, data.train);

    std::vector<std::string> artifacts;
    EpochCallback on_epoch = [&](int epoch, const ModelBundle& bundle) {
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != tc.epochs) {
            const std::string path = (fs::path(cfg.output_dir) / ("checkpoint_epoch" + std::to_string(epoch) + ".cupb")).string();
            fs::create_directories(cfg.output_dir);
            save_checkpoint(path, bundle);
            artifacts.push_back(path);
        }
    };

    TrainResult result;
    std::optional<LabeledDataset> unauthorized_test;
    if (tc.mode == TrainMode::baseline) {
        result = train_baseline(tc, data.train, &on_epoch);
    } else if (tc.mode == TrainMode::target_specified) {
        const LabeledDataset unauthorized = apply_domain_shift(data.train, cfg.shift);
        unauthorized_test = apply_domain_shift(data.test, cfg.shift);
        result = train_target_specified(tc, data.train, unauthorized, &on_epoch);
    } else {
        result = train_target_free(tc, data.train, &on_epoch);
        unauthorized_test = apply_domain_shift(data.test, cfg.shift);  // unseen shift for reporting
    }

    fs::create_directories(cfg.output_dir);
    const std::string ckpt = (fs::path(cfg.output_dir) / "checkpoint.cupb").string();
    save_checkpoint(ckpt, result.bundle);
    artifacts.push_back(ckpt);
    if (result.banks.initialized) {
        const std::string banks = (fs::path(cfg.output_dir) / "dimb.cupb").string();
        save_dimb_snapshot(banks, result.banks, result.bundle.config);
        artifacts.push_back(banks);
    }

    json summary;
    summary["mode"] = to_string(tc.mode);
    summary["seed"] = cfg.seed;
    summary["config_hash"] = manifest.config_hash;
    summary["epochs_completed"] = result.completed_epochs;
    summary["diverged"] = result.diverged;
    summary["accuracy"] = accuracy_cells(result.bundle, cfg, data,
                                         unauthorized_test ? &*unauthorized_test : nullptr);
    if (!result.epochs.empty()) {
        summary["final_epoch"] = {{"epoch", result.epochs.back().epoch},
                                  {"alpha", result.epochs.back().alpha},
                                  {"mean_total", result.epochs.back().mean_total}};
    }

    manifest.artifacts = artifacts;
    export_metrics(result.steps, summary, cfg.output_dir, manifest);
    std::cout << summary.dump(2) << "\n";
    return result.diverged ? 2 : 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& baseline) {
    ExperimentConfig cfg = load_config(args);
    RunManifest manifest = start_manifest(cfg);
    const ModelBundle method = load_checkpoint(checkpoint);
    const ModelBundle sl = load_checkpoint(baseline);
    const DatasetPair data = build_datasets(cfg);

    auto grid_for = [&](const ModelBundle& m) {
        AccuracyGrid g;
        g.authorized = evaluate_accuracy(m, data.test);
        g.targets.emplace_back(cfg.shift.name(), evaluate_accuracy(m, apply_domain_shift(data.test, cfg.shift)));
        for (const auto& shift : cfg.eval_shifts) {
            g.targets.emplace_back(shift.name(), evaluate_accuracy(m, apply_domain_shift(data.test, shift)));
        }
        return g;
    };
    const DropReport report = compute_drops(grid_for(sl), grid_for(method));

    fs::create_directories(cfg.output_dir);
    const std::string csv = write_drop_report_csv(report, cfg.output_dir);
    json summary;
    summary["config_hash"] = manifest.config_hash;
    summary["drop_report"] = drop_report_to_json(report);
    manifest.artifacts = {csv};
    export_metrics({}, summary, cfg.output_dir, manifest);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_verify(const CommonArgs& args, const std::string& checkpoint) {
    ExperimentConfig cfg = load_config(args);
    RunManifest manifest = start_manifest(cfg);
    const ModelBundle model = load_checkpoint(checkpoint);
    const DatasetPair data = build_datasets(cfg);
    const WatermarkPatchSpec patch = build_patch(cfg, data.test.images.c);
    const OwnershipVerdict v = verify_ownership(model, data.test, patch, cfg.verify_threshold);

    json summary;
    summary["config_hash"] = manifest.config_hash;
    summary["verify"] = {{"acc_without_patch", v.acc_without_patch},
                         {"acc_with_patch", v.acc_with_patch},
                         {"threshold", v.threshold},
                         {"signal_present", v.signal_present}};
    export_metrics({}, summary, cfg.output_dir, manifest);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_attack(const CommonArgs& args, const std::string& checkpoint, const std::string& method_flag) {
    ExperimentConfig cfg = load_config(args);
    if (!method_flag.empty()) cfg.attack_method = method_flag;
    RunManifest manifest = start_manifest(cfg);
    const ModelBundle model = load_checkpoint(checkpoint);
    const DatasetPair data = build_datasets(cfg);
    const AttackConfig ac = build_attack_config(cfg, data.train.images.c);
    const LabeledDataset attacker_data = select_attacker_subset(data.train, ac.data_fraction, ac.seed);
    const ModelBundle attacked = attack(model, ac, attacker_data);

    fs::create_directories(cfg.output_dir);
    const std::string out_ckpt = (fs::path(cfg.output_dir) / "checkpoint_attacked.cupb").string();
    save_checkpoint(out_ckpt, attacked);

    const WatermarkPatchSpec patch = build_patch(cfg, data.test.images.c);
    const OwnershipVerdict before = verify_ownership(model, data.test, patch, cfg.verify_threshold);
    const OwnershipVerdict after = verify_ownership(attacked, data.test, patch, cfg.verify_threshold);

    json summary;
    summary["config_hash"] = manifest.config_hash;
    summary["attack"] = {{"method", to_string(ac.method)},
                         {"epochs", ac.epochs},
                         {"data_fraction", ac.data_fraction}};
    summary["verify_before"] = {{"acc_without_patch", before.acc_without_patch},
                                {"acc_with_patch", before.acc_with_patch},
                                {"signal_present", before.signal_present}};
    summary["verify_after"] = {{"acc_without_patch", after.acc_without_patch},
                               {"acc_with_patch", after.acc_with_patch},
                               {"signal_present", after.signal_present}};
    manifest.artifacts = {out_ckpt};
    export_metrics({}, summary, cfg.output_dir, manifest);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_authz(const CommonArgs& args, int scheme_flag) {
    ExperimentConfig cfg = load_config(args);
    if (scheme_flag > 0) cfg.authz_scheme = scheme_flag;
    RunManifest manifest = start_manifest(cfg);
    const DatasetPair data = build_datasets(cfg);

    AuthzData ad;
    ad.authorized_train = data.train;
    ad.authorized_test = data.test;
    ad.patch = build_patch(cfg, data.train.images.c);
    ad.synthesis = cfg.synthesis;
    ad.eval_shifts = cfg.eval_shifts;
    if (ad.eval_shifts.empty()) ad.eval_shifts.push_back(cfg.shift);

    TrainConfig tc = build_train_config(cfg, data.train);
    tc.mode = TrainMode::target_specified;
    const AuthzResult result = run_authz_scheme(cfg.authz_scheme, tc, ad);

    fs::create_directories(cfg.output_dir);
    const std::string ckpt = (fs::path(cfg.output_dir) / "checkpoint.cupb").string();
    save_checkpoint(ckpt, result.bundle);

    json cells = json::object();
    for (const auto& [name, acc] : result.other_cells) cells[name] = acc;
    json info = json::object();
    for (const auto& [name, acc] : result.info_cells) info[name] = acc;
    json summary;
    summary["config_hash"] = manifest.config_hash;
    summary["authz"] = {{"scheme", cfg.authz_scheme},
                        {"authorized", result.authorized_acc},
                        {"others", cells},
                        {"info", info},
                        {"drop_abs", result.drop_abs},
                        {"drop_rel", result.drop_rel}};
    manifest.artifacts = {ckpt};
    export_metrics({}, summary, cfg.output_dir, manifest);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"non-transferable learning toolkit"};
    app.require_subcommand(1);

    CommonArgs train_args, baseline_args, eval_args, verify_args, attack_args, authz_args;
    std::string train_mode, eval_checkpoint, eval_baseline, verify_checkpoint, attack_checkpoint, attack_method;
    int authz_scheme = 0;

    CLI::App* train = app.add_subcommand("train", "train a protected model");
    add_common(train, train_args);
    train->add_option("--mode", train_mode, "target-specified | target-free")
        ->check(CLI::IsMember({"target-specified", "target-free"}));

    CLI::App* baseline = app.add_subcommand("baseline", "train the supervised reference");
    add_common(baseline, baseline_args);

    CLI::App* eval = app.add_subcommand("eval", "accuracy grid and drop report");
    add_common(eval, eval_args);
    eval->add_option("--checkpoint", eval_checkpoint, "method checkpoint")->required();
    eval->add_option("--baseline", eval_baseline, "supervised reference checkpoint")->required();

    CLI::App* verify = app.add_subcommand("verify", "ownership verification via the watermark trigger");
    add_common(verify, verify_args);
    verify->add_option("--checkpoint", verify_checkpoint, "checkpoint to verify")->required();

    CLI::App* attack_cmd = app.add_subcommand("attack", "watermark-removal attack");
    add_common(attack_cmd, attack_args);
    attack_cmd->add_option("--checkpoint", attack_checkpoint, "checkpoint to attack")->required();
    attack_cmd->add_option("--method", attack_method, "ftal | rtal | overwrite")
        ->check(CLI::IsMember({"ftal", "rtal", "overwrite"}));

    CLI::App* authz = app.add_subcommand("authz", "applicability-authorization scheme");
    add_common(authz, authz_args);
    authz->add_option("--scheme", authz_scheme, "1 | 2 | 3")->check(CLI::Range(1, 3));

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_args, train_mode);
        if (baseline->parsed()) return cmd_train(baseline_args, "baseline");
        if (eval->parsed()) return cmd_eval(eval_args, eval_checkpoint, eval_baseline);
        if (verify->parsed()) return cmd_verify(verify_args, verify_checkpoint);
        if (attack_cmd->parsed()) return cmd_attack(attack_args, attack_checkpoint, attack_method);
        if (authz->parsed()) return cmd_authz(authz_args, authz_scheme);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const BoundsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace cupi
