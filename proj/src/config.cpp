#include "cupi/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cupi/errors.hpp"
#include "cupi/rng.hpp"

namespace cupi {

using nlohmann::json;

namespace {

// Collects every violation before failing so a bad config is fixed in one
// round trip.
struct Validator {
    std::vector<std::string> errors;

    void fail(const std::string& msg) { errors.push_back(msg); }

    void check_keys(const json& j, const std::string& scope, std::initializer_list<const char*> allowed) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool ok = false;
            for (const char* k : allowed) {
                if (it.key() == k) {
                    ok = true;
                    break;
                }
            }
            if (!ok) fail(scope + ": unknown key '" + it.key() + "'");
        }
    }

    template <typename T>
    void get(const json& j, const std::string& scope, const char* key, T& out) {
        if (!j.contains(key)) return;
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            fail(scope + "." + key + ": type mismatch");
        }
    }

    void finish() {
        if (errors.empty()) return;
        std::string all = "configuration invalid:";
        for (const auto& e : errors) all += "\n  - " + e;
        throw ConfigError(all);
    }
};

DomainShiftSpec parse_shift(const json& j, const std::string& scope, Validator& v) {
    DomainShiftSpec s;
    v.check_keys(j, scope, {"kind", "seed", "magnitude"});
    std::string kind = to_string(s.kind);
    v.get(j, scope, "kind", kind);
    try {
        s.kind = shift_kind_from_string(kind);
    } catch (const ConfigError& e) {
        v.fail(scope + ".kind: " + e.what());
    }
    v.get(j, scope, "seed", s.seed);
    v.get(j, scope, "magnitude", s.magnitude);
    if (!(s.magnitude >= 0.0 && s.magnitude <= 1.0)) v.fail(scope + ".magnitude: must lie in [0,1]");
    return s;
}

json shift_to_json(const DomainShiftSpec& s) {
    return json{{"kind", to_string(s.kind)}, {"seed", s.seed}, {"magnitude", s.magnitude}};
}

}  // namespace

ExperimentConfig parse_config_json(const json& root) {
    Validator v;
    ExperimentConfig cfg;
    if (!root.is_object()) {
        v.fail("top level: expected an object");
        v.finish();
    }
    v.check_keys(root, "top level",
                 {"schema_version", "seed", "output_dir", "dataset", "backbone", "train", "loss", "shift",
                  "eval_shifts", "synthesis", "watermark", "verify", "attack", "authz"});

    v.get(root, "top level", "schema_version", cfg.schema_version);
    if (cfg.schema_version != 1) v.fail("schema_version: unrecognized (expected 1)");
    v.get(root, "top level", "seed", cfg.seed);
    v.get(root, "top level", "output_dir", cfg.output_dir);

    if (root.contains("dataset")) {
        const json& d = root["dataset"];
        v.check_keys(d, "dataset", {"source", "num_train", "num_test", "channels", "idx"});
        v.get(d, "dataset", "source", cfg.dataset.source);
        v.get(d, "dataset", "num_train", cfg.dataset.num_train);
        v.get(d, "dataset", "num_test", cfg.dataset.num_test);
        v.get(d, "dataset", "channels", cfg.dataset.channels);
        if (d.contains("idx")) {
            const json& x = d["idx"];
            v.check_keys(x, "dataset.idx", {"train_images", "train_labels", "test_images", "test_labels"});
            v.get(x, "dataset.idx", "train_images", cfg.dataset.idx_train_images);
            v.get(x, "dataset.idx", "train_labels", cfg.dataset.idx_train_labels);
            v.get(x, "dataset.idx", "test_images", cfg.dataset.idx_test_images);
            v.get(x, "dataset.idx", "test_labels", cfg.dataset.idx_test_labels);
        }
        if (cfg.dataset.source != "synthetic-digits" && cfg.dataset.source != "idx") {
            v.fail("dataset.source: must be 'synthetic-digits' or 'idx'");
        }
        if (cfg.dataset.num_train < 1) v.fail("dataset.num_train: must be >= 1");
        if (cfg.dataset.num_test < 1) v.fail("dataset.num_test: must be >= 1");
        if (cfg.dataset.channels != 1 && cfg.dataset.channels != 3) v.fail("dataset.channels: must be 1 or 3");
        if (cfg.dataset.source == "idx") {
            for (const auto& [name, path] : {std::pair<const char*, const std::string&>{"train_images", cfg.dataset.idx_train_images},
                                             {"train_labels", cfg.dataset.idx_train_labels},
                                             {"test_images", cfg.dataset.idx_test_images},
                                             {"test_labels", cfg.dataset.idx_test_labels}}) {
                if (path.empty()) {
                    v.fail(std::string("dataset.idx.") + name + ": required for the idx source");
                } else if (!std::filesystem::exists(path)) {
                    v.fail(std::string("dataset.idx.") + name + ": file not found: " + path);
                }
            }
        }
    }

    if (root.contains("backbone")) {
        const json& b = root["backbone"];
        v.check_keys(b, "backbone", {"levels", "widths", "bottleneck_dim"});
        v.get(b, "backbone", "levels", cfg.backbone_levels);
        v.get(b, "backbone", "widths", cfg.backbone_widths);
        v.get(b, "backbone", "bottleneck_dim", cfg.bottleneck_dim);
        if (cfg.backbone_levels < 1) v.fail("backbone.levels: must be >= 1");
        if (static_cast<int>(cfg.backbone_widths.size()) != cfg.backbone_levels) {
            v.fail("backbone.widths: need one width per level");
        }
        if (cfg.bottleneck_dim < 1) v.fail("backbone.bottleneck_dim: must be >= 1");
    }

    if (root.contains("train")) {
        const json& t = root["train"];
        v.check_keys(t, "train",
                     {"mode", "epochs", "batch_size", "learning_rate", "checkpoint_every", "shuffle_style_pairing"});
        v.get(t, "train", "mode", cfg.train_mode);
        v.get(t, "train", "epochs", cfg.epochs);
        v.get(t, "train", "batch_size", cfg.batch_size);
        v.get(t, "train", "learning_rate", cfg.learning_rate);
        v.get(t, "train", "checkpoint_every", cfg.checkpoint_every);
        v.get(t, "train", "shuffle_style_pairing", cfg.shuffle_style_pairing);
        try {
            train_mode_from_string(cfg.train_mode);
        } catch (const ConfigError& e) {
            v.fail(std::string("train.mode: ") + e.what());
        }
        if (cfg.epochs < 1) v.fail("train.epochs: must be >= 1");
        if (cfg.batch_size < 1) v.fail("train.batch_size: must be >= 1");
        if (!(cfg.learning_rate > 0.0)) v.fail("train.learning_rate: must be > 0");
        if (cfg.checkpoint_every < 0) v.fail("train.checkpoint_every: must be >= 0");
    }

    if (root.contains("loss")) {
        const json& l = root["loss"];
        v.check_keys(l, "loss",
                     {"neg_bound", "detach_style_targets", "enable_li", "enable_lt", "enable_lstl", "enable_ldis"});
        v.get(l, "loss", "neg_bound", cfg.loss.neg_bound);
        v.get(l, "loss", "detach_style_targets", cfg.loss.detach_style_targets);
        v.get(l, "loss", "enable_li", cfg.loss.enable_li);
        v.get(l, "loss", "enable_lt", cfg.loss.enable_lt);
        v.get(l, "loss", "enable_lstl", cfg.loss.enable_lstl);
        v.get(l, "loss", "enable_ldis", cfg.loss.enable_ldis);
        if (!(cfg.loss.neg_bound > 0.0)) v.fail("loss.neg_bound: must be > 0");
    }

    if (root.contains("shift")) cfg.shift = parse_shift(root["shift"], "shift", v);
    if (root.contains("eval_shifts")) {
        if (!root["eval_shifts"].is_array()) {
            v.fail("eval_shifts: expected an array");
        } else {
            cfg.eval_shifts.clear();
            int i = 0;
            for (const auto& e : root["eval_shifts"]) {
                cfg.eval_shifts.push_back(parse_shift(e, "eval_shifts[" + std::to_string(i) + "]", v));
                ++i;
            }
        }
    }

    if (root.contains("synthesis")) {
        const json& s = root["synthesis"];
        v.check_keys(s, "synthesis", {"noise_std", "per_channel", "seed"});
        v.get(s, "synthesis", "noise_std", cfg.synthesis.noise_std);
        v.get(s, "synthesis", "per_channel", cfg.synthesis.per_channel);
        v.get(s, "synthesis", "seed", cfg.synthesis.seed);
        if (!(cfg.synthesis.noise_std > 0.0)) v.fail("synthesis.noise_std: must be > 0");
    }

    if (root.contains("watermark")) {
        const json& w = root["watermark"];
        v.check_keys(w, "watermark", {"row", "col", "height", "width", "pattern", "value"});
        v.get(w, "watermark", "row", cfg.watermark.row);
        v.get(w, "watermark", "col", cfg.watermark.col);
        v.get(w, "watermark", "height", cfg.watermark.height);
        v.get(w, "watermark", "width", cfg.watermark.width);
        v.get(w, "watermark", "pattern", cfg.watermark.pattern);
        v.get(w, "watermark", "value", cfg.watermark.value);
        if (cfg.watermark.pattern != "checker" && cfg.watermark.pattern != "solid") {
            v.fail("watermark.pattern: must be 'checker' or 'solid'");
        }
        if (cfg.watermark.row < 0 || cfg.watermark.col < 0) v.fail("watermark: anchor must be non-negative");
        if (cfg.watermark.height < 0 || cfg.watermark.width < 0) v.fail("watermark: size must be non-negative");
        if (!(cfg.watermark.value >= 0.0 && cfg.watermark.value <= 1.0)) {
            v.fail("watermark.value: must lie in [0,1]");
        }
    }

    if (root.contains("verify")) {
        const json& w = root["verify"];
        v.check_keys(w, "verify", {"threshold"});
        v.get(w, "verify", "threshold", cfg.verify_threshold);
        if (!(cfg.verify_threshold >= 0.0)) v.fail("verify.threshold: must be >= 0");
    }

    if (root.contains("attack")) {
        const json& a = root["attack"];
        v.check_keys(a, "attack", {"method", "epochs", "learning_rate", "data_fraction", "batch_size"});
        v.get(a, "attack", "method", cfg.attack_method);
        v.get(a, "attack", "epochs", cfg.attack_epochs);
        v.get(a, "attack", "learning_rate", cfg.attack_learning_rate);
        v.get(a, "attack", "data_fraction", cfg.attack_data_fraction);
        v.get(a, "attack", "batch_size", cfg.attack_batch_size);
        try {
            attack_method_from_string(cfg.attack_method);
        } catch (const ConfigError& e) {
            v.fail(std::string("attack.method: ") + e.what());
        }
        if (cfg.attack_epochs < 0) v.fail("attack.epochs: must be >= 0");
        if (!(cfg.attack_learning_rate > 0.0)) v.fail("attack.learning_rate: must be > 0");
        if (!(cfg.attack_data_fraction > 0.0 && cfg.attack_data_fraction <= 1.0)) {
            v.fail("attack.data_fraction: must lie in (0,1]");
        }
        if (cfg.attack_batch_size < 1) v.fail("attack.batch_size: must be >= 1");
    }

    if (root.contains("authz")) {
        const json& a = root["authz"];
        v.check_keys(a, "authz", {"scheme"});
        v.get(a, "authz", "scheme", cfg.authz_scheme);
        if (cfg.authz_scheme < 1 || cfg.authz_scheme > 3) v.fail("authz.scheme: must be 1, 2 or 3");
    }

    v.finish();
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) text = "{}";
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config: not valid JSON: " + path);
    return parse_config_json(root);
}

json serialize(const ExperimentConfig& cfg) {
    json eval_shifts = json::array();
    for (const auto& s : cfg.eval_shifts) eval_shifts.push_back(shift_to_json(s));
    return json{
        {"schema_version", cfg.schema_version},
        {"seed", cfg.seed},
        {"output_dir", cfg.output_dir},
        {"dataset",
         {{"source", cfg.dataset.source},
          {"num_train", cfg.dataset.num_train},
          {"num_test", cfg.dataset.num_test},
          {"channels", cfg.dataset.channels},
          {"idx",
           {{"train_images", cfg.dataset.idx_train_images},
            {"train_labels", cfg.dataset.idx_train_labels},
            {"test_images", cfg.dataset.idx_test_images},
            {"test_labels", cfg.dataset.idx_test_labels}}}}},
        {"backbone",
         {{"levels", cfg.backbone_levels}, {"widths", cfg.backbone_widths}, {"bottleneck_dim", cfg.bottleneck_dim}}},
        {"train",
         {{"mode", cfg.train_mode},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"checkpoint_every", cfg.checkpoint_every},
          {"shuffle_style_pairing", cfg.shuffle_style_pairing}}},
        {"loss",
         {{"neg_bound", cfg.loss.neg_bound},
          {"detach_style_targets", cfg.loss.detach_style_targets},
          {"enable_li", cfg.loss.enable_li},
          {"enable_lt", cfg.loss.enable_lt},
          {"enable_lstl", cfg.loss.enable_lstl},
          {"enable_ldis", cfg.loss.enable_ldis}}},
        {"shift", shift_to_json(cfg.shift)},
        {"eval_shifts", eval_shifts},
        {"synthesis",
         {{"noise_std", cfg.synthesis.noise_std},
          {"per_channel", cfg.synthesis.per_channel},
          {"seed", cfg.synthesis.seed}}},
        {"watermark",
         {{"row", cfg.watermark.row},
          {"col", cfg.watermark.col},
          {"height", cfg.watermark.height},
          {"width", cfg.watermark.width},
          {"pattern", cfg.watermark.pattern},
          {"value", cfg.watermark.value}}},
        {"verify", {{"threshold", cfg.verify_threshold}}},
        {"attack",
         {{"method", cfg.attack_method},
          {"epochs", cfg.attack_epochs},
          {"learning_rate", cfg.attack_learning_rate},
          {"data_fraction", cfg.attack_data_fraction},
          {"batch_size", cfg.attack_batch_size}}},
        {"authz", {{"scheme", cfg.authz_scheme}}}};
}

std::string config_hash(const ExperimentConfig& cfg) {
    // nlohmann::json objects are key-sorted, so the dump is canonical.
    const std::string text = serialize(cfg).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

DatasetPair build_datasets(const ExperimentConfig& cfg) {
    DatasetPair pair;
    if (cfg.dataset.source == "synthetic-digits") {
        pair.train = make_synthetic_digits(cfg.dataset.num_train, derive_seed(cfg.seed, "train-data"),
                                           cfg.dataset.channels);
        pair.test =
            make_synthetic_digits(cfg.dataset.num_test, derive_seed(cfg.seed, "test-data"), cfg.dataset.channels);
    } else {
        pair.train = load_idx_dataset(cfg.dataset.idx_train_images, cfg.dataset.idx_train_labels);
        pair.test = load_idx_dataset(cfg.dataset.idx_test_images, cfg.dataset.idx_test_labels);
        if (cfg.dataset.num_train < pair.train.size()) {
            std::vector<int> rows(cfg.dataset.num_train);
            for (int i = 0; i < cfg.dataset.num_train; ++i) rows[i] = i;
            pair.train = subset(pair.train, rows);
        }
        if (cfg.dataset.num_test < pair.test.size()) {
            std::vector<int> rows(cfg.dataset.num_test);
            for (int i = 0; i < cfg.dataset.num_test; ++i) rows[i] = i;
            pair.test = subset(pair.test, rows);
        }
    }
    return pair;
}

BackboneConfig build_backbone(const ExperimentConfig& cfg, const LabeledDataset& reference) {
    BackboneConfig b;
    b.levels = cfg.backbone_levels;
    b.widths = cfg.backbone_widths;
    b.bottleneck_dim = cfg.bottleneck_dim;
    b.num_classes = reference.num_classes;
    b.in_h = reference.images.h;
    b.in_w = reference.images.w;
    b.in_c = reference.images.c;
    b.seed = cfg.seed;
    b.validate();
    return b;
}

TrainConfig build_train_config(const ExperimentConfig& cfg, const LabeledDataset& reference) {
    TrainConfig t;
    t.mode = train_mode_from_string(cfg.train_mode);
    t.epochs = cfg.epochs;
    t.batch_size = cfg.batch_size;
    t.learning_rate = cfg.learning_rate;
    t.seed = cfg.seed;
    t.backbone = build_backbone(cfg, reference);
    t.loss = cfg.loss;
    t.synthesis = cfg.synthesis;
    t.shuffle_style_pairing = cfg.shuffle_style_pairing;
    return t;
}

WatermarkPatchSpec build_patch(const ExperimentConfig& cfg, int channels) {
    if (cfg.watermark.pattern == "solid") {
        return make_solid_patch(cfg.watermark.row, cfg.watermark.col, cfg.watermark.height, cfg.watermark.width,
                                channels, cfg.watermark.value);
    }
    return make_checker_patch(cfg.watermark.row, cfg.watermark.col, cfg.watermark.height, cfg.watermark.width,
                              channels, cfg.watermark.value);
}

AttackConfig build_attack_config(const ExperimentConfig& cfg, int channels) {
    AttackConfig a;
    a.method = attack_method_from_string(cfg.attack_method);
    a.epochs = cfg.attack_epochs;
    a.learning_rate = cfg.attack_learning_rate;
    a.data_fraction = cfg.attack_data_fraction;
    a.batch_size = cfg.attack_batch_size;
    a.seed = derive_seed(cfg.seed, "attack");
    // the attacker's own patch sits in the opposite corner of the verifier's
    a.overwrite_patch = make_solid_patch(0, 0, cfg.watermark.height, cfg.watermark.width, channels, 1.0);
    return a;
}

}  // namespace cupi
