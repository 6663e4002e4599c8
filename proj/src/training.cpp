#include "cupi/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "cupi/errors.hpp"
#include "cupi/nn_ops.hpp"
#include "cupi/optimizer.hpp"
#include "cupi/rng.hpp"

namespace cupi {

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "target-specified") return TrainMode::target_specified;
    if (s == "target-free") return TrainMode::target_free;
    if (s == "baseline") return TrainMode::baseline;
    throw ConfigError("unknown training mode: " + s);
}

const char* to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::target_specified: return "target-specified";
        case TrainMode::target_free: return "target-free";
        case TrainMode::baseline: return "baseline";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be > 0");
    backbone.validate();
    loss.validate();
    if (mode == TrainMode::target_free) {
        if (!synthesis) throw ConfigError("training: target-free mode requires a synthesis spec");
        synthesis->validate();
    }
}

StepBatch gather_batch(const LabeledDataset& ds, const std::vector<int>& order, int step, int batch_size) {
    StepBatch b;
    b.x = Tensor4(batch_size, ds.images.c, ds.images.h, ds.images.w);
    b.labels.resize(batch_size);
    b.indices.resize(batch_size);
    for (int k = 0; k < batch_size; ++k) {
        const int row = order[static_cast<std::size_t>(step) * batch_size + k];
        std::memcpy(b.x.sample(k), ds.images.sample(row), ds.images.sample_stride() * sizeof(double));
        b.labels[k] = ds.labels[row];
        b.indices[k] = ds.sample_index[row];
    }
    return b;
}

namespace {

// Cached state of one stream's forward pass.
struct StreamFwd {
    std::vector<BlockCache> blocks;
    std::vector<Tensor4> raw_features;      // f^l before substitution
    std::vector<GeneratorCache> gencaches;  // cupi stream only
    std::vector<StyleStats> stats;          // stats of raw_features (when requested)
    HeadCache head;
};

void forward_plain(const ModelBundle& bundle, const Tensor4& x, bool want_stats, StreamFwd& out) {
    const int L = bundle.config.levels;
    out.blocks.resize(L);
    out.raw_features.resize(L);
    if (want_stats) out.stats.resize(L);
    const Tensor4* cur = &x;
    for (int l = 0; l < L; ++l) {
        block_forward(bundle.params, l, *cur, out.blocks[l], out.raw_features[l]);
        if (want_stats) {
            channel_mean_std(out.raw_features[l], out.stats[l].mean, out.stats[l].stddev);
        }
        cur = &out.raw_features[l];
    }
    head_forward(bundle.params, *cur, out.head);
}

// Gathers style rows according to the pairing permutation.
StyleStats gather_stats(const StyleStats& s, const std::vector<int>& pairing) {
    StyleStats out;
    out.mean.resize(static_cast<Eigen::Index>(pairing.size()), s.mean.cols());
    out.stddev.resize(static_cast<Eigen::Index>(pairing.size()), s.stddev.cols());
    for (std::size_t b = 0; b < pairing.size(); ++b) {
        out.mean.row(static_cast<Eigen::Index>(b)) = s.mean.row(pairing[b]);
        out.stddev.row(static_cast<Eigen::Index>(b)) = s.stddev.row(pairing[b]);
    }
    return out;
}

// CUPI stream: after every block the feature map is re-styled with the
// (possibly permuted) authorized statistics before feeding the next block.
void forward_cupi(const ModelBundle& bundle, const Tensor4& x, const std::vector<StyleStats>& stats_s,
                  const std::vector<int>& pairing, StreamFwd& out) {
    const int L = bundle.config.levels;
    out.blocks.resize(L);
    out.raw_features.resize(L);
    out.gencaches.resize(L);
    const Tensor4* cur = &x;
    for (int l = 0; l < L; ++l) {
        block_forward(bundle.params, l, *cur, out.blocks[l], out.raw_features[l]);
        const StyleStats paired = gather_stats(stats_s[l], pairing);
        generator_forward_cached(paired, out.raw_features[l], bundle.gen.levels[l], out.gencaches[l]);
        cur = &out.gencaches[l].out;
    }
    head_forward(bundle.params, *cur, out.head);
}

Mat mse_grad(const Mat& target, const Mat& value, double scale) {
    return (value - target) * (2.0 * scale / static_cast<double>(value.size()));
}

struct StepEval {
    StreamFwd fs, fi, ft;
    std::vector<StyleStats> stats_t;
    ClassificationLoss cls;
    StyleLoss stl;
    DiscriminativeLoss dis;
    LossReport report;
};

void run_forward_and_loss(const ModelBundle& bundle, const DIMBState& banks,
                          const StepBatch& s, const StepBatch& i, const StepBatch& t,
                          double a, const LossWeights& w, const std::vector<int>& pairing, StepEval& ev) {
    forward_plain(bundle, s.x, true, ev.fs);
    forward_cupi(bundle, i.x, ev.fs.stats, pairing, ev.fi);
    forward_plain(bundle, t.x, true, ev.ft);
    ev.stats_t = ev.ft.stats;

    ev.cls = classification_loss(ev.fs.head.probs, s.labels, ev.fi.head.probs, i.labels,
                                 ev.ft.head.probs, t.labels, a, w);
    ev.stl = w.enable_lstl ? style_loss(banks, ev.stats_t, t.labels, a, w) : StyleLoss{};
    ev.dis = w.enable_ldis
                 ? discriminative_loss(banks, ev.fs.head.p, s.labels, ev.ft.head.p, t.labels, a, w)
                 : DiscriminativeLoss{};
    ev.report = total_loss(ev.cls, ev.stl.value, ev.dis.value, a);
}

// Walks one plain stream backward. extra_stat_grads[l] (optional) injects
// dL/d(mu, sigma) of the raw level-l features; extra_p (optional) adds dL/dp.
void backward_plain(const ModelBundle& bundle, const StreamFwd& fwd, const Mat& g_logits,
                    const Mat* extra_p, const std::vector<StyleStats>* stat_grads,
                    ModelGrads& g_model) {
    const int L = bundle.config.levels;
    Tensor4 g_feat;
    head_backward(bundle.params, fwd.raw_features[L - 1], fwd.head, g_logits, extra_p, g_model, g_feat);
    for (int l = L - 1; l >= 0; --l) {
        if (stat_grads && (*stat_grads)[l].mean.size() != 0) {
            channel_mean_std_backward(fwd.raw_features[l], fwd.stats[l].mean, fwd.stats[l].stddev,
                                      (*stat_grads)[l].mean, (*stat_grads)[l].stddev, g_feat);
        }
        Tensor4 g_prev;
        block_backward(bundle.params, l, fwd.blocks[l], g_feat, g_model, g_prev);
        g_feat = std::move(g_prev);
    }
}

// CUPI stream backward. Produces dL/d(stats of f_s^l) scattered back through
// the pairing permutation; the authorized stream consumes them afterwards.
void backward_cupi(const ModelBundle& bundle, const StreamFwd& fwd, const Mat& g_logits,
                   const std::vector<int>& pairing, bool detach_style, ModelGrads& g_model,
                   GeneratorGrads& g_gen, std::vector<StyleStats>& g_stats_s) {
    const int L = bundle.config.levels;
    Tensor4 g_sub;  // gradient w.r.t. the substituted map feeding the next stage
    head_backward(bundle.params, fwd.gencaches[L - 1].out, fwd.head, g_logits, nullptr, g_model, g_sub);
    for (int l = L - 1; l >= 0; --l) {
        Tensor4 g_raw(fwd.raw_features[l].n, fwd.raw_features[l].c, fwd.raw_features[l].h,
                      fwd.raw_features[l].w);
        Mat g_mean_pair, g_std_pair;
        generator_backward(fwd.raw_features[l], bundle.gen.levels[l], fwd.gencaches[l], g_sub,
                           g_gen.mu_w[l], g_gen.mu_b[l], g_gen.sigma_w[l], g_gen.sigma_b[l], g_raw,
                           detach_style ? nullptr : &g_mean_pair, detach_style ? nullptr : &g_std_pair);
        if (!detach_style) {
            if (g_stats_s[l].mean.size() == 0) {
                g_stats_s[l].mean = Mat::Zero(g_mean_pair.rows(), g_mean_pair.cols());
                g_stats_s[l].stddev = Mat::Zero(g_std_pair.rows(), g_std_pair.cols());
            }
            for (std::size_t b = 0; b < pairing.size(); ++b) {
                g_stats_s[l].mean.row(pairing[b]) += g_mean_pair.row(static_cast<Eigen::Index>(b));
                g_stats_s[l].stddev.row(pairing[b]) += g_std_pair.row(static_cast<Eigen::Index>(b));
            }
        }
        Tensor4 g_prev;
        block_backward(bundle.params, l, fwd.blocks[l], g_raw, g_model, g_prev);
        g_sub = std::move(g_prev);
    }
}

void run_backward(const ModelBundle& bundle, const DIMBState& banks, const StepBatch& s,
                  const StepBatch& i, const StepBatch& t, double a, const LossWeights& w,
                  const std::vector<int>& pairing, const StepEval& ev, ModelGrads& g_model,
                  GeneratorGrads& g_gen) {
    const int L = bundle.config.levels;
    const int bt = t.x.n;

    // ---- unauthorized stream ----
    {
        Mat g_logits = Mat::Zero(ev.ft.head.probs.rows(), ev.ft.head.probs.cols());
        if (w.enable_lt && ev.cls.lt_active) {
            g_logits = -class_loss_logit_grad(ev.ft.head.probs, t.labels, a);
        }
        Mat g_pt;
        const Mat* g_pt_ptr = nullptr;
        if (w.enable_ldis) {
            const Mat c_t = lookup_class(banks.bottleneck_centers, t.labels);
            g_pt = mse_grad(c_t, ev.ft.head.p, a);
            g_pt_ptr = &g_pt;
        }
        std::vector<StyleStats> stat_grads(L);
        if (w.enable_lstl) {
            for (int l = 0; l < L; ++l) {
                stat_grads[l].mean = Mat::Zero(bt, ev.stats_t[l].mean.cols());
                stat_grads[l].stddev = Mat::Zero(bt, ev.stats_t[l].stddev.cols());
                if (ev.stl.mu_active[l]) {
                    const Mat c = lookup_class(banks.levels[l].mu_centers, t.labels);
                    stat_grads[l].mean = mse_grad(c, ev.stats_t[l].mean, -a);
                }
                if (ev.stl.sigma_active[l]) {
                    const Mat c = lookup_class(banks.levels[l].sigma_centers, t.labels);
                    stat_grads[l].stddev = mse_grad(c, ev.stats_t[l].stddev, -a);
                }
            }
        }
        const bool any_t = w.enable_lt || w.enable_lstl || w.enable_ldis;
        if (any_t) {
            backward_plain(bundle, ev.ft, g_logits, g_pt_ptr, w.enable_lstl ? &stat_grads : nullptr, g_model);
        }
    }

    // ---- cupi stream (and its style gradients into the authorized stream) ----
    std::vector<StyleStats> g_stats_s(L);
    if (w.enable_li && ev.cls.li_active) {
        const Mat g_logits = -class_loss_logit_grad(ev.fi.head.probs, i.labels, a);
        backward_cupi(bundle, ev.fi, g_logits, pairing, w.detach_style_targets, g_model, g_gen, g_stats_s);
    }

    // ---- authorized stream ----
    {
        const Mat g_logits = class_loss_logit_grad(ev.fs.head.probs, s.labels, a);
        Mat g_ps;
        const Mat* g_ps_ptr = nullptr;
        if (w.enable_ldis && ev.dis.s_active) {
            const Mat c_s = lookup_class(banks.bottleneck_centers, s.labels);
            g_ps = mse_grad(c_s, ev.fs.head.p, -a);
            g_ps_ptr = &g_ps;
        }
        bool any_stats = false;
        for (const auto& g : g_stats_s) any_stats |= g.mean.size() != 0;
        backward_plain(bundle, ev.fs, g_logits, g_ps_ptr, any_stats ? &g_stats_s : nullptr, g_model);
    }
}

std::vector<int> identity_pairing(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

std::vector<ParamSlot> collect_slots(ModelBundle& bundle, ModelGrads& gm, GeneratorGrads& gg) {
    std::vector<ParamSlot> slots;
    auto add = [&](double* v, const double* g, std::size_t n) { slots.push_back({v, g, n}); };
    for (std::size_t l = 0; l < bundle.params.blocks.size(); ++l) {
        add(bundle.params.blocks[l].weight.data(), gm.conv_w[l].data(), gm.conv_w[l].size());
        add(bundle.params.blocks[l].bias.data(), gm.conv_b[l].data(), gm.conv_b[l].size());
    }
    add(bundle.params.bottleneck.weight.data(), gm.bottleneck_w.data(), gm.bottleneck_w.size());
    add(bundle.params.bottleneck.bias.data(), gm.bottleneck_b.data(), gm.bottleneck_b.size());
    add(bundle.params.classifier.weight.data(), gm.classifier_w.data(), gm.classifier_w.size());
    add(bundle.params.classifier.bias.data(), gm.classifier_b.data(), gm.classifier_b.size());
    for (std::size_t l = 0; l < bundle.gen.levels.size(); ++l) {
        add(bundle.gen.levels[l].mu_map.weight.data(), gg.mu_w[l].data(), gg.mu_w[l].size());
        add(bundle.gen.levels[l].mu_map.bias.data(), gg.mu_b[l].data(), gg.mu_b[l].size());
        add(bundle.gen.levels[l].sigma_map.weight.data(), gg.sigma_w[l].data(), gg.sigma_w[l].size());
        add(bundle.gen.levels[l].sigma_map.bias.data(), gg.sigma_b[l].data(), gg.sigma_b[l].size());
    }
    return slots;
}

std::vector<int> labels_by_id(const LabeledDataset& ds) {
    std::vector<int> out(ds.size());
    for (int b = 0; b < ds.size(); ++b) out[ds.sample_index[b]] = ds.labels[b];
    return out;
}

std::vector<int> epoch_order(int n, std::uint64_t seed, const char* stream, int epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, stream, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
}

// The shared loop. `unauthorized` is null in baseline mode.
TrainResult run_training(const TrainConfig& cfg, const LabeledDataset& authorized,
                         const LabeledDataset* unauthorized, const EpochCallback* on_epoch) {
    cfg.validate();
    authorized.validate();
    const bool joint = unauthorized != nullptr;
    if (joint) {
        unauthorized->validate();
        if (unauthorized->num_classes != authorized.num_classes) {
            throw ConfigError("training: authorized/unauthorized class counts differ");
        }
        if (unauthorized->images.c != authorized.images.c || unauthorized->images.h != authorized.images.h ||
            unauthorized->images.w != authorized.images.w) {
            throw ConfigError("training: authorized/unauthorized image shapes differ");
        }
    }

    BackboneConfig bc = cfg.backbone;
    bc.seed = derive_seed(cfg.seed, "backbone");
    bc.num_classes = authorized.num_classes;
    bc.in_c = authorized.images.c;
    bc.in_h = authorized.images.h;
    bc.in_w = authorized.images.w;

    TrainResult result;
    result.bundle = make_bundle(bc);
    result.bundle.provenance.mode = to_string(cfg.mode);
    result.bundle.provenance.seed = cfg.seed;
    result.bundle.provenance.epochs = cfg.epochs;

    // CUPI stream: a copy of the unauthorized set, same labels and ids.
    LabeledDataset cupi_stream;
    if (joint) {
        cupi_stream = retag(*unauthorized, DomainTag::cupi);
        result.banks = init_dimb(result.bundle, authorized, cupi_stream);
    }

    ModelGrads g_model = ModelGrads::zeros_like(result.bundle.params);
    GeneratorGrads g_gen = GeneratorGrads::zeros_like(result.bundle.gen);
    Adam adam({cfg.learning_rate}, collect_slots(result.bundle, g_model, g_gen));

    const int B = cfg.batch_size;
    const int n_joint = joint ? std::min(authorized.size(), unauthorized->size()) : authorized.size();
    const int steps_per_epoch = n_joint / B;
    if (steps_per_epoch < 1) throw ConfigError("training: batch size exceeds dataset size");

    ModelParams last_good = result.bundle.params;
    GeneratorParams last_good_gen = result.bundle.gen;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double a = alpha(epoch, cfg.epochs);
        const auto order_s = epoch_order(authorized.size(), cfg.seed, "shuffle-authorized", epoch);
        std::vector<int> order_i, order_t;
        if (joint) {
            order_i = epoch_order(cupi_stream.size(), cfg.seed, "shuffle-cupi", epoch);
            order_t = epoch_order(unauthorized->size(), cfg.seed, "shuffle-unauthorized", epoch);
        }

        double sum_total = 0.0, sum_ls = 0.0;
        bool epoch_ok = true;
        for (int step = 0; step < steps_per_epoch; ++step) {
            StepBatch bs = gather_batch(authorized, order_s, step, B);
            LossReport report;
            if (!joint) {
                // supervised reference: alpha-scaled cross-entropy only
                StreamFwd fs;
                forward_plain(result.bundle, bs.x, false, fs);
                const double l_s = class_loss(fs.head.probs, bs.labels, a);
                report.l_s = l_s;
                report.l_cls = l_s;
                report.total = l_s;
                report.alpha = a;
                if (!std::isfinite(report.total)) {
                    epoch_ok = false;
                } else {
                    g_model.zero();
                    g_gen.zero();
                    const Mat g_logits = class_loss_logit_grad(fs.head.probs, bs.labels, a);
                    backward_plain(result.bundle, fs, g_logits, nullptr, nullptr, g_model);
                    adam.step();
                }
            } else {
                StepBatch bi = gather_batch(cupi_stream, order_i, step, B);
                StepBatch bt = gather_batch(*unauthorized, order_t, step, B);
                std::vector<int> pairing = identity_pairing(B);
                if (cfg.shuffle_style_pairing) {
                    Rng rng(derive_seed(cfg.seed, "style-pairing",
                                        static_cast<std::uint64_t>(epoch) * 1000000 + step));
                    rng.shuffle(pairing);
                }

                StepEval ev;
                // Forward first, then refresh the banks with this batch's
                // detached features, then score against the refreshed banks.
                forward_plain(result.bundle, bs.x, true, ev.fs);
                forward_cupi(result.bundle, bi.x, ev.fs.stats, pairing, ev.fi);
                forward_plain(result.bundle, bt.x, true, ev.ft);
                ev.stats_t = ev.ft.stats;
                update_after_batch(result.banks, ev.fs.stats, ev.fi.head.p, bs.indices, bi.indices,
                                   bs.labels, bi.labels);

                ev.cls = classification_loss(ev.fs.head.probs, bs.labels, ev.fi.head.probs, bi.labels,
                                             ev.ft.head.probs, bt.labels, a, cfg.loss);
                ev.stl = cfg.loss.enable_lstl ? style_loss(result.banks, ev.stats_t, bt.labels, a, cfg.loss)
                                              : StyleLoss{};
                ev.dis = cfg.loss.enable_ldis ? discriminative_loss(result.banks, ev.fs.head.p, bs.labels,
                                                                    ev.ft.head.p, bt.labels, a, cfg.loss)
                                              : DiscriminativeLoss{};
                bool finite = true;
                try {
                    ev.report = total_loss(ev.cls, ev.stl.value, ev.dis.value, a);
                } catch (const NumericError&) {
                    finite = false;
                }
                if (!finite) {
                    epoch_ok = false;
                } else {
                    report = ev.report;
                    g_model.zero();
                    g_gen.zero();
                    run_backward(result.bundle, result.banks, bs, bi, bt, a, cfg.loss, pairing, ev,
                                 g_model, g_gen);
                    adam.step();
                }
            }
            if (!epoch_ok) break;
            result.steps.push_back({epoch, step, report});
            sum_total += report.total;
            sum_ls += report.l_s;
        }

        if (!epoch_ok) {
            result.bundle.params = last_good;
            result.bundle.gen = last_good_gen;
            result.diverged = true;
            result.completed_epochs = epoch - 1;
            return result;
        }

        EpochRecord er;
        er.epoch = epoch;
        er.alpha = a;
        er.mean_total = sum_total / steps_per_epoch;
        er.mean_l_s = sum_ls / steps_per_epoch;
        result.epochs.push_back(er);
        last_good = result.bundle.params;
        last_good_gen = result.bundle.gen;
        result.completed_epochs = epoch;
        if (on_epoch && *on_epoch) (*on_epoch)(epoch, result.bundle);
    }
    return result;
}

}  // namespace

DIMBState init_dimb(const ModelBundle& model, const LabeledDataset& authorized,
                    const LabeledDataset& cupi_init, int batch_size) {
    DIMBState state = make_dimb(model.config, authorized.size(), cupi_init.size(),
                                labels_by_id(authorized), labels_by_id(cupi_init));

    auto traverse = [&](const LabeledDataset& ds, auto&& store) {
        for (int start = 0; start < ds.size(); start += batch_size) {
            const int n = std::min(batch_size, ds.size() - start);
            Tensor4 x(n, ds.images.c, ds.images.h, ds.images.w);
            for (int k = 0; k < n; ++k) {
                std::memcpy(x.sample(k), ds.images.sample(start + k), ds.images.sample_stride() * sizeof(double));
            }
            StreamFwd fwd;
            forward_plain(model, x, true, fwd);
            store(start, n, fwd);
        }
    };

    traverse(authorized, [&](int start, int n, const StreamFwd& fwd) {
        for (int l = 0; l < model.config.levels; ++l) {
            auto& lb = state.levels[l];
            for (int k = 0; k < n; ++k) {
                const int id = authorized.sample_index[start + k];
                lb.mu_samples.rows.row(id) = fwd.stats[l].mean.row(k);
                lb.sigma_samples.rows.row(id) = fwd.stats[l].stddev.row(k);
                lb.mu_samples.filled[id] = 1;
                lb.sigma_samples.filled[id] = 1;
            }
        }
    });
    traverse(cupi_init, [&](int start, int n, const StreamFwd& fwd) {
        for (int k = 0; k < n; ++k) {
            const int id = cupi_init.sample_index[start + k];
            state.bottleneck_samples.rows.row(id) = fwd.head.p.row(k);
            state.bottleneck_samples.filled[id] = 1;
        }
    });

    for (auto& lb : state.levels) {
        if (!lb.mu_samples.all_filled()) throw ConfigError("bank init: authorized traversal left gaps");
        lb.mu_centers = recompute_centers(lb.mu_samples, state.num_classes);
        lb.sigma_centers = recompute_centers(lb.sigma_samples, state.num_classes);
    }
    if (!state.bottleneck_samples.all_filled()) throw ConfigError("bank init: cupi traversal left gaps");
    state.bottleneck_centers = recompute_centers(state.bottleneck_samples, state.num_classes);
    state.initialized = true;
    return state;
}

void fine_tune(ModelBundle& bundle, const LabeledDataset& data, int epochs, int batch_size,
               double learning_rate, std::uint64_t seed) {
    if (epochs <= 0) return;
    data.validate();
    const int B = std::min(batch_size, data.size());
    const int steps = data.size() / B;
    ModelGrads g_model = ModelGrads::zeros_like(bundle.params);
    std::vector<ParamSlot> slots;
    for (std::size_t l = 0; l < bundle.params.blocks.size(); ++l) {
        slots.push_back({bundle.params.blocks[l].weight.data(), g_model.conv_w[l].data(), g_model.conv_w[l].size()});
        slots.push_back({bundle.params.blocks[l].bias.data(), g_model.conv_b[l].data(), g_model.conv_b[l].size()});
    }
    slots.push_back({bundle.params.bottleneck.weight.data(), g_model.bottleneck_w.data(), g_model.bottleneck_w.size()});
    slots.push_back({bundle.params.bottleneck.bias.data(), g_model.bottleneck_b.data(), g_model.bottleneck_b.size()});
    slots.push_back({bundle.params.classifier.weight.data(), g_model.classifier_w.data(), g_model.classifier_w.size()});
    slots.push_back({bundle.params.classifier.bias.data(), g_model.classifier_b.data(), g_model.classifier_b.size()});
    Adam adam({learning_rate}, std::move(slots));

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const auto order = epoch_order(data.size(), seed, "fine-tune-shuffle", epoch);
        for (int step = 0; step < steps; ++step) {
            StepBatch batch = gather_batch(data, order, step, B);
            StreamFwd fwd;
            forward_plain(bundle, batch.x, false, fwd);
            g_model.zero();
            const Mat g_logits = class_loss_logit_grad(fwd.head.probs, batch.labels, 1.0);
            backward_plain(bundle, fwd, g_logits, nullptr, nullptr, g_model);
            adam.step();
        }
    }
}

LossReport training_step_loss(const ModelBundle& bundle, const DIMBState& banks,
                              const StepBatch& s, const StepBatch& i, const StepBatch& t,
                              double a, const LossWeights& w) {
    StepEval ev;
    run_forward_and_loss(bundle, banks, s, i, t, a, w, identity_pairing(i.x.n), ev);
    return ev.report;
}

LossReport training_step_gradients(const ModelBundle& bundle, const DIMBState& banks,
                                   const StepBatch& s, const StepBatch& i, const StepBatch& t,
                                   double a, const LossWeights& w,
                                   ModelGrads& g_model, GeneratorGrads& g_gen) {
    StepEval ev;
    const auto pairing = identity_pairing(i.x.n);
    run_forward_and_loss(bundle, banks, s, i, t, a, w, pairing, ev);
    run_backward(bundle, banks, s, i, t, a, w, pairing, ev, g_model, g_gen);
    return ev.report;
}

TrainResult train_target_specified(const TrainConfig& cfg, const LabeledDataset& authorized,
                                   const LabeledDataset& unauthorized, const EpochCallback* on_epoch) {
    if (cfg.mode != TrainMode::target_specified) {
        throw ConfigError("training: config mode is not target-specified");
    }
    return run_training(cfg, authorized, &unauthorized, on_epoch);
}

TrainResult train_target_free(const TrainConfig& cfg, const LabeledDataset& authorized,
                              const EpochCallback* on_epoch) {
    if (cfg.mode != TrainMode::target_free) throw ConfigError("training: config mode is not target-free");
    if (!cfg.synthesis) throw ConfigError("training: target-free mode requires a synthesis spec");
    const LabeledDataset synthesized = synthesize_unauthorized(authorized, *cfg.synthesis);
    return run_training(cfg, authorized, &synthesized, on_epoch);
}

TrainResult train_baseline(const TrainConfig& cfg, const LabeledDataset& authorized,
                           const EpochCallback* on_epoch) {
    if (cfg.mode != TrainMode::baseline) throw ConfigError("training: config mode is not baseline");
    return run_training(cfg, authorized, nullptr, on_epoch);
}

}  // namespace cupi
