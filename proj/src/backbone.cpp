#include "cupi/backbone.hpp"

#include <cmath>

#include "cupi/errors.hpp"
#include "cupi/rng.hpp"

namespace cupi {

void BackboneConfig::validate() const {
    if (levels < 1) throw ConfigError("backbone: levels must be >= 1");
    if (static_cast<int>(widths.size()) != levels) {
        throw ConfigError("backbone: widths list must have one entry per level");
    }
    for (int c : widths) {
        if (c < 1) throw ConfigError("backbone: channel widths must be positive");
    }
    if (bottleneck_dim < 1) throw ConfigError("backbone: bottleneck_dim must be positive");
    if (num_classes < 1) throw ConfigError("backbone: num_classes must be positive");
    if (in_h < 1 || in_w < 1 || in_c < 1) throw ConfigError("backbone: input shape must be positive");
    int h = in_h, w = in_w;
    for (int l = 0; l < levels; ++l) {
        h /= 2;
        w /= 2;
        if (h < 1 || w < 1) {
            throw ConfigError("backbone: spatial size vanishes at level " + std::to_string(l + 1));
        }
    }
}

std::vector<std::pair<int, int>> BackboneConfig::spatial_sizes() const {
    std::vector<std::pair<int, int>> out;
    int h = in_h, w = in_w;
    for (int l = 0; l < levels; ++l) {
        h /= 2;
        w /= 2;
        out.emplace_back(h, w);
    }
    return out;
}

namespace {

Mat random_fan_in(Rng& rng, int rows, int cols) {
    Mat m(rows, cols);
    const double stddev = std::sqrt(2.0 / cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian(0.0, stddev);
    }
    return m;
}

}  // namespace

ModelParams init_model(const BackboneConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "model-init"));
    ModelParams p;
    int c_in = cfg.in_c;
    for (int l = 0; l < cfg.levels; ++l) {
        ConvBlockParams blk;
        blk.in_c = c_in;
        blk.out_c = cfg.widths[l];
        blk.weight = random_fan_in(rng, blk.out_c, c_in * 9);
        blk.bias = Vec::Zero(blk.out_c);
        p.blocks.push_back(std::move(blk));
        c_in = cfg.widths[l];
    }
    p.bottleneck.weight = random_fan_in(rng, cfg.bottleneck_dim, cfg.widths.back());
    p.bottleneck.bias = Vec::Zero(cfg.bottleneck_dim);
    p.classifier.weight = random_fan_in(rng, cfg.num_classes, cfg.bottleneck_dim);
    p.classifier.bias = Vec::Zero(cfg.num_classes);
    return p;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& p) {
    ModelGrads g;
    for (const auto& blk : p.blocks) {
        g.conv_w.emplace_back(Mat::Zero(blk.weight.rows(), blk.weight.cols()));
        g.conv_b.emplace_back(Vec::Zero(blk.bias.size()));
    }
    g.bottleneck_w = Mat::Zero(p.bottleneck.weight.rows(), p.bottleneck.weight.cols());
    g.bottleneck_b = Vec::Zero(p.bottleneck.bias.size());
    g.classifier_w = Mat::Zero(p.classifier.weight.rows(), p.classifier.weight.cols());
    g.classifier_b = Vec::Zero(p.classifier.bias.size());
    return g;
}

void ModelGrads::zero() {
    for (auto& m : conv_w) m.setZero();
    for (auto& v : conv_b) v.setZero();
    bottleneck_w.setZero();
    bottleneck_b.setZero();
    classifier_w.setZero();
    classifier_b.setZero();
}

void block_forward(const ModelParams& params, int level, const Tensor4& in, BlockCache& cache, Tensor4& f_out) {
    const ConvBlockParams& blk = params.blocks[level];
    if (in.c != blk.in_c) throw ShapeError("block " + std::to_string(level + 1) + ": channel mismatch");
    cache.in = in;
    conv3x3_forward(in, blk.weight, blk.bias, cache.conv_out);
    relu_avgpool_forward(cache.conv_out, f_out);
}

void block_backward(const ModelParams& params, int level, const BlockCache& cache,
                    const Tensor4& g_f, ModelGrads& grads, Tensor4& g_in) {
    const ConvBlockParams& blk = params.blocks[level];
    Tensor4 g_conv;
    relu_avgpool_backward(cache.conv_out, g_f, g_conv);
    if (!g_in.same_shape(cache.in)) g_in = Tensor4(cache.in.n, cache.in.c, cache.in.h, cache.in.w);
    g_in.zero();
    conv3x3_backward(cache.in, blk.weight, g_conv, &g_in, &grads.conv_w[level], &grads.conv_b[level]);
}

void head_forward(const ModelParams& params, const Tensor4& f_last, HeadCache& cache) {
    cache.gap = global_avg_pool(f_last);
    cache.p = affine_forward(cache.gap, params.bottleneck.weight, params.bottleneck.bias);
    cache.logits = affine_forward(cache.p, params.classifier.weight, params.classifier.bias);
    cache.probs = softmax(cache.logits);
}

void head_backward(const ModelParams& params, const Tensor4& f_last, const HeadCache& cache,
                   const Mat& g_logits, const Mat* g_p_extra, ModelGrads& grads, Tensor4& g_f_last) {
    Mat g_p;
    affine_backward(cache.p, params.classifier.weight, g_logits, &g_p, &grads.classifier_w, &grads.classifier_b);
    if (g_p_extra) g_p += *g_p_extra;
    Mat g_gap;
    affine_backward(cache.gap, params.bottleneck.weight, g_p, &g_gap, &grads.bottleneck_w, &grads.bottleneck_b);
    global_avg_pool_backward(g_gap, f_last.h, f_last.w, g_f_last);
}

ForwardTrace forward(const ModelParams& params, const BackboneConfig& cfg, const Tensor4& batch,
                     const FeatureTap* tap) {
    if (batch.c != cfg.in_c || batch.h != cfg.in_h || batch.w != cfg.in_w) {
        throw ShapeError("forward: batch shape does not match backbone input");
    }
    ForwardTrace trace;
    trace.pyramid.reserve(cfg.levels);
    Tensor4 cur = batch;
    BlockCache scratch;
    for (int l = 0; l < cfg.levels; ++l) {
        Tensor4 f;
        block_forward(params, l, cur, scratch, f);
        trace.pyramid.push_back(f);
        cur = (tap && *tap) ? (*tap)(l + 1, f) : f;
        if (!cur.same_shape(trace.pyramid.back())) {
            throw ShapeError("forward: tap changed the feature shape at level " + std::to_string(l + 1));
        }
    }
    HeadCache head;
    head_forward(params, cur, head);
    trace.bottleneck = head.p;
    trace.logits = head.logits;
    trace.probs = head.probs;
    return trace;
}

std::vector<int> predict(const ModelParams& params, const BackboneConfig& cfg, const Tensor4& batch) {
    ForwardTrace t = forward(params, cfg, batch);
    std::vector<int> out(batch.n);
    for (int b = 0; b < batch.n; ++b) {
        int best = 0;
        // ties break toward the smallest class index
        for (int k = 1; k < t.probs.cols(); ++k) {
            if (t.probs(b, k) > t.probs(b, best)) best = k;
        }
        out[b] = best;
    }
    return out;
}

}  // namespace cupi
