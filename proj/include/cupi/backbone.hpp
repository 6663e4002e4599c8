#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "cupi/nn_ops.hpp"
#include "cupi/tensor.hpp"

namespace cupi {

// Pyramid feature extractor: L blocks of (3x3 conv, ReLU, 2x2 average pool),
// a global-average-pool bottleneck affine and a classifier affine.
struct BackboneConfig {
    int levels = 3;
    std::vector<int> widths = {16, 32, 64};
    int bottleneck_dim = 64;
    int num_classes = 10;
    int in_h = 28, in_w = 28, in_c = 1;
    std::uint64_t seed = 0;

    void validate() const;
    // Post-pool (h, w) per level.
    std::vector<std::pair<int, int>> spatial_sizes() const;
};

struct AffineParams {
    Mat weight;  // (out, in)
    Vec bias;
};

struct ConvBlockParams {
    Mat weight;  // (out_c, in_c*9)
    Vec bias;
    int in_c = 0, out_c = 0;
};

struct ModelParams {
    std::vector<ConvBlockParams> blocks;
    AffineParams bottleneck;
    AffineParams classifier;
};

struct ModelGrads {
    std::vector<Mat> conv_w;
    std::vector<Vec> conv_b;
    Mat bottleneck_w;
    Vec bottleneck_b;
    Mat classifier_w;
    Vec classifier_b;

    static ModelGrads zeros_like(const ModelParams& p);
    void zero();
};

// Inference-facing trace: all pyramid features, bottleneck vector, logits and
// softmax probabilities.
struct ForwardTrace {
    std::vector<Tensor4> pyramid;
    Mat bottleneck;
    Mat logits;
    Mat probs;
};

// Optional per-level feature substitution: receives (level, f^l) after block
// `level` and returns the map fed to block level+1.
using FeatureTap = std::function<Tensor4(int level, const Tensor4& f)>;

ModelParams init_model(const BackboneConfig& cfg);

ForwardTrace forward(const ModelParams& params, const BackboneConfig& cfg, const Tensor4& batch,
                     const FeatureTap* tap = nullptr);

std::vector<int> predict(const ModelParams& params, const BackboneConfig& cfg, const Tensor4& batch);

// ---- Training-grade forward/backward ----------------------------------------
// The trainer runs blocks one at a time so it can splice generator outputs
// between levels; each cache keeps what backward needs.

struct BlockCache {
    Tensor4 in;        // conv input (previous feature map, possibly substituted)
    Tensor4 conv_out;  // pre-activation
};

struct HeadCache {
    Mat gap;
    Mat p;
    Mat logits;
    Mat probs;
};

// Runs block l (0-based) on `in`; fills cache and the pooled feature map.
void block_forward(const ModelParams& params, int level, const Tensor4& in, BlockCache& cache, Tensor4& f_out);
// g_f is dL/d(pooled output); accumulates parameter grads, writes dL/d(input).
void block_backward(const ModelParams& params, int level, const BlockCache& cache,
                    const Tensor4& g_f, ModelGrads& grads, Tensor4& g_in);

void head_forward(const ModelParams& params, const Tensor4& f_last, HeadCache& cache);
// g_logits is dL/dlogits; g_p_extra (optional) adds a direct dL/dp term.
// Writes dL/d(f_last) and accumulates parameter grads.
void head_backward(const ModelParams& params, const Tensor4& f_last, const HeadCache& cache,
                   const Mat& g_logits, const Mat* g_p_extra, ModelGrads& grads, Tensor4& g_f_last);

}  // namespace cupi
