#pragma once

#include <vector>

#include "cupi/backbone.hpp"
#include "cupi/tensor.hpp"

namespace cupi {

// Per-sample, per-channel style features: spatial mean and epsilon-floored
// population std of a feature map.
struct StyleStats {
    Mat mean;    // (B, C)
    Mat stddev;  // (B, C)
};

// One learned channel map per statistic and level: out = W * stat + b with W
// square (C x C). Identity-initialized so the fusion starts as plain AdaIN.
struct LevelGenerator {
    AffineParams mu_map;
    AffineParams sigma_map;
};

struct GeneratorParams {
    std::vector<LevelGenerator> levels;
};

struct GeneratorGrads {
    std::vector<Mat> mu_w, sigma_w;
    std::vector<Vec> mu_b, sigma_b;

    static GeneratorGrads zeros_like(const GeneratorParams& p);
    void zero();
};

GeneratorParams init_generator(const BackboneConfig& cfg);

StyleStats channel_stats(const Tensor4& f);

// (f - mean) / std per sample and channel.
Tensor4 remove_style(const Tensor4& f);

// f'_i = remove_style(f_i) * W_sigma(sigma(f_s)) + W_mu(mu(f_s)), the
// transformed per-channel scalars broadcast over spatial positions.
Tensor4 generator_forward(const Tensor4& f_s, const Tensor4& f_i, const GeneratorParams& params, int level);

// ---- Training-grade path ----------------------------------------------------
// The style statistics are passed in explicitly so the trainer can pair
// content rows with permuted style rows.

struct GeneratorCache {
    StyleStats stats_s;   // style source statistics (as paired)
    StyleStats stats_i;   // content stream statistics
    Tensor4 xhat;         // remove_style(f_i)
    Mat g_mu, g_sigma;    // transformed style scalars (B, C)
    Tensor4 out;
};

void generator_forward_cached(const StyleStats& stats_s, const Tensor4& f_i, const LevelGenerator& gen,
                              GeneratorCache& cache);

// Backward through the fusion. Accumulates parameter grads and dL/df_i into
// g_f_i (which must be pre-zeroed or hold a running sum); writes dL/d(mean_s)
// and dL/d(stddev_s) into the optional outputs.
void generator_backward(const Tensor4& f_i, const LevelGenerator& gen, const GeneratorCache& cache,
                        const Tensor4& g_out, Mat& g_mu_w, Vec& g_mu_b, Mat& g_sigma_w, Vec& g_sigma_b,
                        Tensor4& g_f_i, Mat* g_mean_s, Mat* g_stddev_s);

}  // namespace cupi
