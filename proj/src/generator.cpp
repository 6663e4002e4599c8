#include "cupi/generator.hpp"

#include "cupi/errors.hpp"
#include "cupi/nn_ops.hpp"

namespace cupi {

GeneratorParams init_generator(const BackboneConfig& cfg) {
    GeneratorParams p;
    for (int l = 0; l < cfg.levels; ++l) {
        const int c = cfg.widths[l];
        LevelGenerator g;
        g.mu_map.weight = Mat::Identity(c, c);
        g.mu_map.bias = Vec::Zero(c);
        g.sigma_map.weight = Mat::Identity(c, c);
        g.sigma_map.bias = Vec::Zero(c);
        p.levels.push_back(std::move(g));
    }
    return p;
}

GeneratorGrads GeneratorGrads::zeros_like(const GeneratorParams& p) {
    GeneratorGrads g;
    for (const auto& lvl : p.levels) {
        g.mu_w.emplace_back(Mat::Zero(lvl.mu_map.weight.rows(), lvl.mu_map.weight.cols()));
        g.mu_b.emplace_back(Vec::Zero(lvl.mu_map.bias.size()));
        g.sigma_w.emplace_back(Mat::Zero(lvl.sigma_map.weight.rows(), lvl.sigma_map.weight.cols()));
        g.sigma_b.emplace_back(Vec::Zero(lvl.sigma_map.bias.size()));
    }
    return g;
}

void GeneratorGrads::zero() {
    for (auto& m : mu_w) m.setZero();
    for (auto& v : mu_b) v.setZero();
    for (auto& m : sigma_w) m.setZero();
    for (auto& v : sigma_b) v.setZero();
}

StyleStats channel_stats(const Tensor4& f) {
    StyleStats s;
    channel_mean_std(f, s.mean, s.stddev);
    return s;
}

Tensor4 remove_style(const Tensor4& f) {
    StyleStats s = channel_stats(f);
    Tensor4 xhat;
    instance_norm_forward(f, s.mean, s.stddev, xhat);
    return xhat;
}

void generator_forward_cached(const StyleStats& stats_s, const Tensor4& f_i, const LevelGenerator& gen,
                              GeneratorCache& cache) {
    if (stats_s.mean.rows() != f_i.n || stats_s.mean.cols() != f_i.c) {
        throw ShapeError("generator: style and content batches must share (B, C)");
    }
    cache.stats_s = stats_s;
    channel_mean_std(f_i, cache.stats_i.mean, cache.stats_i.stddev);
    instance_norm_forward(f_i, cache.stats_i.mean, cache.stats_i.stddev, cache.xhat);
    cache.g_mu = affine_forward(cache.stats_s.mean, gen.mu_map.weight, gen.mu_map.bias);
    cache.g_sigma = affine_forward(cache.stats_s.stddev, gen.sigma_map.weight, gen.sigma_map.bias);

    if (!cache.out.same_shape(f_i)) cache.out = Tensor4(f_i.n, f_i.c, f_i.h, f_i.w);
    const int hw = f_i.spatial();
    for (int b = 0; b < f_i.n; ++b) {
        for (int c = 0; c < f_i.c; ++c) {
            const double* xh = cache.xhat.plane(b, c);
            double* o = cache.out.plane(b, c);
            const double gs = cache.g_sigma(b, c);
            const double gm = cache.g_mu(b, c);
            for (int k = 0; k < hw; ++k) o[k] = xh[k] * gs + gm;
        }
    }
}

Tensor4 generator_forward(const Tensor4& f_s, const Tensor4& f_i, const GeneratorParams& params, int level) {
    if (level < 1 || level > static_cast<int>(params.levels.size())) {
        throw BoundsError("generator: level out of range");
    }
    GeneratorCache cache;
    generator_forward_cached(channel_stats(f_s), f_i, params.levels[level - 1], cache);
    return cache.out;
}

void generator_backward(const Tensor4& f_i, const LevelGenerator& gen, const GeneratorCache& cache,
                        const Tensor4& g_out, Mat& g_mu_w, Vec& g_mu_b, Mat& g_sigma_w, Vec& g_sigma_b,
                        Tensor4& g_f_i, Mat* g_mean_s, Mat* g_stddev_s) {
    const int hw = f_i.spatial();

    // Split the output gradient into the xhat path and the per-channel scalars.
    Tensor4 g_xhat(f_i.n, f_i.c, f_i.h, f_i.w);
    Mat g_gsigma = Mat::Zero(f_i.n, f_i.c);
    Mat g_gmu = Mat::Zero(f_i.n, f_i.c);
    for (int b = 0; b < f_i.n; ++b) {
        for (int c = 0; c < f_i.c; ++c) {
            const double* go = g_out.plane(b, c);
            const double* xh = cache.xhat.plane(b, c);
            double* gx = g_xhat.plane(b, c);
            const double gs = cache.g_sigma(b, c);
            double acc_sigma = 0.0, acc_mu = 0.0;
            for (int k = 0; k < hw; ++k) {
                gx[k] = go[k] * gs;
                acc_sigma += go[k] * xh[k];
                acc_mu += go[k];
            }
            g_gsigma(b, c) = acc_sigma;
            g_gmu(b, c) = acc_mu;
        }
    }

    instance_norm_backward(f_i, cache.stats_i.mean, cache.stats_i.stddev, cache.xhat, g_xhat, g_f_i);

    affine_backward(cache.stats_s.mean, gen.mu_map.weight, g_gmu, g_mean_s, &g_mu_w, &g_mu_b);
    affine_backward(cache.stats_s.stddev, gen.sigma_map.weight, g_gsigma, g_stddev_s, &g_sigma_w, &g_sigma_b);
}

}  // namespace cupi
