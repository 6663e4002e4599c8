#include <doctest.h>

#include "cupi/backbone.hpp"
#include "cupi/losses.hpp"
#include "cupi/rng.hpp"

using namespace cupi;

namespace {

BackboneConfig tiny_config() {
    BackboneConfig cfg;
    cfg.levels = 2;
    cfg.widths = {4, 8};
    cfg.bottleneck_dim = 6;
    cfg.num_classes = 4;
    cfg.in_h = 8;
    cfg.in_w = 8;
    cfg.in_c = 1;
    cfg.seed = 3;
    return cfg;
}

Tensor4 random_batch(int n, const BackboneConfig& cfg, std::uint64_t seed) {
    Tensor4 x(n, cfg.in_c, cfg.in_h, cfg.in_w);
    Rng rng(seed);
    for (auto& v : x.v) v = rng.uniform();
    return x;
}

// Scalar loss used by the finite-difference check.
double scalar_loss(const ModelParams& p, const BackboneConfig& cfg, const Tensor4& x,
                   const std::vector<int>& labels) {
    ForwardTrace t = forward(p, cfg, x);
    return class_loss(t.probs, labels, 1.0);
}

}  // namespace

TEST_CASE("init is deterministic and validates dimensions") {
    BackboneConfig cfg = tiny_config();
    ModelParams a = init_model(cfg);
    ModelParams b = init_model(cfg);
    CHECK(a.blocks[0].weight == b.blocks[0].weight);
    CHECK(a.classifier.weight == b.classifier.weight);

    BackboneConfig bad = cfg;
    bad.levels = 0;
    bad.widths = {};
    CHECK_THROWS_AS(init_model(bad), ConfigError);

    BackboneConfig mismatch = cfg;
    mismatch.widths = {4};
    CHECK_THROWS_AS(init_model(mismatch), ConfigError);
}

TEST_CASE("pyramid spatial sizes follow the halving arithmetic") {
    BackboneConfig cfg;
    cfg.levels = 3;
    cfg.widths = {16, 32, 64};
    cfg.in_h = 28;
    cfg.in_w = 28;
    const auto sizes = cfg.spatial_sizes();
    CHECK(sizes[0] == std::pair<int, int>{14, 14});
    CHECK(sizes[1] == std::pair<int, int>{7, 7});
    CHECK(sizes[2] == std::pair<int, int>{3, 3});

    ModelParams p = init_model(cfg);
    Tensor4 x(1, 1, 28, 28);
    ForwardTrace t = forward(p, cfg, x);
    CHECK(t.pyramid[0].h == 14);
    CHECK(t.pyramid[1].h == 7);
    CHECK(t.pyramid[2].h == 3);
    CHECK(t.pyramid[2].c == 64);
}

TEST_CASE("zero input with zero biases gives uniform probabilities") {
    BackboneConfig cfg = tiny_config();
    ModelParams p = init_model(cfg);
    Tensor4 x(1, 1, 8, 8);
    ForwardTrace t = forward(p, cfg, x);
    for (int k = 0; k < cfg.num_classes; ++k) {
        CHECK(t.probs(0, k) == doctest::Approx(1.0 / cfg.num_classes).epsilon(1e-9));
    }
}

TEST_CASE("probability rows are normalized") {
    BackboneConfig cfg = tiny_config();
    ModelParams p = init_model(cfg);
    Tensor4 x = random_batch(5, cfg, 11);
    ForwardTrace t = forward(p, cfg, x);
    for (int b = 0; b < 5; ++b) {
        CHECK(t.probs.row(b).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("identity tap leaves the trace unchanged") {
    BackboneConfig cfg = tiny_config();
    ModelParams p = init_model(cfg);
    Tensor4 x = random_batch(3, cfg, 7);
    ForwardTrace plain = forward(p, cfg, x);
    FeatureTap tap = [](int, const Tensor4& f) { return f; };
    ForwardTrace tapped = forward(p, cfg, x, &tap);
    CHECK(plain.logits == tapped.logits);
    for (int l = 0; l < cfg.levels; ++l) CHECK(plain.pyramid[l].v == tapped.pyramid[l].v);
}

TEST_CASE("substituting a level changes only downstream results") {
    BackboneConfig cfg = tiny_config();
    ModelParams p = init_model(cfg);
    Tensor4 x = random_batch(2, cfg, 19);
    ForwardTrace plain = forward(p, cfg, x);
    FeatureTap tap = [](int level, const Tensor4& f) {
        if (level != 1) return f;
        Tensor4 out = f;
        for (auto& v : out.v) v += 0.25;
        return out;
    };
    ForwardTrace tapped = forward(p, cfg, x, &tap);
    CHECK(plain.pyramid[0].v == tapped.pyramid[0].v);  // level 1 itself is pre-substitution
    CHECK(plain.pyramid[1].v != tapped.pyramid[1].v);
    CHECK(plain.logits != tapped.logits);
}

TEST_CASE("predict breaks ties toward the smallest class index") {
    BackboneConfig cfg = tiny_config();
    ModelParams p = init_model(cfg);
    // zero input -> exactly uniform probabilities -> argmax must be class 0
    Tensor4 x(1, 1, 8, 8);
    CHECK(predict(p, cfg, x) == std::vector<int>{0});
}

TEST_CASE("analytic gradients match central finite differences") {
    BackboneConfig cfg = tiny_config();
    ModelParams params = init_model(cfg);
    Tensor4 x = random_batch(2, cfg, 23);
    const std::vector<int> labels = {1, 3};

    // analytic gradients through the training-grade path
    ModelGrads grads = ModelGrads::zeros_like(params);
    {
        std::vector<BlockCache> caches(cfg.levels);
        std::vector<Tensor4> feats(cfg.levels);
        const Tensor4* cur = &x;
        for (int l = 0; l < cfg.levels; ++l) {
            block_forward(params, l, *cur, caches[l], feats[l]);
            cur = &feats[l];
        }
        HeadCache head;
        head_forward(params, feats.back(), head);
        const Mat g_logits = class_loss_logit_grad(head.probs, labels, 1.0);
        Tensor4 g_feat;
        head_backward(params, feats.back(), head, g_logits, nullptr, grads, g_feat);
        for (int l = cfg.levels - 1; l >= 0; --l) {
            Tensor4 g_prev;
            block_backward(params, l, caches[l], g_feat, grads, g_prev);
            g_feat = std::move(g_prev);
        }
    }

    const double h = 1e-5;
    auto check_span = [&](double* values, const double* analytic, std::size_t n, const char* what) {
        for (std::size_t k = 0; k < n; k += (n > 64 ? 7 : 1)) {  // sampled sweep on big spans
            const double save = values[k];
            values[k] = save + h;
            const double up = scalar_loss(params, cfg, x, labels);
            values[k] = save - h;
            const double down = scalar_loss(params, cfg, x, labels);
            values[k] = save;
            const double fd = (up - down) / (2 * h);
            const double rel = std::abs(fd - analytic[k]) / std::max({std::abs(fd), std::abs(analytic[k]), 1e-6});
            INFO(what << " index " << k);
            CHECK(rel <= 1e-4);
        }
    };
    for (int l = 0; l < cfg.levels; ++l) {
        check_span(params.blocks[l].weight.data(), grads.conv_w[l].data(), grads.conv_w[l].size(), "conv w");
        check_span(params.blocks[l].bias.data(), grads.conv_b[l].data(), grads.conv_b[l].size(), "conv b");
    }
    check_span(params.bottleneck.weight.data(), grads.bottleneck_w.data(), grads.bottleneck_w.size(), "bn w");
    check_span(params.bottleneck.bias.data(), grads.bottleneck_b.data(), grads.bottleneck_b.size(), "bn b");
    check_span(params.classifier.weight.data(), grads.classifier_w.data(), grads.classifier_w.size(), "cls w");
    check_span(params.classifier.bias.data(), grads.classifier_b.data(), grads.classifier_b.size(), "cls b");
}

TEST_CASE("forward is deterministic") {
    BackboneConfig cfg = tiny_config();
    ModelParams p = init_model(cfg);
    Tensor4 x = random_batch(4, cfg, 31);
    ForwardTrace a = forward(p, cfg, x);
    ForwardTrace b = forward(p, cfg, x);
    CHECK(a.logits == b.logits);
}
