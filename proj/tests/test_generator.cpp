#include <doctest.h>

#include "cupi/generator.hpp"
#include "cupi/rng.hpp"

using namespace cupi;

namespace {

Tensor4 make_map(int n, int c, int h, int w, std::uint64_t seed) {
    Tensor4 f(n, c, h, w);
    Rng rng(seed);
    for (auto& v : f.v) v = rng.gaussian(0.0, 1.0);
    return f;
}

LevelGenerator identity_gen(int c) {
    LevelGenerator g;
    g.mu_map.weight = Mat::Identity(c, c);
    g.mu_map.bias = Vec::Zero(c);
    g.sigma_map.weight = Mat::Identity(c, c);
    g.sigma_map.bias = Vec::Zero(c);
    return g;
}

}  // namespace

TEST_CASE("channel stats on the 2x2 oracle map") {
    Tensor4 f(1, 1, 2, 2);
    f.v = {1, 2, 3, 4};
    StyleStats s = channel_stats(f);
    CHECK(s.mean(0, 0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(s.stddev(0, 0) == doctest::Approx(1.118033988749895).epsilon(1e-9));
}

TEST_CASE("constant map hits the sigma floor") {
    Tensor4 f(1, 1, 3, 3);
    std::fill(f.v.begin(), f.v.end(), 0.7);
    StyleStats s = channel_stats(f);
    CHECK(s.mean(0, 0) == doctest::Approx(0.7));
    CHECK(s.stddev(0, 0) == doctest::Approx(1e-5));
}

TEST_CASE("stats are per-sample: permuting the batch permutes rows") {
    Tensor4 f = make_map(3, 2, 4, 4, 5);
    StyleStats s = channel_stats(f);
    Tensor4 g(3, 2, 4, 4);
    // swap samples 0 and 2
    std::copy(f.sample(2), f.sample(2) + f.sample_stride(), g.sample(0));
    std::copy(f.sample(1), f.sample(1) + f.sample_stride(), g.sample(1));
    std::copy(f.sample(0), f.sample(0) + f.sample_stride(), g.sample(2));
    StyleStats t = channel_stats(g);
    CHECK(t.mean.row(0) == s.mean.row(2));
    CHECK(t.mean.row(2) == s.mean.row(0));
    CHECK(t.stddev.row(1) == s.stddev.row(1));
}

TEST_CASE("remove_style matches the normalized oracle") {
    Tensor4 f(1, 1, 2, 2);
    f.v = {1, 2, 3, 4};
    Tensor4 out = remove_style(f);
    CHECK(out.v[0] == doctest::Approx(-1.3416407864998738).epsilon(1e-6));
    CHECK(out.v[1] == doctest::Approx(-0.4472135954999579).epsilon(1e-6));
    CHECK(out.v[2] == doctest::Approx(0.4472135954999579).epsilon(1e-6));
    CHECK(out.v[3] == doctest::Approx(1.3416407864998738).epsilon(1e-6));
}

TEST_CASE("remove_style is idempotent and zeroes constants") {
    Tensor4 f = make_map(2, 3, 4, 4, 9);
    Tensor4 once = remove_style(f);
    Tensor4 twice = remove_style(once);
    for (std::size_t k = 0; k < once.v.size(); ++k) {
        CHECK(std::abs(once.v[k] - twice.v[k]) < 1e-6);
    }
    Tensor4 c(1, 1, 2, 2);
    std::fill(c.v.begin(), c.v.end(), 5.0);
    Tensor4 z = remove_style(c);
    for (double v : z.v) CHECK(v == 0.0);
}

TEST_CASE("normalized output has zero mean and unit std") {
    Tensor4 f = make_map(2, 2, 5, 5, 13);
    Tensor4 out = remove_style(f);
    StyleStats s = channel_stats(out);
    for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 2; ++c) {
            CHECK(std::abs(s.mean(b, c)) < 1e-4);
            CHECK(std::abs(s.stddev(b, c) - 1.0) < 1e-4);
        }
    }
}

TEST_CASE("generator with identity maps and self style is the identity") {
    GeneratorParams params;
    params.levels.push_back(identity_gen(3));
    Tensor4 f = make_map(2, 3, 4, 4, 21);
    Tensor4 out = generator_forward(f, f, params, 1);
    for (std::size_t k = 0; k < f.v.size(); ++k) {
        CHECK(std::abs(out.v[k] - f.v[k]) < 1e-5);
    }
}

TEST_CASE("generator evaluates the two-pixel oracle") {
    // content [1,-1]: mu=0 sigma=1; style mu=5 sigma=2 (constructed) -> [7,3]
    GeneratorParams params;
    params.levels.push_back(identity_gen(1));
    Tensor4 f_i(1, 1, 1, 2);
    f_i.v = {1.0, -1.0};
    Tensor4 f_s(1, 1, 1, 2);
    f_s.v = {7.0, 3.0};  // mean 5, population std 2
    Tensor4 out = generator_forward(f_s, f_i, params, 1);
    CHECK(out.v[0] == doctest::Approx(7.0).epsilon(1e-9));
    CHECK(out.v[1] == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("generator keeps shapes and transplants style") {
    GeneratorParams params;
    params.levels.push_back(identity_gen(4));
    Tensor4 f_s = make_map(3, 4, 5, 5, 33);
    Tensor4 f_i = make_map(3, 4, 5, 5, 34);
    Tensor4 out = generator_forward(f_s, f_i, params, 1);
    CHECK(out.same_shape(f_i));

    StyleStats target = channel_stats(f_s);
    StyleStats got = channel_stats(out);
    for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 4; ++c) {
            CHECK(std::abs(got.mean(b, c) - target.mean(b, c)) < 1e-4);
            CHECK(std::abs(got.stddev(b, c) - target.stddev(b, c)) < 1e-4);
        }
    }
    // semantics preserved: normalizing the output recovers the normalized input
    Tensor4 sem_out = remove_style(out);
    Tensor4 sem_in = remove_style(f_i);
    for (std::size_t k = 0; k < sem_in.v.size(); ++k) {
        CHECK(std::abs(sem_out.v[k] - sem_in.v[k]) < 1e-4);
    }
}

TEST_CASE("row-wise pairing: permuting both inputs permutes the output") {
    GeneratorParams params;
    params.levels.push_back(identity_gen(2));
    Tensor4 f_s = make_map(2, 2, 3, 3, 41);
    Tensor4 f_i = make_map(2, 2, 3, 3, 42);
    Tensor4 out = generator_forward(f_s, f_i, params, 1);

    auto swap_batch = [](const Tensor4& t) {
        Tensor4 r(t.n, t.c, t.h, t.w);
        std::copy(t.sample(1), t.sample(1) + t.sample_stride(), r.sample(0));
        std::copy(t.sample(0), t.sample(0) + t.sample_stride(), r.sample(1));
        return r;
    };
    Tensor4 swapped = generator_forward(swap_batch(f_s), swap_batch(f_i), params, 1);
    Tensor4 expected = swap_batch(out);
    for (std::size_t k = 0; k < expected.v.size(); ++k) {
        CHECK(swapped.v[k] == doctest::Approx(expected.v[k]).epsilon(1e-12));
    }
}

TEST_CASE("channel mismatch between style and content raises") {
    GeneratorParams params;
    params.levels.push_back(identity_gen(2));
    Tensor4 f_s = make_map(1, 3, 2, 2, 1);
    Tensor4 f_i = make_map(1, 2, 2, 2, 2);
    CHECK_THROWS_AS(generator_forward(f_s, f_i, params, 1), ShapeError);
}

TEST_CASE("generator gradients match finite differences") {
    const int B = 2, C = 3, H = 3, W = 3;
    LevelGenerator gen = identity_gen(C);
    // break the symmetry of the identity init
    Rng rng(77);
    for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
            gen.mu_map.weight(i, j) += 0.1 * rng.gaussian();
            gen.sigma_map.weight(i, j) += 0.1 * rng.gaussian();
        }
        gen.mu_map.bias(i) = 0.05 * rng.gaussian();
        gen.sigma_map.bias(i) = 0.05 * rng.gaussian();
    }
    Tensor4 f_s = make_map(B, C, H, W, 51);
    Tensor4 f_i = make_map(B, C, H, W, 52);
    Tensor4 weights = make_map(B, C, H, W, 53);  // fixed projection for a scalar loss

    auto loss_of = [&](const Tensor4& fs, const Tensor4& fi, const LevelGenerator& g) {
        GeneratorCache cache;
        generator_forward_cached(channel_stats(fs), fi, g, cache);
        double acc = 0.0;
        for (std::size_t k = 0; k < cache.out.v.size(); ++k) acc += cache.out.v[k] * weights.v[k];
        return acc;
    };

    // analytic
    GeneratorCache cache;
    generator_forward_cached(channel_stats(f_s), f_i, gen, cache);
    Mat g_mu_w = Mat::Zero(C, C), g_sigma_w = Mat::Zero(C, C);
    Vec g_mu_b = Vec::Zero(C), g_sigma_b = Vec::Zero(C);
    Tensor4 g_f_i(B, C, H, W);
    Mat g_mean_s, g_stddev_s;
    generator_backward(f_i, gen, cache, weights, g_mu_w, g_mu_b, g_sigma_w, g_sigma_b, g_f_i, &g_mean_s,
                       &g_stddev_s);
    Tensor4 g_f_s(B, C, H, W);
    StyleStats stats_s = channel_stats(f_s);
    channel_mean_std_backward(f_s, stats_s.mean, stats_s.stddev, g_mean_s, g_stddev_s, g_f_s);

    const double h = 1e-5;
    auto rel_err = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
    };

    for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
            LevelGenerator gp = gen, gm = gen;
            gp.mu_map.weight(i, j) += h;
            gm.mu_map.weight(i, j) -= h;
            CHECK(rel_err((loss_of(f_s, f_i, gp) - loss_of(f_s, f_i, gm)) / (2 * h), g_mu_w(i, j)) <= 1e-4);
            gp = gen;
            gm = gen;
            gp.sigma_map.weight(i, j) += h;
            gm.sigma_map.weight(i, j) -= h;
            CHECK(rel_err((loss_of(f_s, f_i, gp) - loss_of(f_s, f_i, gm)) / (2 * h), g_sigma_w(i, j)) <= 1e-4);
        }
        LevelGenerator gp = gen, gm = gen;
        gp.mu_map.bias(i) += h;
        gm.mu_map.bias(i) -= h;
        CHECK(rel_err((loss_of(f_s, f_i, gp) - loss_of(f_s, f_i, gm)) / (2 * h), g_mu_b(i)) <= 1e-4);
        gp = gen;
        gm = gen;
        gp.sigma_map.bias(i) += h;
        gm.sigma_map.bias(i) -= h;
        CHECK(rel_err((loss_of(f_s, f_i, gp) - loss_of(f_s, f_i, gm)) / (2 * h), g_sigma_b(i)) <= 1e-4);
    }
    for (std::size_t k = 0; k < f_i.v.size(); k += 3) {
        Tensor4 fp = f_i, fm = f_i;
        fp.v[k] += h;
        fm.v[k] -= h;
        CHECK(rel_err((loss_of(f_s, fp, gen) - loss_of(f_s, fm, gen)) / (2 * h), g_f_i.v[k]) <= 1e-4);
        fp = f_s;
        fm = f_s;
        fp.v[k] += h;
        fm.v[k] -= h;
        CHECK(rel_err((loss_of(fp, f_i, gen) - loss_of(fm, f_i, gen)) / (2 * h), g_f_s.v[k]) <= 1e-4);
    }
}
