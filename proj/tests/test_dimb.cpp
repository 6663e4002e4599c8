#include <doctest.h>

#include "cupi/dimb.hpp"
#include "cupi/rng.hpp"

using namespace cupi;

namespace {

BackboneConfig bank_config() {
    BackboneConfig cfg;
    cfg.levels = 2;
    cfg.widths = {3, 5};
    cfg.bottleneck_dim = 4;
    cfg.num_classes = 3;
    cfg.in_h = 8;
    cfg.in_w = 8;
    return cfg;
}

// Brute-force group means straight from the definition.
Mat oracle_centers(const SampleBank& bank, int num_classes) {
    Mat centers = Mat::Zero(num_classes, bank.dim());
    std::vector<int> counts(num_classes, 0);
    for (int i = 0; i < bank.capacity(); ++i) {
        if (!bank.filled[i]) continue;
        for (int c = 0; c < bank.dim(); ++c) centers(bank.labels[i], c) += bank.rows(i, c);
        counts[bank.labels[i]]++;
    }
    for (int k = 0; k < num_classes; ++k) {
        if (counts[k]) centers.row(k) /= counts[k];
    }
    return centers;
}

}  // namespace

TEST_CASE("single filled row per class makes that row the center") {
    SampleBank bank;
    bank.rows = Mat::Zero(2, 3);
    bank.rows << 1, 2, 3, 4, 5, 6;
    bank.labels = {0, 1};
    bank.filled = {1, 1};
    ClassBank cb = recompute_centers(bank, 2);
    CHECK(cb.centers.row(0) == bank.rows.row(0));
    CHECK(cb.centers.row(1) == bank.rows.row(1));
}

TEST_CASE("two scalar rows with the same label average to their mean") {
    SampleBank bank;
    bank.rows = Mat::Zero(2, 1);
    bank.rows(0, 0) = 1.0;
    bank.rows(1, 0) = 3.0;
    bank.labels = {0, 0};
    bank.filled = {1, 1};
    ClassBank cb = recompute_centers(bank, 1);
    CHECK(cb.centers(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("update replaces rows and recenters exactly") {
    BackboneConfig cfg = bank_config();
    std::vector<int> labels_s = {0, 1, 2, 0};
    std::vector<int> labels_t = {1, 2, 0};
    DIMBState state = make_dimb(cfg, 4, 3, labels_s, labels_t);
    state.initialized = true;
    for (auto& lb : state.levels) {
        std::fill(lb.mu_samples.filled.begin(), lb.mu_samples.filled.end(), 1);
        std::fill(lb.sigma_samples.filled.begin(), lb.sigma_samples.filled.end(), 1);
    }
    std::fill(state.bottleneck_samples.filled.begin(), state.bottleneck_samples.filled.end(), 1);

    // bank rows {1,3} for label 0 -> center 2; replacing the 3 with 5 -> 3
    auto& b0 = state.levels[0].mu_samples;
    b0.rows.setZero();
    b0.rows(0, 0) = 1.0;
    b0.rows(3, 0) = 3.0;
    state.levels[0].mu_centers = recompute_centers(b0, cfg.num_classes);
    CHECK(state.levels[0].mu_centers.centers(0, 0) == doctest::Approx(2.0));

    std::vector<StyleStats> stats(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
        stats[l].mean = Mat::Zero(1, cfg.widths[l]);
        stats[l].stddev = Mat::Zero(1, cfg.widths[l]);
    }
    stats[0].mean(0, 0) = 5.0;
    Mat p = Mat::Zero(1, cfg.bottleneck_dim);
    update_after_batch(state, stats, p, {3}, {1}, {0}, {2});
    CHECK(state.levels[0].mu_centers.centers(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("replacing a row with itself is a fixed point") {
    BackboneConfig cfg = bank_config();
    std::vector<int> labels_s = {0, 1, 2};
    std::vector<int> labels_t = {0, 1, 2};
    DIMBState state = make_dimb(cfg, 3, 3, labels_s, labels_t);
    Rng rng(3);
    for (auto& lb : state.levels) {
        for (auto& v : lb.mu_samples.rows.reshaped()) v = rng.gaussian();
        for (auto& v : lb.sigma_samples.rows.reshaped()) v = rng.gaussian();
        std::fill(lb.mu_samples.filled.begin(), lb.mu_samples.filled.end(), 1);
        std::fill(lb.sigma_samples.filled.begin(), lb.sigma_samples.filled.end(), 1);
        lb.mu_centers = recompute_centers(lb.mu_samples, cfg.num_classes);
        lb.sigma_centers = recompute_centers(lb.sigma_samples, cfg.num_classes);
    }
    std::fill(state.bottleneck_samples.filled.begin(), state.bottleneck_samples.filled.end(), 1);
    state.bottleneck_centers = recompute_centers(state.bottleneck_samples, cfg.num_classes);
    state.initialized = true;

    const Mat before = state.levels[1].mu_centers.centers;
    std::vector<StyleStats> stats(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
        stats[l].mean = Mat(1, cfg.widths[l]);
        stats[l].mean = state.levels[l].mu_samples.rows.row(1);
        stats[l].stddev = state.levels[l].sigma_samples.rows.row(1);
    }
    Mat p = state.bottleneck_samples.rows.row(2);
    update_after_batch(state, stats, p, {1}, {2}, {1}, {2});
    CHECK(state.levels[1].mu_centers.centers == before);
}

TEST_CASE("oracle equivalence after 100 randomized updates") {
    BackboneConfig cfg = bank_config();
    const int n_s = 40, n_t = 25;
    Rng rng(99);
    std::vector<int> labels_s(n_s), labels_t(n_t);
    for (auto& y : labels_s) y = static_cast<int>(rng.below(cfg.num_classes));
    for (auto& y : labels_t) y = static_cast<int>(rng.below(cfg.num_classes));
    DIMBState state = make_dimb(cfg, n_s, n_t, labels_s, labels_t);
    state.initialized = true;

    for (int round = 0; round < 100; ++round) {
        const int bs = 1 + static_cast<int>(rng.below(6));
        std::vector<int> idx_s, idx_t, ls, lt;
        std::vector<char> used_s(n_s, 0), used_t(n_t, 0);
        while (static_cast<int>(idx_s.size()) < bs) {
            int i = static_cast<int>(rng.below(n_s));
            if (used_s[i]) continue;
            used_s[i] = 1;
            idx_s.push_back(i);
            ls.push_back(labels_s[i]);
        }
        while (static_cast<int>(idx_t.size()) < bs) {
            int i = static_cast<int>(rng.below(n_t));
            if (used_t[i]) continue;
            used_t[i] = 1;
            idx_t.push_back(i);
            lt.push_back(labels_t[i]);
        }
        std::vector<StyleStats> stats(cfg.levels);
        for (int l = 0; l < cfg.levels; ++l) {
            stats[l].mean = Mat(bs, cfg.widths[l]);
            stats[l].stddev = Mat(bs, cfg.widths[l]);
            for (int r = 0; r < bs; ++r) {
                for (int c = 0; c < cfg.widths[l]; ++c) {
                    stats[l].mean(r, c) = rng.gaussian();
                    stats[l].stddev(r, c) = std::abs(rng.gaussian()) + 1e-5;
                }
            }
        }
        Mat p(bs, cfg.bottleneck_dim);
        for (int r = 0; r < bs; ++r) {
            for (int c = 0; c < cfg.bottleneck_dim; ++c) p(r, c) = rng.gaussian();
        }
        update_after_batch(state, stats, p, idx_s, idx_t, ls, lt);

        for (const auto& lb : state.levels) {
            const Mat mu_oracle = oracle_centers(lb.mu_samples, cfg.num_classes);
            const Mat sig_oracle = oracle_centers(lb.sigma_samples, cfg.num_classes);
            CHECK((lb.mu_centers.centers - mu_oracle).cwiseAbs().maxCoeff() < 1e-6);
            CHECK((lb.sigma_centers.centers - sig_oracle).cwiseAbs().maxCoeff() < 1e-6);
        }
        const Mat d_oracle = oracle_centers(state.bottleneck_samples, cfg.num_classes);
        CHECK((state.bottleneck_centers.centers - d_oracle).cwiseAbs().maxCoeff() < 1e-6);
    }
    // capacity never changes
    CHECK(state.levels[0].mu_samples.capacity() == n_s);
    CHECK(state.bottleneck_samples.capacity() == n_t);
}

TEST_CASE("disjoint updates commute") {
    BackboneConfig cfg = bank_config();
    std::vector<int> labels_s = {0, 1, 2, 0};
    std::vector<int> labels_t = {0, 1, 2, 1};
    auto fresh = [&] {
        DIMBState s = make_dimb(cfg, 4, 4, labels_s, labels_t);
        s.initialized = true;
        return s;
    };
    auto one_update = [&](DIMBState& s, int idx, double value) {
        std::vector<StyleStats> stats(cfg.levels);
        for (int l = 0; l < cfg.levels; ++l) {
            stats[l].mean = Mat::Constant(1, cfg.widths[l], value);
            stats[l].stddev = Mat::Constant(1, cfg.widths[l], value + 1);
        }
        Mat p = Mat::Constant(1, cfg.bottleneck_dim, value + 2);
        update_after_batch(s, stats, p, {idx}, {idx}, {labels_s[idx]}, {labels_t[idx]});
    };
    DIMBState ab = fresh(), ba = fresh();
    one_update(ab, 1, 2.0);
    one_update(ab, 3, 7.0);
    one_update(ba, 3, 7.0);
    one_update(ba, 1, 2.0);
    CHECK(ab.levels[0].mu_centers.centers == ba.levels[0].mu_centers.centers);
    CHECK(ab.bottleneck_centers.centers == ba.bottleneck_centers.centers);
}

TEST_CASE("class lookup gathers rows and checks bounds") {
    ClassBank bank;
    bank.centers = Mat(2, 3);
    bank.centers << 1, 2, 3, 4, 5, 6;
    Mat rows = lookup_class(bank, {0, 0, 1});
    CHECK(rows.row(0) == bank.centers.row(0));
    CHECK(rows.row(1) == bank.centers.row(0));
    CHECK(rows.row(2) == bank.centers.row(1));
    CHECK_THROWS_AS(lookup_class(bank, {2}), BoundsError);

    // K=1: every lookup returns the single center
    ClassBank single;
    single.centers = Mat::Constant(1, 2, 9.0);
    Mat got = lookup_class(single, {0, 0, 0, 0});
    CHECK(got.rows() == 4);
    for (int r = 0; r < 4; ++r) CHECK(got.row(r) == single.centers.row(0));

    // gather equals the per-element loop on random banks
    Rng rng(7);
    ClassBank rnd;
    rnd.centers = Mat(5, 4);
    for (auto& v : rnd.centers.reshaped()) v = rng.gaussian();
    std::vector<int> labels = {3, 0, 4, 4, 1, 2};
    Mat gathered = lookup_class(rnd, labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (int c = 0; c < 4; ++c) {
            CHECK(gathered(static_cast<Eigen::Index>(i), c) == rnd.centers(labels[i], c));
        }
    }
}

TEST_CASE("out-of-range bank index raises") {
    BackboneConfig cfg = bank_config();
    DIMBState state = make_dimb(cfg, 2, 2, {0, 1}, {0, 1});
    state.initialized = true;
    std::vector<StyleStats> stats(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
        stats[l].mean = Mat::Zero(1, cfg.widths[l]);
        stats[l].stddev = Mat::Zero(1, cfg.widths[l]);
    }
    Mat p = Mat::Zero(1, cfg.bottleneck_dim);
    CHECK_THROWS_AS(update_after_batch(state, stats, p, {5}, {0}, {0}, {0}), BoundsError);
}
