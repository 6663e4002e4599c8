#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cupi/dataset.hpp"
#include "cupi/rng.hpp"

using namespace cupi;

namespace {

LabeledDataset tiny_dataset(int n, int channels = 1, int hw = 8) {
    LabeledDataset ds;
    ds.images = Tensor4(n, channels, hw, hw);
    ds.labels.resize(n);
    ds.sample_index.resize(n);
    Rng rng(42);
    for (auto& x : ds.images.v) x = rng.uniform();
    for (int i = 0; i < n; ++i) {
        ds.labels[i] = i % 10;
        ds.sample_index[i] = i;
    }
    return ds;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("idx round trip stays on the quantization grid") {
    LabeledDataset ds = tiny_dataset(4);
    const auto img = temp_file("cupi_test_images.idx");
    const auto lab = temp_file("cupi_test_labels.idx");
    save_idx_dataset(ds, img.string(), lab.string());
    LabeledDataset back = load_idx_dataset(img.string(), lab.string());

    REQUIRE(back.size() == 4);
    CHECK(back.sample_index == std::vector<int>{0, 1, 2, 3});
    CHECK(back.labels == ds.labels);
    for (std::size_t k = 0; k < ds.images.v.size(); ++k) {
        CHECK(std::abs(back.images.v[k] - ds.images.v[k]) <= 0.5 / 255.0 + 1e-12);
    }
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
}

TEST_CASE("idx rescale endpoints and bad magic") {
    const auto img = temp_file("cupi_endpoints_images.idx");
    const auto lab = temp_file("cupi_endpoints_labels.idx");
    {
        LabeledDataset ds;
        ds.images = Tensor4(1, 1, 1, 2);
        ds.images.v = {1.0, 0.0};
        ds.labels = {3};
        ds.sample_index = {0};
        save_idx_dataset(ds, img.string(), lab.string());
    }
    LabeledDataset back = load_idx_dataset(img.string(), lab.string());
    CHECK(back.images.v[0] == doctest::Approx(1.0));
    CHECK(back.images.v[1] == doctest::Approx(0.0));

    // corrupt the image magic
    {
        std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        const char bad[4] = {0, 0, 9, 9};
        f.write(bad, 4);
    }
    CHECK_THROWS_AS(load_idx_dataset(img.string(), lab.string()), FormatError);
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
}

TEST_CASE("idx image/label count mismatch is a format error") {
    const auto img = temp_file("cupi_mismatch_images.idx");
    const auto lab = temp_file("cupi_mismatch_labels.idx");
    LabeledDataset ds = tiny_dataset(3);
    save_idx_dataset(ds, img.string(), lab.string());
    LabeledDataset two = tiny_dataset(2);
    const auto lab2 = temp_file("cupi_mismatch_labels2.idx");
    const auto img2 = temp_file("cupi_mismatch_images2.idx");
    save_idx_dataset(two, img2.string(), lab2.string());
    CHECK_THROWS_AS(load_idx_dataset(img.string(), lab2.string()), FormatError);
    for (auto p : {img, lab, img2, lab2}) std::filesystem::remove(p);
}

TEST_CASE("domain shifts preserve labels, ids and determinism") {
    LabeledDataset ds = tiny_dataset(6, 3);
    for (ShiftKind kind : {ShiftKind::color_invert, ShiftKind::channel_permute, ShiftKind::hue_rotate,
                           ShiftKind::additive_texture}) {
        DomainShiftSpec spec{kind, 5, 0.7};
        LabeledDataset a = apply_domain_shift(ds, spec);
        LabeledDataset b = apply_domain_shift(ds, spec);
        CHECK(a.labels == ds.labels);
        CHECK(a.sample_index == ds.sample_index);
        CHECK(a.tag == DomainTag::unauthorized);
        CHECK(a.images.v == b.images.v);  // bit-identical
        for (double x : a.images.v) CHECK((x >= 0.0 && x <= 1.0));
    }
}

TEST_CASE("color inversion flips intensities") {
    LabeledDataset ds = tiny_dataset(1);
    ds.images.v[0] = 0.2;
    DomainShiftSpec spec{ShiftKind::color_invert, 0, 1.0};
    LabeledDataset out = apply_domain_shift(ds, spec);
    CHECK(out.images.v[0] == doctest::Approx(0.8));
}

TEST_CASE("channel permutation is the identity on grayscale") {
    LabeledDataset ds = tiny_dataset(3, 1);
    DomainShiftSpec spec{ShiftKind::channel_permute, 9, 1.0};
    LabeledDataset out = apply_domain_shift(ds, spec);
    CHECK(out.images.v == ds.images.v);
}

TEST_CASE("watermark overwrite is idempotent and exact") {
    LabeledDataset ds = tiny_dataset(2, 1, 8);
    ds.images.zero();
    WatermarkPatchSpec patch = make_solid_patch(0, 0, 4, 4, 1, 1.0);
    LabeledDataset once = apply_watermark(ds, patch);
    LabeledDataset twice = apply_watermark(once, patch);
    CHECK(once.images.v == twice.images.v);
    CHECK(once.labels == ds.labels);

    int changed = 0;
    for (std::size_t k = 0; k < once.images.v.size(); ++k) {
        if (once.images.v[k] != 0.0) {
            ++changed;
            CHECK(once.images.v[k] == 1.0);
        }
    }
    CHECK(changed == 2 * 16);  // 16 pixels per sample, 2 samples, 1 channel
}

TEST_CASE("zero-size watermark leaves the dataset unchanged") {
    LabeledDataset ds = tiny_dataset(2);
    WatermarkPatchSpec patch = make_solid_patch(0, 0, 0, 0, 1, 1.0);
    LabeledDataset out = apply_watermark(ds, patch);
    CHECK(out.images.v == ds.images.v);
}

TEST_CASE("out-of-bounds watermark raises") {
    LabeledDataset ds = tiny_dataset(1, 1, 8);
    WatermarkPatchSpec patch = make_solid_patch(6, 6, 4, 4, 1, 1.0);
    CHECK_THROWS_AS(apply_watermark(ds, patch), BoundsError);
}

TEST_CASE("restyle arithmetic matches the hand computation") {
    // single channel [0.25, 0.75]: mu=0.5 sigma=0.25; eps_mu=0.1, eps_sigma=0
    std::vector<double> src = {0.25, 0.75};
    std::vector<double> dst(2);
    restyle_image(src.data(), dst.data(), 1, 2, {0.1}, {0.0});
    CHECK(dst[0] == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(dst[1] == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("restyle with zero noise is the identity when nothing clips") {
    std::vector<double> src = {0.2, 0.4, 0.6, 0.8};
    std::vector<double> dst(4);
    restyle_image(src.data(), dst.data(), 1, 4, {0.0}, {0.0});
    for (int k = 0; k < 4; ++k) CHECK(dst[k] == doctest::Approx(src[k]).epsilon(1e-12));
}

TEST_CASE("synthesized set is deterministic and label-faithful") {
    LabeledDataset ds = tiny_dataset(32);
    SynthesisSpec spec{0.4, true, 17};
    LabeledDataset a = synthesize_unauthorized(ds, spec);
    LabeledDataset b = synthesize_unauthorized(ds, spec);
    CHECK(a.images.v == b.images.v);
    CHECK(a.tag == DomainTag::synthesized);
    CHECK(a.label_histogram() == ds.label_histogram());
    CHECK_THROWS_AS(synthesize_unauthorized(ds, SynthesisSpec{0.0, true, 1}), ConfigError);
}

TEST_CASE("synthetic digits are balanced enough and reproducible") {
    LabeledDataset a = make_synthetic_digits(500, 3);
    LabeledDataset b = make_synthetic_digits(500, 3);
    CHECK(a.images.v == b.images.v);
    a.validate();
    const auto hist = a.label_histogram();
    for (int k = 0; k < 10; ++k) CHECK(hist[k] > 20);
}

TEST_CASE("concat reindexes and subset gathers") {
    LabeledDataset a = tiny_dataset(3);
    LabeledDataset b = tiny_dataset(2);
    LabeledDataset c = concat_datasets({&a, &b}, DomainTag::unauthorized);
    CHECK(c.size() == 5);
    c.validate();
    LabeledDataset s = subset(c, {4, 0});
    CHECK(s.size() == 2);
    CHECK(s.labels[0] == b.labels[1]);
    CHECK(s.labels[1] == a.labels[0]);
}
