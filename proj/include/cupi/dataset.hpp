#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cupi/tensor.hpp"

namespace cupi {

enum class DomainTag { authorized, cupi, unauthorized, synthesized };

const char* to_string(DomainTag tag);

// A labeled image set. Images are (N, Cin, H, W) intensities in [0,1];
// sample_index is a stable per-sample id and always a permutation of 0..N-1.
struct LabeledDataset {
    Tensor4 images;
    std::vector<int> labels;
    std::vector<int> sample_index;
    int num_classes = 10;
    DomainTag tag = DomainTag::authorized;

    int size() const { return images.n; }
    void validate() const;
    std::vector<int> label_histogram() const;
};

// Rectangular overwrite patch. `overwrite` documents the only supported blend
// mode; alpha blending is out of scope.
struct WatermarkPatchSpec {
    int row = 0, col = 0;
    int height = 0, width = 0;
    Tensor4 pattern;  // (1, Cin, height, width), intensities in [0,1]
    bool overwrite = true;

    void validate() const;
};

WatermarkPatchSpec make_solid_patch(int row, int col, int height, int width, int channels, double value);
WatermarkPatchSpec make_checker_patch(int row, int col, int height, int width, int channels, double value);

enum class ShiftKind { color_invert, channel_permute, hue_rotate, additive_texture };

ShiftKind shift_kind_from_string(const std::string& s);
const char* to_string(ShiftKind kind);

// Deterministic pixel-space transform standing in for an acquisition shift.
// The output is a pure function of (input, kind, seed, magnitude).
struct DomainShiftSpec {
    ShiftKind kind = ShiftKind::color_invert;
    std::uint64_t seed = 0;
    double magnitude = 1.0;

    void validate() const;
    std::string name() const;
};

// Image-level restyling with Gaussian-sampled target statistics.
struct SynthesisSpec {
    double noise_std = 0.35;
    bool per_channel = true;
    std::uint64_t seed = 0;

    void validate() const;
};

// ---- IDX ingestion -------------------------------------------------------
// Image file: big-endian magic 0x00000803, dims [N, H, W], unsigned bytes.
// Label file: magic 0x00000801, dims [N]. Grayscale only.

LabeledDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);
void save_idx_dataset(const LabeledDataset& ds, const std::string& images_path, const std::string& labels_path);

// ---- Transforms ----------------------------------------------------------

LabeledDataset apply_domain_shift(const LabeledDataset& ds, const DomainShiftSpec& spec);
LabeledDataset apply_watermark(const LabeledDataset& ds, const WatermarkPatchSpec& patch);
LabeledDataset synthesize_unauthorized(const LabeledDataset& authorized, const SynthesisSpec& spec);

// Core of synthesize_unauthorized with explicit per-channel offsets:
// out = ((x - mu) / sigma) * (sigma * exp(eps_sigma)) + (mu + eps_mu), clipped
// to [0,1]. Exposed so the restyle arithmetic can be checked directly.
void restyle_image(const double* src, double* dst, int channels, int spatial,
                   const std::vector<double>& eps_mu, const std::vector<double>& eps_sigma,
                   bool clip = true);

// ---- Set algebra ---------------------------------------------------------

// Concatenation; sample_index is reassigned to 0..N-1 in concatenation order.
LabeledDataset concat_datasets(const std::vector<const LabeledDataset*>& parts, DomainTag tag);

// Rows at the given positions; sample_index reassigned to 0..n-1.
LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& rows);

LabeledDataset retag(LabeledDataset ds, DomainTag tag);

// ---- In-process synthetic digit source ------------------------------------
// Deterministic 28x28 glyph renderer (10 classes) with affine jitter, stroke
// intensity variation and pixel noise. channels=3 tints each sample with a
// per-sample hue so channel-sensitive shifts have something to act on.
LabeledDataset make_synthetic_digits(int n, std::uint64_t seed, int channels = 1);

}  // namespace cupi
