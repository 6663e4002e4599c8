#include "cupi/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cupi/rng.hpp"

namespace cupi {

namespace {

constexpr double kSigmaFloor = 1e-5;

double clip01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

const char* to_string(DomainTag tag) {
    switch (tag) {
        case DomainTag::authorized: return "authorized";
        case DomainTag::cupi: return "cupi";
        case DomainTag::unauthorized: return "unauthorized";
        case DomainTag::synthesized: return "synthesized";
    }
    return "?";
}

void LabeledDataset::validate() const {
    const std::size_t n = static_cast<std::size_t>(images.n);
    if (labels.size() != n || sample_index.size() != n) {
        throw ConfigError("dataset: images/labels/sample_index sizes differ");
    }
    std::vector<char> seen(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw ConfigError("dataset: label out of range at row " + std::to_string(i));
        }
        int idx = sample_index[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= n || seen[idx]) {
            throw ConfigError("dataset: sample_index is not a permutation of 0.." + std::to_string(n - 1));
        }
        seen[idx] = 1;
    }
    for (double x : images.v) {
        if (!(x >= 0.0 && x <= 1.0)) {
            throw ConfigError("dataset: intensity outside [0,1]");
        }
    }
}

std::vector<int> LabeledDataset::label_histogram() const {
    std::vector<int> hist(num_classes, 0);
    for (int y : labels) hist[y]++;
    return hist;
}

void WatermarkPatchSpec::validate() const {
    if (height < 0 || width < 0) throw ConfigError("watermark: negative patch size");
    if (!overwrite) throw ConfigError("watermark: only overwrite blending is supported");
    if (height == 0 || width == 0) return;
    if (pattern.n != 1 || pattern.h != height || pattern.w != width) {
        throw ConfigError("watermark: pattern block does not match patch size");
    }
    for (double x : pattern.v) {
        if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("watermark: pattern intensity outside [0,1]");
    }
}

WatermarkPatchSpec make_solid_patch(int row, int col, int height, int width, int channels, double value) {
    WatermarkPatchSpec p;
    p.row = row;
    p.col = col;
    p.height = height;
    p.width = width;
    p.pattern = Tensor4(1, channels, height, width);
    std::fill(p.pattern.v.begin(), p.pattern.v.end(), clip01(value));
    return p;
}

WatermarkPatchSpec make_checker_patch(int row, int col, int height, int width, int channels, double value) {
    WatermarkPatchSpec p = make_solid_patch(row, col, height, width, channels, value);
    for (int c = 0; c < channels; ++c) {
        for (int i = 0; i < height; ++i) {
            for (int j = 0; j < width; ++j) {
                if ((i + j) % 2 == 1) p.pattern.at(0, c, i, j) = 0.0;
            }
        }
    }
    return p;
}

ShiftKind shift_kind_from_string(const std::string& s) {
    if (s == "color-invert") return ShiftKind::color_invert;
    if (s == "channel-permute") return ShiftKind::channel_permute;
    if (s == "hue-rotate") return ShiftKind::hue_rotate;
    if (s == "additive-texture") return ShiftKind::additive_texture;
    throw ConfigError("unknown domain shift kind: " + s);
}

const char* to_string(ShiftKind kind) {
    switch (kind) {
        case ShiftKind::color_invert: return "color-invert";
        case ShiftKind::channel_permute: return "channel-permute";
        case ShiftKind::hue_rotate: return "hue-rotate";
        case ShiftKind::additive_texture: return "additive-texture";
    }
    return "?";
}

void DomainShiftSpec::validate() const {
    if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
        throw ConfigError("domain shift: magnitude must be in [0,1]");
    }
}

std::string DomainShiftSpec::name() const {
    return std::string(to_string(kind)) + "@" + std::to_string(magnitude);
}

void SynthesisSpec::validate() const {
    if (!(noise_std > 0.0)) throw ConfigError("synthesis: noise_std must be > 0");
}

// ---- IDX ------------------------------------------------------------------

namespace {

std::uint32_t read_u32_be(std::istream& in, const char* field) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(std::string("idx: truncated ") + field);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x >> 24), static_cast<unsigned char>(x >> 16),
                          static_cast<unsigned char>(x >> 8), static_cast<unsigned char>(x)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

LabeledDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("idx: cannot open image file " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("idx: cannot open label file " + labels_path);

    if (read_u32_be(img, "image magic") != kImageMagic) {
        throw FormatError("idx: bad image magic in " + images_path);
    }
    const std::uint32_t n = read_u32_be(img, "image count");
    const std::uint32_t h = read_u32_be(img, "image rows");
    const std::uint32_t w = read_u32_be(img, "image cols");

    if (read_u32_be(lab, "label magic") != kLabelMagic) {
        throw FormatError("idx: bad label magic in " + labels_path);
    }
    const std::uint32_t nl = read_u32_be(lab, "label count");
    if (nl != n) {
        throw FormatError("idx: image/label count mismatch (" + std::to_string(n) + " vs " + std::to_string(nl) + ")");
    }

    LabeledDataset ds;
    ds.images = Tensor4(static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w));
    std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
            throw FormatError("idx: truncated image payload");
        }
        double* dst = ds.images.sample(static_cast<int>(i));
        for (std::size_t k = 0; k < buf.size(); ++k) dst[k] = buf[k] / 255.0;
    }
    ds.labels.resize(n);
    ds.sample_index.resize(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        unsigned char y;
        if (!lab.read(reinterpret_cast<char*>(&y), 1)) throw FormatError("idx: truncated label payload");
        ds.labels[i] = y;
        ds.sample_index[i] = static_cast<int>(i);
        max_label = std::max(max_label, static_cast<int>(y));
    }
    ds.num_classes = std::max(10, max_label + 1);
    ds.tag = DomainTag::authorized;
    return ds;
}

void save_idx_dataset(const LabeledDataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.images.c != 1) throw ConfigError("idx: only grayscale datasets can be written");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("idx: cannot write image file " + images_path);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("idx: cannot write label file " + labels_path);

    write_u32_be(img, kImageMagic);
    write_u32_be(img, static_cast<std::uint32_t>(ds.images.n));
    write_u32_be(img, static_cast<std::uint32_t>(ds.images.h));
    write_u32_be(img, static_cast<std::uint32_t>(ds.images.w));
    std::vector<unsigned char> buf(static_cast<std::size_t>(ds.images.h) * ds.images.w);
    for (int i = 0; i < ds.images.n; ++i) {
        const double* src = ds.images.sample(i);
        for (std::size_t k = 0; k < buf.size(); ++k) {
            buf[k] = static_cast<unsigned char>(std::lround(clip01(src[k]) * 255.0));
        }
        img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }

    write_u32_be(lab, kLabelMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(ds.images.n));
    for (int y : ds.labels) {
        unsigned char b = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// ---- Domain shifts ---------------------------------------------------------

namespace {

// Per-sample plaid texture in [-1,1]; fully determined by (seed, sample id).
struct Plaid {
    double f1, f2, p1, p2;
    explicit Plaid(std::uint64_t seed, int sample_id) {
        Rng rng(derive_seed(seed, "texture", static_cast<std::uint64_t>(sample_id)));
        f1 = 2.0 + 3.0 * rng.uniform();
        f2 = 2.0 + 3.0 * rng.uniform();
        p1 = rng.uniform();
        p2 = rng.uniform();
    }
    double at(int i, int j, int h, int w) const {
        double a = std::sin(6.283185307179586 * (f1 * (i + 0.5) / h + p1));
        double b = std::sin(6.283185307179586 * (f2 * (j + 0.5) / w + p2));
        return a * b;
    }
};

// Hue rotation in YIQ space; standard luma-preserving rotation.
void hue_rotate_rgb(double& r, double& g, double& b, double cs, double sn) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const double i = 0.596 * r - 0.274 * g - 0.322 * b;
    const double q = 0.211 * r - 0.523 * g + 0.312 * b;
    const double i2 = i * cs - q * sn;
    const double q2 = i * sn + q * cs;
    r = clip01(y + 0.956 * i2 + 0.621 * q2);
    g = clip01(y - 0.272 * i2 - 0.647 * q2);
    b = clip01(y - 1.106 * i2 + 1.703 * q2);
}

}  // namespace

LabeledDataset apply_domain_shift(const LabeledDataset& ds, const DomainShiftSpec& spec) {
    spec.validate();
    LabeledDataset out = ds;
    out.tag = DomainTag::unauthorized;
    const int channels = out.images.c;
    const int hw = out.images.spatial();
    const double m = spec.magnitude;

    switch (spec.kind) {
        case ShiftKind::color_invert: {
            for (double& x : out.images.v) x = (1.0 - m) * x + m * (1.0 - x);
            break;
        }
        case ShiftKind::channel_permute: {
            // magnitude is ignored; the permutation is drawn from the seed.
            std::vector<int> perm(channels);
            std::iota(perm.begin(), perm.end(), 0);
            Rng rng(derive_seed(spec.seed, "channel-permute"));
            rng.shuffle(perm);
            if (channels <= 1) break;
            std::vector<double> tmp(static_cast<std::size_t>(channels) * hw);
            for (int b = 0; b < out.images.n; ++b) {
                double* s = out.images.sample(b);
                std::memcpy(tmp.data(), s, tmp.size() * sizeof(double));
                for (int c = 0; c < channels; ++c) {
                    std::memcpy(s + static_cast<std::size_t>(c) * hw,
                                tmp.data() + static_cast<std::size_t>(perm[c]) * hw,
                                static_cast<std::size_t>(hw) * sizeof(double));
                }
            }
            break;
        }
        case ShiftKind::hue_rotate: {
            if (channels != 3) break;  // grayscale: degenerate identity, like channel-permute
            const double angle = m * 6.283185307179586;
            const double cs = std::cos(angle), sn = std::sin(angle);
            for (int b = 0; b < out.images.n; ++b) {
                double* r = out.images.plane(b, 0);
                double* g = out.images.plane(b, 1);
                double* bl = out.images.plane(b, 2);
                for (int k = 0; k < hw; ++k) hue_rotate_rgb(r[k], g[k], bl[k], cs, sn);
            }
            break;
        }
        case ShiftKind::additive_texture: {
            const int h = out.images.h, w = out.images.w;
            for (int b = 0; b < out.images.n; ++b) {
                Plaid plaid(spec.seed, out.sample_index[b]);
                for (int c = 0; c < channels; ++c) {
                    double* p = out.images.plane(b, c);
                    for (int i = 0; i < h; ++i) {
                        for (int j = 0; j < w; ++j) {
                            p[i * w + j] = clip01(p[i * w + j] + 0.5 * m * plaid.at(i, j, h, w));
                        }
                    }
                }
            }
            break;
        }
    }
    return out;
}

LabeledDataset apply_watermark(const LabeledDataset& ds, const WatermarkPatchSpec& patch) {
    patch.validate();
    LabeledDataset out = ds;
    if (patch.height == 0 || patch.width == 0) return out;
    if (patch.row < 0 || patch.col < 0 || patch.row + patch.height > out.images.h ||
        patch.col + patch.width > out.images.w) {
        throw BoundsError("watermark: patch exceeds image bounds");
    }
    if (patch.pattern.c != out.images.c) {
        throw ConfigError("watermark: pattern channel count does not match dataset");
    }
    for (int b = 0; b < out.images.n; ++b) {
        for (int c = 0; c < out.images.c; ++c) {
            for (int i = 0; i < patch.height; ++i) {
                for (int j = 0; j < patch.width; ++j) {
                    out.images.at(b, c, patch.row + i, patch.col + j) = patch.pattern.at(0, c, i, j);
                }
            }
        }
    }
    return out;
}

void restyle_image(const double* src, double* dst, int channels, int spatial,
                   const std::vector<double>& eps_mu, const std::vector<double>& eps_sigma, bool clip) {
    for (int c = 0; c < channels; ++c) {
        const double* s = src + static_cast<std::size_t>(c) * spatial;
        double* d = dst + static_cast<std::size_t>(c) * spatial;
        double mean = 0.0;
        for (int k = 0; k < spatial; ++k) mean += s[k];
        mean /= spatial;
        double var = 0.0;
        for (int k = 0; k < spatial; ++k) var += (s[k] - mean) * (s[k] - mean);
        var /= spatial;
        const double sigma = std::max(std::sqrt(var), kSigmaFloor);
        const double target_sigma = sigma * std::exp(eps_sigma[c]);
        const double target_mu = mean + eps_mu[c];
        for (int k = 0; k < spatial; ++k) {
            double x = (s[k] - mean) / sigma * target_sigma + target_mu;
            d[k] = clip ? clip01(x) : x;
        }
    }
}

LabeledDataset synthesize_unauthorized(const LabeledDataset& authorized, const SynthesisSpec& spec) {
    spec.validate();
    if (authorized.size() == 0) throw ConfigError("synthesis: source dataset is empty");
    LabeledDataset out = authorized;
    out.tag = DomainTag::synthesized;
    const int channels = out.images.c;
    const int hw = out.images.spatial();
    std::vector<double> eps_mu(channels), eps_sigma(channels);
    for (int b = 0; b < out.images.n; ++b) {
        // Per-sample substream so the result is independent of traversal order.
        Rng rng(derive_seed(spec.seed, "synthesis", static_cast<std::uint64_t>(authorized.sample_index[b])));
        if (spec.per_channel) {
            for (int c = 0; c < channels; ++c) eps_mu[c] = rng.gaussian(0.0, spec.noise_std);
            for (int c = 0; c < channels; ++c) eps_sigma[c] = rng.gaussian(0.0, spec.noise_std);
        } else {
            const double em = rng.gaussian(0.0, spec.noise_std);
            const double es = rng.gaussian(0.0, spec.noise_std);
            std::fill(eps_mu.begin(), eps_mu.end(), em);
            std::fill(eps_sigma.begin(), eps_sigma.end(), es);
        }
        restyle_image(authorized.images.sample(b), out.images.sample(b), channels, hw, eps_mu, eps_sigma);
    }
    return out;
}

LabeledDataset concat_datasets(const std::vector<const LabeledDataset*>& parts, DomainTag tag) {
    if (parts.empty()) throw ConfigError("concat: no datasets given");
    const LabeledDataset& first = *parts.front();
    int total = 0;
    for (const LabeledDataset* p : parts) {
        if (p->images.c != first.images.c || p->images.h != first.images.h || p->images.w != first.images.w) {
            throw ShapeError("concat: image shapes differ");
        }
        if (p->num_classes != first.num_classes) throw ConfigError("concat: class counts differ");
        total += p->size();
    }
    LabeledDataset out;
    out.images = Tensor4(total, first.images.c, first.images.h, first.images.w);
    out.labels.reserve(total);
    out.sample_index.resize(total);
    out.num_classes = first.num_classes;
    out.tag = tag;
    int row = 0;
    for (const LabeledDataset* p : parts) {
        for (int b = 0; b < p->size(); ++b, ++row) {
            std::memcpy(out.images.sample(row), p->images.sample(b), p->images.sample_stride() * sizeof(double));
            out.labels.push_back(p->labels[b]);
            out.sample_index[row] = row;
        }
    }
    return out;
}

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& rows) {
    LabeledDataset out;
    out.images = Tensor4(static_cast<int>(rows.size()), ds.images.c, ds.images.h, ds.images.w);
    out.labels.resize(rows.size());
    out.sample_index.resize(rows.size());
    out.num_classes = ds.num_classes;
    out.tag = ds.tag;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        int r = rows[i];
        if (r < 0 || r >= ds.size()) throw BoundsError("subset: row out of range");
        std::memcpy(out.images.sample(static_cast<int>(i)), ds.images.sample(r),
                    ds.images.sample_stride() * sizeof(double));
        out.labels[i] = ds.labels[r];
        out.sample_index[i] = static_cast<int>(i);
    }
    return out;
}

LabeledDataset retag(LabeledDataset ds, DomainTag tag) {
    ds.tag = tag;
    return ds;
}

// ---- Synthetic digits -------------------------------------------------------

namespace {

// 5x7 glyph bitmaps, row-major, one string per digit.
constexpr std::array<const char*, 10> kGlyphs = {
    "01110"
    "10001"
    "10011"
    "10101"
    "11001"
    "10001"
    "01110",  // 0
    "00100"
    "01100"
    "00100"
    "00100"
    "00100"
    "00100"
    "01110",  // 1
    "01110"
    "10001"
    "00001"
    "00110"
    "01000"
    "10000"
    "11111",  // 2
    "11110"
    "00001"
    "00001"
    "01110"
    "00001"
    "00001"
    "11110",  // 3
    "00010"
    "00110"
    "01010"
    "10010"
    "11111"
    "00010"
    "00010",  // 4
    "11111"
    "10000"
    "11110"
    "00001"
    "00001"
    "10001"
    "01110",  // 5
    "00110"
    "01000"
    "10000"
    "11110"
    "10001"
    "10001"
    "01110",  // 6
    "11111"
    "00001"
    "00010"
    "00100"
    "01000"
    "01000"
    "01000",  // 7
    "01110"
    "10001"
    "10001"
    "01110"
    "10001"
    "10001"
    "01110",  // 8
    "01110"
    "10001"
    "10001"
    "01111"
    "00001"
    "00010"
    "01100",  // 9
};

constexpr int kGlyphH = 7;
constexpr int kGlyphW = 5;
constexpr int kImage = 28;

// Bilinear sample of a glyph treated as a continuous field on
// [0,kGlyphH) x [0,kGlyphW); zero outside.
double glyph_sample(const char* g, double fi, double fj) {
    const int i0 = static_cast<int>(std::floor(fi));
    const int j0 = static_cast<int>(std::floor(fj));
    const double di = fi - i0, dj = fj - j0;
    auto cell = [&](int i, int j) -> double {
        if (i < 0 || i >= kGlyphH || j < 0 || j >= kGlyphW) return 0.0;
        return g[i * kGlyphW + j] == '1' ? 1.0 : 0.0;
    };
    return cell(i0, j0) * (1 - di) * (1 - dj) + cell(i0, j0 + 1) * (1 - di) * dj +
           cell(i0 + 1, j0) * di * (1 - dj) + cell(i0 + 1, j0 + 1) * di * dj;
}

}  // namespace

LabeledDataset make_synthetic_digits(int n, std::uint64_t seed, int channels) {
    if (n <= 0) throw ConfigError("synthetic digits: n must be positive");
    if (channels != 1 && channels != 3) throw ConfigError("synthetic digits: channels must be 1 or 3");
    LabeledDataset ds;
    ds.images = Tensor4(n, channels, kImage, kImage);
    ds.labels.resize(n);
    ds.sample_index.resize(n);
    ds.num_classes = 10;
    ds.tag = DomainTag::authorized;

    std::vector<double> gray(static_cast<std::size_t>(kImage) * kImage);
    for (int b = 0; b < n; ++b) {
        Rng rng(derive_seed(seed, "digit", static_cast<std::uint64_t>(b)));
        const int digit = static_cast<int>(rng.below(10));
        ds.labels[b] = digit;
        ds.sample_index[b] = b;

        const double theta = rng.uniform(-0.22, 0.22);
        const double scale = rng.uniform(0.82, 1.15);
        const double shear = rng.uniform(-0.12, 0.12);
        const double tx = rng.uniform(-2.2, 2.2);
        const double ty = rng.uniform(-2.2, 2.2);
        const double stroke = rng.uniform(0.72, 1.0);
        const double cell_h = 2.8 * scale;  // glyph box ~19.6 x 14 px
        const double cell_w = 2.8 * scale;
        const double cs = std::cos(theta), sn = std::sin(theta);

        for (int i = 0; i < kImage; ++i) {
            for (int j = 0; j < kImage; ++j) {
                const double x = j - (kImage - 1) / 2.0 - tx;
                const double y = i - (kImage - 1) / 2.0 - ty;
                // inverse rotation + shear back into glyph coordinates
                double u = cs * x + sn * y;
                double v = -sn * x + cs * y;
                u -= shear * v;
                const double fj = u / cell_w + kGlyphW / 2.0 - 0.5;
                const double fi = v / cell_h + kGlyphH / 2.0 - 0.5;
                gray[i * kImage + j] = stroke * glyph_sample(kGlyphs[digit], fi, fj);
            }
        }
        for (auto& px : gray) px = clip01(px + rng.gaussian(0.0, 0.035));

        if (channels == 1) {
            std::copy(gray.begin(), gray.end(), ds.images.sample(b));
        } else {
            // per-sample tint: keeps class info in shape, channel info in style
            const double hue = rng.uniform(0.0, 1.0);
            const double tint[3] = {0.6 + 0.4 * std::sin(6.2831853 * hue),
                                    0.6 + 0.4 * std::sin(6.2831853 * (hue + 1.0 / 3.0)),
                                    0.6 + 0.4 * std::sin(6.2831853 * (hue + 2.0 / 3.0))};
            for (int c = 0; c < 3; ++c) {
                double* p = ds.images.plane(b, c);
                for (std::size_t k = 0; k < gray.size(); ++k) p[k] = clip01(gray[k] * tint[c]);
            }
        }
    }
    return ds;
}

}  // namespace cupi
