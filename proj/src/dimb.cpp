#include "cupi/dimb.hpp"

#include <algorithm>

#include "cupi/errors.hpp"

namespace cupi {

bool SampleBank::all_filled() const {
    return std::all_of(filled.begin(), filled.end(), [](char f) { return f != 0; });
}

ClassBank recompute_centers(const SampleBank& bank, int num_classes) {
    ClassBank out;
    out.centers = Mat::Zero(num_classes, bank.dim());
    std::vector<int> counts(num_classes, 0);
    for (int i = 0; i < bank.capacity(); ++i) {
        if (!bank.filled[i]) continue;
        const int y = bank.labels[i];
        out.centers.row(y) += bank.rows.row(i);
        counts[y]++;
    }
    for (int k = 0; k < num_classes; ++k) {
        if (counts[k] > 0) out.centers.row(k) /= counts[k];
    }
    return out;
}

void DIMBState::require_initialized() const {
    if (!initialized) throw StateError("memory banks have not been initialized");
}

namespace {

SampleBank make_sample_bank(int n, int dim, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != n) {
        throw ConfigError("memory bank: label count does not match capacity");
    }
    SampleBank b;
    b.rows = Mat::Zero(n, dim);
    b.labels = labels;
    b.filled.assign(n, 0);
    return b;
}

void write_rows(SampleBank& bank, const Mat& values, const std::vector<int>& indices,
                const std::vector<int>& labels) {
    if (values.rows() != static_cast<Eigen::Index>(indices.size())) {
        throw ShapeError("memory bank: value/index count mismatch");
    }
    if (values.cols() != bank.rows.cols()) throw ShapeError("memory bank: feature width mismatch");
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const int idx = indices[r];
        if (idx < 0 || idx >= bank.capacity()) throw BoundsError("memory bank: sample index out of range");
        if (!labels.empty() && bank.labels[idx] != labels[r]) {
            throw ConfigError("memory bank: label disagrees with the row being replaced");
        }
        bank.rows.row(idx) = values.row(static_cast<Eigen::Index>(r));
        bank.filled[idx] = 1;
    }
}

}  // namespace

DIMBState make_dimb(const BackboneConfig& cfg, int n_authorized, int n_cupi,
                    const std::vector<int>& labels_authorized, const std::vector<int>& labels_cupi) {
    DIMBState state;
    state.num_classes = cfg.num_classes;
    for (int l = 0; l < cfg.levels; ++l) {
        LevelBanks lb;
        lb.mu_samples = make_sample_bank(n_authorized, cfg.widths[l], labels_authorized);
        lb.sigma_samples = make_sample_bank(n_authorized, cfg.widths[l], labels_authorized);
        lb.mu_centers.centers = Mat::Zero(cfg.num_classes, cfg.widths[l]);
        lb.sigma_centers.centers = Mat::Zero(cfg.num_classes, cfg.widths[l]);
        state.levels.push_back(std::move(lb));
    }
    state.bottleneck_samples = make_sample_bank(n_cupi, cfg.bottleneck_dim, labels_cupi);
    state.bottleneck_centers.centers = Mat::Zero(cfg.num_classes, cfg.bottleneck_dim);
    return state;
}

void update_after_batch(DIMBState& state, const std::vector<StyleStats>& level_stats, const Mat& p_i,
                        const std::vector<int>& s_indices, const std::vector<int>& t_indices,
                        const std::vector<int>& labels_s, const std::vector<int>& labels_t) {
    if (level_stats.size() != state.levels.size()) {
        throw ShapeError("memory bank update: expected stats for every pyramid level");
    }
    for (std::size_t l = 0; l < state.levels.size(); ++l) {
        write_rows(state.levels[l].mu_samples, level_stats[l].mean, s_indices, labels_s);
        write_rows(state.levels[l].sigma_samples, level_stats[l].stddev, s_indices, labels_s);
    }
    write_rows(state.bottleneck_samples, p_i, t_indices, labels_t);
    for (auto& lb : state.levels) {
        lb.mu_centers = recompute_centers(lb.mu_samples, state.num_classes);
        lb.sigma_centers = recompute_centers(lb.sigma_samples, state.num_classes);
    }
    state.bottleneck_centers = recompute_centers(state.bottleneck_samples, state.num_classes);
}

Mat lookup_class(const ClassBank& bank, const std::vector<int>& labels) {
    Mat out(static_cast<Eigen::Index>(labels.size()), bank.centers.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= bank.num_classes()) throw BoundsError("class lookup: label out of range");
        out.row(static_cast<Eigen::Index>(i)) = bank.centers.row(y);
    }
    return out;
}

}  // namespace cupi
