#pragma once

#include <vector>

#include "cupi/generator.hpp"
#include "cupi/tensor.hpp"

namespace cupi {

// Fixed-capacity per-sample feature store. Rows are addressed by stable
// sample ids; labels are set at construction and never change.
struct SampleBank {
    Mat rows;                  // (N, C)
    std::vector<int> labels;   // per row
    std::vector<char> filled;  // per row

    int capacity() const { return static_cast<int>(rows.rows()); }
    int dim() const { return static_cast<int>(rows.cols()); }
    bool all_filled() const;
};

struct ClassBank {
    Mat centers;  // (K, C)

    int num_classes() const { return static_cast<int>(centers.rows()); }
};

// Exact group means over filled rows; classes with no filled rows get a zero
// center. This is the single source of truth for center contents.
ClassBank recompute_centers(const SampleBank& bank, int num_classes);

// One style cell per pyramid level plus the bottleneck cell.
struct LevelBanks {
    SampleBank mu_samples;
    SampleBank sigma_samples;
    ClassBank mu_centers;
    ClassBank sigma_centers;
};

struct DIMBState {
    std::vector<LevelBanks> levels;  // size L, channel dims C^l
    SampleBank bottleneck_samples;   // keyed by unauthorized-domain sample ids
    ClassBank bottleneck_centers;
    int num_classes = 0;
    bool initialized = false;

    void require_initialized() const;
};

// Allocates empty banks shaped for the given model/datasets.
DIMBState make_dimb(const BackboneConfig& cfg, int n_authorized, int n_cupi,
                    const std::vector<int>& labels_authorized, const std::vector<int>& labels_cupi);

// Replaces the style rows at s_indices and the bottleneck rows at t_indices,
// then recomputes every class center. Bank contents are plain data; nothing
// here participates in gradient computation.
void update_after_batch(DIMBState& state, const std::vector<StyleStats>& level_stats, const Mat& p_i,
                        const std::vector<int>& s_indices, const std::vector<int>& t_indices,
                        const std::vector<int>& labels_s, const std::vector<int>& labels_t);

// Gathers center rows by label, batch-aligned.
Mat lookup_class(const ClassBank& bank, const std::vector<int>& labels);

}  // namespace cupi
