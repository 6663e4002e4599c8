#pragma once

#include <vector>

#include "cupi/dimb.hpp"
#include "cupi/tensor.hpp"

namespace cupi {

// Switches for the joint objective. neg_bound caps every term that enters the
// total with a negative sign, so no single term can be amplified without
// limit. The enable flags are the ablation switches.
struct LossWeights {
    double neg_bound = 1.0;
    bool detach_style_targets = false;  // stop gradients through the style-source stats
    bool enable_li = true;
    bool enable_lt = true;
    bool enable_lstl = true;
    bool enable_ldis = true;

    void validate() const;
};

struct LossReport {
    double total = 0.0;
    double l_s = 0.0, l_i = 0.0, l_t = 0.0;
    double l_cls = 0.0, l_stl = 0.0, l_dis = 0.0;
    double alpha = 0.0;
};

// Warmup coefficient (epoch / total_epochs)^0.9.
double alpha(int epoch, int total_epochs);

// a * mean_b(-log probs[b, labels[b]]), probabilities floored at 1e-12.
double class_loss(const Mat& probs, const std::vector<int>& labels, double a);

struct ClassificationLoss {
    double l_cls = 0.0;
    double l_s = 0.0, l_i = 0.0, l_t = 0.0;
    // true where the clamp is inactive (gradient flows)
    bool li_active = false, lt_active = false;
};

// L_cls = L_s - min(L_i, bound) - min(L_t, bound); disabled terms contribute 0.
ClassificationLoss classification_loss(const Mat& probs_s, const std::vector<int>& labels_s,
                                       const Mat& probs_i, const std::vector<int>& labels_i,
                                       const Mat& probs_t, const std::vector<int>& labels_t,
                                       double a, const LossWeights& w);

struct StyleLoss {
    double value = 0.0;
    // per level: clamp gates for the mu and sigma terms
    std::vector<char> mu_active, sigma_active;
};

// -a * sum_l [min(MSE(centers_mu[y], mu(f_t^l)), bound)
//           + min(MSE(centers_sigma[y], sigma(f_t^l)), bound)].
StyleLoss style_loss(const DIMBState& state, const std::vector<StyleStats>& pyramid_t,
                     const std::vector<int>& labels_t, double a, const LossWeights& w);

struct DiscriminativeLoss {
    double value = 0.0;
    bool s_active = false;  // authorized-side clamp gate
};

// -a * min(MSE(centers[y_s], p_s), bound) + a * MSE(centers[y_t], p_t).
DiscriminativeLoss discriminative_loss(const DIMBState& state, const Mat& p_s, const std::vector<int>& labels_s,
                                       const Mat& p_t, const std::vector<int>& labels_t, double a,
                                       const LossWeights& w);

// L = L_cls + L_Stl + L_Dis; throws NumericError naming any non-finite part.
LossReport total_loss(const ClassificationLoss& cls, double l_stl, double l_dis, double a);

// Mean squared error against a constant target, and its gradient scale.
double mse(const Mat& target, const Mat& value);

// d(class_loss)/d(logits) for the softmax-CE composite: a * (probs - onehot)/B.
Mat class_loss_logit_grad(const Mat& probs, const std::vector<int>& labels, double a);

}  // namespace cupi
