#include "cupi/losses.hpp"

#include <cmath>

#include "cupi/errors.hpp"

namespace cupi {

void LossWeights::validate() const {
    if (!(neg_bound > 0.0)) throw ConfigError("loss: neg_bound must be > 0");
}

double alpha(int epoch, int total_epochs) {
    if (total_epochs <= 0) throw ConfigError("alpha: total_epochs must be positive");
    if (epoch < 0 || epoch > total_epochs) throw ConfigError("alpha: epoch must lie in [0, total_epochs]");
    return std::pow(static_cast<double>(epoch) / total_epochs, 0.9);
}

double class_loss(const Mat& probs, const std::vector<int>& labels, double a) {
    if (probs.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("class loss: batch size mismatch");
    }
    double sum = 0.0;
    for (Eigen::Index b = 0; b < probs.rows(); ++b) {
        const int y = labels[b];
        if (y < 0 || y >= probs.cols()) throw BoundsError("class loss: label out of range");
        sum += -std::log(std::max(probs(b, y), 1e-12));
    }
    return a * sum / static_cast<double>(probs.rows());
}

Mat class_loss_logit_grad(const Mat& probs, const std::vector<int>& labels, double a) {
    Mat g = probs;
    const double scale = a / static_cast<double>(probs.rows());
    for (Eigen::Index b = 0; b < g.rows(); ++b) g(b, labels[b]) -= 1.0;
    g *= scale;
    return g;
}

ClassificationLoss classification_loss(const Mat& probs_s, const std::vector<int>& labels_s,
                                       const Mat& probs_i, const std::vector<int>& labels_i,
                                       const Mat& probs_t, const std::vector<int>& labels_t,
                                       double a, const LossWeights& w) {
    w.validate();
    ClassificationLoss out;
    out.l_s = class_loss(probs_s, labels_s, a);
    out.l_cls = out.l_s;
    if (w.enable_li) {
        out.l_i = class_loss(probs_i, labels_i, a);
        out.li_active = out.l_i < w.neg_bound;
        out.l_cls -= std::min(out.l_i, w.neg_bound);
    }
    if (w.enable_lt) {
        out.l_t = class_loss(probs_t, labels_t, a);
        out.lt_active = out.l_t < w.neg_bound;
        out.l_cls -= std::min(out.l_t, w.neg_bound);
    }
    return out;
}

double mse(const Mat& target, const Mat& value) {
    if (target.rows() != value.rows() || target.cols() != value.cols()) {
        throw ShapeError("mse: shape mismatch");
    }
    return (value - target).squaredNorm() / static_cast<double>(value.size());
}

StyleLoss style_loss(const DIMBState& state, const std::vector<StyleStats>& pyramid_t,
                     const std::vector<int>& labels_t, double a, const LossWeights& w) {
    w.validate();
    state.require_initialized();
    if (pyramid_t.size() != state.levels.size()) {
        throw ShapeError("style loss: expected stats for every pyramid level");
    }
    StyleLoss out;
    out.mu_active.assign(state.levels.size(), 0);
    out.sigma_active.assign(state.levels.size(), 0);
    if (!w.enable_lstl) return out;
    double acc = 0.0;
    for (std::size_t l = 0; l < state.levels.size(); ++l) {
        const Mat mu_c = lookup_class(state.levels[l].mu_centers, labels_t);
        const Mat sig_c = lookup_class(state.levels[l].sigma_centers, labels_t);
        const double m_mu = mse(mu_c, pyramid_t[l].mean);
        const double m_sig = mse(sig_c, pyramid_t[l].stddev);
        out.mu_active[l] = m_mu < w.neg_bound;
        out.sigma_active[l] = m_sig < w.neg_bound;
        acc += std::min(m_mu, w.neg_bound) + std::min(m_sig, w.neg_bound);
    }
    out.value = -a * acc;
    return out;
}

DiscriminativeLoss discriminative_loss(const DIMBState& state, const Mat& p_s, const std::vector<int>& labels_s,
                                       const Mat& p_t, const std::vector<int>& labels_t, double a,
                                       const LossWeights& w) {
    w.validate();
    state.require_initialized();
    DiscriminativeLoss out;
    if (!w.enable_ldis) return out;
    const Mat c_s = lookup_class(state.bottleneck_centers, labels_s);
    const Mat c_t = lookup_class(state.bottleneck_centers, labels_t);
    const double m_s = mse(c_s, p_s);
    const double m_t = mse(c_t, p_t);
    out.s_active = m_s < w.neg_bound;
    out.value = -a * std::min(m_s, w.neg_bound) + a * m_t;
    return out;
}

LossReport total_loss(const ClassificationLoss& cls, double l_stl, double l_dis, double a) {
    auto check = [](double x, const char* name) {
        if (!std::isfinite(x)) throw NumericError(std::string("loss: non-finite component ") + name);
    };
    check(cls.l_cls, "L_cls");
    check(l_stl, "L_Stl");
    check(l_dis, "L_Dis");
    LossReport r;
    r.l_s = cls.l_s;
    r.l_i = cls.l_i;
    r.l_t = cls.l_t;
    r.l_cls = cls.l_cls;
    r.l_stl = l_stl;
    r.l_dis = l_dis;
    r.alpha = a;
    r.total = cls.l_cls + l_stl + l_dis;
    check(r.total, "total");
    return r;
}

}  // namespace cupi
