#include "cupi/optimizer.hpp"

#include <cmath>

namespace cupi {

Adam::Adam(AdamConfig cfg, std::vector<ParamSlot> slots) : cfg_(cfg), slots_(std::move(slots)) {
    m_.reserve(slots_.size());
    v_.reserve(slots_.size());
    for (const auto& s : slots_) {
        m_.emplace_back(s.size, 0.0);
        v_.emplace_back(s.size, 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        ParamSlot& s = slots_[i];
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::size_t k = 0; k < s.size; ++k) {
            const double g = s.grad[k];
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            s.value[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace cupi
