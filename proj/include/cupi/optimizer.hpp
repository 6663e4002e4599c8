#pragma once

#include <cstddef>
#include <vector>

namespace cupi {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// A registered parameter span and its gradient span (same length).
struct ParamSlot {
    double* value = nullptr;
    const double* grad = nullptr;
    std::size_t size = 0;
};

// Adam over a flat list of parameter spans; one parameter group.
class Adam {
public:
    Adam(AdamConfig cfg, std::vector<ParamSlot> slots);

    void step();
    long step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<ParamSlot> slots_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

}  // namespace cupi
