#pragma once

#include <map>
#include <set>
#include <string>

#include "ablate/tensor.hpp"

namespace ablate {

// Ordered so that iteration (and hence serialization) is deterministic.
using ParamSet = std::map<std::string, Tensor>;
using GradSet = std::map<std::string, Tensor>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    // Bias-corrected Adam update on the parameters named in `mask` (all
    // parameters when mask is empty). Gradients absent from `grads` are zero.
    void step(ParamSet& params, const GradSet& grads, const std::set<std::string>& mask = {});

    long step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    long step_count_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace ablate
