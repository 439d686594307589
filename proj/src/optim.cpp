#include "ablate/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ablate {

void AdamState::step(ParamSet& params, const GradSet& grads, const std::set<std::string>& mask) {
    ++step_count_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (auto& [name, p] : params) {
        if (!mask.empty() && !mask.count(name)) continue;
        auto git = grads.find(name);
        Tensor zero;
        const Tensor* g = git != grads.end() ? &git->second : nullptr;
        if (g) {
            if (!g->same_shape(p))
                throw std::invalid_argument("adam_step: gradient shape (" + g->shape_str() +
                                            ") does not match parameter '" + name + "' (" +
                                            p.shape_str() + ")");
            if (!g->all_finite())
                throw std::runtime_error("adam_step: non-finite gradient for parameter '" + name + "'");
        }
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Tensor::zeros(p.shape)).first;
            v_.emplace(name, Tensor::zeros(p.shape));
        }
        Tensor& m = mit->second;
        Tensor& v = v_.at(name);
        for (size_t i = 0; i < p.data.size(); ++i) {
            double gi = g ? g->data[i] : 0.0;
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace ablate
