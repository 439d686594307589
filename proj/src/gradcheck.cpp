#include "ablate/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace ablate {

namespace {

Var build_on(Tape& tape, const LossBuilder& build, const ParamSet& params,
             std::map<std::string, Var>* out_vars) {
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t));
    Var loss = build(tape, vars);
    if (!loss.val().is_scalar()) throw std::invalid_argument("loss builder must return a scalar");
    if (out_vars) *out_vars = std::move(vars);
    return loss;
}

}  // namespace

GradSet autodiff_grads(const LossBuilder& build, const ParamSet& params) {
    Tape tape;
    std::map<std::string, Var> vars;
    Var loss = build_on(tape, build, params, &vars);
    tape.backward(loss);
    GradSet grads;
    for (const auto& [name, v] : vars) grads.emplace(name, tape.grad(v));
    return grads;
}

double loss_value(const LossBuilder& build, const ParamSet& params) {
    Tape tape;
    return build_on(tape, build, params, nullptr).val().data[0];
}

double grad_check(const LossBuilder& build, const ParamSet& params, double h,
                  const std::set<std::string>& mask) {
    GradSet ad = autodiff_grads(build, params);
    ParamSet work = params;
    double worst = 0.0;
    for (auto& [name, p] : work) {
        if (!mask.empty() && !mask.count(name)) continue;
        for (size_t i = 0; i < p.data.size(); ++i) {
            double orig = p.data[i];
            p.data[i] = orig + h;
            double fp = loss_value(build, work);
            p.data[i] = orig - h;
            double fm = loss_value(build, work);
            p.data[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double rel = std::abs(ad.at(name).data[i] - fd) / (std::abs(fd) + 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace ablate
