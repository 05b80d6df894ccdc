#include "dph/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dph/error.hpp"

namespace dph::optim {

PriorScope parse_scope(std::string_view name) {
    if (name == "none") {
        return PriorScope::none;
    }
    if (name == "all") {
        return PriorScope::all;
    }
    if (name == "non_embedding") {
        return PriorScope::non_embedding;
    }
    if (name == "backbone") {
        return PriorScope::backbone;
    }
    throw InvalidArgument("unknown prior scope '" + std::string(name) + "'");
}

std::string_view to_string(PriorScope scope) {
    switch (scope) {
        case PriorScope::none:
            return "none";
        case PriorScope::all:
            return "all";
        case PriorScope::non_embedding:
            return "non_embedding";
        case PriorScope::backbone:
            return "backbone";
    }
    return "none";
}

bool in_scope(PriorScope scope, std::string_view name) {
    switch (scope) {
        case PriorScope::none:
            return false;
        case PriorScope::all:
            return true;
        case PriorScope::non_embedding:
            return name != "tok_embedding";
        case PriorScope::backbone:
            return !name.starts_with("head.");
    }
    return false;
}

void OptimizerConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw InvalidArgument("optimizer betas must lie in [0, 1)");
    }
    if (!(eps >= 0.0)) {
        throw InvalidArgument("optimizer eps must be >= 0");
    }
    if (!(min_lr >= 0.0) || !(min_lr <= max_lr)) {
        throw InvalidArgument("learning rates must satisfy 0 <= min_lr <= max_lr");
    }
    if (warmup_steps < 0 || total_steps < 0 || warmup_steps > total_steps) {
        throw InvalidArgument("schedule must satisfy 0 <= warmup_steps <= total_steps");
    }
    if (!(prior_coeff >= 0.0)) {
        throw InvalidArgument("prior coefficient must be >= 0");
    }
    if (!(clip_norm > 0.0)) {
        throw InvalidArgument("clip_norm must be positive");
    }
}

OptimizerState OptimizerState::zeros(const ParamSet& params) {
    OptimizerState s;
    for (const auto& t : params) {
        s.first.emplace_back(t.size(), 0.0F);
        s.second.emplace_back(t.size(), 0.0F);
    }
    return s;
}

ReferenceParams snapshot(const ParamSet& params) { return ReferenceParams(params); }

void prior_reg_step(ParamSet& params, const ReferenceParams& reference, double lr, double coeff, PriorScope scope) {
    if (!(lr >= 0.0) || !(coeff >= 0.0)) {
        throw InvalidArgument("prior regularization needs lr >= 0 and coeff >= 0");
    }
    const double pull = coeff * lr;
    for (auto& t : params) {
        if (!in_scope(scope, t.name)) {
            continue;
        }
        if (!reference.params().contains(t.name)) {
            throw InvalidArgument("reference has no tensor '" + t.name + "'");
        }
        const Tensor& ref = reference.params().at(t.name);
        if (ref.shape != t.shape) {
            throw InvalidArgument("reference tensor '" + t.name + "' has a different shape");
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double theta = t.values[i];
            t.values[i] = static_cast<float>(theta - pull * (theta - static_cast<double>(ref.values[i])));
        }
    }
}

double clip_global_norm(GradSet& grads, double clip_norm) {
    if (!grads.all_finite()) {
        throw NumericError("non-finite gradient");
    }
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > clip_norm) {
        grads.scale(clip_norm / norm);
    }
    return norm;
}

void adaptive_update(OptimizerState& state, ParamSet& params, const GradSet& grads, double lr,
                     const OptimizerConfig& config) {
    if (grads.count() != params.count() || state.first.size() != params.count() ||
        state.second.size() != params.count()) {
        throw InvalidArgument("optimizer state, gradients and parameters do not match");
    }
    const std::int64_t t = state.step + 1;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));

    std::vector<std::vector<float>> first(params.count());
    std::vector<std::vector<float>> second(params.count());
    std::vector<std::vector<float>> updated(params.count());
    for (std::size_t k = 0; k < params.count(); ++k) {
        const auto g = grads[k];
        const auto& theta = params[k].values;
        if (g.size() != theta.size() || state.first[k].size() != theta.size()) {
            throw InvalidArgument("shape mismatch for tensor '" + params[k].name + "'");
        }
        first[k].resize(theta.size());
        second[k].resize(theta.size());
        updated[k].resize(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double v = config.beta2 * state.second[k][i] + (1.0 - config.beta2) * g[i] * g[i];
            const double denom = std::sqrt(v / bias2) + config.eps;
            const double normalized = denom > 0.0 ? g[i] / denom : 0.0;
            const double m = config.beta1 * state.first[k][i] + (1.0 - config.beta1) * normalized;
            // Checked after narrowing: a finite double can still overflow float.
            first[k][i] = static_cast<float>(m);
            second[k][i] = static_cast<float>(v);
            updated[k][i] = static_cast<float>(static_cast<double>(theta[i]) - lr * (m / bias1));
            if (!std::isfinite(updated[k][i]) || !std::isfinite(first[k][i]) || !std::isfinite(second[k][i])) {
                throw NumericError("non-finite optimizer update in '" + params[k].name + "'");
            }
        }
    }
    for (std::size_t k = 0; k < params.count(); ++k) {
        params[k].values = std::move(updated[k]);
    }
    state.first = std::move(first);
    state.second = std::move(second);
    state.step = t;
}

double lr_schedule(std::int64_t step, const OptimizerConfig& config) {
    if (step < 0) {
        throw InvalidArgument("step must be >= 0");
    }
    if (step < config.warmup_steps) {
        return config.max_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    if (step >= config.total_steps) {
        return config.min_lr;
    }
    const double progress = static_cast<double>(step - config.warmup_steps) /
                            static_cast<double>(config.total_steps - config.warmup_steps);
    return config.min_lr + 0.5 * (config.max_lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

StepReport optimizer_step(OptimizerState& state, ParamSet& params, GradSet& grads, const ReferenceParams* reference,
                          const OptimizerConfig& config) {
    StepReport report;
    report.grad_norm = clip_global_norm(grads, config.clip_norm);
    report.lr = lr_schedule(state.step + 1, config);
    if (reference != nullptr && config.prior_coeff > 0.0 && config.prior_scope != PriorScope::none) {
        prior_reg_step(params, *reference, report.lr, config.prior_coeff, config.prior_scope);
    }
    adaptive_update(state, params, grads, report.lr, config);
    return report;
}

}  // namespace dph::optim
