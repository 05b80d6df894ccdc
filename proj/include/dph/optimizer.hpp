#pragma once

// LaProp with decoupled prior regularization, global-norm clipping and a
// linear-warmup + cosine learning-rate schedule.

#include <cstdint>
#include <string_view>
#include <vector>

#include "dph/tensor.hpp"

namespace dph::optim {

/// Which tensors the prior regularization step touches.
enum class PriorScope {
    none,
    all,            // every tensor
    non_embedding,  // everything except tok_embedding
    backbone,       // everything except head.*
};

PriorScope parse_scope(std::string_view name);
std::string_view to_string(PriorScope scope);
bool in_scope(PriorScope scope, std::string_view tensor_name);

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-15;
    double max_lr = 3e-4;
    double min_lr = 3e-5;
    std::int64_t warmup_steps = 200;
    std::int64_t total_steps = 1500;
    double prior_coeff = 0.5;
    double clip_norm = 1.0;
    PriorScope prior_scope = PriorScope::non_embedding;

    void validate() const;
};

/// First/second moments (float32, so they checkpoint exactly) and step count.
struct OptimizerState {
    std::vector<std::vector<float>> first;
    std::vector<std::vector<float>> second;
    std::int64_t step = 0;

    static OptimizerState zeros(const ParamSet& params);
};

/// Immutable snapshot of parameters, used as the DPO reference policy and as
/// the prior-regularization anchor.
class ReferenceParams {
public:
    explicit ReferenceParams(ParamSet snapshot) : params_(std::move(snapshot)) {}
    const ParamSet& params() const noexcept { return params_; }

private:
    ParamSet params_;
};

ReferenceParams snapshot(const ParamSet& params);

/// theta <- theta - coeff * lr * (theta - theta_ref) on in-scope tensors.
void prior_reg_step(ParamSet& params, const ReferenceParams& reference, double lr, double coeff, PriorScope scope);

/// Scales all gradients by clip_norm / norm when the global L2 norm exceeds
/// clip_norm. Returns the pre-clip norm. Non-finite gradients throw NumericError.
double clip_global_norm(GradSet& grads, double clip_norm);

/// One LaProp update. Aborts (NumericError, nothing modified) if any updated
/// value is non-finite.
void adaptive_update(OptimizerState& state, ParamSet& params, const GradSet& grads, double lr,
                     const OptimizerConfig& config);

/// Linear warmup 0 -> max_lr over warmup_steps, cosine max_lr -> min_lr at
/// total_steps, min_lr afterwards.
double lr_schedule(std::int64_t step, const OptimizerConfig& config);

struct StepReport {
    double grad_norm = 0.0;
    double lr = 0.0;
};

/// Full step in order: clip, prior regularization, adaptive update. The
/// learning rate is lr_schedule(state.step + 1).
StepReport optimizer_step(OptimizerState& state, ParamSet& params, GradSet& grads, const ReferenceParams* reference,
                          const OptimizerConfig& config);

}  // namespace dph::optim
