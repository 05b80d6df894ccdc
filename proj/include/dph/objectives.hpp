#pragma once

// Preference objectives on scalar rewards and sequence log-probabilities:
// Separable / Contrastive DPH, DPO, cDPO and the joint alignment objective,
// with analytic gradients and closed-form optima. All math is float64.

#include <string_view>
#include <vector>

namespace dph::objectives {

/// Reward logits for the preferred (`chosen`) and dispreferred (`rejected`)
/// completion of a pair.
struct RewardPair {
    double chosen = 0.0;
    double rejected = 0.0;
};

/// Partial derivatives of a loss with respect to the two rewards.
struct RewardGrad {
    double chosen = 0.0;
    double rejected = 0.0;
};

/// DPH label smoothing, 0 <= eps <= 0.5. Construction outside the range throws.
class Smoothing {
public:
    explicit Smoothing(double eps);
    double value() const noexcept { return eps_; }

private:
    double eps_;
};

/// Summed completion log-probabilities under the policy and the frozen
/// reference, plus the DPO deviation coefficient beta (> 0).
struct PolicyLogRatios {
    double policy_chosen = 0.0;
    double policy_rejected = 0.0;
    double ref_chosen = 0.0;
    double ref_rejected = 0.0;
    double beta = 0.1;

    /// Same pair with the preferred/dispreferred roles exchanged.
    PolicyLogRatios swapped() const noexcept {
        return {policy_rejected, policy_chosen, ref_rejected, ref_chosen, beta};
    }
};

/// Gradient of a DPO-family loss with respect to the policy log-probabilities.
struct PolicyGrad {
    double policy_chosen = 0.0;
    double policy_rejected = 0.0;
};

/// Weights of the joint objective: alpha1 on cDPO, alpha2 on DPH.
struct JointWeights {
    double cdpo = 1.0;
    double dph = 1.0;
    void validate() const;
};

enum class DphObjective { separable, contrastive };

DphObjective parse_objective(std::string_view name);
std::string_view to_string(DphObjective objective);

double softplus(double x) noexcept;
double log_sigmoid(double x) noexcept;  // -softplus(-x)
double sigmoid(double x) noexcept;
/// Binary entropy in nats; 0 at eps = 0.
double binary_entropy(double eps);

double sep_dph_loss(RewardPair pair, Smoothing eps);
RewardGrad sep_dph_grad(RewardPair pair, Smoothing eps);
double con_dph_loss(RewardPair pair, Smoothing eps);
RewardGrad con_dph_grad(RewardPair pair, Smoothing eps);

double dph_loss(RewardPair pair, Smoothing eps, DphObjective objective);
RewardGrad dph_grad(RewardPair pair, Smoothing eps, DphObjective objective);

/// Stationary point of the separable loss: (log((1-eps)/eps), log(eps/(1-eps))).
/// Rejects eps = 0, where the optimum is at infinity.
RewardPair optimal_sep_rewards(Smoothing eps);
/// Stationary margin r_w - r_l of the contrastive loss. Rejects eps = 0.
double optimal_con_margin(Smoothing eps);

/// beta * [(policy_w - ref_w) - (policy_l - ref_l)], the DPO logit.
double dpo_logit(const PolicyLogRatios& ratios);
double dpo_loss(const PolicyLogRatios& ratios);

/// Conservative DPO. The flip probability here may be anywhere in [0, 1]
/// so that cdpo(w, l; eps) == cdpo(l, w; 1 - eps) is expressible.
double cdpo_loss(const PolicyLogRatios& ratios, double flip_prob);
PolicyGrad cdpo_grad(const PolicyLogRatios& ratios, double flip_prob);

/// Per-example joint loss alpha1 * cDPO + alpha2 * DPH.
double joint_loss(const PolicyLogRatios& ratios, RewardPair pair, double eps_dpo, Smoothing eps_dph,
                  JointWeights weights, DphObjective objective);

struct LandscapeCell {
    double r_w;
    double r_l;
    double loss;
};

/// n*n evaluations on [lo, hi]^2, row-major: r_l indexes rows, r_w columns.
std::vector<LandscapeCell> landscape_grid(DphObjective objective, Smoothing eps, double lo, double hi,
                                          int n);

}  // namespace dph::objectives
