#include "dph/objectives.hpp"

#include <cmath>
#include <string>

#include "dph/error.hpp"

namespace dph::objectives {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw InvalidArgument(std::string(what) + " must be finite");
    }
}

void require_finite(RewardPair pair) {
    require_finite(pair.chosen, "chosen reward");
    require_finite(pair.rejected, "rejected reward");
}

void require_valid(const PolicyLogRatios& r) {
    require_finite(r.policy_chosen, "policy chosen log-prob");
    require_finite(r.policy_rejected, "policy rejected log-prob");
    require_finite(r.ref_chosen, "reference chosen log-prob");
    require_finite(r.ref_rejected, "reference rejected log-prob");
    if (!(r.beta > 0.0) || !std::isfinite(r.beta)) {
        throw InvalidArgument("beta must be a positive finite value");
    }
}

void require_flip_prob(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument("cDPO label smoothing must lie in [0, 1]");
    }
}

double stationary_log_odds(Smoothing eps) {
    const double e = eps.value();
    if (e == 0.0) {
        throw InvalidArgument("optimum diverges for eps = 0");
    }
    return std::log((1.0 - e) / e);
}

}  // namespace

Smoothing::Smoothing(double eps) : eps_(eps) {
    if (!(eps >= 0.0 && eps <= 0.5)) {
        throw InvalidArgument("label smoothing must lie in [0, 0.5], got " + std::to_string(eps));
    }
}

void JointWeights::validate() const {
    if (!(cdpo >= 0.0) || !(dph >= 0.0) || !std::isfinite(cdpo) || !std::isfinite(dph)) {
        throw InvalidArgument("joint weights must be finite and non-negative");
    }
    if (cdpo == 0.0 && dph == 0.0) {
        throw InvalidArgument("at least one joint weight must be positive");
    }
}

DphObjective parse_objective(std::string_view name) {
    if (name == "separable") {
        return DphObjective::separable;
    }
    if (name == "contrastive") {
        return DphObjective::contrastive;
    }
    throw InvalidArgument("unknown DPH objective '" + std::string(name) + "'");
}

std::string_view to_string(DphObjective objective) {
    return objective == DphObjective::separable ? "separable" : "contrastive";
}

double softplus(double x) noexcept { return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

double log_sigmoid(double x) noexcept { return -softplus(-x); }

double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

double binary_entropy(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) {
        throw InvalidArgument("binary entropy argument must lie in [0, 1]");
    }
    double h = 0.0;
    if (eps > 0.0) {
        h -= eps * std::log(eps);
    }
    if (eps < 1.0) {
        h -= (1.0 - eps) * std::log1p(-eps);
    }
    return h;
}

double sep_dph_loss(RewardPair pair, Smoothing eps) {
    require_finite(pair);
    const double e = eps.value();
    const double chosen = (1.0 - e) * log_sigmoid(pair.chosen) + e * log_sigmoid(-pair.chosen);
    const double rejected = e * log_sigmoid(pair.rejected) + (1.0 - e) * log_sigmoid(-pair.rejected);
    return -chosen - rejected;
}

RewardGrad sep_dph_grad(RewardPair pair, Smoothing eps) {
    require_finite(pair);
    const double e = eps.value();
    // 1/(e^r + 1) == sigmoid(-r)
    return {e - sigmoid(-pair.chosen), sigmoid(pair.rejected) - e};
}

double con_dph_loss(RewardPair pair, Smoothing eps) {
    require_finite(pair);
    const double e = eps.value();
    const double margin = pair.chosen - pair.rejected;
    return -(1.0 - e) * log_sigmoid(margin) - e * log_sigmoid(-margin);
}

RewardGrad con_dph_grad(RewardPair pair, Smoothing eps) {
    require_finite(pair);
    // e^{r_l} / (e^{r_l} + e^{r_w}) == sigmoid(r_l - r_w)
    const double g = eps.value() - sigmoid(pair.rejected - pair.chosen);
    return {g, -g};
}

double dph_loss(RewardPair pair, Smoothing eps, DphObjective objective) {
    return objective == DphObjective::separable ? sep_dph_loss(pair, eps) : con_dph_loss(pair, eps);
}

RewardGrad dph_grad(RewardPair pair, Smoothing eps, DphObjective objective) {
    return objective == DphObjective::separable ? sep_dph_grad(pair, eps) : con_dph_grad(pair, eps);
}

RewardPair optimal_sep_rewards(Smoothing eps) {
    const double r = stationary_log_odds(eps);
    return {r, -r};
}

double optimal_con_margin(Smoothing eps) { return stationary_log_odds(eps); }

double dpo_logit(const PolicyLogRatios& r) {
    require_valid(r);
    return r.beta * ((r.policy_chosen - r.ref_chosen) - (r.policy_rejected - r.ref_rejected));
}

double dpo_loss(const PolicyLogRatios& ratios) { return softplus(-dpo_logit(ratios)); }

double cdpo_loss(const PolicyLogRatios& ratios, double flip_prob) {
    require_flip_prob(flip_prob);
    const double z = dpo_logit(ratios);
    // L_DPO(l, w) has logit exactly -z.
    return (1.0 - flip_prob) * softplus(-z) + flip_prob * softplus(z);
}

PolicyGrad cdpo_grad(const PolicyLogRatios& ratios, double flip_prob) {
    require_flip_prob(flip_prob);
    const double z = dpo_logit(ratios);
    const double dz = sigmoid(z) - (1.0 - flip_prob);
    return {ratios.beta * dz, -ratios.beta * dz};
}

double joint_loss(const PolicyLogRatios& ratios, RewardPair pair, double eps_dpo, Smoothing eps_dph,
                  JointWeights weights, DphObjective objective) {
    weights.validate();
    return weights.cdpo * cdpo_loss(ratios, eps_dpo) + weights.dph * dph_loss(pair, eps_dph, objective);
}

std::vector<LandscapeCell> landscape_grid(DphObjective objective, Smoothing eps, double lo, double hi,
                                          int n) {
    if (n < 2) {
        throw InvalidArgument("landscape grid needs n >= 2");
    }
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw InvalidArgument("landscape range must satisfy lo < hi");
    }
    const double step = (hi - lo) / static_cast<double>(n - 1);
    auto coord = [&](int i) { return i == n - 1 ? hi : lo + step * static_cast<double>(i); };

    std::vector<LandscapeCell> cells(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (int row = 0; row < n; ++row) {
        const double r_l = coord(row);
        for (int col = 0; col < n; ++col) {
            const double r_w = coord(col);
            cells[static_cast<std::size_t>(row) * n + col] = {r_w, r_l, dph_loss({r_w, r_l}, eps, objective)};
        }
    }
    return cells;
}

}  // namespace dph::objectives
