#include "dph/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>

#include "dph/backbone.hpp"
#include "dph/data.hpp"
#include "dph/error.hpp"
#include "dph/model.hpp"
#include "dph/objectives.hpp"
#include "dph/reward_head.hpp"
#include "dph/rng.hpp"
#include "dph/tensor.hpp"
#include "dph/trainer.hpp"

namespace dph::gradcheck {
namespace {

// Model-level checks perturb float32 parameters by an exact power of two;
// parameters are first rounded to multiples of it so theta +/- h is exact.
constexpr double kParamStep = 0x1.0p-17;
constexpr double kModelFloor = 1e-6;

void record(Report& rep, double analytic, double numeric, double floor, const std::string& where) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    double err = std::abs(analytic - numeric) / denom;
    if (std::isnan(err)) {
        err = INFINITY;
    }
    ++rep.checked;
    if (rep.worst.empty() || err > rep.max_rel_error) {
        rep.max_rel_error = err;
        std::ostringstream s;
        s << where << " analytic=" << analytic << " numeric=" << numeric;
        rep.worst = s.str();
    }
}

void quantize(ParamSet& params) {
    for (auto& t : params) {
        for (float& v : t.values) {
            v = static_cast<float>(std::round(static_cast<double>(v) / kParamStep) * kParamStep);
        }
    }
}

void fill_normal(Tensor& t, Rng& rng, double scale) {
    for (float& v : t.values) {
        v = static_cast<float>(scale * rng.normal());
    }
}

// Central differences of `loss` over every element of the selected tensors.
void compare_params(Report& rep, ParamSet& params, const GradSet& analytic, const std::function<double()>& loss,
                    const std::function<bool(const std::string&)>& select) {
    for (std::size_t k = 0; k < params.count(); ++k) {
        Tensor& t = params[k];
        if (!select(t.name)) {
            continue;
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            const float saved = t.values[i];
            t.values[i] = static_cast<float>(static_cast<double>(saved) + kParamStep);
            const double up = loss();
            t.values[i] = static_cast<float>(static_cast<double>(saved) - kParamStep);
            const double down = loss();
            t.values[i] = saved;
            const double numeric = (up - down) / (2.0 * kParamStep);
            record(rep, analytic[k][i], numeric, kModelFloor, t.name + "[" + std::to_string(i) + "]");
        }
    }
}

template <typename Real>
Report head_suite(std::uint64_t seed, const char* scope, double tolerance) {
    Report rep;
    rep.scope = scope;
    rep.tolerance = tolerance;
    constexpr int d = 8;
    constexpr int d_ff = 12;
    Rng rng(seed);
    for (const auto kind : {reward_head::PoolerKind::identity, reward_head::PoolerKind::affine_tanh,
                            reward_head::PoolerKind::swiglu_tanh}) {
        for (const double dropout : {0.0, 0.25}) {
            auto head = reward_head::init_head(kind, d, d_ff, rng.next_u64(), dropout);
            for (auto& t : head.params) {
                fill_normal(t, rng, 0.5);
            }
            quantize(head.params);
            std::vector<double> h(d);
            for (double& x : h) {
                x = std::round(rng.normal() / kParamStep) * kParamStep;
            }
            const std::uint64_t mask_seed = rng.next_u64();
            const auto mode = dropout > 0.0 ? reward_head::Mode::train : reward_head::Mode::infer;
            const std::string tag = std::string(reward_head::to_string(kind)) + (dropout > 0.0 ? "/dropout " : " ");

            std::vector<Real> h_real(h.begin(), h.end());
            Rng mask_rng(mask_seed);
            const auto trace = reward_head::evaluate<Real>(h_real, head, mode, mask_rng);
            GradSet grads(head.params);
            std::vector<Real> d_h(d, Real{0});
            reward_head::reward_backward<Real>(head, trace, 1.0, grads, d_h);

            auto loss_at = [&](std::span<const double> x) {
                Rng r(mask_seed);
                return reward_head::reward<double>(x, head, mode, r);
            };
            compare_params(rep, head.params, grads, [&] { return loss_at(h); },
                           [&](const std::string&) { return true; });
            for (int i = 0; i < d; ++i) {
                std::vector<double> up = h;
                std::vector<double> down = h;
                up[i] += kParamStep;
                down[i] -= kParamStep;
                const double numeric = (loss_at(up) - loss_at(down)) / (2.0 * kParamStep);
                record(rep, static_cast<double>(d_h[i]), numeric, kModelFloor, tag + "h[" + std::to_string(i) + "]");
            }
        }
    }
    return rep;
}

backbone::BackboneConfig tiny_config() {
    backbone::BackboneConfig c;
    c.vocab_size = 11;
    c.d_model = 8;
    c.layers = 1;
    c.heads = 2;
    c.d_ff = 21;
    c.max_seq = 8;
    return c;
}

ParamSet tiny_params(const backbone::BackboneConfig& c, Rng& rng) {
    ParamSet p = backbone::init_params(c, rng.next_u64());
    for (auto& t : p) {
        // Larger than the training init so every nonlinearity is exercised.
        fill_normal(t, rng, t.shape.size() == 2 ? 0.4 : 0.3);
        if (t.shape.size() == 1) {
            for (float& v : t.values) {
                v += 1.0F;
            }
        }
    }
    quantize(p);
    return p;
}

}  // namespace

Report objectives() {
    Report rep;
    rep.scope = "objectives";
    rep.tolerance = 1e-6;
    constexpr double h = 1e-6;
    constexpr double floor = 1e-3;
    for (const double e : {0.05, 0.1, 0.25, 0.5}) {
        const objectives::Smoothing eps(e);
        for (int iw = -4; iw <= 4; ++iw) {
            for (int il = -4; il <= 4; ++il) {
                const double rw = iw;
                const double rl = il;
                for (const auto obj : {objectives::DphObjective::separable, objectives::DphObjective::contrastive}) {
                    const auto g = objectives::dph_grad({rw, rl}, eps, obj);
                    const double nw = (objectives::dph_loss({rw + h, rl}, eps, obj) -
                                       objectives::dph_loss({rw - h, rl}, eps, obj)) /
                                      (2 * h);
                    const double nl = (objectives::dph_loss({rw, rl + h}, eps, obj) -
                                       objectives::dph_loss({rw, rl - h}, eps, obj)) /
                                      (2 * h);
                    std::ostringstream where;
                    where << objectives::to_string(obj) << " eps=" << e << " r=(" << rw << "," << rl << ")";
                    record(rep, g.chosen, nw, floor, where.str() + " d/dr_w");
                    record(rep, g.rejected, nl, floor, where.str() + " d/dr_l");
                }
            }
        }
    }
    for (const double flip : {0.0, 0.1, 0.25, 0.5}) {
        for (int a = -3; a <= 3; ++a) {
            for (int b = -3; b <= 3; ++b) {
                objectives::PolicyLogRatios r{-2.0 + 0.5 * a, -2.5 + 0.5 * b, -2.2, -2.4, 0.6};
                const auto g = objectives::cdpo_grad(r, flip);
                auto up = r;
                auto down = r;
                up.policy_chosen += h;
                down.policy_chosen -= h;
                const double nw = (objectives::cdpo_loss(up, flip) - objectives::cdpo_loss(down, flip)) / (2 * h);
                up = r;
                down = r;
                up.policy_rejected += h;
                down.policy_rejected -= h;
                const double nl = (objectives::cdpo_loss(up, flip) - objectives::cdpo_loss(down, flip)) / (2 * h);
                std::ostringstream where;
                where << "cdpo eps=" << flip << " (" << a << "," << b << ")";
                record(rep, g.policy_chosen, nw, floor, where.str() + " d/dpolicy_w");
                record(rep, g.policy_rejected, nl, floor, where.str() + " d/dpolicy_l");
            }
        }
    }
    return rep;
}

Report head(std::uint64_t seed) { return head_suite<double>(seed, "head", 1e-6); }

Report head_f32(std::uint64_t seed) { return head_suite<float>(seed, "head_f32", 1e-4); }

Report backbone(std::uint64_t seed) {
    Report rep;
    rep.scope = "backbone";
    rep.tolerance = 1e-4;
    const auto config = tiny_config();
    Rng rng(seed);
    ParamSet params = tiny_params(config, rng);
    const int n = config.max_seq;
    std::vector<int> tokens(n);
    for (int& t : tokens) {
        t = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.vocab_size)));
    }
    data::Mask mask(n, 0);
    for (int i = 1; i < n; ++i) {
        mask[i] = rng.bernoulli(0.6) ? 1 : 0;
    }
    mask[n - 1] = 1;
    std::vector<double> probe(static_cast<std::size_t>(n) * config.d_model, 0.0);
    for (int i : {n / 2, n - 1}) {
        for (int j = 0; j < config.d_model; ++j) {
            probe[static_cast<std::size_t>(i) * config.d_model + j] = rng.normal();
        }
    }
    const auto count = static_cast<double>(std::count(mask.begin(), mask.end(), 1));

    auto loss = [&] {
        const auto tr = backbone::forward<double>(params, config, tokens);
        double l = -backbone::sequence_log_prob(tr, tokens, mask, backbone::Reduction::mean);
        for (std::size_t k = 0; k < probe.size(); ++k) {
            l += probe[k] * tr.last_hidden[k];
        }
        return l;
    };
    const auto tr = backbone::forward<double>(params, config, tokens);
    std::vector<double> d_logits(tr.logits.size(), 0.0);
    backbone::add_log_prob_grad(tr, tokens, mask, -1.0 / count, std::span<double>(d_logits));
    GradSet grads(params);
    backbone::backward<double>(params, config, tr, d_logits, probe, grads);
    compare_params(rep, params, grads, loss, [](const std::string&) { return true; });
    return rep;
}

Report alignment(std::uint64_t seed, bool dph_only) {
    Report rep;
    rep.scope = dph_only ? "alignment_dph" : "alignment_joint";
    rep.tolerance = 1e-4;
    Rng rng(seed);
    Model model;
    model.config = tiny_config();
    model.params = tiny_params(model.config, rng);
    ParamSet ref_params = model.params;
    for (auto& t : ref_params) {
        for (float& v : t.values) {
            v += static_cast<float>(0.05 * rng.normal());
        }
    }
    config::HeadConfig hc;
    hc.pooler = reward_head::PoolerKind::swiglu_tanh;
    hc.d_ff = 6;
    hc.dropout = 0.0;
    trainer::attach_head(model, hc, rng.next_u64());
    for (auto& t : model.params) {
        if (t.name.starts_with("head.")) {
            fill_normal(t, rng, 0.5);
        }
    }
    quantize(model.params);
    const optim::ReferenceParams reference(ref_params);

    std::vector<data::PreferencePair> pairs;
    for (int p = 0; p < 2; ++p) {
        data::PreferencePair pair;
        for (int i = 0; i < 4; ++i) {
            pair.prompt_ids.push_back(3 + static_cast<int>(rng.below(8)));
        }
        const int a = 3 + static_cast<int>(rng.below(8));
        const int b = 3 + static_cast<int>((a - 3 + 1 + rng.below(7)) % 8);
        pair.chosen_ids = pair.prompt_ids;
        pair.chosen_ids.insert(pair.chosen_ids.end(), {a, data::kImEndId});
        pair.rejected_ids = pair.prompt_ids;
        pair.rejected_ids.insert(pair.rejected_ids.end(), {b, data::kImEndId});
        pair.chosen_mask = {0, 0, 0, 0, 1, 1};
        pair.rejected_mask = pair.chosen_mask;
        pairs.push_back(std::move(pair));
    }
    trainer::AlignConfig cfg;
    cfg.weights = {dph_only ? 0.0 : 1.0, 1.0};

    Rng unused(0);
    GradSet grads(model.params);
    trainer::align_loss<double>(model, reference, pairs, cfg, unused, &grads);
    auto loss = [&] {
        Rng r(0);
        return trainer::align_loss<double>(model, reference, pairs, cfg, r, nullptr).loss;
    };
    compare_params(rep, model.params, grads, loss,
                   [&](const std::string& name) { return !dph_only || name.starts_with("head."); });
    return rep;
}

std::vector<Report> run_scope(const std::string& scope, std::uint64_t seed) {
    if (scope == "objectives") {
        return {objectives()};
    }
    if (scope == "head") {
        return {head(seed), head_f32(seed), alignment(seed, true)};
    }
    if (scope == "backbone") {
        return {backbone(seed), alignment(seed, false)};
    }
    throw InvalidArgument("unknown gradcheck scope '" + scope + "' (expected objectives, head or backbone)");
}

}  // namespace dph::gradcheck
