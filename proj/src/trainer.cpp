#include "dph/trainer.hpp"

#include <cmath>
#include <string>

#include "dph/backbone.hpp"
#include "dph/error.hpp"
#include "dph/reward_head.hpp"

namespace dph::trainer {
namespace {

// Sub-stream indices for derive_seed(seed, ...).
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kHeadStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

std::size_t end_position(std::span<const int> ids, const char* which) {
    if (ids.empty() || ids.back() != data::kImEndId) {
        throw InvalidArgument(std::string(which) + " sequence does not end with <|im_end|>");
    }
    return ids.size() - 1;
}

}  // namespace

AlignConfig AlignConfig::from(const config::TrainerConfig& t) {
    AlignConfig c;
    c.beta = t.beta;
    c.eps_dpo = t.eps_dpo;
    c.eps_dph = t.eps_dph;
    c.weights = {t.alpha_cdpo, t.alpha_dph};
    c.objective = t.objective;
    return c;
}

template <typename Real>
double sft_loss(const Model& model, const data::SftBatch& batch, GradSet* grads) {
    std::size_t targets = 0;
    for (const auto m : batch.mask) {
        targets += m != 0 ? 1 : 0;
    }
    if (targets == 0) {
        throw InvalidArgument("SFT batch has no target positions (all-masked)");
    }
    const double coeff = -1.0 / static_cast<double>(targets);
    double total = 0.0;
    for (int r = 0; r < batch.rows; ++r) {
        const auto ids = batch.row_ids(r);
        const auto mask = batch.row_mask(r);
        bool any = false;
        for (const auto m : mask) {
            any = any || m != 0;
        }
        if (!any) {
            continue;
        }
        const auto tr = backbone::forward<Real>(model.params, model.config, ids);
        total += backbone::sequence_log_prob(tr, ids, mask, backbone::Reduction::sum);
        if (grads != nullptr) {
            std::vector<Real> d_logits(tr.logits.size(), Real{0});
            backbone::add_log_prob_grad(tr, ids, mask, coeff, std::span<Real>(d_logits));
            backbone::backward<Real>(model.params, model.config, tr, d_logits, {}, *grads);
        }
    }
    return -total / static_cast<double>(targets);
}

template <typename Real>
AlignTerms align_loss(const Model& model, const optim::ReferenceParams& reference,
                      std::span<const data::PreferencePair> pairs, const AlignConfig& cfg, Rng& rng, GradSet* grads) {
    if (pairs.empty()) {
        throw InvalidArgument("alignment batch is empty");
    }
    if (!model.has_head) {
        throw InvalidArgument("alignment needs a reward head");
    }
    cfg.weights.validate();
    const objectives::Smoothing eps_dph(cfg.eps_dph);
    const auto head = model.head();
    const double inv_b = 1.0 / static_cast<double>(pairs.size());
    const double a1 = cfg.weights.cdpo;
    const double a2 = cfg.weights.dph;
    const int d = model.config.d_model;

    AlignTerms terms;
    for (const auto& pair : pairs) {
        const std::span<const int> ids_w = pair.chosen_ids;
        const std::span<const int> ids_l = pair.rejected_ids;
        const std::size_t pos_w = end_position(ids_w, "chosen");
        const std::size_t pos_l = end_position(ids_l, "rejected");

        const auto tr_w = backbone::forward<Real>(model.params, model.config, ids_w);
        const auto tr_l = backbone::forward<Real>(model.params, model.config, ids_l);

        objectives::PolicyLogRatios ratios;
        ratios.beta = cfg.beta;
        double cdpo = 0.0;
        if (a1 > 0.0) {
            ratios.policy_chosen = backbone::sequence_log_prob(tr_w, ids_w, pair.chosen_mask, backbone::Reduction::sum);
            ratios.policy_rejected =
                backbone::sequence_log_prob(tr_l, ids_l, pair.rejected_mask, backbone::Reduction::sum);
            const auto ref_w = backbone::forward<Real>(reference.params(), model.config, ids_w);
            const auto ref_l = backbone::forward<Real>(reference.params(), model.config, ids_l);
            ratios.ref_chosen = backbone::sequence_log_prob(ref_w, ids_w, pair.chosen_mask, backbone::Reduction::sum);
            ratios.ref_rejected =
                backbone::sequence_log_prob(ref_l, ids_l, pair.rejected_mask, backbone::Reduction::sum);
            cdpo = objectives::cdpo_loss(ratios, cfg.eps_dpo);
        }

        const auto pool_w = reward_head::evaluate<Real>(tr_w.hidden_row(static_cast<int>(pos_w)), head,
                                                        reward_head::Mode::train, rng);
        const auto pool_l = reward_head::evaluate<Real>(tr_l.hidden_row(static_cast<int>(pos_l)), head,
                                                        reward_head::Mode::train, rng);
        const objectives::RewardPair rewards{pool_w.reward, pool_l.reward};
        const double dph = a2 > 0.0 ? objectives::dph_loss(rewards, eps_dph, cfg.objective) : 0.0;
        const double loss = a1 * cdpo + a2 * dph;
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite alignment loss (cdpo " + std::to_string(cdpo) + ", dph " +
                               std::to_string(dph) + ")");
        }
        terms.loss += loss * inv_b;
        terms.cdpo += cdpo * inv_b;
        terms.dph += dph * inv_b;
        terms.margin += (rewards.chosen - rewards.rejected) * inv_b;
        terms.reward_acc += (rewards.chosen > rewards.rejected ? 1.0 : 0.0) * inv_b;

        if (grads == nullptr) {
            continue;
        }
        auto backprop = [&](const backbone::ForwardTrace<Real>& tr, std::span<const int> ids,
                            std::span<const std::uint8_t> mask, std::size_t pos,
                            const reward_head::PoolTrace<Real>& pool, double d_logp, double d_reward) {
            std::vector<Real> d_logits;
            std::vector<Real> d_hidden;
            if (a1 > 0.0) {
                d_logits.assign(tr.logits.size(), Real{0});
                backbone::add_log_prob_grad(tr, ids, mask, a1 * inv_b * d_logp, std::span<Real>(d_logits));
            }
            if (a2 > 0.0) {
                d_hidden.assign(tr.last_hidden.size(), Real{0});
                reward_head::reward_backward(head, pool, a2 * inv_b * d_reward, *grads,
                                             std::span<Real>(d_hidden).subspan(pos * d, d));
            }
            backbone::backward<Real>(model.params, model.config, tr, d_logits, d_hidden, *grads);
        };
        objectives::PolicyGrad g_policy;
        objectives::RewardGrad g_reward;
        if (a1 > 0.0) {
            g_policy = objectives::cdpo_grad(ratios, cfg.eps_dpo);
        }
        if (a2 > 0.0) {
            g_reward = objectives::dph_grad(rewards, eps_dph, cfg.objective);
        }
        backprop(tr_w, ids_w, pair.chosen_mask, pos_w, pool_w, g_policy.policy_chosen, g_reward.chosen);
        backprop(tr_l, ids_l, pair.rejected_mask, pos_l, pool_l, g_policy.policy_rejected, g_reward.rejected);
    }
    return terms;
}

template double sft_loss<float>(const Model&, const data::SftBatch&, GradSet*);
template double sft_loss<double>(const Model&, const data::SftBatch&, GradSet*);
template AlignTerms align_loss<float>(const Model&, const optim::ReferenceParams&,
                                      std::span<const data::PreferencePair>, const AlignConfig&, Rng&, GradSet*);
template AlignTerms align_loss<double>(const Model&, const optim::ReferenceParams&,
                                       std::span<const data::PreferencePair>, const AlignConfig&, Rng&, GradSet*);

TrainMetrics sft_step(Model& model, const data::SftBatch& batch, optim::OptimizerState& state,
                      const optim::ReferenceParams* anchor, const optim::OptimizerConfig& opt) {
    GradSet grads(model.params);
    const double loss = sft_loss<float>(model, batch, &grads);
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite SFT loss at step " + std::to_string(state.step + 1));
    }
    const auto report = optim::optimizer_step(state, model.params, grads, anchor, opt);
    TrainMetrics m;
    m.step = state.step;
    m.loss = loss;
    m.grad_norm = report.grad_norm;
    m.lr = report.lr;
    return m;
}

TrainMetrics align_step(Model& model, const optim::ReferenceParams& reference,
                        std::span<const data::PreferencePair> pairs, const AlignConfig& cfg,
                        optim::OptimizerState& state, const optim::OptimizerConfig& opt, Rng& rng) {
    GradSet grads(model.params);
    const auto terms = align_loss<float>(model, reference, pairs, cfg, rng, &grads);
    const auto report = optim::optimizer_step(state, model.params, grads, &reference, opt);
    TrainMetrics m;
    m.step = state.step;
    m.loss = terms.loss;
    m.cdpo = terms.cdpo;
    m.dph = terms.dph;
    m.margin = terms.margin;
    m.reward_acc = terms.reward_acc;
    m.grad_norm = report.grad_norm;
    m.lr = report.lr;
    return m;
}

optim::ReferenceParams snapshot_reference(const ParamSet& params) { return optim::snapshot(params); }

void attach_head(Model& model, const config::HeadConfig& head, std::uint64_t seed) {
    if (model.has_head) {
        throw InvalidArgument("model already has a reward head");
    }
    const int d_ff = head.d_ff > 0 ? head.d_ff : model.config.d_ff;
    const auto fresh = reward_head::init_head(head.pooler, model.config.d_model, d_ff, seed, head.dropout);
    model.params.append(fresh.params);
    model.has_head = true;
    model.pooler = head.pooler;
    model.dropout_p = head.dropout;
}

TrainResult train(const config::RunConfig& config, std::span<const data::MultipleChoiceRecord> corpus,
                  const data::Tokenizer& tok, const TrainInput& input, const CheckpointHook& hook) {
    const std::uint64_t seed = config.trainer.seed;
    const bool align = config.stage == config::Stage::align;
    TrainResult result;

    if (input.model != nullptr) {
        result.model = *input.model;
        if (result.model.config.vocab_size != tok.size()) {
            throw InvalidArgument("checkpoint vocabulary size " + std::to_string(result.model.config.vocab_size) +
                                  " does not match the tokenizer (" + std::to_string(tok.size()) + ")");
        }
    } else if (align) {
        throw InvalidArgument("the align stage requires an SFT checkpoint as input (train-sft must run first)");
    } else {
        result.model.config = config.backbone;
        result.model.config.vocab_size = tok.size();
        result.model.params = backbone::init_params(result.model.config, derive_seed(seed, kInitStream));
    }
    if (align) {
        if (result.model.has_head) {
            result.model.dropout_p = config.head.dropout;
        } else {
            attach_head(result.model, config.head, derive_seed(seed, kHeadStream));
        }
    }

    result.reference = input.reference != nullptr ? *input.reference : snapshot_reference(result.model.params);
    result.state = input.state != nullptr ? *input.state : optim::OptimizerState::zeros(result.model.params);
    if (result.state.first.size() != result.model.params.count()) {
        throw InvalidArgument("optimizer state does not match the model parameters");
    }
    const std::int64_t steps = config.trainer.steps;
    if (result.state.step > steps) {
        throw InvalidArgument("input is already at step " + std::to_string(result.state.step) + ", past trainer.steps");
    }
    if (result.state.step < steps && corpus.empty()) {
        throw InvalidArgument("training corpus is empty");
    }

    const auto cfg = AlignConfig::from(config.trainer);
    const auto& opt = config.optimizer;
    const auto batch_size = static_cast<std::size_t>(config.trainer.batch_size);
    const optim::ReferenceParams* anchor = &result.reference;

    while (result.state.step < steps) {
        const auto t = static_cast<std::uint64_t>(result.state.step + 1);
        Rng batch_rng(derive_seed(derive_seed(seed, kBatchStream), t));
        std::vector<data::MultipleChoiceRecord> records;
        records.reserve(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) {
            records.push_back(corpus[batch_rng.below(corpus.size())]);
        }
        TrainMetrics m;
        if (align) {
            std::vector<data::PreferencePair> pairs;
            pairs.reserve(batch_size);
            for (const auto& rec : records) {
                pairs.push_back(data::synthesize_pair(rec, config.prompt, tok, batch_rng));
            }
            Rng dropout_rng(derive_seed(derive_seed(seed, kDropoutStream), t));
            m = align_step(result.model, result.reference, pairs, cfg, result.state, opt, dropout_rng);
        } else {
            const auto batch = data::build_sft_batch(records, config.prompt, tok, result.model.config.max_seq);
            m = sft_step(result.model, batch, result.state, anchor, opt);
        }
        result.metrics.push_back(m);
        if (hook && config.trainer.checkpoint_every > 0 && result.state.step % config.trainer.checkpoint_every == 0 &&
            result.state.step < steps) {
            hook(result);
        }
    }
    return result;
}

}  // namespace dph::trainer
