#pragma once

// Two training stages on a Model: SFT (masked next-token cross-entropy) and
// alignment (per-pair cDPO + DPH joint loss, averaged over the batch).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dph/config.hpp"
#include "dph/data.hpp"
#include "dph/model.hpp"
#include "dph/objectives.hpp"
#include "dph/optimizer.hpp"
#include "dph/rng.hpp"

namespace dph::trainer {

struct TrainMetrics {
    std::int64_t step = 0;
    double loss = 0.0;
    double cdpo = 0.0;
    double dph = 0.0;
    double margin = 0.0;      // mean r_w - r_l
    double reward_acc = 0.0;  // fraction of pairs with r_w > r_l
    double grad_norm = 0.0;   // before clipping
    double lr = 0.0;
};

struct AlignConfig {
    double beta = 0.6;
    double eps_dpo = 0.25;
    double eps_dph = 0.1;
    objectives::JointWeights weights;
    objectives::DphObjective objective = objectives::DphObjective::separable;

    static AlignConfig from(const config::TrainerConfig& t);
};

/// Mean cross-entropy over every masked position of the batch. Adds the
/// gradient of that mean to `grads` when non-null.
template <typename Real>
double sft_loss(const Model& model, const data::SftBatch& batch, GradSet* grads);

struct AlignTerms {
    double loss = 0.0;
    double cdpo = 0.0;
    double dph = 0.0;
    double margin = 0.0;
    double reward_acc = 0.0;
};

/// Batch means of the joint loss and its parts. Rewards are read at the last
/// position of each sequence, which must be <|im_end|>; the head runs in train
/// mode (dropout from `rng`). Adds the gradient of the mean joint loss to
/// `grads` when non-null. The model needs a head.
template <typename Real>
AlignTerms align_loss(const Model& model, const optim::ReferenceParams& reference,
                      std::span<const data::PreferencePair> pairs, const AlignConfig& cfg, Rng& rng, GradSet* grads);

TrainMetrics sft_step(Model& model, const data::SftBatch& batch, optim::OptimizerState& state,
                      const optim::ReferenceParams* anchor, const optim::OptimizerConfig& opt);

TrainMetrics align_step(Model& model, const optim::ReferenceParams& reference,
                        std::span<const data::PreferencePair> pairs, const AlignConfig& cfg,
                        optim::OptimizerState& state, const optim::OptimizerConfig& opt, Rng& rng);

/// Deep copy used both as the DPO reference policy and the prior anchor.
optim::ReferenceParams snapshot_reference(const ParamSet& params);

/// Appends a freshly initialized head (w_dph = 0) to the model.
void attach_head(Model& model, const config::HeadConfig& head, std::uint64_t seed);

/// Where a run starts. `model` is required for alignment. Providing `state`
/// and `reference` continues an interrupted run exactly.
struct TrainInput {
    const Model* model = nullptr;
    const optim::OptimizerState* state = nullptr;
    const optim::ReferenceParams* reference = nullptr;
};

struct TrainResult {
    Model model;
    optim::OptimizerState state;
    optim::ReferenceParams reference{ParamSet{}};
    std::vector<TrainMetrics> metrics;
};

/// Called every checkpoint_every steps (if > 0) with the live result.
using CheckpointHook = std::function<void(const TrainResult&)>;

/// Trains config.stage until the optimizer step count reaches
/// config.trainer.steps (a fresh run starts at 0; a resumed one at its saved
/// step). Batches and dropout masks of step t depend only on (seed, t), so a
/// run is deterministic per seed and resuming reproduces the uninterrupted run.
TrainResult train(const config::RunConfig& config, std::span<const data::MultipleChoiceRecord> corpus,
                  const data::Tokenizer& tok, const TrainInput& input, const CheckpointHook& hook = {});

}  // namespace dph::trainer
