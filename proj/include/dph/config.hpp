#pragma once

// Run configuration: a JSON document with sections backbone, head, data,
// optimizer and trainer. Every key is optional; absent keys take the stage
// default. Unknown sections or keys are rejected with the key named.
//
//   backbone.d_model, layers, heads, d_ff, max_seq, rope_base
//            (vocab_size comes from the tokenizer, not the config)
//   head.pooler        identity | affine_tanh | swiglu_tanh
//   head.d_ff          SwiGLU pooler width; 0 means backbone.d_ff
//   head.dropout       dropout on the pooled output during alignment
//   data.system_prompt system message of every rendered example
//   optimizer.beta1, beta2, eps, max_lr, min_lr, warmup_steps, prior_coeff,
//            clip_norm, prior_scope (none | all | non_embedding | backbone)
//            (total_steps always equals trainer.steps)
//   trainer.steps, batch_size, seed, checkpoint_every (0 = only at the end),
//            beta, eps_dpo, eps_dph, alpha_cdpo, alpha_dph,
//            objective (separable | contrastive)

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dph/backbone.hpp"
#include "dph/data.hpp"
#include "dph/objectives.hpp"
#include "dph/optimizer.hpp"
#include "dph/reward_head.hpp"

namespace dph::config {

enum class Stage { sft, align };

Stage parse_stage(std::string_view name);
std::string_view to_string(Stage stage);

struct HeadConfig {
    reward_head::PoolerKind pooler = reward_head::PoolerKind::swiglu_tanh;
    int d_ff = 0;
    double dropout = 0.1;
};

struct TrainerConfig {
    std::int64_t steps = 1500;
    int batch_size = 32;
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 0;
    double beta = 0.6;
    double eps_dpo = 0.25;
    double eps_dph = 0.1;
    double alpha_cdpo = 1.0;
    double alpha_dph = 1.0;
    objectives::DphObjective objective = objectives::DphObjective::separable;
};

struct RunConfig {
    Stage stage = Stage::sft;
    backbone::BackboneConfig backbone;
    HeadConfig head;
    data::PromptTemplate prompt;
    optim::OptimizerConfig optimizer;
    TrainerConfig trainer;

    static RunConfig defaults(Stage stage);

    /// Defaults of `stage` overridden by the JSON text.
    static RunConfig parse(std::string_view json_text, Stage stage);
    static RunConfig load(const std::string& path, Stage stage);

    /// Full document (every key), accepted back by parse.
    nlohmann::json to_json() const;

    /// Checks ranges and fills derived values (optimizer.total_steps,
    /// a warmup longer than the run is shortened to the run).
    void finalize();
};

}  // namespace dph::config
