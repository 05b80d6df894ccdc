#pragma once

// A backbone plus an optional reward head sharing one parameter set, so a
// single gradient set and optimizer state cover every trainable tensor.

#include "dph/backbone.hpp"
#include "dph/reward_head.hpp"
#include "dph/tensor.hpp"

namespace dph {

struct Model {
    backbone::BackboneConfig config;
    ParamSet params;  // backbone tensors, then head.* tensors when has_head
    bool has_head = false;
    reward_head::PoolerKind pooler = reward_head::PoolerKind::swiglu_tanh;
    double dropout_p = 0.1;

    reward_head::HeadView head() const { return {pooler, dropout_p, &params}; }
    reward_head::HeadView head_for_inference() const { return {pooler, 0.0, &params}; }
};

}  // namespace dph
