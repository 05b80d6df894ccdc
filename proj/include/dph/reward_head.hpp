#pragma once

// Reward head: r = f(h) . w_dph, where h is the last-layer hidden state at the
// final <|im_end|> token and f is one of three pooling functions.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dph/rng.hpp"
#include "dph/tensor.hpp"

namespace dph::reward_head {

enum class PoolerKind { identity, affine_tanh, swiglu_tanh };

PoolerKind parse_pooler(std::string_view name);
std::string_view to_string(PoolerKind kind);

enum class Mode { train, infer };

/// Non-owning view of a head. `params` may hold other tensors too (e.g. the
/// backbone); only the head.* tensors are read. Tensor names:
///   head.w_dph                                       [d]
///   head.affine.{weight [d, d], bias [d]}            (affine_tanh)
///   head.swiglu.{gate, up [d, d_ff]; down [d_ff, d]} (swiglu_tanh, no biases)
struct HeadView {
    PoolerKind kind = PoolerKind::identity;
    double dropout_p = 0.0;
    const ParamSet* params = nullptr;

    int width() const;
    int ffn_width() const;  // 0 unless swiglu_tanh
    void validate() const;
};

/// Owning head: pooler kind, dropout probability and the head tensors.
struct RewardHead {
    PoolerKind kind = PoolerKind::swiglu_tanh;
    double dropout_p = 0.1;
    ParamSet params;

    HeadView view() const { return {kind, dropout_p, &params}; }
    operator HeadView() const { return view(); }  // NOLINT(google-explicit-constructor)
};

/// Number of scalars allocated by init_head for this configuration.
std::size_t head_param_count(PoolerKind kind, std::size_t d, std::size_t d_ff);

/// Matrices ~ N(0, 0.02); biases and w_dph zero, so every initial reward is 0.
RewardHead init_head(PoolerKind kind, int d, int d_ff, std::uint64_t seed, double dropout_p = 0.1);

/// Intermediate values of one head evaluation, needed by reward_backward.
template <typename Real>
struct PoolTrace {
    std::vector<Real> input;
    std::vector<Real> pre;     // argument of tanh (affine / swiglu)
    std::vector<Real> gate, up, act;
    std::vector<Real> pooled;  // f(h) before dropout
    std::vector<Real> keep;    // dropout multipliers (empty when inactive)
    std::vector<Real> output;  // pooled after dropout
    double reward = 0.0;
};

/// f(h), with inverted dropout applied in train mode when dropout_p > 0.
template <typename Real>
std::vector<Real> pool(std::span<const Real> h, HeadView head, Mode mode, Rng& rng);

template <typename Real>
double reward(std::span<const Real> h, HeadView head, Mode mode, Rng& rng);

/// Infer-mode reward; needs no random source.
template <typename Real>
double reward(std::span<const Real> h, HeadView head);

template <typename Real>
PoolTrace<Real> evaluate(std::span<const Real> h, HeadView head, Mode mode, Rng& rng);

/// head_grads += d_reward * dr/dtheta_head; d_h += d_reward * dr/dh.
template <typename Real>
void reward_backward(HeadView head, const PoolTrace<Real>& trace, double d_reward, GradSet& head_grads,
                     std::span<Real> d_h);

}  // namespace dph::reward_head
