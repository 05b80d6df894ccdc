#pragma once

// Small decoder-only transformer: pre-LN residual blocks, causal multi-head
// attention with rotary position embedding, SwiGLU FFN, gain-only layer norm
// and an LM head tied to the token embedding.
//
// Parameters are stored as float32. The forward/backward pass is templated on
// the compute type: float for training, double for gradient verification.

#include <cstdint>
#include <span>
#include <vector>

#include "dph/tensor.hpp"

namespace dph::backbone {

struct BackboneConfig {
    int vocab_size = 64;
    int d_model = 64;
    int layers = 2;
    int heads = 4;
    int d_ff = 172;
    int max_seq = 128;
    double rope_base = 10000.0;

    void validate() const;
    int head_dim() const noexcept { return d_model / heads; }
};

constexpr double kNormEpsilon = 1e-5;

/// Tensor names, shared with the checkpoint format:
///   tok_embedding                         [V, d]   (also the LM head)
///   layers.{l}.attn_norm                  [d]
///   layers.{l}.attn.{wq,wk,wv,wo}         [d, d]
///   layers.{l}.ffn_norm                   [d]
///   layers.{l}.ffn.{gate,up}              [d, d_ff]
///   layers.{l}.ffn.down                   [d_ff, d]
///   final_norm                            [d]
/// Matrices are [in, out]: y = x * W.
ParamSet init_params(const BackboneConfig& config, std::uint64_t seed);

/// Checks names and shapes against the config.
void check_params(const ParamSet& params, const BackboneConfig& config);

template <typename Real>
struct LayerCache {
    std::vector<Real> input;     // residual stream entering the block
    std::vector<Real> attn_in;   // attn_norm output
    std::vector<Real> attn_rstd;
    std::vector<Real> q, k, v;   // q, k after rotary embedding
    std::vector<Real> probs;     // heads x n x n, causal softmax
    std::vector<Real> attn_out;  // concatenated heads, before wo
    std::vector<Real> mid;       // residual stream after attention
    std::vector<Real> ffn_in;
    std::vector<Real> ffn_rstd;
    std::vector<Real> gate, up, act;
};

/// Output of a forward pass over one sequence of length n.
template <typename Real>
struct ForwardTrace {
    int length = 0;
    int vocab = 0;
    int width = 0;
    std::vector<int> tokens;
    std::vector<Real> logits;       // n x V
    std::vector<Real> last_hidden;  // n x d, final-norm output (the LM head input)

    // Activations kept for the backward pass.
    std::vector<LayerCache<Real>> layers;
    std::vector<Real> final_in;
    std::vector<Real> final_rstd;

    std::span<const Real> logits_row(int i) const {
        return std::span<const Real>(logits).subspan(static_cast<std::size_t>(i) * vocab, vocab);
    }
    std::span<const Real> hidden_row(int i) const {
        return std::span<const Real>(last_hidden).subspan(static_cast<std::size_t>(i) * width, width);
    }
};

template <typename Real>
ForwardTrace<Real> forward(const ParamSet& params, const BackboneConfig& config, std::span<const int> tokens);

/// Accumulates into `grads` the gradient of a scalar loss whose partials with
/// respect to the trace outputs are `d_logits` (n x V) and `d_hidden` (n x d).
/// Either seed may be empty, meaning zero.
template <typename Real>
void backward(const ParamSet& params, const BackboneConfig& config, const ForwardTrace<Real>& trace,
              std::span<const Real> d_logits, std::span<const Real> d_hidden, GradSet& grads);

enum class Reduction { sum, mean };

/// Log-softmax of one logits row, computed in float64.
template <typename Real>
std::vector<double> log_softmax(std::span<const Real> row);

/// Sum or mean over positions i with mask[i] of log p(tokens[i] | tokens[<i]),
/// i.e. logits row i-1 scores token i. mask[0] must be false; an empty mask throws.
template <typename Real>
double sequence_log_prob(const ForwardTrace<Real>& trace, std::span<const int> tokens, std::span<const std::uint8_t> mask,
                         Reduction mode);

/// d_logits += coeff * d(sum of masked log-probs)/d logits.
template <typename Real>
void add_log_prob_grad(const ForwardTrace<Real>& trace, std::span<const int> tokens, std::span<const std::uint8_t> mask,
                       double coeff, std::span<Real> d_logits);

struct SampleOptions {
    double temperature = 1.0;  // 0 selects greedy argmax
    int max_new = 8;
    int stop_token = -1;
    std::uint64_t seed = 0;
};

/// Autoregressive sampling from softmax(logits / temperature). The returned
/// completion includes the stop token when it was produced.
std::vector<int> sample(const ParamSet& params, const BackboneConfig& config, std::span<const int> prompt,
                        const SampleOptions& options);

}  // namespace dph::backbone
