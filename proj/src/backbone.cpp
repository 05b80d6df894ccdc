#include "dph/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dph/error.hpp"
#include "dph/kernels.hpp"
#include "dph/rng.hpp"

namespace dph::backbone {

namespace {

constexpr float kInitStd = 0.02F;

struct LayerIndex {
    std::size_t attn_norm, wq, wk, wv, wo, ffn_norm, gate, up, down;
};

struct Layout {
    std::size_t embedding;
    std::size_t final_norm;
    std::vector<LayerIndex> layers;
};

std::string layer_name(int l, const char* suffix) { return "layers." + std::to_string(l) + "." + suffix; }

Layout resolve(const ParamSet& params, const BackboneConfig& config) {
    Layout out{params.index_of("tok_embedding"), params.index_of("final_norm"), {}};
    out.layers.reserve(static_cast<std::size_t>(config.layers));
    for (int l = 0; l < config.layers; ++l) {
        out.layers.push_back({params.index_of(layer_name(l, "attn_norm")), params.index_of(layer_name(l, "attn.wq")),
                              params.index_of(layer_name(l, "attn.wk")), params.index_of(layer_name(l, "attn.wv")),
                              params.index_of(layer_name(l, "attn.wo")), params.index_of(layer_name(l, "ffn_norm")),
                              params.index_of(layer_name(l, "ffn.gate")), params.index_of(layer_name(l, "ffn.up")),
                              params.index_of(layer_name(l, "ffn.down"))});
    }
    return out;
}

std::span<const float> values(const ParamSet& params, std::size_t i) { return params[i].values; }

template <typename Real>
void layer_norm(std::span<const Real> x, std::span<const float> gain, std::span<Real> y, std::span<Real> rstd,
                int n, int d) {
    for (int i = 0; i < n; ++i) {
        const Real* row = x.data() + static_cast<std::size_t>(i) * d;
        Real mean{};
        for (int j = 0; j < d; ++j) {
            mean += row[j];
        }
        mean /= static_cast<Real>(d);
        Real var{};
        for (int j = 0; j < d; ++j) {
            const Real c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<Real>(d);
        const Real r = Real{1} / std::sqrt(var + static_cast<Real>(kNormEpsilon));
        rstd[i] = r;
        Real* out = y.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            out[j] = (row[j] - mean) * r * static_cast<Real>(gain[j]);
        }
    }
}

// dx += LN'(x)^T dy; d_gain += sum_i dy * xhat
template <typename Real>
void layer_norm_backward(std::span<const Real> x, std::span<const float> gain, std::span<const Real> rstd,
                         std::span<const Real> dy, std::span<Real> dx, std::span<double> d_gain, int n, int d) {
    std::vector<Real> xhat(static_cast<std::size_t>(d));
    std::vector<Real> dxhat(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        const Real* row = x.data() + static_cast<std::size_t>(i) * d;
        const Real* drow = dy.data() + static_cast<std::size_t>(i) * d;
        Real mean{};
        for (int j = 0; j < d; ++j) {
            mean += row[j];
        }
        mean /= static_cast<Real>(d);
        Real mean_dxhat{};
        Real mean_dxhat_xhat{};
        for (int j = 0; j < d; ++j) {
            xhat[j] = (row[j] - mean) * rstd[i];
            dxhat[j] = drow[j] * static_cast<Real>(gain[j]);
            d_gain[j] += static_cast<double>(drow[j]) * static_cast<double>(xhat[j]);
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
        }
        mean_dxhat /= static_cast<Real>(d);
        mean_dxhat_xhat /= static_cast<Real>(d);
        Real* out = dx.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            out[j] += rstd[i] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
}

template <typename Real>
struct RopeTable {
    int half = 0;
    std::vector<Real> cos, sin;  // n x half
};

template <typename Real>
RopeTable<Real> rope_table(int n, int head_dim, double base) {
    RopeTable<Real> t;
    t.half = head_dim / 2;
    t.cos.resize(static_cast<std::size_t>(n) * t.half);
    t.sin.resize(t.cos.size());
    for (int pos = 0; pos < n; ++pos) {
        for (int p = 0; p < t.half; ++p) {
            const double freq = std::pow(base, -2.0 * p / static_cast<double>(head_dim));
            const double angle = pos * freq;
            t.cos[static_cast<std::size_t>(pos) * t.half + p] = static_cast<Real>(std::cos(angle));
            t.sin[static_cast<std::size_t>(pos) * t.half + p] = static_cast<Real>(std::sin(angle));
        }
    }
    return t;
}

// Rotates consecutive pairs (2p, 2p+1) within each head; `sign` = -1 applies the inverse.
template <typename Real>
void apply_rope(std::span<Real> x, const RopeTable<Real>& t, int n, int heads, int head_dim, Real sign) {
    const int d = heads * head_dim;
    for (int pos = 0; pos < n; ++pos) {
        for (int h = 0; h < heads; ++h) {
            Real* v = x.data() + static_cast<std::size_t>(pos) * d + static_cast<std::size_t>(h) * head_dim;
            for (int p = 0; p < t.half; ++p) {
                const Real c = t.cos[static_cast<std::size_t>(pos) * t.half + p];
                const Real s = sign * t.sin[static_cast<std::size_t>(pos) * t.half + p];
                const Real a = v[2 * p];
                const Real b = v[2 * p + 1];
                v[2 * p] = a * c - b * s;
                v[2 * p + 1] = a * s + b * c;
            }
        }
    }
}

template <typename Real>
Real silu(Real z) {
    return z / (Real{1} + std::exp(-z));
}

template <typename Real>
Real silu_grad(Real z) {
    const Real s = Real{1} / (Real{1} + std::exp(-z));
    return s * (Real{1} + z * (Real{1} - s));
}

template <typename Real>
std::span<const Real> cview(const std::vector<Real>& v) {
    return std::span<const Real>(v);
}

}  // namespace

void BackboneConfig::validate() const {
    if (vocab_size <= 0 || d_model <= 0 || layers <= 0 || heads <= 0 || d_ff <= 0) {
        throw InvalidArgument("backbone dimensions must be positive");
    }
    if (d_model % heads != 0) {
        throw InvalidArgument("d_model must be divisible by heads");
    }
    if (head_dim() % 2 != 0) {
        throw InvalidArgument("rotary embedding needs an even head dimension");
    }
    if (max_seq < 2) {
        throw InvalidArgument("max_seq must be at least 2");
    }
    if (!(rope_base > 0.0)) {
        throw InvalidArgument("rope_base must be positive");
    }
}

ParamSet init_params(const BackboneConfig& config, std::uint64_t seed) {
    config.validate();
    const std::int64_t d = config.d_model;
    const std::int64_t ff = config.d_ff;
    ParamSet params;
    params.add("tok_embedding", {config.vocab_size, d});
    for (int l = 0; l < config.layers; ++l) {
        params.add(layer_name(l, "attn_norm"), {d}, 1.0F);
        params.add(layer_name(l, "attn.wq"), {d, d});
        params.add(layer_name(l, "attn.wk"), {d, d});
        params.add(layer_name(l, "attn.wv"), {d, d});
        params.add(layer_name(l, "attn.wo"), {d, d});
        params.add(layer_name(l, "ffn_norm"), {d}, 1.0F);
        params.add(layer_name(l, "ffn.gate"), {d, ff});
        params.add(layer_name(l, "ffn.up"), {d, ff});
        params.add(layer_name(l, "ffn.down"), {ff, d});
    }
    params.add("final_norm", {d}, 1.0F);

    Rng rng(seed);
    for (auto& t : params) {
        if (t.shape.size() == 2) {
            for (float& v : t.values) {
                v = kInitStd * static_cast<float>(rng.normal());
            }
        }
    }
    return params;
}

void check_params(const ParamSet& params, const BackboneConfig& config) {
    const ParamSet expected = [&] {
        BackboneConfig c = config;
        c.validate();
        ParamSet p;
        const std::int64_t d = c.d_model;
        const std::int64_t ff = c.d_ff;
        p.add("tok_embedding", {c.vocab_size, d});
        for (int l = 0; l < c.layers; ++l) {
            p.add(layer_name(l, "attn_norm"), {d});
            for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
                p.add(layer_name(l, w), {d, d});
            }
            p.add(layer_name(l, "ffn_norm"), {d});
            p.add(layer_name(l, "ffn.gate"), {d, ff});
            p.add(layer_name(l, "ffn.up"), {d, ff});
            p.add(layer_name(l, "ffn.down"), {ff, d});
        }
        p.add("final_norm", {d});
        return p;
    }();
    for (const auto& t : expected) {
        if (!params.contains(t.name)) {
            throw InvalidArgument("backbone tensor '" + t.name + "' missing");
        }
        if (params.at(t.name).shape != t.shape) {
            throw InvalidArgument("backbone tensor '" + t.name + "' has the wrong shape");
        }
    }
}

template <typename Real>
ForwardTrace<Real> forward(const ParamSet& params, const BackboneConfig& config, std::span<const int> tokens) {
    const int n = static_cast<int>(tokens.size());
    const int d = config.d_model;
    const int ff = config.d_ff;
    const int heads = config.heads;
    const int hd = config.head_dim();
    const int vocab = config.vocab_size;
    if (n == 0) {
        throw InvalidArgument("forward needs at least one token");
    }
    if (n > config.max_seq) {
        throw InvalidArgument("sequence length " + std::to_string(n) + " exceeds max_seq " +
                              std::to_string(config.max_seq));
    }
    for (const int t : tokens) {
        if (t < 0 || t >= vocab) {
            throw InvalidArgument("token id " + std::to_string(t) + " out of range");
        }
    }
    const Layout layout = resolve(params, config);
    const std::size_t nd = static_cast<std::size_t>(n) * d;
    const std::size_t nff = static_cast<std::size_t>(n) * ff;

    ForwardTrace<Real> tr;
    tr.length = n;
    tr.vocab = vocab;
    tr.width = d;
    tr.tokens.assign(tokens.begin(), tokens.end());

    std::vector<Real> h(nd);
    const auto embedding = values(params, layout.embedding);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            h[static_cast<std::size_t>(i) * d + j] =
                static_cast<Real>(embedding[static_cast<std::size_t>(tokens[i]) * d + j]);
        }
    }

    const RopeTable<Real> rope = rope_table<Real>(n, hd, config.rope_base);
    const Real scale = Real{1} / std::sqrt(static_cast<Real>(hd));

    tr.layers.resize(static_cast<std::size_t>(config.layers));
    for (int l = 0; l < config.layers; ++l) {
        const LayerIndex& ix = layout.layers[static_cast<std::size_t>(l)];
        LayerCache<Real>& c = tr.layers[static_cast<std::size_t>(l)];
        c.input = h;
        c.attn_in.resize(nd);
        c.attn_rstd.resize(static_cast<std::size_t>(n));
        layer_norm<Real>(cview(c.input), values(params, ix.attn_norm), c.attn_in, c.attn_rstd, n, d);

        c.q.resize(nd);
        c.k.resize(nd);
        c.v.resize(nd);
        kernels::matmul<Real, float>(cview(c.attn_in), values(params, ix.wq), c.q, n, d, d);
        kernels::matmul<Real, float>(cview(c.attn_in), values(params, ix.wk), c.k, n, d, d);
        kernels::matmul<Real, float>(cview(c.attn_in), values(params, ix.wv), c.v, n, d, d);
        apply_rope<Real>(c.q, rope, n, heads, hd, Real{1});
        apply_rope<Real>(c.k, rope, n, heads, hd, Real{1});

        c.probs.assign(static_cast<std::size_t>(heads) * n * n, Real{});
        c.attn_out.assign(nd, Real{});
#pragma omp parallel for schedule(static) if (heads > 1 && n > 32)
        for (int hh = 0; hh < heads; ++hh) {
            const std::size_t off = static_cast<std::size_t>(hh) * hd;
            for (int i = 0; i < n; ++i) {
                Real* prow = c.probs.data() + (static_cast<std::size_t>(hh) * n + i) * n;
                const Real* qi = c.q.data() + static_cast<std::size_t>(i) * d + off;
                Real mx = -std::numeric_limits<Real>::infinity();
                for (int j = 0; j <= i; ++j) {
                    const Real* kj = c.k.data() + static_cast<std::size_t>(j) * d + off;
                    Real s{};
                    for (int p = 0; p < hd; ++p) {
                        s += qi[p] * kj[p];
                    }
                    prow[j] = s * scale;
                    mx = std::max(mx, prow[j]);
                }
                Real total{};
                for (int j = 0; j <= i; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    total += prow[j];
                }
                Real* out = c.attn_out.data() + static_cast<std::size_t>(i) * d + off;
                for (int j = 0; j <= i; ++j) {
                    prow[j] /= total;
                    const Real* vj = c.v.data() + static_cast<std::size_t>(j) * d + off;
                    for (int p = 0; p < hd; ++p) {
                        out[p] += prow[j] * vj[p];
                    }
                }
            }
        }

        std::vector<Real> proj(nd);
        kernels::matmul<Real, float>(cview(c.attn_out), values(params, ix.wo), proj, n, d, d);
        c.mid.resize(nd);
        for (std::size_t e = 0; e < nd; ++e) {
            c.mid[e] = c.input[e] + proj[e];
        }

        c.ffn_in.resize(nd);
        c.ffn_rstd.resize(static_cast<std::size_t>(n));
        layer_norm<Real>(cview(c.mid), values(params, ix.ffn_norm), c.ffn_in, c.ffn_rstd, n, d);
        c.gate.resize(nff);
        c.up.resize(nff);
        c.act.resize(nff);
        kernels::matmul<Real, float>(cview(c.ffn_in), values(params, ix.gate), c.gate, n, d, ff);
        kernels::matmul<Real, float>(cview(c.ffn_in), values(params, ix.up), c.up, n, d, ff);
        for (std::size_t e = 0; e < nff; ++e) {
            c.act[e] = silu(c.gate[e]) * c.up[e];
        }
        kernels::matmul<Real, float>(cview(c.act), values(params, ix.down), proj, n, ff, d);
        for (std::size_t e = 0; e < nd; ++e) {
            h[e] = c.mid[e] + proj[e];
        }
    }

    tr.final_in = std::move(h);
    tr.final_rstd.resize(static_cast<std::size_t>(n));
    tr.last_hidden.resize(nd);
    layer_norm<Real>(cview(tr.final_in), values(params, layout.final_norm), tr.last_hidden, tr.final_rstd, n, d);
    tr.logits.resize(static_cast<std::size_t>(n) * vocab);
    kernels::matmul_bt<Real, float>(cview(tr.last_hidden), embedding, tr.logits, n, d, vocab);
    return tr;
}

template <typename Real>
void backward(const ParamSet& params, const BackboneConfig& config, const ForwardTrace<Real>& tr,
              std::span<const Real> d_logits, std::span<const Real> d_hidden, GradSet& grads) {
    const int n = tr.length;
    const int d = config.d_model;
    const int ff = config.d_ff;
    const int heads = config.heads;
    const int hd = config.head_dim();
    const int vocab = config.vocab_size;
    const std::size_t nd = static_cast<std::size_t>(n) * d;
    const std::size_t nff = static_cast<std::size_t>(n) * ff;
    if (!d_logits.empty() && d_logits.size() != static_cast<std::size_t>(n) * vocab) {
        throw InvalidArgument("d_logits has the wrong size");
    }
    if (!d_hidden.empty() && d_hidden.size() != nd) {
        throw InvalidArgument("d_hidden has the wrong size");
    }
    if (grads.count() != params.count()) {
        throw InvalidArgument("gradient set does not match parameters");
    }
    const Layout layout = resolve(params, config);
    const auto embedding = values(params, layout.embedding);

    std::vector<Real> d_final(nd, Real{});
    if (!d_logits.empty()) {
        kernels::matmul<Real, float>(d_logits, embedding, d_final, n, vocab, d);
        kernels::accumulate_at_b<Real, double>(d_logits, cview(tr.last_hidden), grads[layout.embedding], n, vocab, d);
    }
    if (!d_hidden.empty()) {
        for (std::size_t e = 0; e < nd; ++e) {
            d_final[e] += d_hidden[e];
        }
    }

    std::vector<Real> dh(nd, Real{});
    layer_norm_backward<Real>(cview(tr.final_in), values(params, layout.final_norm), cview(tr.final_rstd),
                              cview(d_final), dh, grads[layout.final_norm], n, d);

    const RopeTable<Real> rope = rope_table<Real>(n, hd, config.rope_base);
    const Real scale = Real{1} / std::sqrt(static_cast<Real>(hd));

    std::vector<Real> d_act(nff), d_gate(nff), d_up(nff), d_in(nd), d_mid(nd);
    std::vector<Real> d_attn_out(nd), dq(nd), dk(nd), dv(nd);
    for (int l = config.layers - 1; l >= 0; --l) {
        const LayerIndex& ix = layout.layers[static_cast<std::size_t>(l)];
        const LayerCache<Real>& c = tr.layers[static_cast<std::size_t>(l)];

        // h_out = mid + (silu(gate) * up) * down
        kernels::matmul_bt<Real, float>(cview(dh), values(params, ix.down), d_act, n, d, ff);
        kernels::accumulate_at_b<Real, double>(cview(c.act), cview(dh), grads[ix.down], n, ff, d);
        for (std::size_t e = 0; e < nff; ++e) {
            d_gate[e] = d_act[e] * c.up[e] * silu_grad(c.gate[e]);
            d_up[e] = d_act[e] * silu(c.gate[e]);
        }
        kernels::accumulate_at_b<Real, double>(cview(c.ffn_in), cview(d_gate), grads[ix.gate], n, d, ff);
        kernels::accumulate_at_b<Real, double>(cview(c.ffn_in), cview(d_up), grads[ix.up], n, d, ff);
        kernels::matmul_bt<Real, float>(cview(d_gate), values(params, ix.gate), d_in, n, ff, d);
        {
            std::vector<Real> tmp(nd);
            kernels::matmul_bt<Real, float>(cview(d_up), values(params, ix.up), tmp, n, ff, d);
            for (std::size_t e = 0; e < nd; ++e) {
                d_in[e] += tmp[e];
            }
        }
        d_mid = dh;
        layer_norm_backward<Real>(cview(c.mid), values(params, ix.ffn_norm), cview(c.ffn_rstd), cview(d_in), d_mid,
                                  grads[ix.ffn_norm], n, d);

        // mid = input + attn_out * wo
        kernels::matmul_bt<Real, float>(cview(d_mid), values(params, ix.wo), d_attn_out, n, d, d);
        kernels::accumulate_at_b<Real, double>(cview(c.attn_out), cview(d_mid), grads[ix.wo], n, d, d);

        std::fill(dq.begin(), dq.end(), Real{});
        std::fill(dk.begin(), dk.end(), Real{});
        std::fill(dv.begin(), dv.end(), Real{});
#pragma omp parallel for schedule(static) if (heads > 1 && n > 32)
        for (int hh = 0; hh < heads; ++hh) {
            const std::size_t off = static_cast<std::size_t>(hh) * hd;
            std::vector<Real> d_prob(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                const Real* prow = c.probs.data() + (static_cast<std::size_t>(hh) * n + i) * n;
                const Real* dout = d_attn_out.data() + static_cast<std::size_t>(i) * d + off;
                Real weighted{};
                for (int j = 0; j <= i; ++j) {
                    const Real* vj = c.v.data() + static_cast<std::size_t>(j) * d + off;
                    Real* dvj = dv.data() + static_cast<std::size_t>(j) * d + off;
                    Real s{};
                    for (int p = 0; p < hd; ++p) {
                        s += dout[p] * vj[p];
                        dvj[p] += prow[j] * dout[p];
                    }
                    d_prob[j] = s;
                    weighted += prow[j] * s;
                }
                const Real* qi = c.q.data() + static_cast<std::size_t>(i) * d + off;
                Real* dqi = dq.data() + static_cast<std::size_t>(i) * d + off;
                for (int j = 0; j <= i; ++j) {
                    const Real ds = prow[j] * (d_prob[j] - weighted) * scale;
                    const Real* kj = c.k.data() + static_cast<std::size_t>(j) * d + off;
                    Real* dkj = dk.data() + static_cast<std::size_t>(j) * d + off;
                    for (int p = 0; p < hd; ++p) {
                        dqi[p] += ds * kj[p];
                        dkj[p] += ds * qi[p];
                    }
                }
            }
        }
        apply_rope<Real>(dq, rope, n, heads, hd, Real{-1});
        apply_rope<Real>(dk, rope, n, heads, hd, Real{-1});

        kernels::accumulate_at_b<Real, double>(cview(c.attn_in), cview(dq), grads[ix.wq], n, d, d);
        kernels::accumulate_at_b<Real, double>(cview(c.attn_in), cview(dk), grads[ix.wk], n, d, d);
        kernels::accumulate_at_b<Real, double>(cview(c.attn_in), cview(dv), grads[ix.wv], n, d, d);
        kernels::matmul_bt<Real, float>(cview(dq), values(params, ix.wq), d_in, n, d, d);
        {
            std::vector<Real> tmp(nd);
            kernels::matmul_bt<Real, float>(cview(dk), values(params, ix.wk), tmp, n, d, d);
            for (std::size_t e = 0; e < nd; ++e) {
                d_in[e] += tmp[e];
            }
            kernels::matmul_bt<Real, float>(cview(dv), values(params, ix.wv), tmp, n, d, d);
            for (std::size_t e = 0; e < nd; ++e) {
                d_in[e] += tmp[e];
            }
        }
        dh = d_mid;
        layer_norm_backward<Real>(cview(c.input), values(params, ix.attn_norm), cview(c.attn_rstd), cview(d_in), dh,
                                  grads[ix.attn_norm], n, d);
    }

    std::span<double> d_embedding = grads[layout.embedding];
    for (int i = 0; i < n; ++i) {
        const std::size_t row = static_cast<std::size_t>(tr.tokens[static_cast<std::size_t>(i)]) * d;
        for (int j = 0; j < d; ++j) {
            d_embedding[row + j] += static_cast<double>(dh[static_cast<std::size_t>(i) * d + j]);
        }
    }
}

template <typename Real>
std::vector<double> log_softmax(std::span<const Real> row) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const Real v : row) {
        mx = std::max(mx, static_cast<double>(v));
    }
    double total = 0.0;
    for (const Real v : row) {
        total += std::exp(static_cast<double>(v) - mx);
    }
    const double lse = mx + std::log(total);
    std::vector<double> out(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        out[i] = static_cast<double>(row[i]) - lse;
    }
    return out;
}

namespace {

template <typename Real>
void check_mask(const ForwardTrace<Real>& tr, std::span<const int> tokens, std::span<const std::uint8_t> mask) {
    if (tokens.size() != static_cast<std::size_t>(tr.length) || mask.size() != tokens.size()) {
        throw InvalidArgument("tokens/mask do not match the trace length");
    }
    if (!mask.empty() && mask[0]) {
        throw InvalidArgument("position 0 has no prediction and cannot be in the loss mask");
    }
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
        throw InvalidArgument("loss mask selects no tokens");
    }
}

}  // namespace

template <typename Real>
double sequence_log_prob(const ForwardTrace<Real>& tr, std::span<const int> tokens, std::span<const std::uint8_t> mask,
                         Reduction mode) {
    check_mask(tr, tokens, mask);
    double total = 0.0;
    int count = 0;
    for (int i = 1; i < tr.length; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) {
            continue;
        }
        const auto lp = log_softmax<Real>(tr.logits_row(i - 1));
        total += lp[static_cast<std::size_t>(tokens[static_cast<std::size_t>(i)])];
        ++count;
    }
    return mode == Reduction::sum ? total : total / count;
}

template <typename Real>
void add_log_prob_grad(const ForwardTrace<Real>& tr, std::span<const int> tokens, std::span<const std::uint8_t> mask,
                       double coeff, std::span<Real> d_logits) {
    check_mask(tr, tokens, mask);
    if (d_logits.size() != tr.logits.size()) {
        throw InvalidArgument("d_logits has the wrong size");
    }
    for (int i = 1; i < tr.length; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) {
            continue;
        }
        const auto lp = log_softmax<Real>(tr.logits_row(i - 1));
        Real* row = d_logits.data() + static_cast<std::size_t>(i - 1) * tr.vocab;
        for (int v = 0; v < tr.vocab; ++v) {
            row[v] -= static_cast<Real>(coeff * std::exp(lp[static_cast<std::size_t>(v)]));
        }
        row[tokens[static_cast<std::size_t>(i)]] += static_cast<Real>(coeff);
    }
}

std::vector<int> sample(const ParamSet& params, const BackboneConfig& config, std::span<const int> prompt,
                        const SampleOptions& options) {
    if (!(options.temperature >= 0.0) || !std::isfinite(options.temperature)) {
        throw InvalidArgument("temperature must be finite and >= 0");
    }
    Rng rng(options.seed);
    std::vector<int> seq(prompt.begin(), prompt.end());
    std::vector<int> completion;
    for (int step = 0; step < options.max_new && static_cast<int>(seq.size()) < config.max_seq; ++step) {
        const auto tr = forward<float>(params, config, seq);
        const auto row = tr.logits_row(tr.length - 1);
        int next = 0;
        if (options.temperature == 0.0) {
            next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        } else {
            std::vector<double> scaled(row.size());
            for (std::size_t v = 0; v < row.size(); ++v) {
                scaled[v] = static_cast<double>(row[v]) / options.temperature;
            }
            const auto lp = log_softmax<double>(scaled);
            const double u = rng.uniform();
            double cumulative = 0.0;
            next = static_cast<int>(row.size()) - 1;
            for (std::size_t v = 0; v < lp.size(); ++v) {
                cumulative += std::exp(lp[v]);
                if (u < cumulative) {
                    next = static_cast<int>(v);
                    break;
                }
            }
        }
        seq.push_back(next);
        completion.push_back(next);
        if (next == options.stop_token) {
            break;
        }
    }
    return completion;
}

template struct ForwardTrace<float>;
template struct ForwardTrace<double>;
template ForwardTrace<float> forward<float>(const ParamSet&, const BackboneConfig&, std::span<const int>);
template ForwardTrace<double> forward<double>(const ParamSet&, const BackboneConfig&, std::span<const int>);
template void backward<float>(const ParamSet&, const BackboneConfig&, const ForwardTrace<float>&,
                              std::span<const float>, std::span<const float>, GradSet&);
template void backward<double>(const ParamSet&, const BackboneConfig&, const ForwardTrace<double>&,
                               std::span<const double>, std::span<const double>, GradSet&);
template std::vector<double> log_softmax<float>(std::span<const float>);
template std::vector<double> log_softmax<double>(std::span<const double>);
template double sequence_log_prob<float>(const ForwardTrace<float>&, std::span<const int>, std::span<const std::uint8_t>,
                                         Reduction);
template double sequence_log_prob<double>(const ForwardTrace<double>&, std::span<const int>, std::span<const std::uint8_t>,
                                          Reduction);
template void add_log_prob_grad<float>(const ForwardTrace<float>&, std::span<const int>, std::span<const std::uint8_t>, double,
                                       std::span<float>);
template void add_log_prob_grad<double>(const ForwardTrace<double>&, std::span<const int>, std::span<const std::uint8_t>,
                                        double, std::span<double>);

}  // namespace dph::backbone
