#include "dph/reward_head.hpp"

#include <cmath>
#include <string>

#include "dph/error.hpp"
#include "dph/kernels.hpp"

namespace dph::reward_head {

namespace {

constexpr float kInitStd = 0.02F;

template <typename Real>
Real sigmoid(Real z) {
    return Real{1} / (Real{1} + std::exp(-z));
}

template <typename Real>
std::span<const Real> cview(const std::vector<Real>& v) {
    return std::span<const Real>(v);
}

}  // namespace

PoolerKind parse_pooler(std::string_view name) {
    if (name == "identity") {
        return PoolerKind::identity;
    }
    if (name == "affine_tanh") {
        return PoolerKind::affine_tanh;
    }
    if (name == "swiglu_tanh") {
        return PoolerKind::swiglu_tanh;
    }
    throw InvalidArgument("unknown pooler '" + std::string(name) + "'");
}

std::string_view to_string(PoolerKind kind) {
    switch (kind) {
        case PoolerKind::identity:
            return "identity";
        case PoolerKind::affine_tanh:
            return "affine_tanh";
        case PoolerKind::swiglu_tanh:
            return "swiglu_tanh";
    }
    return "identity";
}

int HeadView::width() const { return static_cast<int>(params->at("head.w_dph").size()); }

int HeadView::ffn_width() const {
    return kind == PoolerKind::swiglu_tanh ? static_cast<int>(params->at("head.swiglu.gate").shape[1]) : 0;
}

void HeadView::validate() const {
    if (params == nullptr || !params->contains("head.w_dph")) {
        throw InvalidArgument("reward head has no head.w_dph tensor");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw InvalidArgument("head dropout must lie in [0, 1)");
    }
    const std::int64_t d = width();
    auto expect = [&](const char* name, std::vector<std::int64_t> shape) {
        if (!params->contains(name) || params->at(name).shape != shape) {
            throw InvalidArgument(std::string("reward head tensor '") + name + "' missing or mis-shaped");
        }
    };
    switch (kind) {
        case PoolerKind::identity:
            break;
        case PoolerKind::affine_tanh:
            expect("head.affine.weight", {d, d});
            expect("head.affine.bias", {d});
            break;
        case PoolerKind::swiglu_tanh: {
            const std::int64_t ff = ffn_width();
            expect("head.swiglu.gate", {d, ff});
            expect("head.swiglu.up", {d, ff});
            expect("head.swiglu.down", {ff, d});
            break;
        }
    }
    for (const auto& t : *params) {
        if (t.name.starts_with("head.")) {
            for (const float v : t.values) {
                if (!std::isfinite(v)) {
                    throw NumericError("reward head tensor '" + t.name + "' is not finite");
                }
            }
        }
    }
}

std::size_t head_param_count(PoolerKind kind, std::size_t d, std::size_t d_ff) {
    switch (kind) {
        case PoolerKind::identity:
            return d;
        case PoolerKind::affine_tanh:
            return d * d + d + d;
        case PoolerKind::swiglu_tanh:
            return 3 * d * d_ff + d;
    }
    return 0;
}

RewardHead init_head(PoolerKind kind, int d, int d_ff, std::uint64_t seed, double dropout_p) {
    if (d < 1 || (kind == PoolerKind::swiglu_tanh && d_ff < 1)) {
        throw InvalidArgument("reward head dimensions must be positive");
    }
    RewardHead head;
    head.kind = kind;
    head.dropout_p = dropout_p;
    head.params.add("head.w_dph", {d});
    if (kind == PoolerKind::affine_tanh) {
        head.params.add("head.affine.weight", {d, d});
        head.params.add("head.affine.bias", {d});
    } else if (kind == PoolerKind::swiglu_tanh) {
        head.params.add("head.swiglu.gate", {d, d_ff});
        head.params.add("head.swiglu.up", {d, d_ff});
        head.params.add("head.swiglu.down", {d_ff, d});
    }
    Rng rng(seed);
    for (auto& t : head.params) {
        if (t.shape.size() == 2) {
            for (float& v : t.values) {
                v = kInitStd * static_cast<float>(rng.normal());
            }
        }
    }
    head.view().validate();
    return head;
}

template <typename Real>
PoolTrace<Real> evaluate(std::span<const Real> h, HeadView head, Mode mode, Rng& rng) {
    const int d = head.width();
    if (h.size() != static_cast<std::size_t>(d)) {
        throw InvalidArgument("hidden state width " + std::to_string(h.size()) + " does not match head width " +
                              std::to_string(d));
    }
    PoolTrace<Real> tr;
    tr.input.assign(h.begin(), h.end());
    switch (head.kind) {
        case PoolerKind::identity:
            tr.pooled = tr.input;
            break;
        case PoolerKind::affine_tanh: {
            tr.pre.resize(static_cast<std::size_t>(d));
            kernels::matmul<Real, float>(h, head.params->at("head.affine.weight").values, tr.pre, 1, d, d);
            const auto& bias = head.params->at("head.affine.bias").values;
            tr.pooled.resize(tr.pre.size());
            for (int j = 0; j < d; ++j) {
                tr.pre[j] += static_cast<Real>(bias[j]);
                tr.pooled[j] = std::tanh(tr.pre[j]);
            }
            break;
        }
        case PoolerKind::swiglu_tanh: {
            const int ff = head.ffn_width();
            tr.gate.resize(static_cast<std::size_t>(ff));
            tr.up.resize(tr.gate.size());
            tr.act.resize(tr.gate.size());
            kernels::matmul<Real, float>(h, head.params->at("head.swiglu.gate").values, tr.gate, 1, d, ff);
            kernels::matmul<Real, float>(h, head.params->at("head.swiglu.up").values, tr.up, 1, d, ff);
            for (int j = 0; j < ff; ++j) {
                tr.act[j] = tr.gate[j] * sigmoid(tr.gate[j]) * tr.up[j];
            }
            tr.pre.resize(static_cast<std::size_t>(d));
            kernels::matmul<Real, float>(cview(tr.act), head.params->at("head.swiglu.down").values, tr.pre, 1, ff, d);
            tr.pooled.resize(tr.pre.size());
            for (int j = 0; j < d; ++j) {
                tr.pooled[j] = std::tanh(tr.pre[j]);
            }
            break;
        }
    }

    tr.output = tr.pooled;
    if (mode == Mode::train && head.dropout_p > 0.0) {
        const Real scale = static_cast<Real>(1.0 / (1.0 - head.dropout_p));
        tr.keep.resize(tr.output.size());
        for (std::size_t j = 0; j < tr.output.size(); ++j) {
            tr.keep[j] = rng.bernoulli(head.dropout_p) ? Real{} : scale;
            tr.output[j] *= tr.keep[j];
        }
    }

    const auto& w = head.params->at("head.w_dph").values;
    double r = 0.0;
    for (int j = 0; j < d; ++j) {
        r += static_cast<double>(tr.output[j]) * static_cast<double>(w[j]);
    }
    tr.reward = r;
    return tr;
}

template <typename Real>
std::vector<Real> pool(std::span<const Real> h, HeadView head, Mode mode, Rng& rng) {
    return evaluate<Real>(h, head, mode, rng).output;
}

template <typename Real>
double reward(std::span<const Real> h, HeadView head, Mode mode, Rng& rng) {
    return evaluate<Real>(h, head, mode, rng).reward;
}

template <typename Real>
double reward(std::span<const Real> h, HeadView head) {
    Rng unused(0);
    return evaluate<Real>(h, head, Mode::infer, unused).reward;
}

template <typename Real>
void reward_backward(HeadView head, const PoolTrace<Real>& tr, double d_reward, GradSet& head_grads,
                     std::span<Real> d_h) {
    const int d = head.width();
    if (d_h.size() != static_cast<std::size_t>(d) || head_grads.count() != head.params->count()) {
        throw InvalidArgument("reward_backward buffers do not match the head");
    }
    const auto& w = head.params->at("head.w_dph").values;
    auto grad_of = [&](const char* name) { return head_grads[head.params->index_of(name)]; };

    std::span<double> dw = grad_of("head.w_dph");
    std::vector<Real> d_pooled(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        dw[j] += d_reward * static_cast<double>(tr.output[j]);
        Real g = static_cast<Real>(d_reward * static_cast<double>(w[j]));
        if (!tr.keep.empty()) {
            g *= tr.keep[j];
        }
        d_pooled[j] = g;
    }

    switch (head.kind) {
        case PoolerKind::identity:
            for (int j = 0; j < d; ++j) {
                d_h[j] += d_pooled[j];
            }
            break;
        case PoolerKind::affine_tanh: {
            std::vector<Real> d_pre(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j) {
                d_pre[j] = d_pooled[j] * (Real{1} - tr.pooled[j] * tr.pooled[j]);
            }
            std::span<double> db = grad_of("head.affine.bias");
            for (int j = 0; j < d; ++j) {
                db[j] += static_cast<double>(d_pre[j]);
            }
            kernels::accumulate_at_b<Real, double>(cview(tr.input), cview(d_pre), grad_of("head.affine.weight"), 1, d,
                                                   d);
            std::vector<Real> dx(static_cast<std::size_t>(d));
            kernels::matmul_bt<Real, float>(cview(d_pre), head.params->at("head.affine.weight").values, dx, 1, d, d);
            for (int j = 0; j < d; ++j) {
                d_h[j] += dx[j];
            }
            break;
        }
        case PoolerKind::swiglu_tanh: {
            const int ff = head.ffn_width();
            std::vector<Real> d_pre(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j) {
                d_pre[j] = d_pooled[j] * (Real{1} - tr.pooled[j] * tr.pooled[j]);
            }
            kernels::accumulate_at_b<Real, double>(cview(tr.act), cview(d_pre), grad_of("head.swiglu.down"), 1, ff, d);
            std::vector<Real> d_act(static_cast<std::size_t>(ff));
            kernels::matmul_bt<Real, float>(cview(d_pre), head.params->at("head.swiglu.down").values, d_act, 1, d, ff);
            std::vector<Real> d_gate(d_act.size());
            std::vector<Real> d_up(d_act.size());
            for (int j = 0; j < ff; ++j) {
                const Real s = sigmoid(tr.gate[j]);
                d_up[j] = d_act[j] * tr.gate[j] * s;
                d_gate[j] = d_act[j] * tr.up[j] * s * (Real{1} + tr.gate[j] * (Real{1} - s));
            }
            kernels::accumulate_at_b<Real, double>(cview(tr.input), cview(d_gate), grad_of("head.swiglu.gate"), 1, d,
                                                   ff);
            kernels::accumulate_at_b<Real, double>(cview(tr.input), cview(d_up), grad_of("head.swiglu.up"), 1, d, ff);
            std::vector<Real> dx(static_cast<std::size_t>(d));
            std::vector<Real> tmp(static_cast<std::size_t>(d));
            kernels::matmul_bt<Real, float>(cview(d_gate), head.params->at("head.swiglu.gate").values, dx, 1, ff, d);
            kernels::matmul_bt<Real, float>(cview(d_up), head.params->at("head.swiglu.up").values, tmp, 1, ff, d);
            for (int j = 0; j < d; ++j) {
                d_h[j] += dx[j] + tmp[j];
            }
            break;
        }
    }
}

#define DPH_INSTANTIATE_HEAD(Real)                                                                              \
    template struct PoolTrace<Real>;                                                                            \
    template PoolTrace<Real> evaluate<Real>(std::span<const Real>, HeadView, Mode, Rng&);              \
    template std::vector<Real> pool<Real>(std::span<const Real>, HeadView, Mode, Rng&);                \
    template double reward<Real>(std::span<const Real>, HeadView, Mode, Rng&);                         \
    template double reward<Real>(std::span<const Real>, HeadView);                                     \
    template void reward_backward<Real>(HeadView, const PoolTrace<Real>&, double, GradSet&, std::span<Real>);

DPH_INSTANTIATE_HEAD(float)
DPH_INSTANTIATE_HEAD(double)

#undef DPH_INSTANTIATE_HEAD

}  // namespace dph::reward_head
