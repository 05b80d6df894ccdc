#include <doctest.h>

#include <cmath>
#include <vector>

#include "dph/error.hpp"
#include "dph/reward_head.hpp"
#include "dph/rng.hpp"

using namespace dph;
using namespace dph::reward_head;

namespace {

std::vector<double> random_h(int d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> h(d);
    for (double& x : h) {
        x = rng.normal();
    }
    return h;
}

void randomize(RewardHead& head, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (auto& t : head.params) {
        for (float& v : t.values) {
            v = static_cast<float>(scale * rng.normal());
        }
    }
}

}  // namespace

TEST_CASE("identity pooler returns h") {
    auto head = init_head(PoolerKind::identity, 6, 0, 1, 0.0);
    const auto h = random_h(6, 2);
    Rng rng(0);
    CHECK(pool<double>(h, head, Mode::infer, rng) == h);
}

TEST_CASE("affine pooler with zero weights gives zeros") {
    auto head = init_head(PoolerKind::affine_tanh, 5, 0, 1, 0.0);
    for (float& v : head.params.at("head.affine.weight").values) {
        v = 0.0F;
    }
    Rng rng(0);
    for (const double x : pool<double>(random_h(5, 3), head, Mode::infer, rng)) {
        CHECK(x == 0.0);
    }
}

TEST_CASE("swiglu pooler output lies in (-1, 1)") {
    auto head = init_head(PoolerKind::swiglu_tanh, 8, 12, 4, 0.0);
    randomize(head, 5, 0.5);
    Rng rng(0);
    for (const double x : pool<double>(random_h(8, 6), head, Mode::infer, rng)) {
        CHECK(x > -1.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("reward is the pooled vector dotted with w_dph") {
    auto head = init_head(PoolerKind::identity, 4, 0, 1, 0.0);
    std::vector<double> e1 = {1, 0, 0, 0};
    head.params.at("head.w_dph").values = {1, 0, 0, 0};
    CHECK(reward<double>(e1, head) == 1.0);
    head.params.at("head.w_dph").values = {0, 0, 0, 0};
    CHECK(reward<double>(random_h(4, 9), head) == 0.0);
}

TEST_CASE("affine reward matches a straight-line re-evaluation") {
    const int d = 7;
    auto head = init_head(PoolerKind::affine_tanh, d, 0, 11, 0.0);
    randomize(head, 12);
    const auto h = random_h(d, 13);
    const auto& W = head.params.at("head.affine.weight").values;  // [in, out]
    const auto& b = head.params.at("head.affine.bias").values;
    const auto& w = head.params.at("head.w_dph").values;
    long double expected = 0;
    for (int j = 0; j < d; ++j) {
        long double z = b[j];
        for (int i = 0; i < d; ++i) {
            z += static_cast<long double>(h[i]) * W[i * d + j];
        }
        expected += std::tanh(z) * w[j];
    }
    CHECK(reward<double>(h, head) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-13));
}

TEST_CASE("swiglu reward matches a straight-line re-evaluation") {
    const int d = 6;
    const int ff = 9;
    auto head = init_head(PoolerKind::swiglu_tanh, d, ff, 21, 0.0);
    randomize(head, 22);
    const auto h = random_h(d, 23);
    const auto& G = head.params.at("head.swiglu.gate").values;
    const auto& U = head.params.at("head.swiglu.up").values;
    const auto& D = head.params.at("head.swiglu.down").values;
    const auto& w = head.params.at("head.w_dph").values;
    std::vector<long double> act(ff);
    for (int k = 0; k < ff; ++k) {
        long double g = 0;
        long double u = 0;
        for (int i = 0; i < d; ++i) {
            g += static_cast<long double>(h[i]) * G[i * ff + k];
            u += static_cast<long double>(h[i]) * U[i * ff + k];
        }
        act[k] = g / (1 + std::exp(-g)) * u;
    }
    long double expected = 0;
    for (int j = 0; j < d; ++j) {
        long double z = 0;
        for (int k = 0; k < ff; ++k) {
            z += act[k] * D[k * d + j];
        }
        expected += std::tanh(z) * w[j];
    }
    CHECK(reward<double>(h, head) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
}

TEST_CASE("parameter counts") {
    CHECK(head_param_count(PoolerKind::identity, 1536, 4096) == 1536);
    CHECK(head_param_count(PoolerKind::affine_tanh, 1536, 4096) == 2362368);
    CHECK(head_param_count(PoolerKind::swiglu_tanh, 1536, 4096) == 18875904);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const int d = 1 + static_cast<int>(rng.below(40));
        const int ff = 1 + static_cast<int>(rng.below(60));
        for (const auto kind : {PoolerKind::identity, PoolerKind::affine_tanh, PoolerKind::swiglu_tanh}) {
            CHECK(init_head(kind, d, ff, 1).params.scalar_count() == head_param_count(kind, d, ff));
        }
    }
}

TEST_CASE("init is deterministic, seeded, and starts from zero reward") {
    const auto a = init_head(PoolerKind::swiglu_tanh, 8, 12, 5);
    const auto b = init_head(PoolerKind::swiglu_tanh, 8, 12, 5);
    const auto c = init_head(PoolerKind::swiglu_tanh, 8, 12, 6);
    CHECK(a.params == b.params);
    CHECK_FALSE(a.params == c.params);
    CHECK(a.dropout_p == 0.1);
    for (const float v : a.params.at("head.w_dph").values) {
        CHECK(v == 0.0F);
    }
    CHECK(reward<double>(random_h(8, 1), a) == 0.0);
    const auto aff = init_head(PoolerKind::affine_tanh, 8, 0, 5);
    for (const float v : aff.params.at("head.affine.bias").values) {
        CHECK(v == 0.0F);
    }
    double sum2 = 0;
    const auto& g = a.params.at("head.swiglu.gate").values;
    for (const float v : g) {
        sum2 += double(v) * v;
    }
    CHECK(std::sqrt(sum2 / g.size()) == doctest::Approx(0.02).epsilon(0.15));
}

TEST_CASE("inverted dropout preserves the expected pooled output") {
    auto head = init_head(PoolerKind::affine_tanh, 6, 0, 31, 0.1);
    randomize(head, 32);
    const auto h = random_h(6, 33);
    Rng infer_rng(0);
    const auto ref = pool<double>(h, head, Mode::infer, infer_rng);
    Rng rng(34);
    std::vector<double> mean(6, 0.0);
    const int draws = 40000;
    int zeros = 0;
    for (int i = 0; i < draws; ++i) {
        const auto p = pool<double>(h, head, Mode::train, rng);
        for (int j = 0; j < 6; ++j) {
            mean[j] += p[j] / draws;
            zeros += p[j] == 0.0 ? 1 : 0;
        }
    }
    for (int j = 0; j < 6; ++j) {
        // Per-draw sd is |ref| * sqrt(p / (1 - p)) = |ref| / 3.
        CHECK(std::abs(mean[j] - ref[j]) <= 4 * std::abs(ref[j]) / 3 / std::sqrt(double(draws)) + 1e-12);
    }
    CHECK(double(zeros) / (draws * 6) == doctest::Approx(0.1).epsilon(0.05));
    Rng r1(5);
    Rng r2(5);
    CHECK(pool<double>(h, head, Mode::train, r1) == pool<double>(h, head, Mode::train, r2));
}

TEST_CASE("head gradients match central differences") {
    for (const auto kind : {PoolerKind::identity, PoolerKind::affine_tanh, PoolerKind::swiglu_tanh}) {
        auto head = init_head(kind, 5, 7, 41, 0.0);
        randomize(head, 42, 0.5);
        const auto h = random_h(5, 43);
        Rng rng(0);
        const auto tr = evaluate<double>(h, head, Mode::infer, rng);
        GradSet grads(head.params);
        std::vector<double> dh(5, 0.0);
        reward_backward<double>(head, tr, 1.0, grads, dh);
        constexpr double step = 1e-5;
        for (int i = 0; i < 5; ++i) {
            auto up = h;
            auto dn = h;
            up[i] += step;
            dn[i] -= step;
            const double num = (reward<double>(up, head) - reward<double>(dn, head)) / (2 * step);
            CHECK(dh[i] == doctest::Approx(num).epsilon(1e-6).scale(1e-3));
        }
        // Parameter perturbations of float storage: use the realized step.
        for (std::size_t k = 0; k < head.params.count(); ++k) {
            auto& t = head.params[k];
            for (std::size_t i = 0; i < t.size(); ++i) {
                const float saved = t.values[i];
                t.values[i] = saved + 1e-3F;
                const double up = reward<double>(h, head);
                const double hu = double(t.values[i]) - saved;
                t.values[i] = saved - 1e-3F;
                const double dn = reward<double>(h, head);
                const double hd = saved - double(t.values[i]);
                t.values[i] = saved;
                const double num = (up - dn) / (hu + hd);
                CHECK(grads[k][i] == doctest::Approx(num).epsilon(1e-4).scale(1e-3));
            }
        }
    }
}

TEST_CASE("head validation") {
    auto head = init_head(PoolerKind::swiglu_tanh, 8, 12, 1);
    std::vector<double> wrong(7, 0.0);
    Rng rng(0);
    CHECK_THROWS_AS(reward<double>(wrong, head, Mode::infer, rng), InvalidArgument);
    head.params.at("head.w_dph").values[0] = NAN;
    CHECK_THROWS_AS(head.view().validate(), NumericError);
    CHECK_THROWS_AS(parse_pooler("mean"), InvalidArgument);
    CHECK(parse_pooler("swiglu_tanh") == PoolerKind::swiglu_tanh);
}
