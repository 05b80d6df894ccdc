#include <doctest.h>

#include <cmath>
#include <vector>

#include "dph/kernels.hpp"
#include "dph/rng.hpp"

namespace k = dph::kernels;

namespace {

std::vector<float> rv(std::size_t n, std::uint64_t seed) {
    dph::Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) {
        x = static_cast<float>(rng.normal());
    }
    return v;
}

template <typename T>
double max_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    }
    return m;
}

}  // namespace

TEST_CASE("parallel kernels agree with the serial reference") {
    for (const auto& [m, kk, n] : std::vector<std::array<int, 3>>{{1, 5, 3}, {7, 64, 172}, {40, 172, 64}, {3, 1, 9}}) {
        const auto a = rv(std::size_t(m) * kk, 1);
        const auto b = rv(std::size_t(kk) * n, 2);
        const auto bt = rv(std::size_t(n) * kk, 3);
        std::vector<float> c1(std::size_t(m) * n);
        std::vector<float> c2(c1.size());
        k::matmul<float, float>(a, b, c1, m, kk, n);
        k::reference::matmul<float, float>(a, b, c2, m, kk, n);
        CHECK(max_diff(c1, c2) <= 1e-4);
        k::matmul_bt<float, float>(a, bt, c1, m, kk, n);
        k::reference::matmul_bt<float, float>(a, bt, c2, m, kk, n);
        CHECK(max_diff(c1, c2) <= 1e-4);

        const auto g_in = rv(std::size_t(m) * n, 4);
        std::vector<double> g1(std::size_t(kk) * n, 0.5);
        std::vector<double> g2 = g1;
        k::accumulate_at_b<float, double>(a, g_in, g1, m, kk, n);
        k::reference::accumulate_at_b<float, double>(a, g_in, g2, m, kk, n);
        CHECK(max_diff(g1, g2) <= 1e-9);
    }
}

TEST_CASE("double kernels are exact on small integers") {
    const std::vector<double> a = {1, 2, 3, 4, 5, 6};  // 2 x 3
    const std::vector<float> b = {1, 0, 0, 1, 1, 1};   // 3 x 2
    std::vector<double> c(4);
    k::matmul<double, float>(a, b, c, 2, 3, 2);
    CHECK(c == std::vector<double>{4, 5, 10, 11});
}

TEST_CASE("parallel kernels are deterministic") {
    const auto a = rv(64 * 64, 5);
    const auto b = rv(64 * 172, 6);
    std::vector<float> c1(64 * 172);
    std::vector<float> c2(64 * 172);
    k::matmul<float, float>(a, b, c1, 64, 64, 172);
    k::matmul<float, float>(a, b, c2, 64, 64, 172);
    CHECK(c1 == c2);
}
