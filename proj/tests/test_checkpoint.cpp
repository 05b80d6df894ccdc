#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "dph/backbone.hpp"
#include "dph/checkpoint.hpp"
#include "dph/error.hpp"
#include "dph/trainer.hpp"

using namespace dph;
using namespace dph::checkpoint;

namespace {

std::string bytes(const CheckpointBundle& b) {
    std::ostringstream out;
    serialize(out, b);
    return out.str();
}

CheckpointBundle from_bytes(const std::string& s) {
    std::istringstream in(s);
    return deserialize(in);
}

CheckpointBundle small_bundle() {
    CheckpointBundle b;
    b.metadata = {{"a", 1}};
    auto& w = b.tensors.add("w", {2});
    w.values = {1.0F, -2.0F};
    return b;
}

Model small_model(bool head) {
    Model m;
    m.config.vocab_size = 11;
    m.config.d_model = 8;
    m.config.layers = 1;
    m.config.heads = 2;
    m.config.d_ff = 12;
    m.config.max_seq = 16;
    m.params = backbone::init_params(m.config, 3);
    if (head) {
        trainer::attach_head(m, config::HeadConfig{reward_head::PoolerKind::swiglu_tanh, 6, 0.2}, 4);
    }
    return m;
}

}  // namespace

TEST_CASE("golden checkpoint bytes") {
    using namespace std::string_literals;
    const std::string expected =
        "DPHCKPT\0"s                          // magic
        "\x01\0\0\0"s                         // version
        "\x07\0\0\0\0\0\0\0"s "{\"a\":1}"s    // metadata
        "\x01\0\0\0\0\0\0\0"s                 // tensor count
        "\x01\0\0\0"s "w"s                    // name
        "\x01\0\0\0"s                         // rank
        "\x02\0\0\0\0\0\0\0"s                 // dims
        "\x00\x00\x80\x3f"s "\x00\x00\x00\xc0"s;  // 1.0f, -2.0f
    CHECK(bytes(small_bundle()) == expected);
    CHECK(from_bytes(expected) == small_bundle());
}

TEST_CASE("model checkpoints round-trip bit for bit") {
    for (const bool head : {false, true}) {
        const auto m = small_model(head);
        const auto b = from_model(m);
        const auto s = bytes(b);
        const auto back = from_bytes(s);
        CHECK(back == b);
        CHECK(bytes(back) == s);
        const auto m2 = to_model(back);
        CHECK(m2.params == m.params);
        CHECK(m2.has_head == head);
        if (head) {
            CHECK(m2.pooler == reward_head::PoolerKind::swiglu_tanh);
            CHECK(m2.dropout_p == 0.2);
        }
        for (const auto& t : b.tensors) {
            CHECK(t.name.find("lm_head") == std::string::npos);
        }
    }
}

TEST_CASE("optimizer state round-trips and is ignored by to_model") {
    const auto m = small_model(true);
    auto state = optim::OptimizerState::zeros(m.params);
    state.step = 17;
    state.first[0][3] = 0.25F;
    state.second[1][0] = 1e-9F;
    auto b = from_model(m);
    CHECK_FALSE(has_optimizer_state(b));
    attach_optimizer_state(b, state, m.params);
    CHECK(has_optimizer_state(b));
    const auto back = from_bytes(bytes(b));
    const auto restored = extract_optimizer_state(back, m.params);
    CHECK(restored.step == 17);
    CHECK(restored.first == state.first);
    CHECK(restored.second == state.second);
    CHECK(to_model(back).params == m.params);
}

TEST_CASE("malformed checkpoints are rejected") {
    const auto good = bytes(small_bundle());
    CHECK_THROWS_AS(from_bytes(""), IoError);
    CHECK_THROWS_AS(from_bytes("NOTCKPT" + good.substr(7)), IoError);
    CHECK_THROWS_AS(from_bytes(good.substr(0, good.size() - 1)), IoError);
    CHECK_THROWS_AS(from_bytes(good + "x"), IoError);
    auto bad_version = good;
    bad_version[8] = 9;
    CHECK_THROWS_AS(from_bytes(bad_version), IoError);
    CHECK_THROWS_AS(load("/nonexistent/dir/x.ckpt"), IoError);

    auto b = from_model(small_model(false));
    b.tensors.at("final_norm").shape = {7};
    b.tensors.at("final_norm").values.resize(7);
    CHECK_THROWS_AS(to_model(b), InvalidArgument);
}

TEST_CASE("save and load through a file") {
    const auto dir = std::filesystem::temp_directory_path() / "dph_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "m.ckpt").string();
    const auto b = from_model(small_model(true));
    save(path, b);
    CHECK(load(path) == b);
    std::filesystem::remove_all(dir);
}
