#include "dph/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dph/error.hpp"
#include "dph/reward_head.hpp"

namespace dph::checkpoint {
namespace {

constexpr std::array<char, 8> kMagic = {'D', 'P', 'H', 'C', 'K', 'P', 'T', '\0'};
constexpr std::string_view kFirstPrefix = "optim.first.";
constexpr std::string_view kSecondPrefix = "optim.second.";

// Sanity bounds so a corrupt header cannot trigger huge allocations.
constexpr std::uint64_t kMaxMetadataBytes = 64ULL << 20;
constexpr std::uint64_t kMaxTensorCount = 1ULL << 20;
constexpr std::uint32_t kMaxRank = 8;

template <typename U>
void put_le(std::ostream& out, U value) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFU);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(U)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
        throw IoError(std::string("checkpoint truncated while reading ") + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return value;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const char* what) {
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw IoError(std::string("checkpoint truncated while reading ") + what);
    }
    return s;
}

}  // namespace

void serialize(std::ostream& out, const CheckpointBundle& bundle) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kFormatVersion);
    const std::string meta = bundle.metadata.dump();
    put_le<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put_le<std::uint64_t>(out, bundle.tensors.count());
    std::vector<char> buffer;
    for (const Tensor& t : bundle.tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (const std::int64_t dim : t.shape) {
            put_le<std::uint64_t>(out, static_cast<std::uint64_t>(dim));
        }
        buffer.resize(t.values.size() * 4);
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(t.values[i]);
            for (std::size_t b = 0; b < 4; ++b) {
                buffer[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFU);
            }
        }
        out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    }
    if (!out) {
        throw IoError("failed writing checkpoint");
    }
}

CheckpointBundle deserialize(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw IoError("not a checkpoint file (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(in, "version");
    if (version != kFormatVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointBundle bundle;
    const auto meta_len = get_le<std::uint64_t>(in, "metadata length");
    if (meta_len > kMaxMetadataBytes) {
        throw IoError("checkpoint metadata too large");
    }
    const std::string meta = get_bytes(in, meta_len, "metadata");
    try {
        bundle.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    const auto count = get_le<std::uint64_t>(in, "tensor count");
    if (count > kMaxTensorCount) {
        throw IoError("checkpoint tensor count too large");
    }
    std::vector<unsigned char> buffer;
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_len = get_le<std::uint32_t>(in, "tensor name length");
        std::string name = get_bytes(in, name_len, "tensor name");
        const auto rank = get_le<std::uint32_t>(in, "tensor rank");
        if (rank > kMaxRank) {
            throw IoError("tensor '" + name + "' has rank " + std::to_string(rank));
        }
        std::vector<std::int64_t> shape(rank);
        std::uint64_t elements = 1;
        for (auto& dim : shape) {
            const auto d = get_le<std::uint64_t>(in, "tensor dims");
            if (d > static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max()) ||
                (d != 0 && elements > (1ULL << 32) / d)) {
                throw IoError("tensor '" + name + "' is implausibly large");
            }
            dim = static_cast<std::int64_t>(d);
            elements *= d;
        }
        if (bundle.tensors.contains(name)) {
            throw IoError("duplicate tensor '" + name + "' in checkpoint");
        }
        Tensor& t = bundle.tensors.add(std::move(name), std::move(shape));
        buffer.resize(t.values.size() * 4);
        if (!buffer.empty() && !in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()))) {
            throw IoError("checkpoint truncated in tensor '" + t.name + "'");
        }
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            std::uint32_t bits = 0;
            for (std::size_t b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(buffer[i * 4 + b]) << (8 * b);
            }
            t.values[i] = std::bit_cast<float>(bits);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError("trailing bytes after checkpoint");
    }
    return bundle;
}

void save(const std::string& path, const CheckpointBundle& bundle) {
    std::ostringstream buffer(std::ios::binary);
    serialize(buffer, bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    const std::string bytes = std::move(buffer).str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) {
        throw IoError("failed writing '" + path + "'");
    }
}

CheckpointBundle load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint '" + path + "'");
    }
    return deserialize(in);
}

void attach_optimizer_state(CheckpointBundle& bundle, const optim::OptimizerState& state, const ParamSet& params) {
    if (state.first.size() != params.count() || state.second.size() != params.count()) {
        throw InvalidArgument("optimizer state does not match the parameter set");
    }
    for (std::size_t i = 0; i < params.count(); ++i) {
        bundle.tensors.add(std::string(kFirstPrefix) + params[i].name, params[i].shape).values = state.first[i];
        bundle.tensors.add(std::string(kSecondPrefix) + params[i].name, params[i].shape).values = state.second[i];
    }
    bundle.metadata["optim_step"] = state.step;
}

bool has_optimizer_state(const CheckpointBundle& bundle) { return bundle.metadata.contains("optim_step"); }

optim::OptimizerState extract_optimizer_state(const CheckpointBundle& bundle, const ParamSet& params) {
    if (!has_optimizer_state(bundle)) {
        throw InvalidArgument("checkpoint has no optimizer state");
    }
    optim::OptimizerState state;
    state.step = bundle.metadata.at("optim_step").get<std::int64_t>();
    for (const Tensor& p : params) {
        const std::string first = std::string(kFirstPrefix) + p.name;
        const std::string second = std::string(kSecondPrefix) + p.name;
        if (!bundle.tensors.contains(first) || !bundle.tensors.contains(second)) {
            throw InvalidArgument("checkpoint optimizer state lacks tensor '" + p.name + "'");
        }
        state.first.push_back(bundle.tensors.at(first).values);
        state.second.push_back(bundle.tensors.at(second).values);
        if (state.first.back().size() != p.size() || state.second.back().size() != p.size()) {
            throw InvalidArgument("optimizer state shape mismatch for '" + p.name + "'");
        }
    }
    return state;
}

CheckpointBundle from_model(const Model& model) {
    CheckpointBundle bundle;
    const auto& c = model.config;
    nlohmann::json m;
    m["backbone"] = {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"layers", c.layers},
                     {"heads", c.heads},           {"d_ff", c.d_ff},       {"max_seq", c.max_seq},
                     {"rope_base", c.rope_base}};
    if (model.has_head) {
        m["head"] = {{"pooler", std::string(reward_head::to_string(model.pooler))}, {"dropout", model.dropout_p}};
    } else {
        m["head"] = nullptr;
    }
    bundle.metadata["model"] = std::move(m);
    bundle.tensors = model.params;
    return bundle;
}

Model to_model(const CheckpointBundle& bundle) {
    if (!bundle.metadata.contains("model")) {
        throw InvalidArgument("checkpoint metadata has no model description");
    }
    Model model;
    try {
        const auto& m = bundle.metadata.at("model");
        const auto& b = m.at("backbone");
        auto& c = model.config;
        c.vocab_size = b.at("vocab_size").get<int>();
        c.d_model = b.at("d_model").get<int>();
        c.layers = b.at("layers").get<int>();
        c.heads = b.at("heads").get<int>();
        c.d_ff = b.at("d_ff").get<int>();
        c.max_seq = b.at("max_seq").get<int>();
        c.rope_base = b.at("rope_base").get<double>();
        if (!m.at("head").is_null()) {
            model.has_head = true;
            model.pooler = reward_head::parse_pooler(m.at("head").at("pooler").get<std::string>());
            model.dropout_p = m.at("head").at("dropout").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed checkpoint model metadata: ") + e.what());
    }
    model.config.validate();
    for (const Tensor& t : bundle.tensors) {
        if (!t.name.starts_with("optim.")) {
            model.params.add(t.name, t.shape).values = t.values;
        }
    }
    backbone::check_params(model.params, model.config);
    if (model.has_head) {
        model.head().validate();
    }
    return model;
}

}  // namespace dph::checkpoint
