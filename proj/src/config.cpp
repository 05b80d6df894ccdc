#include "dph/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dph/error.hpp"

namespace dph::config {
namespace {

using nlohmann::json;

void check_keys(const json& section, std::string_view where, const std::set<std::string>& allowed) {
    if (!section.is_object()) {
        throw InvalidArgument("config section '" + std::string(where) + "' must be an object");
    }
    for (const auto& [key, value] : section.items()) {
        if (!allowed.contains(key)) {
            throw InvalidArgument("unknown config key '" + std::string(where) + "." + key + "'");
        }
    }
}

template <typename T>
void read(const json& section, const char* key, std::string_view where, T& out) {
    if (!section.contains(key)) {
        return;
    }
    try {
        out = section.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument("config key '" + std::string(where) + "." + key + "' has the wrong type");
    }
}

template <typename Parse, typename T>
void read_enum(const json& section, const char* key, std::string_view where, Parse parse, T& out) {
    std::string name;
    if (!section.contains(key)) {
        return;
    }
    read(section, key, where, name);
    out = parse(name);
}

}  // namespace

Stage parse_stage(std::string_view name) {
    if (name == "sft") {
        return Stage::sft;
    }
    if (name == "align") {
        return Stage::align;
    }
    throw InvalidArgument("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) { return stage == Stage::sft ? "sft" : "align"; }

RunConfig RunConfig::defaults(Stage stage) {
    RunConfig c;
    c.stage = stage;
    if (stage == Stage::sft) {
        c.trainer.steps = 1500;
        c.optimizer.max_lr = 3e-4;
        c.optimizer.min_lr = 0.0;
        c.optimizer.prior_scope = optim::PriorScope::non_embedding;
    } else {
        c.trainer.steps = 2000;
        c.optimizer.max_lr = 1e-4;
        c.optimizer.min_lr = 1e-5;
        c.optimizer.prior_scope = optim::PriorScope::all;
    }
    c.optimizer.warmup_steps = 200;
    c.optimizer.prior_coeff = 0.5;
    c.optimizer.clip_norm = 1.0;
    c.finalize();
    return c;
}

RunConfig RunConfig::parse(std::string_view json_text, Stage stage) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = defaults(stage);
    check_keys(doc, "config", {"backbone", "head", "data", "optimizer", "trainer"});

    if (doc.contains("backbone")) {
        const json& s = doc["backbone"];
        check_keys(s, "backbone", {"d_model", "layers", "heads", "d_ff", "max_seq", "rope_base"});
        read(s, "d_model", "backbone", c.backbone.d_model);
        read(s, "layers", "backbone", c.backbone.layers);
        read(s, "heads", "backbone", c.backbone.heads);
        read(s, "d_ff", "backbone", c.backbone.d_ff);
        read(s, "max_seq", "backbone", c.backbone.max_seq);
        read(s, "rope_base", "backbone", c.backbone.rope_base);
    }
    if (doc.contains("head")) {
        const json& s = doc["head"];
        check_keys(s, "head", {"pooler", "d_ff", "dropout"});
        read_enum(s, "pooler", "head", reward_head::parse_pooler, c.head.pooler);
        read(s, "d_ff", "head", c.head.d_ff);
        read(s, "dropout", "head", c.head.dropout);
    }
    if (doc.contains("data")) {
        const json& s = doc["data"];
        check_keys(s, "data", {"system_prompt"});
        read(s, "system_prompt", "data", c.prompt.system);
    }
    if (doc.contains("optimizer")) {
        const json& s = doc["optimizer"];
        check_keys(s, "optimizer", {"beta1", "beta2", "eps", "max_lr", "min_lr", "warmup_steps", "prior_coeff",
                                    "clip_norm", "prior_scope"});
        read(s, "beta1", "optimizer", c.optimizer.beta1);
        read(s, "beta2", "optimizer", c.optimizer.beta2);
        read(s, "eps", "optimizer", c.optimizer.eps);
        read(s, "max_lr", "optimizer", c.optimizer.max_lr);
        read(s, "min_lr", "optimizer", c.optimizer.min_lr);
        read(s, "warmup_steps", "optimizer", c.optimizer.warmup_steps);
        read(s, "prior_coeff", "optimizer", c.optimizer.prior_coeff);
        read(s, "clip_norm", "optimizer", c.optimizer.clip_norm);
        read_enum(s, "prior_scope", "optimizer", optim::parse_scope, c.optimizer.prior_scope);
    }
    if (doc.contains("trainer")) {
        const json& s = doc["trainer"];
        check_keys(s, "trainer", {"steps", "batch_size", "seed", "checkpoint_every", "beta", "eps_dpo", "eps_dph",
                                  "alpha_cdpo", "alpha_dph", "objective"});
        read(s, "steps", "trainer", c.trainer.steps);
        read(s, "batch_size", "trainer", c.trainer.batch_size);
        read(s, "seed", "trainer", c.trainer.seed);
        read(s, "checkpoint_every", "trainer", c.trainer.checkpoint_every);
        read(s, "beta", "trainer", c.trainer.beta);
        read(s, "eps_dpo", "trainer", c.trainer.eps_dpo);
        read(s, "eps_dph", "trainer", c.trainer.eps_dph);
        read(s, "alpha_cdpo", "trainer", c.trainer.alpha_cdpo);
        read(s, "alpha_dph", "trainer", c.trainer.alpha_dph);
        read_enum(s, "objective", "trainer", objectives::parse_objective, c.trainer.objective);
    }
    c.finalize();
    return c;
}

RunConfig RunConfig::load(const std::string& path, Stage stage) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config '" + path + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str(), stage);
}

json RunConfig::to_json() const {
    json doc;
    doc["backbone"] = {{"d_model", backbone.d_model}, {"layers", backbone.layers},   {"heads", backbone.heads},
                       {"d_ff", backbone.d_ff},       {"max_seq", backbone.max_seq}, {"rope_base", backbone.rope_base}};
    doc["head"] = {{"pooler", std::string(reward_head::to_string(head.pooler))},
                   {"d_ff", head.d_ff},
                   {"dropout", head.dropout}};
    doc["data"] = {{"system_prompt", prompt.system}};
    doc["optimizer"] = {{"beta1", optimizer.beta1},
                        {"beta2", optimizer.beta2},
                        {"eps", optimizer.eps},
                        {"max_lr", optimizer.max_lr},
                        {"min_lr", optimizer.min_lr},
                        {"warmup_steps", optimizer.warmup_steps},
                        {"prior_coeff", optimizer.prior_coeff},
                        {"clip_norm", optimizer.clip_norm},
                        {"prior_scope", std::string(optim::to_string(optimizer.prior_scope))}};
    doc["trainer"] = {{"steps", trainer.steps},
                      {"batch_size", trainer.batch_size},
                      {"seed", trainer.seed},
                      {"checkpoint_every", trainer.checkpoint_every},
                      {"beta", trainer.beta},
                      {"eps_dpo", trainer.eps_dpo},
                      {"eps_dph", trainer.eps_dph},
                      {"alpha_cdpo", trainer.alpha_cdpo},
                      {"alpha_dph", trainer.alpha_dph},
                      {"objective", std::string(objectives::to_string(trainer.objective))}};
    return doc;
}

void RunConfig::finalize() {
    if (trainer.steps < 0) {
        throw InvalidArgument("trainer.steps must be >= 0");
    }
    if (trainer.batch_size < 1) {
        throw InvalidArgument("trainer.batch_size must be >= 1");
    }
    if (trainer.checkpoint_every < 0) {
        throw InvalidArgument("trainer.checkpoint_every must be >= 0");
    }
    if (!(trainer.beta > 0.0)) {
        throw InvalidArgument("trainer.beta must be positive");
    }
    if (!(trainer.eps_dpo >= 0.0 && trainer.eps_dpo <= 0.5)) {
        throw InvalidArgument("trainer.eps_dpo must lie in [0, 0.5]");
    }
    (void)objectives::Smoothing(trainer.eps_dph);
    objectives::JointWeights{trainer.alpha_cdpo, trainer.alpha_dph}.validate();
    if (head.d_ff < 0) {
        throw InvalidArgument("head.d_ff must be >= 0");
    }
    if (!(head.dropout >= 0.0 && head.dropout < 1.0)) {
        throw InvalidArgument("head.dropout must lie in [0, 1)");
    }
    optimizer.total_steps = trainer.steps;
    optimizer.warmup_steps = std::min(optimizer.warmup_steps, optimizer.total_steps);
    if (optimizer.warmup_steps < 0) {
        throw InvalidArgument("optimizer.warmup_steps must be >= 0");
    }
    optimizer.validate();
    backbone.validate();
}

}  // namespace dph::config
