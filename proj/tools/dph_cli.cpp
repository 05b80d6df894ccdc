// dph: command-line front end.
//
// Exit codes: 0 success, 1 usage, 2 numeric failure (NaN/Inf or a failed
// gradient check), 3 I/O.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dph/checkpoint.hpp"
#include "dph/config.hpp"
#include "dph/csv.hpp"
#include "dph/data.hpp"
#include "dph/error.hpp"
#include "dph/gradcheck.hpp"
#include "dph/inference.hpp"
#include "dph/objectives.hpp"
#include "dph/trainer.hpp"

namespace {

using namespace dph;
using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out << text;
    if (!out.flush()) {
        throw IoError("failed writing '" + path + "'");
    }
}

void require_new(const std::string& path, bool force) {
    if (!force && std::filesystem::exists(path)) {
        throw InvalidArgument("'" + path + "' exists (use --force to overwrite)");
    }
}

struct LoadedCheckpoint {
    Model model;
    data::Tokenizer tokenizer = data::Tokenizer::synthetic();
    checkpoint::CheckpointBundle bundle;
};

LoadedCheckpoint load_checkpoint(const std::string& path) {
    LoadedCheckpoint out;
    out.bundle = checkpoint::load(path);
    out.model = checkpoint::to_model(out.bundle);
    if (out.bundle.metadata.contains("tokenizer")) {
        out.tokenizer = data::Tokenizer::from_json(out.bundle.metadata.at("tokenizer").dump());
    }
    return out;
}

data::PromptTemplate template_of(const checkpoint::CheckpointBundle& bundle) {
    data::PromptTemplate tmpl;
    const auto& m = bundle.metadata;
    if (m.contains("config") && m.at("config").contains("data")) {
        tmpl.system = m.at("config").at("data").value("system_prompt", tmpl.system);
    }
    return tmpl;
}

checkpoint::CheckpointBundle make_bundle(const trainer::TrainResult& result, const config::RunConfig& cfg,
                                         const data::Tokenizer& tok, bool with_optimizer) {
    auto bundle = checkpoint::from_model(result.model);
    bundle.metadata["config"] = cfg.to_json();
    bundle.metadata["stage"] = std::string(config::to_string(cfg.stage));
    bundle.metadata["seed"] = cfg.trainer.seed;
    bundle.metadata["step"] = result.state.step;
    bundle.metadata["tokenizer"] = json::parse(tok.to_json());
    if (with_optimizer) {
        checkpoint::attach_optimizer_state(bundle, result.state, result.model.params);
        for (const auto& t : result.reference.params()) {
            bundle.tensors.add("optim.reference." + t.name, t.shape).values = t.values;
        }
    }
    return bundle;
}

struct TrainOptions {
    std::string config_path;
    std::string corpus;
    std::string in_ckpt;
    std::string out_ckpt;
    std::string metrics;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    bool save_optimizer = false;
    bool resume = false;
};

int cmd_train(config::Stage stage, const TrainOptions& o) {
    if (stage == config::Stage::align && o.in_ckpt.empty()) {
        throw InvalidArgument("align requires --in-ckpt: the alignment stage starts from an SFT checkpoint");
    }
    auto cfg = o.config_path.empty() ? config::RunConfig::defaults(stage) : config::RunConfig::load(o.config_path, stage);
    if (o.seed) {
        cfg.trainer.seed = *o.seed;
    }
    if (o.steps) {
        cfg.trainer.steps = *o.steps;
    }
    cfg.finalize();

    const auto corpus = data::load_corpus(o.corpus);
    data::Tokenizer tok = data::Tokenizer::synthetic();
    std::optional<LoadedCheckpoint> input;
    trainer::TrainInput in;
    optim::OptimizerState state;
    std::optional<optim::ReferenceParams> reference;
    if (!o.in_ckpt.empty()) {
        input = load_checkpoint(o.in_ckpt);
        tok = input->tokenizer;
        in.model = &input->model;
        if (o.resume) {
            if (!checkpoint::has_optimizer_state(input->bundle)) {
                throw InvalidArgument("--resume needs a checkpoint written with --save-optimizer");
            }
            if (input->bundle.metadata.value("stage", "") != config::to_string(stage)) {
                throw InvalidArgument("--resume needs a checkpoint of the same stage");
            }
            state = checkpoint::extract_optimizer_state(input->bundle, input->model.params);
            ParamSet ref = input->bundle.tensors.subset("optim.reference.");
            ParamSet renamed;
            for (const auto& t : ref) {
                renamed.add(t.name.substr(std::string("optim.reference.").size()), t.shape).values = t.values;
            }
            reference.emplace(std::move(renamed));
            in.state = &state;
            in.reference = &*reference;
        }
    } else if (o.resume) {
        throw InvalidArgument("--resume needs --in-ckpt");
    }

    const auto hook = [&](const trainer::TrainResult& r) {
        checkpoint::save(o.out_ckpt + ".step" + std::to_string(r.state.step),
                         make_bundle(r, cfg, tok, o.save_optimizer));
    };
    const auto result = trainer::train(cfg, corpus, tok, in, hook);
    if (!result.metrics.empty() && !std::isfinite(result.metrics.back().loss)) {
        throw NumericError("final loss is not finite");
    }
    checkpoint::save(o.out_ckpt, make_bundle(result, cfg, tok, o.save_optimizer));
    if (!o.metrics.empty()) {
        std::ostringstream csv;
        csv::write_metrics(csv, result.metrics);
        write_text(o.metrics, csv.str());
    }
    if (!result.metrics.empty()) {
        const auto& m = result.metrics.back();
        std::cout << config::to_string(stage) << ": step " << m.step << " loss " << m.loss;
        if (stage == config::Stage::align) {
            std::cout << " reward_acc " << m.reward_acc << " margin " << m.margin;
        }
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Direct preference heads: training, evaluation and analysis"};
    app.require_subcommand(1);

    // gen-data
    data::TaskConfig task_cfg;
    std::string task_name = "max-digit";
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    std::string tok_out;
    bool gen_force = false;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic multiple-choice corpus (JSON lines)");
    gen->add_option("--task", task_name, "max-digit | copy-last | majority-symbol")->capture_default_str();
    gen->add_option("--count", task_cfg.count, "Number of records")->capture_default_str();
    gen->add_option("--choices", task_cfg.choices, "Choices per record (>= 2)")->capture_default_str();
    gen->add_option("--length", task_cfg.length, "Items listed per prompt")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output corpus path")->required();
    gen->add_option("--tokenizer-out", tok_out, "Also write the tokenizer JSON here");
    gen->add_flag("--force", gen_force, "Overwrite existing outputs");

    // train-sft / align
    TrainOptions sft_opts;
    TrainOptions align_opts;
    auto add_train = [&](const char* name, const char* help, TrainOptions& o) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config_path, "JSON run config (absent keys take stage defaults)");
        sub->add_option("--corpus", o.corpus, "Training corpus (JSON lines)")->required();
        sub->add_option("--in-ckpt", o.in_ckpt, "Input checkpoint");
        sub->add_option("--out-ckpt", o.out_ckpt, "Output checkpoint")->required();
        sub->add_option("--metrics", o.metrics, "Metrics CSV path");
        sub->add_option("--seed", o.seed, "Override trainer.seed");
        sub->add_option("--steps", o.steps, "Override trainer.steps");
        sub->add_flag("--save-optimizer", o.save_optimizer, "Store optimizer state and reference for exact resume");
        sub->add_flag("--resume", o.resume, "Continue the run saved in --in-ckpt");
        return sub;
    };
    auto* sft = add_train("train-sft", "Supervised fine-tuning on gold answers", sft_opts);
    auto* align = add_train("align", "Joint cDPO + DPH alignment from an SFT checkpoint", align_opts);

    // eval
    std::string eval_ckpt;
    std::string eval_corpus;
    std::string eval_method = "logprob";
    std::string eval_report;
    auto* eval = app.add_subcommand("eval", "Multiple-choice accuracy by log-prob or DPH reward");
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
    eval->add_option("--corpus", eval_corpus, "Evaluation corpus")->required();
    eval->add_option("--method", eval_method, "logprob | dph")->capture_default_str();
    eval->add_option("--report", eval_report, "Report JSON path (stdout if absent)");

    // landscape
    std::string land_objective = "separable";
    double land_eps = 0.1;
    double land_lo = -6.0;
    double land_hi = 6.0;
    int land_n = 121;
    std::string land_out;
    auto* land = app.add_subcommand("landscape", "Loss landscape grid as CSV r_w,r_l,loss");
    land->add_option("--objective", land_objective, "separable | contrastive")->capture_default_str();
    land->add_option("--epsilon", land_eps, "Label smoothing in [0, 0.5]")->capture_default_str();
    land->add_option("--lo", land_lo, "Lower end of both axes")->capture_default_str();
    land->add_option("--hi", land_hi, "Upper end of both axes")->capture_default_str();
    land->add_option("--n", land_n, "Points per axis (>= 2)")->capture_default_str();
    land->add_option("--out", land_out, "CSV path (stdout if absent)");

    // gradcheck
    std::string gc_scope = "objectives";
    std::uint64_t gc_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gc->add_option("--scope", gc_scope, "objectives | head | backbone")->capture_default_str();
    gc->add_option("--seed", gc_seed, "Seed for random parameters")->capture_default_str();

    // rerank
    std::string rr_ckpt;
    std::string rr_prompt;
    std::string rr_corpus;
    int rr_n = 8;
    double rr_temperature = 1.0;
    std::uint64_t rr_seed = 0;
    int rr_max_new = 8;
    std::string rr_out;
    auto* rr = app.add_subcommand("rerank", "Best-of-N sampling scored by the reward head");
    rr->add_option("--ckpt", rr_ckpt, "Aligned checkpoint")->required();
    auto* rr_prompt_opt = rr->add_option("--prompt", rr_prompt, "User prompt, e.g. \"max 3 9 4 1 7\"");
    rr->add_option("--corpus", rr_corpus, "Score generation accuracy over this corpus instead")
        ->excludes(rr_prompt_opt);
    rr->add_option("--n", rr_n, "Candidates per prompt")->capture_default_str();
    rr->add_option("--temperature", rr_temperature, "Sampling temperature (0 = greedy)")->capture_default_str();
    rr->add_option("--seed", rr_seed, "Sampling seed")->capture_default_str();
    rr->add_option("--max-new", rr_max_new, "Maximum new tokens per candidate")->capture_default_str();
    rr->add_option("--out", rr_out, "Result JSON path (stdout if absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            task_cfg.task = data::parse_task(task_name);
            task_cfg.validate();
            require_new(gen_out, gen_force);
            if (!tok_out.empty()) {
                require_new(tok_out, gen_force);
            }
            const auto corpus = data::gen_synthetic_corpus(task_cfg, gen_seed);
            data::save_corpus(gen_out, corpus);
            if (!tok_out.empty()) {
                write_text(tok_out, data::Tokenizer::synthetic().to_json() + "\n");
            }
            return 0;
        }
        if (sft->parsed()) {
            return cmd_train(config::Stage::sft, sft_opts);
        }
        if (align->parsed()) {
            return cmd_train(config::Stage::align, align_opts);
        }
        if (eval->parsed()) {
            const auto method = inference::parse_method(eval_method);
            const auto ck = load_checkpoint(eval_ckpt);
            if (method == inference::Method::dph && !ck.model.has_head) {
                throw InvalidArgument("--method dph requires a checkpoint with a reward head (run align first)");
            }
            const auto corpus = data::load_corpus(eval_corpus);
            const auto report = inference::evaluate_mcq(ck.model, ck.tokenizer, template_of(ck.bundle), corpus, method);
            const std::string text = report.to_json().dump(2) + "\n";
            if (eval_report.empty()) {
                std::cout << text;
            } else {
                write_text(eval_report, text);
            }
            return 0;
        }
        if (land->parsed()) {
            const auto cells = objectives::landscape_grid(objectives::parse_objective(land_objective),
                                                          objectives::Smoothing(land_eps), land_lo, land_hi, land_n);
            std::ostringstream out;
            csv::write_landscape(out, cells);
            if (land_out.empty()) {
                std::cout << out.str();
            } else {
                write_text(land_out, out.str());
            }
            return 0;
        }
        if (gc->parsed()) {
            bool ok = true;
            for (const auto& rep : gradcheck::run_scope(gc_scope, gc_seed)) {
                std::cout << rep.scope << ": checked " << rep.checked << " max_rel_error " << rep.max_rel_error
                          << " tolerance " << rep.tolerance << (rep.passed() ? " PASS" : " FAIL") << "\n";
                if (!rep.passed()) {
                    std::cout << "  worst: " << rep.worst << "\n";
                    ok = false;
                }
            }
            return ok ? 0 : static_cast<int>(ErrorKind::numeric);
        }
        if (rr->parsed()) {
            const auto ck = load_checkpoint(rr_ckpt);
            const auto tmpl = template_of(ck.bundle);
            json result;
            if (!rr_corpus.empty()) {
                const auto corpus = data::load_corpus(rr_corpus);
                result = {{"n", rr_n},
                          {"temperature", rr_temperature},
                          {"seed", rr_seed},
                          {"n_records", corpus.size()},
                          {"accuracy", inference::generation_accuracy(ck.model, ck.tokenizer, tmpl, corpus, rr_n,
                                                                      rr_temperature, rr_seed, rr_max_new)}};
            } else {
                if (rr_prompt.empty()) {
                    throw InvalidArgument("rerank needs --prompt or --corpus");
                }
                result = inference::rerank_best_of_n(ck.model, ck.tokenizer, tmpl, rr_prompt, rr_n, rr_temperature,
                                                     rr_seed, rr_max_new)
                             .to_json();
            }
            const std::string text = result.dump(2) + "\n";
            if (rr_out.empty()) {
                std::cout << text;
            } else {
                write_text(rr_out, text);
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "dph: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "dph: malformed JSON: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::usage);
    } catch (const std::exception& e) {
        std::cerr << "dph: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::io);
    }
    return 1;
}
