#include "dph/inference.hpp"

#include <cmath>

#include "dph/backbone.hpp"
#include "dph/error.hpp"
#include "dph/reward_head.hpp"
#include "dph/rng.hpp"

namespace dph::inference {
namespace {

data::EncodedSequence encode(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                             std::string_view prompt, std::string_view choice) {
    auto seq = data::encode_example(prompt, choice, tmpl, tok);
    if (static_cast<int>(seq.ids.size()) > model.config.max_seq) {
        throw InvalidArgument("rendered example has " + std::to_string(seq.ids.size()) +
                              " tokens, over the context length " + std::to_string(model.config.max_seq));
    }
    return seq;
}

double reward_at_end(const Model& model, const backbone::ForwardTrace<float>& tr) {
    if (tr.tokens.empty() || tr.tokens.back() != data::kImEndId) {
        throw InvalidArgument("sequence does not end with <|im_end|>");
    }
    return reward_head::reward<float>(tr.hidden_row(tr.length - 1), model.head_for_inference());
}

void require_head(const Model& model) {
    if (!model.has_head) {
        throw InvalidArgument("model has no reward head; DPH scoring needs an aligned checkpoint");
    }
}

}  // namespace

Method parse_method(std::string_view name) {
    if (name == "logprob") {
        return Method::logprob;
    }
    if (name == "dph") {
        return Method::dph;
    }
    throw InvalidArgument("unknown scoring method '" + std::string(name) + "' (expected logprob or dph)");
}

std::string_view to_string(Method method) { return method == Method::logprob ? "logprob" : "dph"; }

double score_choice_logprob(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                            std::string_view prompt, std::string_view choice) {
    const auto seq = encode(model, tok, tmpl, prompt, choice);
    const auto tr = backbone::forward<float>(model.params, model.config, seq.ids);
    return backbone::sequence_log_prob(tr, seq.ids, seq.mask, backbone::Reduction::mean);
}

double score_choice_dph(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                        std::string_view prompt, std::string_view choice) {
    require_head(model);
    const auto seq = encode(model, tok, tmpl, prompt, choice);
    return sequence_reward(model, seq.ids);
}

double sequence_reward(const Model& model, std::span<const int> ids) {
    require_head(model);
    const auto tr = backbone::forward<float>(model.params, model.config, ids);
    return reward_at_end(model, tr);
}

std::vector<ScoredChoice> score_record(const Model& model, const data::Tokenizer& tok,
                                       const data::PromptTemplate& tmpl, const data::MultipleChoiceRecord& record,
                                       Method method) {
    record.validate();
    if (method == Method::dph) {
        require_head(model);
    }
    std::vector<ScoredChoice> out;
    for (std::size_t c = 0; c < record.choices.size(); ++c) {
        const auto seq = encode(model, tok, tmpl, record.prompt, record.choices[c]);
        const auto tr = backbone::forward<float>(model.params, model.config, seq.ids);
        ScoredChoice s;
        s.choice_index = static_cast<int>(c);
        s.logprob_score = backbone::sequence_log_prob(tr, seq.ids, seq.mask, backbone::Reduction::mean);
        if (model.has_head) {
            s.dph_score = reward_at_end(model, tr);
        }
        out.push_back(s);
    }
    return out;
}

int argmax_first(std::span<const double> scores) {
    if (scores.empty()) {
        throw InvalidArgument("argmax of an empty score list");
    }
    int best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

nlohmann::json EvalReport::to_json() const {
    return {{"method", std::string(inference::to_string(method))},
            {"n_records", n_records},
            {"accuracy", accuracy},
            {"picks", picks}};
}

EvalReport evaluate_mcq(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                        std::span<const data::MultipleChoiceRecord> records, Method method) {
    if (records.empty()) {
        throw InvalidArgument("evaluation corpus is empty");
    }
    if (method == Method::dph) {
        require_head(model);
    }
    EvalReport report;
    report.method = method;
    report.n_records = static_cast<int>(records.size());
    report.picks.assign(records.size(), 0);
    const auto n = static_cast<long>(records.size());
    std::vector<std::string> errors(records.size());
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < n; ++r) {
        try {
            const auto scored = score_record(model, tok, tmpl, records[r], method);
            std::vector<double> s;
            for (const auto& c : scored) {
                s.push_back(method == Method::logprob ? c.logprob_score : c.dph_score);
            }
            report.picks[r] = argmax_first(s);
        } catch (const std::exception& e) {
            errors[r] = "record " + std::to_string(r) + ": " + e.what();
        }
    }
    int correct = 0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (!errors[r].empty()) {
            throw InvalidArgument(errors[r]);
        }
        correct += report.picks[r] == records[r].gold ? 1 : 0;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
    return report;
}

nlohmann::json RerankResult::to_json() const {
    nlohmann::json cands = nlohmann::json::array();
    for (std::size_t i = 0; i < texts.size(); ++i) {
        cands.push_back({{"index", i}, {"text", texts[i]}, {"ids", candidates[i]}, {"score", scores[i]}});
    }
    return {{"candidates", cands}, {"selected_index", selected_index}, {"selected_text", texts.at(selected_index)}};
}

RerankResult rerank_best_of_n(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                              std::string_view prompt, int n, double temperature, std::uint64_t seed, int max_new) {
    if (n < 1) {
        throw InvalidArgument("best-of-n needs n >= 1");
    }
    require_head(model);
    const auto prompt_ids = data::encode_prompt(prompt, tmpl, tok);
    RerankResult result;
    for (int i = 0; i < n; ++i) {
        backbone::SampleOptions opt;
        opt.temperature = temperature;
        opt.max_new = max_new;
        opt.stop_token = tok.im_end();
        opt.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        auto completion = backbone::sample(model.params, model.config, prompt_ids, opt);

        std::vector<int> content(completion.begin(), completion.end());
        if (!content.empty() && content.back() == tok.im_end()) {
            content.pop_back();
        }
        std::vector<int> full = prompt_ids;
        full.insert(full.end(), content.begin(), content.end());
        full.push_back(tok.im_end());
        if (static_cast<int>(full.size()) > model.config.max_seq) {
            // No room for the end token: score the last max_seq tokens.
            full.erase(full.begin(), full.end() - model.config.max_seq);
            full.back() = tok.im_end();
        }
        result.scores.push_back(sequence_reward(model, full));
        result.texts.push_back(tok.decode(content));
        result.candidates.push_back(std::move(completion));
    }
    result.selected_index = argmax_first(result.scores);
    return result;
}

double generation_accuracy(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                           std::span<const data::MultipleChoiceRecord> records, int n, double temperature,
                           std::uint64_t seed, int max_new) {
    if (records.empty()) {
        throw InvalidArgument("evaluation corpus is empty");
    }
    const auto count = static_cast<long>(records.size());
    std::vector<int> hit(records.size(), 0);
    std::vector<std::string> errors(records.size());
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < count; ++r) {
        try {
            const auto& rec = records[r];
            std::string text;
            if (n == 1 && !model.has_head) {
                backbone::SampleOptions opt;
                opt.temperature = temperature;
                opt.max_new = max_new;
                opt.stop_token = tok.im_end();
                opt.seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(r)), 0);
                auto completion = backbone::sample(model.params, model.config,
                                                   data::encode_prompt(rec.prompt, tmpl, tok), opt);
                if (!completion.empty() && completion.back() == tok.im_end()) {
                    completion.pop_back();
                }
                text = tok.decode(completion);
            } else {
                const auto rr = rerank_best_of_n(model, tok, tmpl, rec.prompt, n, temperature,
                                                 derive_seed(seed, static_cast<std::uint64_t>(r)), max_new);
                text = rr.texts[rr.selected_index];
            }
            hit[r] = text == data::rule_answer(rec.prompt) ? 1 : 0;
        } catch (const std::exception& e) {
            errors[r] = "record " + std::to_string(r) + ": " + e.what();
        }
    }
    int correct = 0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (!errors[r].empty()) {
            throw InvalidArgument(errors[r]);
        }
        correct += hit[r];
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace dph::inference
