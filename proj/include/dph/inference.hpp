#pragma once

// Multiple-choice scoring by mean log-probability or by DPH reward, and
// best-of-N reranking of sampled completions.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dph/data.hpp"
#include "dph/model.hpp"

namespace dph::inference {

enum class Method { logprob, dph };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);

struct ScoredChoice {
    int choice_index = 0;
    double logprob_score = 0.0;  // mean log-prob of the answer and its end token
    double dph_score = 0.0;      // reward at the final <|im_end|>, dropout off
};

double score_choice_logprob(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                            std::string_view prompt, std::string_view choice);
double score_choice_dph(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                        std::string_view prompt, std::string_view choice);

/// Reward of a full token sequence, read at its last position, which must be <|im_end|>.
double sequence_reward(const Model& model, std::span<const int> ids);

/// One entry per choice; dph_score stays 0 when the model has no head.
std::vector<ScoredChoice> score_record(const Model& model, const data::Tokenizer& tok,
                                       const data::PromptTemplate& tmpl, const data::MultipleChoiceRecord& record,
                                       Method method);

/// Index of the first maximum.
int argmax_first(std::span<const double> scores);

struct EvalReport {
    Method method = Method::logprob;
    int n_records = 0;
    double accuracy = 0.0;
    std::vector<int> picks;

    /// {"accuracy": a, "method": m, "n_records": n, "picks": [...]}
    nlohmann::json to_json() const;
};

/// Records are scored in parallel; the result does not depend on thread count.
EvalReport evaluate_mcq(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                        std::span<const data::MultipleChoiceRecord> records, Method method);

struct RerankResult {
    std::vector<std::vector<int>> candidates;  // sampled completions (may lack <|im_end|>)
    std::vector<std::string> texts;            // decoded, without the end token
    std::vector<double> scores;
    int selected_index = 0;

    nlohmann::json to_json() const;
};

/// Candidate i is sampled with seed derive_seed(seed, i). Candidates that did
/// not produce <|im_end|> are scored with it appended.
RerankResult rerank_best_of_n(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                              std::string_view prompt, int n, double temperature, std::uint64_t seed,
                              int max_new = 8);

/// Fraction of records whose selected completion equals the rule answer.
/// n = 1 with temperature 0 is plain greedy decoding. Record r uses seed
/// derive_seed(seed, r).
double generation_accuracy(const Model& model, const data::Tokenizer& tok, const data::PromptTemplate& tmpl,
                           std::span<const data::MultipleChoiceRecord> records, int n, double temperature,
                           std::uint64_t seed, int max_new = 8);

}  // namespace dph::inference
