#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <vector>

#include "dph/backbone.hpp"
#include "dph/error.hpp"
#include "dph/inference.hpp"
#include "dph/trainer.hpp"

using namespace dph;
using namespace dph::inference;

namespace {

const data::Tokenizer& tok() {
    static const data::Tokenizer t = data::Tokenizer::synthetic();
    return t;
}

backbone::BackboneConfig tiny_backbone(int layers = 1) {
    backbone::BackboneConfig c;
    c.vocab_size = tok().size();
    c.d_model = 16;
    c.layers = layers;
    c.heads = 2;
    c.d_ff = 24;
    c.max_seq = 64;
    return c;
}

Model random_model(std::uint64_t seed, bool with_head) {
    Model m;
    m.config = tiny_backbone();
    m.params = backbone::init_params(m.config, seed);
    if (with_head) {
        trainer::attach_head(m, config::HeadConfig{reward_head::PoolerKind::affine_tanh, 0, 0.1}, seed + 1);
        Rng rng(seed + 2);
        for (float& v : m.params.at("head.w_dph").values) {
            v = static_cast<float>(rng.normal());
        }
    }
    return m;
}

// Hand-built model whose reward is sqrt(d/2) exactly when the answer token "9"
// is in the sequence and 0 otherwise. All weights are zero except the value
// and output projections (identity), so attention averages the normalized
// embeddings of the prefix; only "9" has a non-zero embedding (c, -c, 0, ...).
Model oracle_model() {
    Model m;
    m.config = tiny_backbone();
    m.params = backbone::init_params(m.config, 0);
    for (auto& t : m.params) {
        const bool gain = t.name.ends_with("_norm");
        std::fill(t.values.begin(), t.values.end(), gain ? 1.0F : 0.0F);
    }
    const int d = m.config.d_model;
    for (const char* name : {"layers.0.attn.wv", "layers.0.attn.wo"}) {
        auto& w = m.params.at(name).values;
        for (int i = 0; i < d; ++i) {
            w[i * d + i] = 1.0F;
        }
    }
    const int nine = tok().encode("9").at(0);
    auto& emb = m.params.at("tok_embedding").values;
    emb[nine * d + 0] = 0.5F;
    emb[nine * d + 1] = -0.5F;
    trainer::attach_head(m, config::HeadConfig{reward_head::PoolerKind::identity, 0, 0.0}, 1);
    m.params.at("head.w_dph").values[0] = 1.0F;
    return m;
}

std::vector<data::MultipleChoiceRecord> corpus(data::Task task, int n, std::uint64_t seed) {
    data::TaskConfig tc;
    tc.task = task;
    tc.count = n;
    return data::gen_synthetic_corpus(tc, seed);
}

}  // namespace

TEST_CASE("a zero model scores every choice at ln(1/V)") {
    auto m = random_model(1, false);
    for (float& v : m.params.at("tok_embedding").values) {
        v = 0.0F;
    }
    for (const char* choice : {"9", "3", "a"}) {
        CHECK(score_choice_logprob(m, tok(), {}, "max 1 9 3", choice) ==
              doctest::Approx(-std::log(66.0)).epsilon(1e-9));
    }
}

TEST_CASE("log-prob score is the mean-mode sequence log-prob on the answer mask") {
    const auto m = random_model(2, false);
    const auto seq = data::encode_example("max 1 9 3", "9", {}, tok());
    const auto tr = backbone::forward<float>(m.params, m.config, seq.ids);
    CHECK(score_choice_logprob(m, tok(), {}, "max 1 9 3", "9") ==
          backbone::sequence_log_prob(tr, seq.ids, seq.mask, backbone::Reduction::mean));
}

TEST_CASE("DPH score with w_dph = 0 is zero and is deterministic") {
    auto m = random_model(3, true);
    CHECK(score_choice_dph(m, tok(), {}, "max 1 2", "2") == score_choice_dph(m, tok(), {}, "max 1 2", "2"));
    CHECK(score_choice_dph(m, tok(), {}, "max 1 2", "2") != 0.0);
    for (float& v : m.params.at("head.w_dph").values) {
        v = 0.0F;
    }
    for (const char* choice : {"9", "3", "a", "bb"}) {
        CHECK(score_choice_dph(m, tok(), {}, "last a b", choice) == 0.0);
    }
    const std::vector<int> no_end = {1, 5, 6};
    CHECK_THROWS_AS(sequence_reward(m, no_end), InvalidArgument);
}

TEST_CASE("DPH score requires a head") {
    const auto m = random_model(3, false);
    CHECK_THROWS_AS(score_choice_dph(m, tok(), {}, "max 1 2", "2"), InvalidArgument);
    const std::vector<data::MultipleChoiceRecord> recs = corpus(data::Task::max_digit, 2, 1);
    CHECK_THROWS_AS(evaluate_mcq(m, tok(), {}, recs, Method::dph), InvalidArgument);
}

TEST_CASE("hand-built oracle head picks the gold answer") {
    const auto m = oracle_model();
    // emb("9") normalizes to (a, -a, 0, ...); attention at the last position
    // averages it over the n prefix positions, and the final norm rescales.
    const double eps = backbone::kNormEpsilon;
    const double a = 0.5 / std::sqrt(2 * 0.25 / 16 + eps);
    const double n = static_cast<double>(data::encode_example("max 1 9 3", "9", {}, tok()).ids.size());
    const double expected = (a / n) / std::sqrt(2 * (a / n) * (a / n) / 16 + eps);
    CHECK(score_choice_dph(m, tok(), {}, "max 1 9 3", "9") == doctest::Approx(expected).epsilon(1e-6));
    CHECK(score_choice_dph(m, tok(), {}, "max 1 9 3", "3") == 0.0);

    std::vector<data::MultipleChoiceRecord> nines;
    for (const auto& r : corpus(data::Task::max_digit, 400, 3)) {
        if (r.choices[r.gold] == "9") {
            nines.push_back(r);
        }
    }
    REQUIRE(nines.size() >= 50U);
    const auto report = evaluate_mcq(m, tok(), {}, nines, Method::dph);
    CHECK(report.accuracy == 1.0);
    CHECK(report.n_records == static_cast<int>(nines.size()));
}

TEST_CASE("an untrained model is at chance") {
    const auto m = random_model(4, true);
    const auto recs = corpus(data::Task::copy_last, 800, 5);
    const double sigma = std::sqrt(0.25 * 0.75 / 800);
    for (const auto method : {Method::logprob, Method::dph}) {
        const auto report = evaluate_mcq(m, tok(), {}, recs, method);
        INFO(to_string(method) << " accuracy " << report.accuracy);
        CHECK(std::abs(report.accuracy - 0.25) <= 3 * sigma);
    }
}

TEST_CASE("evaluation picks are per-record argmaxes, independent of threads") {
    const auto m = random_model(6, true);
    const auto recs = corpus(data::Task::max_digit, 60, 7);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto serial_lp = evaluate_mcq(m, tok(), {}, recs, Method::logprob);
    const auto serial_dph = evaluate_mcq(m, tok(), {}, recs, Method::dph);
    omp_set_num_threads(4);
    const auto par_lp = evaluate_mcq(m, tok(), {}, recs, Method::logprob);
    const auto par_dph = evaluate_mcq(m, tok(), {}, recs, Method::dph);
    omp_set_num_threads(saved);
    CHECK(serial_lp.picks == par_lp.picks);
    CHECK(serial_dph.picks == par_dph.picks);
    CHECK(serial_lp.to_json() == par_lp.to_json());

    int correct = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto scored = score_record(m, tok(), {}, recs[i], Method::dph);
        std::vector<double> lp;
        std::vector<double> dph;
        for (const auto& s : scored) {
            lp.push_back(s.logprob_score);
            dph.push_back(s.dph_score);
        }
        CHECK(par_lp.picks[i] == argmax_first(lp));
        CHECK(par_dph.picks[i] == argmax_first(dph));
        correct += par_lp.picks[i] == recs[i].gold ? 1 : 0;
    }
    CHECK(par_lp.accuracy == doctest::Approx(double(correct) / recs.size()).epsilon(1e-15));
}

TEST_CASE("argmax takes the first maximum") {
    const std::vector<double> ties = {1.0, 3.0, 3.0, 2.0};
    CHECK(argmax_first(ties) == 1);
    const std::vector<double> one = {-5.0};
    CHECK(argmax_first(one) == 0);
    CHECK_THROWS_AS(argmax_first(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("a memorized record scores near zero nats") {
    Model m;
    m.config = tiny_backbone();
    m.params = backbone::init_params(m.config, 8);
    const std::vector<data::MultipleChoiceRecord> one = {{"max 2 7 5", {"7", "5"}, 0}};
    const auto batch = data::build_sft_batch(one, {}, tok(), 40);
    optim::OptimizerConfig opt;
    opt.max_lr = 3e-3;
    opt.min_lr = 3e-3;
    opt.warmup_steps = 0;
    opt.total_steps = 200;
    opt.prior_coeff = 0.0;
    auto state = optim::OptimizerState::zeros(m.params);
    for (int s = 0; s < 200; ++s) {
        trainer::sft_step(m, batch, state, nullptr, opt);
    }
    CHECK(score_choice_logprob(m, tok(), {}, "max 2 7 5", "7") > -0.05);
    CHECK(score_choice_logprob(m, tok(), {}, "max 2 7 5", "5") < -1.0);
}

TEST_CASE("best-of-n reranking") {
    const auto m = random_model(9, true);
    const auto greedy = rerank_best_of_n(m, tok(), {}, "max 1 2 3", 5, 0.0, 11);
    REQUIRE(greedy.candidates.size() == 5U);
    for (const auto& c : greedy.candidates) {
        CHECK(c == greedy.candidates.front());
    }
    CHECK(greedy.selected_index == 0);

    const auto a = rerank_best_of_n(m, tok(), {}, "max 1 2 3", 8, 1.0, 12);
    const auto b = rerank_best_of_n(m, tok(), {}, "max 1 2 3", 8, 1.0, 12);
    CHECK(a.candidates == b.candidates);
    CHECK(a.scores == b.scores);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.selected_index == argmax_first(a.scores));
    for (const double s : a.scores) {
        CHECK(s <= a.scores[a.selected_index]);
    }

    // Candidate i depends only on (seed, i): a shorter run is a prefix.
    const auto c = rerank_best_of_n(m, tok(), {}, "max 1 2 3", 3, 1.0, 12);
    for (int i = 0; i < 3; ++i) {
        CHECK(c.candidates[i] == a.candidates[i]);
        CHECK(c.scores[i] == a.scores[i]);
    }

    // Scores are the DPH reward of prompt + completion (+ end token).
    const auto prompt = data::encode_prompt("max 1 2 3", {}, tok());
    for (int i = 0; i < 8; ++i) {
        auto full = prompt;
        full.insert(full.end(), a.candidates[i].begin(), a.candidates[i].end());
        if (full.back() != tok().im_end()) {
            full.push_back(tok().im_end());
        }
        CHECK(a.scores[i] == sequence_reward(m, full));
    }

    CHECK_THROWS_AS(rerank_best_of_n(m, tok(), {}, "max 1", 0, 1.0, 1), InvalidArgument);
    CHECK_THROWS_AS(rerank_best_of_n(m, tok(), {}, "max 1", 2, -1.0, 1), InvalidArgument);
}

TEST_CASE("greedy generation on the oracle-free path") {
    const auto m = random_model(10, true);
    const auto recs = corpus(data::Task::max_digit, 10, 2);
    const double g1 = generation_accuracy(m, tok(), {}, recs, 1, 0.0, 3);
    const double g2 = generation_accuracy(m, tok(), {}, recs, 1, 0.0, 99);
    CHECK(g1 == g2);
    CHECK(g1 >= 0.0);
    CHECK(g1 <= 1.0);
}
