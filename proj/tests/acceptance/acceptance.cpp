// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
// Criteria 1-8 call the library directly; 9-12 drive the dph binary the way
// a user would and inspect the files it writes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dph/backbone.hpp"
#include "dph/checkpoint.hpp"
#include "dph/data.hpp"
#include "dph/gradcheck.hpp"
#include "dph/inference.hpp"
#include "dph/objectives.hpp"
#include "dph/optimizer.hpp"
#include "dph/reward_head.hpp"
#include "dph/trainer.hpp"

#ifndef DPH_CLI_PATH
#error "DPH_CLI_PATH must point at the dph binary"
#endif

namespace fs = std::filesystem;
using namespace dph;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;  // wall-clock budget
    Outcome outcome;
    double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path);
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void log(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DPH_CLI_PATH) + " " + args;
    log(cmd);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void must(const std::string& args) {
    if (run_cli(args) != 0) {
        throw std::runtime_error("command failed: dph " + args);
    }
}

// ---------------------------------------------------------------------------
// 1-6: objectives and parameter counts

constexpr double kGridEps[] = {0.05, 0.1, 0.25, 0.5};

double target_log_odds(double eps) { return std::log((1.0 - eps) / eps); }

Outcome gradient_exactness() {
    const auto r = gradcheck::objectives();
    return {r.passed() && r.tolerance <= 1e-6,
            "max rel error " + fmt(r.max_rel_error) + " <= 1e-06 over " + std::to_string(r.checked) + " components"};
}

// Plain gradient descent from random starts; oracle is ln((1-eps)/eps).
Outcome descent(objectives::DphObjective objective) {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> start(-10.0, 10.0);
    double worst = 0.0;
    int runs = 0;
    for (const double e : kGridEps) {
        const objectives::Smoothing eps(e);
        const double t = target_log_odds(e);
        for (int s = 0; s < 25; ++s) {
            objectives::RewardPair p{start(gen), start(gen)};
            for (int it = 0; it < 200000; ++it) {
                const auto g = objectives::dph_grad(p, eps, objective);
                if (std::max(std::abs(g.chosen), std::abs(g.rejected)) < 1e-12) {
                    break;
                }
                p.chosen -= 2.0 * g.chosen;
                p.rejected -= 2.0 * g.rejected;
            }
            const double err = objective == objectives::DphObjective::separable
                                   ? std::max(std::abs(p.chosen - t), std::abs(p.rejected + t))
                                   : std::abs((p.chosen - p.rejected) - t);
            worst = std::max(worst, err);
            ++runs;
        }
    }
    const std::string what = objective == objectives::DphObjective::separable
                                 ? "max |(r_w, r_l) - (ln((1-e)/e), ln(e/(1-e)))| "
                                 : "max |margin - ln((1-e)/e)| ";
    return {runs == 100 && worst <= 1e-3, what + fmt(worst) + " <= 0.001 over " + std::to_string(runs) + " runs"};
}

Outcome convexity() {
    constexpr double h = 1e-2;
    double min_sep = INFINITY;
    double min_det = INFINITY;
    double min_con = INFINITY;
    int points = 0;
    for (const double e : kGridEps) {
        const objectives::Smoothing eps(e);
        for (int i = -16; i <= 16; ++i) {
            for (int j = -16; j <= 16; ++j) {
                const double w = 0.5 * i;
                const double l = 0.5 * j;
                const auto sep = [&](double dw, double dl) {
                    return objectives::sep_dph_loss({w + dw, l + dl}, eps);
                };
                const auto con = [&](double dw, double dl) {
                    return objectives::con_dph_loss({w + dw, l + dl}, eps);
                };
                const double f0 = sep(0, 0);
                const double d_ww = sep(h, 0) - 2 * f0 + sep(-h, 0);
                const double d_ll = sep(0, h) - 2 * f0 + sep(0, -h);
                const double d_wl = (sep(h, h) - sep(h, -h) - sep(-h, h) + sep(-h, -h)) / 4;
                min_sep = std::min({min_sep, d_ww, d_ll});
                min_det = std::min(min_det, d_ww * d_ll - d_wl * d_wl);
                // Contrastive loss depends on the margin only: curvature along (1, -1).
                min_con = std::min(min_con, con(h, -h) - 2 * con(0, 0) + con(-h, h));
                ++points;
            }
        }
    }
    return {min_sep > 0 && min_det > 0 && min_con > 0,
            "min second differences: separable " + fmt(min_sep) + ", Hessian det " + fmt(min_det) +
                ", contrastive margin " + fmt(min_con) + " (all > 0) at " + std::to_string(points) + " points"};
}

Outcome cdpo_identities() {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> lp(-30.0, 0.0);
    std::uniform_real_distribution<double> beta(0.01, 5.0);
    int reduction_bad = 0;
    int swap_bad = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const objectives::PolicyLogRatios r{lp(gen), lp(gen), lp(gen), lp(gen), beta(gen)};
        if (objectives::cdpo_loss(r, 0.0) != objectives::dpo_loss(r)) {
            ++reduction_bad;
        }
        // eps on a 2^-53 grid in [0, 1), so 1 - eps is exact.
        const double eps = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        if (objectives::cdpo_loss(r.swapped(), eps) != objectives::cdpo_loss(r, 1.0 - eps)) {
            ++swap_bad;
        }
    }
    return {reduction_bad == 0 && swap_bad == 0, "bit-exact on " + std::to_string(n) +
                                                     " inputs: eps=0 mismatches " + std::to_string(reduction_bad) +
                                                     ", label-swap mismatches " + std::to_string(swap_bad)};
}

Outcome param_counts() {
    using reward_head::PoolerKind;
    const auto a = reward_head::head_param_count(PoolerKind::identity, 1536, 4096);
    const auto b = reward_head::head_param_count(PoolerKind::affine_tanh, 1536, 4096);
    const auto c = reward_head::head_param_count(PoolerKind::swiglu_tanh, 1536, 4096);
    return {a == 1536 && b == 2362368 && c == 18875904,
            std::to_string(a) + " / " + std::to_string(b) + " / " + std::to_string(c) +
                " (expected 1536 / 2362368 / 18875904)"};
}

// ---------------------------------------------------------------------------
// 7: backbone gradients

Outcome backbone_gradcheck() {
    double worst = 0.0;
    bool ok = true;
    for (const std::uint64_t seed : {1, 2, 3}) {
        const auto r = gradcheck::backbone(seed);
        ok = ok && r.checked > 0;
        worst = std::max(worst, r.max_rel_error);
    }
    return {ok && worst <= 1e-4, "max rel error " + fmt(worst) + " <= 0.0001 over seeds 1-3"};
}

// ---------------------------------------------------------------------------
// 8: prior regularization

double max_abs_deviation(const ParamSet& a, const ParamSet& ref, optim::PriorScope scope) {
    double m = 0.0;
    for (const auto& t : a) {
        if (!optim::in_scope(scope, t.name)) {
            continue;
        }
        const auto& r = ref.at(t.name).values;
        for (std::size_t i = 0; i < t.size(); ++i) {
            m = std::max(m, std::abs(static_cast<double>(t.values[i]) - r[i]));
        }
    }
    return m;
}

// Algorithm properties on the real SFT model: beta_reg = 0 matches the
// unregularized optimizer bit for bit, and theta = theta_ref is a fixed point.
std::string prior_unit_properties(const Model& sft, const std::vector<data::MultipleChoiceRecord>& corpus,
                                  bool& ok) {
    const auto tok = data::Tokenizer::synthetic();
    Model model = sft;
    trainer::attach_head(model, config::HeadConfig{}, 11);
    const auto ref = trainer::snapshot_reference(model.params);
    Rng rng(5);
    std::vector<data::PreferencePair> pairs;
    for (int i = 0; i < 8; ++i) {
        pairs.push_back(data::synthesize_pair(corpus[i], {}, tok, rng));
    }

    optim::OptimizerConfig cfg = config::RunConfig::defaults(config::Stage::align).optimizer;
    cfg.warmup_steps = 0;
    cfg.prior_coeff = 0.0;
    Model a = model;
    Model b = model;
    auto sa = optim::OptimizerState::zeros(a.params);
    auto sb = optim::OptimizerState::zeros(b.params);
    for (int step = 0; step < 3; ++step) {
        GradSet ga(a.params);
        Rng dropout(100 + step);
        trainer::align_loss<float>(a, ref, pairs, trainer::AlignConfig{}, dropout, &ga);
        GradSet gb = ga;
        optim::optimizer_step(sa, a.params, ga, &ref, cfg);
        optim::optimizer_step(sb, b.params, gb, nullptr, cfg);
    }
    const bool equivalent = a.params == b.params && sa.first == sb.first && sa.second == sb.second;

    cfg.prior_coeff = 1e3;
    Model fixed = model;
    auto sf = optim::OptimizerState::zeros(fixed.params);
    for (int step = 0; step < 5; ++step) {
        GradSet zero(fixed.params);
        optim::optimizer_step(sf, fixed.params, zero, &ref, cfg);
    }
    const bool fixed_point = fixed.params == ref.params();
    ok = ok && equivalent && fixed_point;
    return std::string("beta_reg=0 bit-equivalent: ") + (equivalent ? "yes" : "NO") +
           "; theta_ref fixed point: " + (fixed_point ? "yes" : "NO");
}

// ---------------------------------------------------------------------------
// 9-12: the seeded pipeline

struct Layout {
    fs::path dir;
    std::string at(const std::string& name) const { return (dir / name).string(); }
};

constexpr std::uint64_t kSeed = 1;
constexpr int kTrainRecords = 2000;
constexpr int kHeldOutRecords = 500;
constexpr double kRerankTemperature = 0.7;

struct PipelineTimes {
    double train_s = 0.0;
    double rerank_s = 0.0;
};

PipelineTimes run_pipeline(const Layout& L) {
    fs::create_directories(L.dir);
    PipelineTimes t;
    must("gen-data --force --task max-digit --count " + std::to_string(kTrainRecords) + " --seed 1 --out " +
         L.at("train.jsonl"));
    must("gen-data --force --task max-digit --count " + std::to_string(kHeldOutRecords) + " --seed 2 --out " +
         L.at("held.jsonl"));
    const auto t0 = Clock::now();
    must("train-sft --corpus " + L.at("train.jsonl") + " --seed " + std::to_string(kSeed) + " --out-ckpt " +
         L.at("sft.ckpt") + " --metrics " + L.at("sft.csv"));
    must("align --corpus " + L.at("train.jsonl") + " --seed " + std::to_string(kSeed) + " --in-ckpt " +
         L.at("sft.ckpt") + " --out-ckpt " + L.at("align.ckpt") + " --metrics " + L.at("align.csv"));
    t.train_s = since(t0);
    must("eval --method dph --ckpt " + L.at("align.ckpt") + " --corpus " + L.at("held.jsonl") + " --report " +
         L.at("eval_dph.json"));
    must("eval --method logprob --ckpt " + L.at("align.ckpt") + " --corpus " + L.at("held.jsonl") + " --report " +
         L.at("eval_logprob.json"));
    const auto t1 = Clock::now();
    must("rerank --ckpt " + L.at("align.ckpt") + " --corpus " + L.at("held.jsonl") + " --n 8 --temperature " +
         fmt(kRerankTemperature) + " --seed " + std::to_string(kSeed) + " --out " + L.at("best_of_8.json"));
    must("rerank --ckpt " + L.at("align.ckpt") + " --corpus " + L.at("held.jsonl") +
         " --n 1 --temperature 0 --out " + L.at("greedy.json"));
    t.rerank_s = since(t1);
    return t;
}

// Fraction of held-out pairs (gold vs. a uniformly drawn wrong choice) with r_w > r_l.
double held_out_reward_accuracy(const Layout& L) {
    const auto model = checkpoint::to_model(checkpoint::load(L.at("align.ckpt")));
    const auto held = data::load_corpus(L.at("held.jsonl"));
    const auto tok = data::Tokenizer::synthetic();
    Rng rng(derive_seed(kSeed, 77));
    int correct = 0;
    for (const auto& rec : held) {
        const auto pair = data::synthesize_pair(rec, {}, tok, rng);
        correct += inference::sequence_reward(model, pair.chosen_ids) > inference::sequence_reward(model, pair.rejected_ids)
                       ? 1
                       : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(held.size());
}

std::vector<std::vector<double>> read_csv(const std::string& path) {
    std::istringstream in(slurp(path));
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream cells(line);
        for (std::string cell; std::getline(cells, cell, ',');) {
            row.push_back(std::stod(cell));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Mean training reward accuracy over consecutive 500-step windows.
std::vector<double> reward_acc_windows(const std::string& metrics_csv) {
    const auto rows = read_csv(metrics_csv);
    std::vector<double> windows;
    for (std::size_t start = 0; start + 500 <= rows.size(); start += 500) {
        double s = 0;
        for (std::size_t i = start; i < start + 500; ++i) {
            s += rows[i][5];
        }
        windows.push_back(s / 500);
    }
    return windows;
}

Outcome landscape_structure(const Layout& L) {
    fs::create_directories(L.dir);
    const double lo = -6.0;
    const double hi = 6.0;
    const int n = 121;
    const double step = (hi - lo) / (n - 1);
    const std::string range = " --epsilon 0.1 --lo -6 --hi 6 --n 121 --out ";
    must("landscape --objective separable" + range + L.at("land_sep.csv"));
    must("landscape --objective contrastive" + range + L.at("land_con.csv"));

    const auto sep = read_csv(L.at("land_sep.csv"));
    const auto con = read_csv(L.at("land_con.csv"));
    if (sep.size() != static_cast<std::size_t>(n * n) || con.size() != sep.size()) {
        return {false, "unexpected grid size"};
    }
    const auto best = std::min_element(sep.begin(), sep.end(), [](const auto& a, const auto& b) { return a[2] < b[2]; });
    const double t = std::log(9.0);
    const double dw = std::abs((*best)[0] - t);
    const double dl = std::abs((*best)[1] + t);

    // Rows index r_l, columns r_w: cells on one diagonal share r_w - r_l.
    double diag_spread = 0.0;
    for (int k = -(n - 1); k <= n - 1; ++k) {
        double first = NAN;
        for (int row = 0; row < n; ++row) {
            const int col = row + k;
            if (col < 0 || col >= n) {
                continue;
            }
            const double v = con[static_cast<std::size_t>(row) * n + col][2];
            if (std::isnan(first)) {
                first = v;
            }
            diag_spread = std::max(diag_spread, std::abs(v - first) / std::max(1.0, std::abs(first)));
        }
    }
    // The contrastive minimum diagonal is the one nearest margin ln 9.
    int best_k = 0;
    double best_v = INFINITY;
    for (int k = -(n - 1); k <= n - 1; ++k) {
        const int row = k < 0 ? -k : 0;
        const double v = con[static_cast<std::size_t>(row) * n + row + k][2];
        if (v < best_v) {
            best_v = v;
            best_k = k;
        }
    }
    const double dk = std::abs(best_k * step - t);
    const bool ok = dw <= step && dl <= step && diag_spread <= 1e-12 && dk <= step;
    return {ok, "separable argmin (" + fmt((*best)[0]) + ", " + fmt((*best)[1]) + ") vs (+-ln 9) within step " +
                    fmt(step) + "; contrastive diagonal spread " + fmt(diag_spread) +
                    " <= 1e-12; best margin " + fmt(best_k * step)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    std::string work = (fs::temp_directory_path() / "dph_acceptance").string();
    app.add_option("--work", work, "Scratch directory for pipeline outputs")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    std::vector<Criterion> cs = {
        {1, "gradient exactness", 1, {}},
        {2, "separable descent reaches optimal rewards", 5, {}},
        {3, "contrastive descent reaches optimal margin", 5, {}},
        {4, "convexity", 1, {}},
        {5, "cDPO identities", 1, {}},
        {6, "head parameter counts", 1, {}},
        {7, "backbone gradcheck", 120, {}},
        {8, "prior regularization properties and containment", 1800, {}},
        {9, "end-to-end SFT + alignment", 2700, {}},
        {10, "best-of-8 reranking >= greedy", 600, {}},
        {11, "landscape CLI structure", 10, {}},
        {12, "reproducibility", 0, {}},
    };
    auto timed = [&](int id, const std::function<Outcome()>& fn) {
        auto& c = cs[id - 1];
        const auto t0 = Clock::now();
        try {
            c.outcome = fn();
        } catch (const std::exception& e) {
            c.outcome = {false, std::string("error: ") + e.what()};
        }
        c.seconds = since(t0);
    };

    timed(1, gradient_exactness);
    timed(2, [] { return descent(objectives::DphObjective::separable); });
    timed(3, [] { return descent(objectives::DphObjective::contrastive); });
    timed(4, convexity);
    timed(5, cdpo_identities);
    timed(6, param_counts);
    log("backbone gradcheck");
    timed(7, backbone_gradcheck);

    const Layout run_a{fs::path(work) / "run_a"};
    const Layout run_b{fs::path(work) / "run_b"};
    const Layout misc{fs::path(work) / "misc"};
    timed(11, [&] { return landscape_structure(misc); });

    PipelineTimes times_a;
    PipelineTimes times_b;
    bool pipeline_ok = true;
    std::string pipeline_error;
    try {
        times_a = run_pipeline(run_a);
    } catch (const std::exception& e) {
        pipeline_ok = false;
        pipeline_error = e.what();
    }

    cs[8].seconds = times_a.train_s;
    cs[9].seconds = times_a.rerank_s;
    if (!pipeline_ok) {
        cs[8].outcome = {false, "error: " + pipeline_error};
        cs[9].outcome = {false, "error: " + pipeline_error};
    } else {
        try {
            const double reward_acc = held_out_reward_accuracy(run_a);
            const auto dph = json::parse(slurp(run_a.at("eval_dph.json")));
            const auto lp = json::parse(slurp(run_a.at("eval_logprob.json")));
            const double acc_dph = dph.at("accuracy").get<double>();
            const double acc_lp = lp.at("accuracy").get<double>();
            const double chance = 1.0 / 4.0;
            const bool ok = reward_acc >= 0.9 && acc_dph >= acc_lp - 0.02 && acc_dph >= chance + 0.25;
            cs[8].outcome = {ok, "held-out reward accuracy " + fmt(reward_acc) + " >= 0.9; DPH pick " + fmt(acc_dph) +
                                     " >= log-prob pick " + fmt(acc_lp) + " - 0.02 and >= chance + 0.25 = " +
                                     fmt(chance + 0.25)};
            const auto w = reward_acc_windows(run_a.at("align.csv"));
            std::string trend;
            bool monotone = true;
            for (std::size_t i = 0; i < w.size(); ++i) {
                trend += (i ? " " : "") + fmt(w[i]);
                monotone = monotone && (i == 0 || w[i] >= w[i - 1]);
            }
            std::cerr << "  INFO training reward accuracy by 500-step window: " << trend
                      << (monotone ? " (non-decreasing)" : " (NOT non-decreasing)") << "\n";

            const auto bo8 = json::parse(slurp(run_a.at("best_of_8.json")));
            const auto greedy = json::parse(slurp(run_a.at("greedy.json")));
            const double a8 = bo8.at("accuracy").get<double>();
            const double ag = greedy.at("accuracy").get<double>();
            cs[9].outcome = {a8 >= ag, "best-of-8 (T=" + fmt(kRerankTemperature) + ") accuracy " + fmt(a8) +
                                           " >= greedy accuracy " + fmt(ag) + " on " +
                                           std::to_string(kHeldOutRecords) + " held-out prompts"};
        } catch (const std::exception& e) {
            cs[8].outcome = {false, std::string("error: ") + e.what()};
            cs[9].outcome = {false, std::string("error: ") + e.what()};
        }
    }

    timed(8, [&]() -> Outcome {
        if (!pipeline_ok) {
            return {false, "needs the SFT checkpoint of criterion 9"};
        }
        const auto sft = checkpoint::to_model(checkpoint::load(run_a.at("sft.ckpt")));
        const auto corpus = data::load_corpus(run_a.at("train.jsonl"));
        bool ok = true;
        std::string detail = prior_unit_properties(sft, corpus, ok);

        const std::string cfg = misc.at("containment.json");
        std::ofstream(cfg) << R"({"optimizer": {"prior_coeff": 1000, "prior_scope": "backbone"}})";
        must("align --config " + cfg + " --corpus " + run_a.at("train.jsonl") + " --seed " + std::to_string(kSeed) +
             " --in-ckpt " + run_a.at("sft.ckpt") + " --out-ckpt " + misc.at("containment.ckpt") + " --metrics " +
             misc.at("containment.csv"));
        const auto aligned = checkpoint::to_model(checkpoint::load(misc.at("containment.ckpt")));
        const double dev = max_abs_deviation(aligned.params, sft.params, optim::PriorScope::backbone);
        double head_max = 0.0;
        for (const float v : aligned.params.at("head.w_dph").values) {
            head_max = std::max(head_max, static_cast<double>(std::abs(v)));
        }
        const auto rows = read_csv(misc.at("containment.csv"));
        const double final_acc = rows.empty() ? 0.0 : rows.back()[5];
        ok = ok && dev <= 1e-3 && head_max > 0.0;
        return {ok, detail + "; beta_reg=1000 backbone max |theta - theta_ref| " + fmt(dev) +
                        " <= 0.001; head still learns (max |w_dph| " + fmt(head_max) + ", final train reward acc " +
                        fmt(final_acc) + ")"};
    });

    {
        auto& c = cs[11];
        const auto t0 = Clock::now();
        try {
            if (!pipeline_ok) {
                throw std::runtime_error("the first pipeline run failed");
            }
            run_pipeline(run_b);
            const char* files[] = {"sft.ckpt",      "sft.csv",          "align.ckpt",     "align.csv",
                                   "eval_dph.json", "eval_logprob.json", "best_of_8.json", "greedy.json"};
            std::string diff;
            for (const char* f : files) {
                if (slurp(run_a.at(f)) != slurp(run_b.at(f))) {
                    diff += std::string(diff.empty() ? "" : ", ") + f;
                }
            }
            c.outcome = {diff.empty(), diff.empty() ? "checkpoints, metrics and reports of two seeded runs are "
                                                      "bit-identical (8 files)"
                                                    : "differing files: " + diff};
        } catch (const std::exception& e) {
            c.outcome = {false, std::string("error: ") + e.what()};
        }
        c.seconds = since(t0);
    }

    int failed = 0;
    for (auto& c : cs) {
        if (c.limit_s > 0 && c.seconds > c.limit_s) {
            c.outcome.pass = false;
            c.outcome.detail += "; over time budget";
        }
        failed += c.outcome.pass ? 0 : 1;
        std::cout << (c.outcome.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << c.outcome.detail
                  << " (" << fmt(c.seconds) << " s" << (c.limit_s > 0 ? " < " + fmt(c.limit_s) + " s" : "") << ")\n";
    }
    std::cout << (cs.size() - failed) << "/" << cs.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
