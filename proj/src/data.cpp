#include "dph/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dph/error.hpp"

namespace dph::data {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kSpecials = {kPad, kImStart, kImEnd};

const std::vector<std::string>& digit_pool() {
    static const std::vector<std::string> pool = {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
    return pool;
}

const std::vector<std::string>& symbol_pool() {
    static const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
    return pool;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') {
            ++i;
        }
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ') {
            ++j;
        }
        if (j > i) {
            out.emplace_back(text.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

// Most frequent item; empty if the maximum count is shared.
std::string unique_mode(std::span<const std::string> items) {
    std::map<std::string, int> counts;
    for (const auto& s : items) {
        ++counts[s];
    }
    std::string best;
    int best_count = 0;
    bool tie = false;
    for (const auto& [s, c] : counts) {
        if (c > best_count) {
            best = s;
            best_count = c;
            tie = false;
        } else if (c == best_count) {
            tie = true;
        }
    }
    return tie ? std::string() : best;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

std::string task_word(Task task) {
    switch (task) {
        case Task::max_digit:
            return "max";
        case Task::copy_last:
            return "last";
        case Task::majority_symbol:
            return "majority";
    }
    return "max";
}

MultipleChoiceRecord make_record(const TaskConfig& config, Rng& rng) {
    const auto& pool = config.task == Task::max_digit ? digit_pool() : symbol_pool();
    std::vector<std::string> items(static_cast<std::size_t>(config.length));
    std::string gold;
    for (;;) {
        for (auto& it : items) {
            it = pool[rng.below(pool.size())];
        }
        if (config.task == Task::max_digit) {
            gold = *std::max_element(items.begin(), items.end());
        } else if (config.task == Task::copy_last) {
            gold = items.back();
        } else {
            gold = unique_mode(items);
        }
        if (!gold.empty()) {
            break;
        }
    }

    // Distractors: wrong answers that occur in the prompt first, then the rest of the pool.
    std::vector<std::string> seen;
    std::vector<std::string> unseen;
    for (const auto& candidate : pool) {
        if (candidate == gold) {
            continue;
        }
        const bool in_prompt = std::find(items.begin(), items.end(), candidate) != items.end();
        (in_prompt ? seen : unseen).push_back(candidate);
    }
    shuffle(seen, rng);
    shuffle(unseen, rng);
    seen.insert(seen.end(), unseen.begin(), unseen.end());

    MultipleChoiceRecord rec;
    rec.choices.push_back(gold);
    rec.choices.insert(rec.choices.end(), seen.begin(), seen.begin() + (config.choices - 1));
    shuffle(rec.choices, rng);
    rec.gold = static_cast<int>(std::find(rec.choices.begin(), rec.choices.end(), gold) - rec.choices.begin());

    rec.prompt = task_word(config.task);
    for (const auto& it : items) {
        rec.prompt += " " + it;
    }
    return rec;
}

void check_content(const std::string& content) {
    for (const auto special : kSpecials) {
        if (content.find(special) != std::string::npos) {
            throw InvalidArgument("message content contains the reserved literal " + std::string(special));
        }
    }
}

}  // namespace

Role parse_role(std::string_view name) {
    if (name == "system") {
        return Role::system;
    }
    if (name == "user") {
        return Role::user;
    }
    if (name == "assistant") {
        return Role::assistant;
    }
    throw InvalidArgument("invalid chat role '" + std::string(name) + "'");
}

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system:
            return "system";
        case Role::user:
            return "user";
        case Role::assistant:
            return "assistant";
    }
    throw InvalidArgument("invalid chat role");
}

std::string render_chatml(std::span<const ChatMessage> messages) {
    if (messages.empty()) {
        throw InvalidArgument("render_chatml needs at least one message");
    }
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        check_content(messages[i].content);
        if (i > 0) {
            out += '\n';
        }
        out += kImStart;
        out += to_string(messages[i].role);
        out += '\n';
        out += messages[i].content;
        out += kImEnd;
    }
    return out;
}

Tokenizer::Tokenizer(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.size() < kSpecials.size()) {
        throw InvalidArgument("tokenizer inventory lacks the reserved symbols");
    }
    for (std::size_t i = 0; i < kSpecials.size(); ++i) {
        if (symbols_[i] != kSpecials[i]) {
            throw InvalidArgument("tokenizer id " + std::to_string(i) + " must be " + std::string(kSpecials[i]));
        }
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i].empty()) {
            throw InvalidArgument("tokenizer symbols must be non-empty");
        }
        if (!ids_.emplace(symbols_[i], static_cast<int>(i)).second) {
            throw InvalidArgument("duplicate tokenizer symbol '" + symbols_[i] + "'");
        }
        max_symbol_len_ = std::max(max_symbol_len_, symbols_[i].size());
    }
}

Tokenizer Tokenizer::synthetic() {
    std::vector<std::string> s(kSpecials.begin(), kSpecials.end());
    for (const char* word : {"system", "user", "assistant", "\n", " ", "max", "last", "majority", "answer"}) {
        s.emplace_back(word);
    }
    for (char c = '0'; c <= '9'; ++c) {
        s.emplace_back(1, c);
    }
    for (char c = '0'; c <= '9'; ++c) {
        s.push_back(std::string(" ") + c);
    }
    for (char c = 'a'; c <= 'z'; ++c) {
        s.emplace_back(1, c);
    }
    for (char c = 'a'; c <= 'h'; ++c) {
        s.push_back(std::string(" ") + c);
    }
    return Tokenizer(std::move(s));
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    std::size_t pos = 0;
    std::string key;
    while (pos < text.size()) {
        int found = -1;
        std::size_t found_len = 0;
        for (std::size_t len = std::min(max_symbol_len_, text.size() - pos); len > 0; --len) {
            key.assign(text.substr(pos, len));
            const auto it = ids_.find(key);
            if (it != ids_.end()) {
                found = it->second;
                found_len = len;
                break;
            }
        }
        if (found < 0) {
            throw InvalidArgument("out-of-vocabulary symbol at offset " + std::to_string(pos) + ": '" +
                                  std::string(text.substr(pos, 1)) + "'");
        }
        ids.push_back(found);
        pos += found_len;
    }
    return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (const int id : ids) {
        if (id < 0 || id >= size()) {
            throw InvalidArgument("token id " + std::to_string(id) + " out of range");
        }
        out += symbols_[static_cast<std::size_t>(id)];
    }
    return out;
}

std::string Tokenizer::to_json() const {
    json vocab = json::object();
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        vocab[symbols_[i]] = i;
    }
    json doc = {{"reserved", {{"pad", pad()}, {"im_start", im_start()}, {"im_end", im_end()}}}, {"vocab", vocab}};
    return doc.dump(2) + "\n";
}

Tokenizer Tokenizer::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed tokenizer JSON: ") + e.what());
    }
    if (!doc.contains("vocab") || !doc["vocab"].is_object() || !doc.contains("reserved")) {
        throw InvalidArgument("tokenizer JSON needs 'vocab' and 'reserved'");
    }
    const auto& vocab = doc["vocab"];
    std::vector<std::string> symbols(vocab.size());
    std::vector<bool> filled(vocab.size(), false);
    for (const auto& [symbol, id] : vocab.items()) {
        const auto i = id.get<std::size_t>();
        if (i >= symbols.size() || filled[i]) {
            throw InvalidArgument("tokenizer ids must be a permutation of 0..n-1");
        }
        symbols[i] = symbol;
        filled[i] = true;
    }
    Tokenizer tok(std::move(symbols));
    const auto& reserved = doc["reserved"];
    if (reserved.value("pad", -1) != tok.pad() || reserved.value("im_start", -1) != tok.im_start() ||
        reserved.value("im_end", -1) != tok.im_end()) {
        throw InvalidArgument("tokenizer reserved block disagrees with the vocabulary");
    }
    return tok;
}

void MultipleChoiceRecord::validate() const {
    if (choices.size() < 2) {
        throw InvalidArgument("a multiple-choice record needs at least 2 choices");
    }
    if (gold < 0 || gold >= static_cast<int>(choices.size())) {
        throw InvalidArgument("gold index out of range");
    }
}

std::vector<int> encode_prompt(std::string_view user_prompt, const PromptTemplate& tmpl, const Tokenizer& tok) {
    const std::array<ChatMessage, 2> turns = {ChatMessage{Role::system, tmpl.system},
                                              ChatMessage{Role::user, std::string(user_prompt)}};
    std::string text = render_chatml(turns);
    text += '\n';
    text += kImStart;
    text += to_string(Role::assistant);
    text += '\n';
    return tok.encode(text);
}

EncodedSequence encode_example(std::string_view user_prompt, std::string_view answer, const PromptTemplate& tmpl,
                               const Tokenizer& tok) {
    check_content(std::string(answer));
    EncodedSequence seq;
    seq.ids = encode_prompt(user_prompt, tmpl, tok);
    seq.mask.assign(seq.ids.size(), 0);
    auto completion = tok.encode(answer);
    completion.push_back(tok.im_end());
    seq.ids.insert(seq.ids.end(), completion.begin(), completion.end());
    seq.mask.resize(seq.ids.size(), 1);
    return seq;
}

PreferencePair synthesize_pair(const MultipleChoiceRecord& record, const PromptTemplate& tmpl, const Tokenizer& tok,
                               Rng& rng) {
    record.validate();
    const int k = static_cast<int>(record.choices.size());
    int rejected = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
    if (rejected >= record.gold) {
        ++rejected;
    }
    auto chosen = encode_example(record.prompt, record.choices[static_cast<std::size_t>(record.gold)], tmpl, tok);
    auto other = encode_example(record.prompt, record.choices[static_cast<std::size_t>(rejected)], tmpl, tok);
    PreferencePair pair;
    pair.prompt_ids = encode_prompt(record.prompt, tmpl, tok);
    pair.chosen_ids = std::move(chosen.ids);
    pair.chosen_mask = std::move(chosen.mask);
    pair.rejected_ids = std::move(other.ids);
    pair.rejected_mask = std::move(other.mask);
    pair.rejected_choice = rejected;
    return pair;
}

Task parse_task(std::string_view name) {
    if (name == "max-digit" || name == "max_digit") {
        return Task::max_digit;
    }
    if (name == "copy-last" || name == "copy_last") {
        return Task::copy_last;
    }
    if (name == "majority-symbol" || name == "majority_symbol") {
        return Task::majority_symbol;
    }
    throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

std::string_view to_string(Task task) {
    switch (task) {
        case Task::max_digit:
            return "max_digit";
        case Task::copy_last:
            return "copy_last";
        case Task::majority_symbol:
            return "majority_symbol";
    }
    return "max_digit";
}

void TaskConfig::validate() const {
    if (count < 0) {
        throw InvalidArgument("record count must be >= 0");
    }
    if (choices < 2) {
        throw InvalidArgument("preference pairs need at least 2 choices");
    }
    const int pool = task == Task::max_digit ? 10 : 8;
    if (choices > pool) {
        throw InvalidArgument("at most " + std::to_string(pool) + " choices for this task");
    }
    if (length < 1 || (task == Task::majority_symbol && length < 3)) {
        throw InvalidArgument("prompt length too short for the task");
    }
}

std::vector<MultipleChoiceRecord> gen_synthetic_corpus(const TaskConfig& config, std::uint64_t seed) {
    config.validate();
    std::vector<MultipleChoiceRecord> records(static_cast<std::size_t>(config.count));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < config.count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        records[static_cast<std::size_t>(i)] = make_record(config, rng);
    }
    return records;
}

std::string rule_answer(std::string_view prompt) {
    const auto words = split_words(prompt);
    if (words.size() < 2) {
        throw InvalidArgument("prompt has no items");
    }
    const std::span<const std::string> items(words.begin() + 1, words.end());
    if (words[0] == "max") {
        return *std::max_element(items.begin(), items.end());
    }
    if (words[0] == "last") {
        return items.back();
    }
    if (words[0] == "majority") {
        return unique_mode(items);
    }
    throw InvalidArgument("unknown task word '" + words[0] + "'");
}

void write_corpus(std::ostream& out, std::span<const MultipleChoiceRecord> records) {
    for (const auto& rec : records) {
        rec.validate();
        const json line = {{"prompt", rec.prompt}, {"choices", rec.choices}, {"gold", rec.gold}};
        out << line.dump() << '\n';
    }
}

std::vector<MultipleChoiceRecord> read_corpus(std::istream& in) {
    std::vector<MultipleChoiceRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const json doc = json::parse(line);
            MultipleChoiceRecord rec;
            rec.prompt = doc.at("prompt").get<std::string>();
            rec.choices = doc.at("choices").get<std::vector<std::string>>();
            rec.gold = doc.at("gold").get<int>();
            rec.validate();
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw InvalidArgument("corpus line " + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

void save_corpus(const std::string& path, std::span<const MultipleChoiceRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    write_corpus(out, records);
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

std::vector<MultipleChoiceRecord> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open corpus '" + path + "'");
    }
    return read_corpus(in);
}

SftBatch build_sft_batch(std::span<const MultipleChoiceRecord> records, const PromptTemplate& tmpl,
                         const Tokenizer& tok, int pad_to) {
    if (pad_to < 2) {
        throw InvalidArgument("pad_to must be at least 2");
    }
    SftBatch batch;
    batch.rows = static_cast<int>(records.size());
    batch.width = pad_to;
    batch.ids.assign(records.size() * static_cast<std::size_t>(pad_to), tok.pad());
    batch.mask.assign(batch.ids.size(), 0);
    batch.lengths.resize(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        records[r].validate();
        const auto seq = encode_example(records[r].prompt, records[r].choices[static_cast<std::size_t>(records[r].gold)],
                                        tmpl, tok);
        if (seq.ids.size() > static_cast<std::size_t>(pad_to)) {
            throw InvalidArgument("record " + std::to_string(r) + " has " + std::to_string(seq.ids.size()) +
                                  " tokens, more than pad_to = " + std::to_string(pad_to));
        }
        std::copy(seq.ids.begin(), seq.ids.end(), batch.ids.begin() + static_cast<std::ptrdiff_t>(r * pad_to));
        std::copy(seq.mask.begin(), seq.mask.end(), batch.mask.begin() + static_cast<std::ptrdiff_t>(r * pad_to));
        batch.lengths[r] = static_cast<int>(seq.ids.size());
    }
    return batch;
}

}  // namespace dph::data
