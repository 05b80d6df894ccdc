#pragma once

// ChatML templating, the symbol-level tokenizer, synthetic multiple-choice
// tasks, preference-pair synthesis and SFT batch construction.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dph/rng.hpp"

namespace dph::data {

using Mask = std::vector<std::uint8_t>;

inline constexpr std::string_view kImStart = "<|im_start|>";
inline constexpr std::string_view kImEnd = "<|im_end|>";
inline constexpr std::string_view kPad = "<|pad|>";

inline constexpr int kPadId = 0;
inline constexpr int kImStartId = 1;
inline constexpr int kImEndId = 2;

enum class Role { system, user, assistant };

Role parse_role(std::string_view name);
std::string_view to_string(Role role);

struct ChatMessage {
    Role role;
    std::string content;
};

/// "<|im_start|>{role}\n{content}<|im_end|>" per message, joined by "\n",
/// nothing after the final <|im_end|>.
std::string render_chatml(std::span<const ChatMessage> messages);

/// Greedy longest-match tokenizer over a fixed symbol inventory. Ids are
/// positions in the inventory; ids 0..2 are reserved for pad, <|im_start|>
/// and <|im_end|>.
class Tokenizer {
public:
    explicit Tokenizer(std::vector<std::string> symbols);

    /// Inventory covering every synthetic task: specials, role names, "\n",
    /// " ", digits, lowercase letters, " 0".." 9", " a".." h" and task words.
    static Tokenizer synthetic();

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

    int pad() const noexcept { return kPadId; }
    int im_start() const noexcept { return kImStartId; }
    int im_end() const noexcept { return kImEndId; }
    int size() const noexcept { return static_cast<int>(symbols_.size()); }
    const std::vector<std::string>& symbols() const noexcept { return symbols_; }

    /// {"reserved": {"im_end": 2, "im_start": 1, "pad": 0}, "vocab": {symbol: id, ...}}
    std::string to_json() const;
    static Tokenizer from_json(std::string_view text);

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int> ids_;
    std::size_t max_symbol_len_ = 0;
};

struct MultipleChoiceRecord {
    std::string prompt;
    std::vector<std::string> choices;
    int gold = 0;

    void validate() const;
    friend bool operator==(const MultipleChoiceRecord&, const MultipleChoiceRecord&) = default;
};

/// System prompt wrapped around each record; the record prompt is the user turn.
struct PromptTemplate {
    std::string system = "answer";
};

/// Token ids of a full example and the trainable positions.
struct EncodedSequence {
    std::vector<int> ids;
    Mask mask;  // true on assistant content and the final <|im_end|>
};

/// Rendered system + user turns followed by "\n<|im_start|>assistant\n".
std::vector<int> encode_prompt(std::string_view user_prompt, const PromptTemplate& tmpl, const Tokenizer& tok);

/// encode_prompt(...) + encode(answer + "<|im_end|>"), with the loss mask.
EncodedSequence encode_example(std::string_view user_prompt, std::string_view answer, const PromptTemplate& tmpl,
                               const Tokenizer& tok);

struct PreferencePair {
    std::vector<int> prompt_ids;
    std::vector<int> chosen_ids;    // prompt_ids + chosen completion
    std::vector<int> rejected_ids;  // prompt_ids + rejected completion
    Mask chosen_mask;
    Mask rejected_mask;
    int rejected_choice = 0;
};

/// Chosen is the gold answer; rejected is drawn uniformly from the other choices.
PreferencePair synthesize_pair(const MultipleChoiceRecord& record, const PromptTemplate& tmpl, const Tokenizer& tok,
                               Rng& rng);

enum class Task { max_digit, copy_last, majority_symbol };

Task parse_task(std::string_view name);
std::string_view to_string(Task task);

struct TaskConfig {
    Task task = Task::max_digit;
    int count = 1000;
    int choices = 4;
    int length = 5;  // items listed in each prompt

    void validate() const;
};

/// Deterministic per (config, seed); record i only depends on (seed, i).
std::vector<MultipleChoiceRecord> gen_synthetic_corpus(const TaskConfig& config, std::uint64_t seed);

/// Rule answer for a prompt produced by gen_synthetic_corpus ("max 3 9 4" -> "9").
std::string rule_answer(std::string_view prompt);

/// One JSON object per line: {"choices":[...],"gold":i,"prompt":"..."}.
void write_corpus(std::ostream& out, std::span<const MultipleChoiceRecord> records);
std::vector<MultipleChoiceRecord> read_corpus(std::istream& in);
void save_corpus(const std::string& path, std::span<const MultipleChoiceRecord> records);
std::vector<MultipleChoiceRecord> load_corpus(const std::string& path);

/// Right-padded id/mask matrices, one row per record (gold answer as the
/// assistant turn).
struct SftBatch {
    int rows = 0;
    int width = 0;
    std::vector<int> ids;
    Mask mask;
    std::vector<int> lengths;

    std::span<const int> row_ids(int r) const {
        return std::span<const int>(ids).subspan(static_cast<std::size_t>(r) * width, lengths[r]);
    }
    std::span<const std::uint8_t> row_mask(int r) const {
        return std::span<const std::uint8_t>(mask).subspan(static_cast<std::size_t>(r) * width, lengths[r]);
    }
};

/// Throws InvalidArgument naming the record index if a record is longer than pad_to.
SftBatch build_sft_batch(std::span<const MultipleChoiceRecord> records, const PromptTemplate& tmpl,
                         const Tokenizer& tok, int pad_to);

}  // namespace dph::data
