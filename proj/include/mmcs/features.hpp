#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmcs/tensor.hpp"

namespace mmcs {

enum class Gender { Male, Female, Other };

Gender parse_gender(const std::string& s);
std::string gender_to_string(Gender g);

// Token inventory with fixed reserved ids.
struct VocabSpec {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    std::vector<std::string> id_to_token; // includes the four reserved slots
    std::unordered_map<std::string, int> token_to_id;

    // Builds from a token set; tokens are sorted so the mapping depends only
    // on the set, not on encounter order.
    static VocabSpec from_tokens(std::vector<std::string> tokens);

    int id(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnk : it->second;
    }
    int size() const { return static_cast<int>(id_to_token.size()); }
};

// Lowercases, splits on Unicode whitespace, strips leading/trailing ASCII
// punctuation, drops empties.
std::vector<std::string> split_words(const std::string& text);

// Words to ids with UNK fallback, truncated to max_len-2, wrapped in BOS/EOS.
std::vector<int> tokenize(const std::string& text, const VocabSpec& vocab, int max_len);

// Joins non-reserved tokens with single spaces (UNK renders as "<unk>").
std::string detokenize(const std::vector<int>& ids, const VocabSpec& vocab);

Tensor average_frame_embeddings(const std::vector<Tensor>& frames);

// 1x8 row: [male, female, age0..age5]; "other" leaves both gender bits zero.
Tensor encode_personal_context(Gender gender, int age_group);

// One line of the session JSONL file, unchanged apart from frame averaging.
struct SessionRecord {
    std::string id;
    std::string transcript;
    std::vector<double> audio;
    std::vector<double> video;
    Gender gender = Gender::Other;
    int age_group = 0;
    int intent = 0;
    std::string mcs;
    std::optional<std::string> doctor_summary;

    bool operator==(const SessionRecord&) const = default;
};

// One session ready for the model.
struct ModalityBundle {
    std::string session_id;
    std::vector<int> src_ids;
    Tensor audio_vec;    // 1 x d_audio
    Tensor video_vec;    // 1 x d_visual
    Tensor personal_vec; // 1 x 8
    int intent = 0;
    std::vector<int> tgt_ids;
    std::optional<std::vector<int>> doctor_tgt_ids;
    Gender gender = Gender::Other;
    int age_group = 0;
};

// Parses and validates the JSONL schema; malformed or mismatched lines raise
// errors naming the line number. Expected dims <= 0 skip the length check.
std::vector<SessionRecord> load_session_records(const std::string& path,
                                                int expect_d_audio = -1,
                                                int expect_d_visual = -1);

void write_session_records(const std::string& path,
                           const std::vector<SessionRecord>& records);

// Sorted-unique tokens of transcripts, summaries and doctor summaries.
VocabSpec build_vocab(const std::vector<SessionRecord>& records);

std::vector<ModalityBundle> make_bundles(const std::vector<SessionRecord>& records,
                                         const VocabSpec& vocab, int max_src_len,
                                         int max_tgt_len, int n_intents);

} // namespace mmcs
