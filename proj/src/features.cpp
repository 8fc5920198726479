#include "mmcs/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace mmcs {

using nlohmann::json;

Gender parse_gender(const std::string& s) {
    if (s == "male") return Gender::Male;
    if (s == "female") return Gender::Female;
    if (s == "other") return Gender::Other;
    throw InputError("unknown gender value: \"" + s + "\"");
}

std::string gender_to_string(Gender g) {
    switch (g) {
    case Gender::Male: return "male";
    case Gender::Female: return "female";
    default: return "other";
    }
}

VocabSpec VocabSpec::from_tokens(std::vector<std::string> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    VocabSpec v;
    v.id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (auto& t : tokens) {
        if (t.empty()) continue;
        v.token_to_id[t] = static_cast<int>(v.id_to_token.size());
        v.id_to_token.push_back(t);
    }
    return v;
}

namespace {

bool is_space_codepoint(uint32_t cp) {
    switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

// Decodes one UTF-8 codepoint at i; invalid bytes come back as themselves.
uint32_t next_codepoint(const std::string& s, size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int extra = 0;
    uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) { extra = 1; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { extra = 2; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { extra = 3; cp = b0 & 0x07; }
    else { ++i; return b0; }
    if (i + static_cast<size_t>(extra) >= s.size()) {
        // truncated sequence
        ++i;
        return b0;
    }
    for (int k = 1; k <= extra; ++k) {
        const auto bk = static_cast<unsigned char>(s[i + k]);
        if ((bk & 0xC0) != 0x80) { ++i; return b0; }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += static_cast<size_t>(extra) + 1;
    return cp;
}

std::string strip_ascii_punct(const std::string& w) {
    size_t b = 0, e = w.size();
    while (b < e) {
        const auto c = static_cast<unsigned char>(w[b]);
        if (c < 0x80 && std::ispunct(c)) ++b; else break;
    }
    while (e > b) {
        const auto c = static_cast<unsigned char>(w[e - 1]);
        if (c < 0x80 && std::ispunct(c)) --e; else break;
    }
    return w.substr(b, e - b);
}

} // namespace

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    size_t i = 0;
    while (i < text.size()) {
        const size_t start = i;
        const uint32_t cp = next_codepoint(text, i);
        if (is_space_codepoint(cp)) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            for (size_t k = start; k < i; ++k) {
                char c = text[k];
                if (static_cast<unsigned char>(c) < 0x80)
                    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                cur.push_back(c);
            }
        }
    }
    if (!cur.empty()) words.push_back(cur);

    std::vector<std::string> out;
    out.reserve(words.size());
    for (auto& w : words) {
        std::string s = strip_ascii_punct(w);
        if (!s.empty()) out.push_back(std::move(s));
    }
    return out;
}

std::vector<int> tokenize(const std::string& text, const VocabSpec& vocab, int max_len) {
    if (max_len < 2) throw InputError("tokenize: max_len must allow BOS and EOS");
    std::vector<std::string> words = split_words(text);
    std::vector<int> ids;
    ids.reserve(words.size() + 2);
    ids.push_back(VocabSpec::kBos);
    const size_t keep = std::min(words.size(), static_cast<size_t>(max_len - 2));
    for (size_t i = 0; i < keep; ++i) ids.push_back(vocab.id(words[i]));
    ids.push_back(VocabSpec::kEos);
    return ids;
}

std::string detokenize(const std::vector<int>& ids, const VocabSpec& vocab) {
    std::string out;
    for (int id : ids) {
        if (id == VocabSpec::kPad || id == VocabSpec::kBos || id == VocabSpec::kEos)
            continue;
        if (!out.empty()) out += ' ';
        if (id >= 0 && id < vocab.size())
            out += vocab.id_to_token[static_cast<size_t>(id)];
        else
            out += "<unk>";
    }
    return out;
}

Tensor average_frame_embeddings(const std::vector<Tensor>& frames) {
    if (frames.empty()) throw InputError("average_frame_embeddings: no frames");
    const int d = frames[0].cols();
    Tensor mean({1, d});
    for (const auto& f : frames) {
        if (f.rank() != 2 || f.rows() != 1 || f.cols() != d)
            throw DimError("frame shape " + f.shape_str() + " does not match [1x" +
                           std::to_string(d) + "]");
        for (int j = 0; j < d; ++j) mean[j] += f.at(0, j);
    }
    for (int j = 0; j < d; ++j) mean[j] /= static_cast<double>(frames.size());
    return mean;
}

Tensor encode_personal_context(Gender gender, int age_group) {
    if (age_group < 0 || age_group >= 6)
        throw InputError("age_group " + std::to_string(age_group) + " outside [0,6)");
    Tensor v({1, 8});
    if (gender == Gender::Male) v[0] = 1.0;
    if (gender == Gender::Female) v[1] = 1.0;
    v[2 + age_group] = 1.0;
    return v;
}

namespace {

std::vector<double> number_array(const json& j, const char* field, int line) {
    if (!j.is_array())
        throw InputError("line " + std::to_string(line) + ": field \"" + field +
                         "\" must be an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number())
            throw InputError("line " + std::to_string(line) + ": field \"" + field +
                             "\" must contain only numbers");
        const double v = x.get<double>();
        if (!std::isfinite(v))
            throw InputError("line " + std::to_string(line) + ": non-finite value in \"" +
                             std::string(field) + "\"");
        out.push_back(v);
    }
    return out;
}

const json& required(const json& obj, const char* field, int line) {
    auto it = obj.find(field);
    if (it == obj.end())
        throw InputError("line " + std::to_string(line) + ": missing required field \"" +
                         field + "\"");
    return *it;
}

} // namespace

std::vector<SessionRecord> load_session_records(const std::string& path,
                                                int expect_d_audio,
                                                int expect_d_visual) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open session file: " + path);

    std::vector<SessionRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!j.is_object())
            throw InputError("line " + std::to_string(line_no) + ": expected a JSON object");

        SessionRecord r;
        const json& jid = required(j, "id", line_no);
        if (!jid.is_string())
            throw InputError("line " + std::to_string(line_no) + ": \"id\" must be a string");
        r.id = jid.get<std::string>();

        const json& jt = required(j, "transcript", line_no);
        if (!jt.is_string())
            throw InputError("line " + std::to_string(line_no) + ": \"transcript\" must be a string");
        r.transcript = jt.get<std::string>();

        r.audio = number_array(required(j, "audio", line_no), "audio", line_no);
        if (expect_d_audio > 0 && static_cast<int>(r.audio.size()) != expect_d_audio)
            throw DimError("line " + std::to_string(line_no) + ": audio vector has length " +
                           std::to_string(r.audio.size()) + ", expected " +
                           std::to_string(expect_d_audio));

        if (j.contains("video_frames")) {
            const json& jf = j["video_frames"];
            if (!jf.is_array() || jf.empty())
                throw InputError("line " + std::to_string(line_no) +
                                 ": \"video_frames\" must be a non-empty array");
            std::vector<Tensor> frames;
            for (const auto& fr : jf) {
                auto v = number_array(fr, "video_frames", line_no);
                frames.push_back(Tensor::row(std::move(v)));
            }
            Tensor mean = average_frame_embeddings(frames);
            r.video.assign(mean.data(), mean.data() + mean.size());
        } else {
            r.video = number_array(required(j, "video", line_no), "video", line_no);
        }
        if (expect_d_visual > 0 && static_cast<int>(r.video.size()) != expect_d_visual)
            throw DimError("line " + std::to_string(line_no) + ": video vector has length " +
                           std::to_string(r.video.size()) + ", expected " +
                           std::to_string(expect_d_visual));

        const json& jg = required(j, "gender", line_no);
        if (!jg.is_string())
            throw InputError("line " + std::to_string(line_no) + ": \"gender\" must be a string");
        try {
            r.gender = parse_gender(jg.get<std::string>());
        } catch (const InputError& e) {
            throw InputError("line " + std::to_string(line_no) + ": " + e.what());
        }

        const json& ja = required(j, "age_group", line_no);
        if (!ja.is_number_integer())
            throw InputError("line " + std::to_string(line_no) + ": \"age_group\" must be an integer");
        r.age_group = ja.get<int>();
        if (r.age_group < 0 || r.age_group > 5)
            throw InputError("line " + std::to_string(line_no) + ": age_group " +
                             std::to_string(r.age_group) + " outside 0..5");

        const json& ji = required(j, "intent", line_no);
        if (!ji.is_number_integer())
            throw InputError("line " + std::to_string(line_no) + ": \"intent\" must be an integer");
        r.intent = ji.get<int>();
        if (r.intent < 0 || r.intent > 6)
            throw InputError("line " + std::to_string(line_no) + ": intent " +
                             std::to_string(r.intent) + " outside 0..6");

        const json& jm = required(j, "mcs", line_no);
        if (!jm.is_string())
            throw InputError("line " + std::to_string(line_no) + ": \"mcs\" must be a string");
        r.mcs = jm.get<std::string>();

        const json& jd = required(j, "doctor_summary", line_no);
        if (jd.is_string())
            r.doctor_summary = jd.get<std::string>();
        else if (!jd.is_null())
            throw InputError("line " + std::to_string(line_no) +
                             ": \"doctor_summary\" must be a string or null");

        records.push_back(std::move(r));
    }
    return records;
}

void write_session_records(const std::string& path,
                           const std::vector<SessionRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write session file: " + path);
    for (const auto& r : records) {
        json j;
        j["id"] = r.id;
        j["transcript"] = r.transcript;
        j["audio"] = r.audio;
        j["video"] = r.video;
        j["gender"] = gender_to_string(r.gender);
        j["age_group"] = r.age_group;
        j["intent"] = r.intent;
        j["mcs"] = r.mcs;
        if (r.doctor_summary)
            j["doctor_summary"] = *r.doctor_summary;
        else
            j["doctor_summary"] = nullptr;
        out << j.dump() << '\n';
    }
}

VocabSpec build_vocab(const std::vector<SessionRecord>& records) {
    std::set<std::string> tokens;
    for (const auto& r : records) {
        for (auto& w : split_words(r.transcript)) tokens.insert(w);
        for (auto& w : split_words(r.mcs)) tokens.insert(w);
        if (r.doctor_summary)
            for (auto& w : split_words(*r.doctor_summary)) tokens.insert(w);
    }
    return VocabSpec::from_tokens({tokens.begin(), tokens.end()});
}

std::vector<ModalityBundle> make_bundles(const std::vector<SessionRecord>& records,
                                         const VocabSpec& vocab, int max_src_len,
                                         int max_tgt_len, int n_intents) {
    std::vector<ModalityBundle> bundles;
    bundles.reserve(records.size());
    for (const auto& r : records) {
        if (r.intent >= n_intents)
            throw InputError("session " + r.id + ": intent " + std::to_string(r.intent) +
                             " outside [0," + std::to_string(n_intents) + ")");
        ModalityBundle b;
        b.session_id = r.id;
        b.src_ids = tokenize(r.transcript, vocab, max_src_len);
        b.audio_vec = Tensor::row(r.audio);
        b.video_vec = Tensor::row(r.video);
        b.personal_vec = encode_personal_context(r.gender, r.age_group);
        b.intent = r.intent;
        b.tgt_ids = tokenize(r.mcs, vocab, max_tgt_len);
        if (r.doctor_summary)
            b.doctor_tgt_ids = tokenize(*r.doctor_summary, vocab, max_tgt_len);
        b.gender = r.gender;
        b.age_group = r.age_group;
        bundles.push_back(std::move(b));
    }
    return bundles;
}

} // namespace mmcs
