#include "mmcs/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mmcs/rng.hpp"

namespace mmcs {

namespace {

std::string nword(const char* stem, int i) { return stem + std::to_string(i); }

// Content words that must exist regardless of vocab_size.
int content_word_count(int n_intents) {
    // mark<i>, cue<t>, sym<t><a> (2 per topic), verb/link/tail<i>,
    // attr0/1, grade0/1, glue: patient, doctor, then
    return n_intents /*mark*/ + n_intents /*cue*/ + 2 * n_intents /*sym*/ +
           3 * n_intents /*verb,link,tail*/ + 2 /*attr*/ + 2 /*grade*/ + 3 /*glue*/;
}

} // namespace

void SynthSpec::validate() const {
    if (n_sessions < 1) throw ConfigError("synth: n_sessions must be >= 1");
    if (n_intents != 7) throw ConfigError("synth: n_intents is fixed at 7");
    if (d_audio < 3) throw ConfigError("synth: d_audio must be >= 3 to carry the sign pattern");
    if (d_visual < 1) throw ConfigError("synth: d_visual must be >= 1");
    if (signal_strength < 0.0 || signal_strength > 1.0)
        throw ConfigError("synth: signal_strength must lie in [0,1]");
    const int needed = 4 + content_word_count(n_intents) + 1;
    if (vocab_size < needed)
        throw ConfigError("synth: vocab_size must be at least " + std::to_string(needed) +
                          " to hold the content words plus one filler");
}

std::vector<std::string> planted_mcs_words(int intent, int topic, int audio_bit,
                                           int video_bit, int age_parity) {
    const std::string sym = "sym" + std::to_string(topic) + std::to_string(audio_bit);
    return {"patient",            nword("verb", intent), sym,
            nword("link", intent), nword("attr", video_bit), nword("grade", age_parity),
            nword("tail", intent), sym};
}

std::vector<std::string> planted_doctor_words(int intent, int topic, int audio_bit,
                                              int video_bit, int age_parity) {
    const std::string sym = "sym" + std::to_string(topic) + std::to_string(audio_bit);
    return {"doctor", nword("tail", intent), sym, "then",
            nword("attr", video_bit), nword("grade", age_parity)};
}

std::vector<SessionRecord> generate_corpus(const SynthSpec& spec) {
    spec.validate();
    Lcg64 rng(spec.seed);

    const int n_fillers = spec.vocab_size - 4 - content_word_count(spec.n_intents);

    std::vector<SessionRecord> out;
    out.reserve(static_cast<size_t>(spec.n_sessions));
    for (int s = 0; s < spec.n_sessions; ++s) {
        SessionRecord r;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "s%05d", s);
        r.id = idbuf;

        const int intent = static_cast<int>(rng.below(7));
        const int topic = static_cast<int>(rng.below(7));
        const int audio_bit = static_cast<int>(rng.below(2));
        const int video_bit = static_cast<int>(rng.below(2));
        const int gender = static_cast<int>(rng.below(3));
        const int age = static_cast<int>(rng.below(6));
        const bool keep_signal = rng.coin(spec.signal_strength);

        r.intent = intent;
        r.gender = gender == 0 ? Gender::Male : gender == 1 ? Gender::Female : Gender::Other;
        r.age_group = age;

        // Transcript: filler stream carrying the marker pair and the topic cue.
        const int n_words = 12 + static_cast<int>(rng.below(6));
        std::vector<std::string> words(static_cast<size_t>(n_words));
        for (auto& w : words) w = nword("fill", static_cast<int>(rng.below(n_fillers)));
        int pos[3];
        pos[0] = static_cast<int>(rng.below(n_words));
        do { pos[1] = static_cast<int>(rng.below(n_words)); } while (pos[1] == pos[0]);
        do { pos[2] = static_cast<int>(rng.below(n_words)); } while (pos[2] == pos[0] || pos[2] == pos[1]);
        words[pos[0]] = nword("mark", intent);
        words[pos[1]] = nword("mark", (intent + 1) % 7);
        words[pos[2]] = nword("cue", topic);
        std::string transcript;
        for (size_t i = 0; i < words.size(); ++i) {
            if (i) transcript += ' ';
            transcript += words[i];
        }
        r.transcript = transcript;

        // Audio: redundant sign pattern on the first three coordinates.
        r.audio.resize(static_cast<size_t>(spec.d_audio));
        for (int j = 0; j < 3; ++j) {
            const double mag = rng.uniform(0.5, 1.5);
            r.audio[static_cast<size_t>(j)] = audio_bit ? mag : -mag;
        }
        for (int j = 3; j < spec.d_audio; ++j)
            r.audio[static_cast<size_t>(j)] = rng.uniform(-1.0, 1.0);

        // Video: sign of coordinate 0.
        r.video.resize(static_cast<size_t>(spec.d_visual));
        {
            const double mag = rng.uniform(0.5, 1.5);
            r.video[0] = video_bit ? mag : -mag;
        }
        for (int j = 1; j < spec.d_visual; ++j)
            r.video[static_cast<size_t>(j)] = rng.uniform(-1.0, 1.0);

        const int a = keep_signal ? audio_bit : 0;
        const int v = keep_signal ? video_bit : 0;
        const int g = keep_signal ? age % 2 : 0;

        auto join = [](const std::vector<std::string>& ws) {
            std::string s;
            for (size_t i = 0; i < ws.size(); ++i) {
                if (i) s += ' ';
                s += ws[i];
            }
            return s;
        };
        r.mcs = join(planted_mcs_words(intent, topic, a, v, g));
        r.doctor_summary = join(planted_doctor_words(intent, topic, a, v, g));

        out.push_back(std::move(r));
    }
    return out;
}

SplitIndices split_corpus(int n_sessions, const std::array<double, 3>& ratios,
                          uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split: ratios must sum to 1, got " + std::to_string(sum));
    if (n_sessions < 1) throw ConfigError("split: need at least one session");

    std::vector<int> order(static_cast<size_t>(n_sessions));
    for (int i = 0; i < n_sessions; ++i) order[static_cast<size_t>(i)] = i;
    Lcg64 rng(seed);
    for (int i = n_sessions - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    const int n_train = static_cast<int>(std::floor(ratios[0] * n_sessions));
    const int n_val = static_cast<int>(std::floor(ratios[1] * n_sessions));

    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    s.degenerate = s.train.empty() || s.val.empty() || s.test.empty();
    return s;
}

} // namespace mmcs
