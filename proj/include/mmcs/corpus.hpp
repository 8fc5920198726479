#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmcs/features.hpp"

namespace mmcs {

// Deterministic synthetic-session generator. Targets carry a planted signal:
// some summary words can only be recovered by combining transcript cues with
// the sign pattern of the audio vector, one coordinate of the video vector,
// and the patient's age-group parity, so a text-only model has a measurable
// ceiling while a working fusion path does not.

struct SynthSpec {
    int n_sessions = 100;
    int vocab_size = 80; // content words plus filler pool
    int n_intents = 7;
    int d_audio = 16;
    int d_visual = 16;
    uint64_t seed = 0;
    // Fraction of sessions whose slot words depend on the modality signals;
    // the rest are pure functions of the transcript.
    double signal_strength = 1.0;

    void validate() const;
};

// The slot words of a session are determined by:
//   intent      - drawn uniformly from n_intents, revealed by a transcript
//                 marker pair {mark<i>, mark<(i+1)%7>}
//   topic       - transcript cue word cue<t>
//   audio_bit   - sign of audio[0..2] (redundant coordinates)
//   video_bit   - sign of video[0]
//   age parity  - flips the qualifier word grade0/grade1
std::vector<std::string> planted_mcs_words(int intent, int topic, int audio_bit,
                                           int video_bit, int age_parity);
std::vector<std::string> planted_doctor_words(int intent, int topic, int audio_bit,
                                              int video_bit, int age_parity);

std::vector<SessionRecord> generate_corpus(const SynthSpec& spec);

struct SplitIndices {
    std::vector<int> train, val, test;
    bool degenerate = false; // some slice came out empty
};

// Seeded shuffle, then train takes floor(r0*n), val floor(r1*n), test the rest.
SplitIndices split_corpus(int n_sessions, const std::array<double, 3>& ratios,
                          uint64_t seed);

} // namespace mmcs
