#pragma once

// Piano-roll datasets: JSON ingestion, the chunk / front-padding protocol, and
// a synthetic corpus with a tunable dependency length.
//
// On-disk format:
//   {"train": [seq, ...], "valid": [...], "test": [...]}
//   seq   = [frame, ...]
//   frame = [note, ...]   sorted note indices in [0, 88) (MIDI pitch - 21)

#include "rnnlab/core.hpp"
#include "rnnlab/params.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace rnnlab {

using Frame = std::vector<int>;
using Sequence = std::vector<Frame>;

/// MIDI pitch of note index 0 (A0).
inline constexpr int kMidiOffset = 21;

struct PianoRollDataset {
    std::vector<Sequence> train;
    std::vector<Sequence> valid;
    std::vector<Sequence> test;
};

inline const char* const kSplitNames[] = {"train", "valid", "test"};

inline std::vector<Sequence>& split_of(PianoRollDataset& d, int i) { return i == 0 ? d.train : i == 1 ? d.valid : d.test; }
inline const std::vector<Sequence>& split_of(const PianoRollDataset& d, int i)
{
    return i == 0 ? d.train : i == 1 ? d.valid : d.test;
}

inline PianoRollDataset dataset_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object()) throw DataError("dataset: top level must be an object");
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (key != "train" && key != "valid" && key != "test")
            throw DataError("dataset: unknown top-level key '" + key + "'");
    }
    PianoRollDataset d;
    for (int s = 0; s < 3; ++s) {
        const std::string name = kSplitNames[s];
        if (!doc.contains(name)) continue;
        const auto& seqs = doc.at(name);
        if (!seqs.is_array()) throw DataError("dataset: split '" + name + "' must be a list");
        auto& out = split_of(d, s);
        out.reserve(seqs.size());
        for (std::size_t k = 0; k < seqs.size(); ++k) {
            const auto where = [&](std::size_t t) {
                return name + " sequence " + std::to_string(k) + " frame " + std::to_string(t);
            };
            const auto& seq = seqs[k];
            if (!seq.is_array()) throw DataError(name + " sequence " + std::to_string(k) + " is not a list");
            Sequence parsed;
            parsed.reserve(seq.size());
            for (std::size_t t = 0; t < seq.size(); ++t) {
                const auto& frame = seq[t];
                if (!frame.is_array()) throw DataError(where(t) + " is not a list");
                Frame f;
                f.reserve(frame.size());
                for (const auto& note : frame) {
                    if (!note.is_number_integer()) throw DataError(where(t) + " has a non-integer note");
                    const auto v = note.get<std::int64_t>();
                    if (v < 0 || v >= kNotes)
                        throw DataError(where(t) + " has note " + std::to_string(v) + " outside [0, 88)");
                    f.push_back(static_cast<int>(v));
                }
                std::sort(f.begin(), f.end());
                f.erase(std::unique(f.begin(), f.end()), f.end());
                parsed.push_back(std::move(f));
            }
            out.push_back(std::move(parsed));
        }
    }
    return d;
}

inline nlohmann::json dataset_to_json(const PianoRollDataset& d)
{
    nlohmann::json doc = nlohmann::json::object();
    for (int s = 0; s < 3; ++s) doc[kSplitNames[s]] = split_of(d, s);
    return doc;
}

inline PianoRollDataset load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("dataset '" + path + "' is not valid JSON: " + e.what());
    }
    return dataset_from_json(doc);
}

inline void save(const PianoRollDataset& d, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file '" + path + "'");
    out << dataset_to_json(d).dump() << '\n';
}

/// Sequence/frame/note counts per split, written next to run outputs.
inline nlohmann::json manifest(const PianoRollDataset& d)
{
    nlohmann::json m = nlohmann::json::object();
    int lowest = kNotes, highest = -1;
    for (int s = 0; s < 3; ++s) {
        std::size_t frames = 0, active = 0, longest = 0;
        for (const auto& seq : split_of(d, s)) {
            frames += seq.size();
            longest = std::max(longest, seq.size());
            for (const auto& f : seq) {
                active += f.size();
                if (!f.empty()) {
                    lowest = std::min(lowest, f.front());
                    highest = std::max(highest, f.back());
                }
            }
        }
        m[kSplitNames[s]] = {{"sequences", split_of(d, s).size()},
                             {"frames", frames},
                             {"active_notes", active},
                             {"longest_sequence", longest}};
    }
    m["note_range"] = highest < 0 ? nlohmann::json::array() : nlohmann::json::array({lowest, highest});
    m["midi_offset"] = kMidiOffset;
    return m;
}

/// [88 x T] binary matrix of one sequence, preceded by `pad` zero frames.
inline Matrix to_matrix(const Sequence& seq, std::size_t begin, std::size_t end, int pad = 0)
{
    Matrix m = Matrix::Zero(kNotes, static_cast<Eigen::Index>(end - begin) + pad);
    for (std::size_t t = begin; t < end; ++t)
        for (int note : seq[t]) m(note, static_cast<Eigen::Index>(t - begin) + pad) = 1.0;
    return m;
}

inline Matrix to_matrix(const Sequence& seq) { return to_matrix(seq, 0, seq.size()); }

struct ChunkedDataset {
    SequenceBatch train;
    SequenceBatch valid;
    SequenceBatch test;
};

/// Splits a sequence into consecutive windows of `len` frames; a short window
/// is zero-padded at the front to exactly `len` frames.
inline void append_chunks(const Sequence& seq, int len, SequenceBatch& out)
{
    for (std::size_t begin = 0; begin < seq.size(); begin += static_cast<std::size_t>(len)) {
        const std::size_t end = std::min(seq.size(), begin + static_cast<std::size_t>(len));
        const int pad = len - static_cast<int>(end - begin);
        out.push_back(to_matrix(seq, begin, end, pad), pad);
    }
}

/// Train and validation sequences are chunked; test sequences pass through whole.
inline ChunkedDataset chunk(const PianoRollDataset& d, int len = 100)
{
    require(len >= 1, "chunk length must be >= 1");
    ChunkedDataset out;
    for (const auto& seq : d.train) append_chunks(seq, len, out.train);
    for (const auto& seq : d.valid) append_chunks(seq, len, out.valid);
    for (const auto& seq : d.test)
        if (!seq.empty()) out.test.push_back(to_matrix(seq));
    return out;
}

/// Deterministic 60/20/20 split in input order.
inline PianoRollDataset split_60_20_20(std::vector<Sequence> sequences)
{
    const std::size_t n = sequences.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
    const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n))));
    PianoRollDataset d;
    d.train.assign(std::make_move_iterator(sequences.begin()), std::make_move_iterator(sequences.begin() + n_train));
    d.valid.assign(std::make_move_iterator(sequences.begin() + n_train),
                   std::make_move_iterator(sequences.begin() + n_train + n_valid));
    d.test.assign(std::make_move_iterator(sequences.begin() + n_train + n_valid),
                  std::make_move_iterator(sequences.end()));
    return d;
}

/// Synthetic corpus. Frames are a "chord" part over chord_notes plus
/// independent noise notes over noise_notes. The first motif_gap chords are
/// random; afterwards the chord at t repeats the chord at t - motif_gap.
struct SynthConfig {
    int chord_low = 20, chord_high = 68; ///< chord notes [low, high)
    double chord_density = 0.1;          ///< per-note probability in a random chord
    int noise_low = 68, noise_high = 76; ///< noise notes [low, high)
    double noise_rate = 0.05;            ///< per-note, per-frame probability

    void validate() const
    {
        require(0 <= chord_low && chord_low <= chord_high && chord_high <= kNotes, "bad chord note range");
        require(0 <= noise_low && noise_low <= noise_high && noise_high <= kNotes, "bad noise note range");
        require(chord_high <= noise_low || noise_high <= chord_low, "chord and noise ranges overlap");
        require(chord_density >= 0.0 && chord_density <= 1.0, "chord density must lie in [0, 1]");
        require(noise_rate >= 0.0 && noise_rate <= 1.0, "noise rate must lie in [0, 1]");
    }
};

inline PianoRollDataset synthesize(std::uint64_t seed, int n_sequences, int steps, int motif_gap,
                                   const SynthConfig& cfg = {})
{
    require(n_sequences >= 0 && steps >= 1, "synthesize: bad sizes");
    require(motif_gap >= 1 && motif_gap < steps, "synthesize: need 1 <= motif_gap < T");
    cfg.validate();
    Rng rng = make_rng(seed, 0);
    std::bernoulli_distribution chord_on(cfg.chord_density);
    std::bernoulli_distribution noise_on(cfg.noise_rate);
    std::vector<Sequence> sequences;
    sequences.reserve(n_sequences);
    for (int k = 0; k < n_sequences; ++k) {
        std::vector<Frame> chords(steps);
        Sequence seq(steps);
        for (int t = 0; t < steps; ++t) {
            if (t < motif_gap) {
                for (int n = cfg.chord_low; n < cfg.chord_high; ++n)
                    if (chord_on(rng)) chords[t].push_back(n);
            } else {
                chords[t] = chords[t - motif_gap];
            }
            Frame f = chords[t];
            for (int n = cfg.noise_low; n < cfg.noise_high; ++n)
                if (noise_on(rng)) f.push_back(n);
            std::sort(f.begin(), f.end());
            seq[t] = std::move(f);
        }
        sequences.push_back(std::move(seq));
    }
    return split_60_20_20(std::move(sequences));
}

/// Bernoulli entropy in nats.
inline double bernoulli_entropy(double p)
{
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

/// Expected per-frame CE of the generator-aware predictor on a synthetic
/// sequence of length T: random chords (the first motif_gap frames) cost the
/// chord entropy, repeated chords cost nothing, noise notes always cost the
/// noise entropy. Averaged over the T-1 predicted frames.
inline double synth_oracle_ce(const SynthConfig& cfg, int steps, int motif_gap)
{
    require(steps >= 2 && motif_gap >= 1 && motif_gap < steps, "synth_oracle_ce: bad sizes");
    const double chord = (cfg.chord_high - cfg.chord_low) * bernoulli_entropy(cfg.chord_density);
    const double noise = (cfg.noise_high - cfg.noise_low) * bernoulli_entropy(cfg.noise_rate);
    return (static_cast<double>(motif_gap - 1) * chord + static_cast<double>(steps - 1) * noise) /
           static_cast<double>(steps - 1);
}

} // namespace rnnlab
