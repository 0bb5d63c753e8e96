#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "blocklab/info.hpp"

namespace blocklab {

enum class Hand : std::uint8_t { RH = 0, LH = 1 };

/// Symbolic-music input record. Ticks: 480 per quarter note.
struct NoteEvent {
    std::int64_t onset = 0;     // >= 0
    std::int64_t duration = 0;  // > 0
    int pitch = 0;              // MIDI 21..108
    Hand hand = Hand::RH;

    bool operator==(const NoteEvent&) const = default;
};

using Piece = std::vector<NoteEvent>;

constexpr int kMinPitch = 21;
constexpr int kMaxPitch = 108;
constexpr std::int64_t kTicksPerQuarter = 480;

/// TIME_SHIFT alphabet: powers of two up to 256 plus the 480 bar tick. Any
/// positive gap decomposes greedily largest-first, so no gap is ever dropped.
const std::vector<std::int64_t>& time_shift_alphabet();
std::vector<std::int64_t> decompose_gap(std::int64_t gap);

/// Event-token vocabulary. Note tokens are <HAND_NOTE_{ON,OFF}_PITCH>;
/// factor maps are total: note tokens carry (pitch index, hand), every other
/// token maps to the no-pitch bucket and the Neutral hand.
class TokenVocab {
public:
    /// Full keyboard vocabulary: specials, 88 pitches x {RH, LH} x {ON, OFF},
    /// the TIME_SHIFT alphabet.
    static TokenVocab canonical();
    /// Vocabulary restricted to the (hand, pitch) combinations observed in
    /// the corpus; TIME_SHIFT alphabet and specials always included.
    static TokenVocab from_corpus(const std::vector<Piece>& corpus);
    /// Bare note-token vocabulary for factorization arithmetic; specials and
    /// time shifts included only when with_specials is set.
    static TokenVocab from_note_set(const std::vector<int>& pitches,
                                    const std::vector<Hand>& hands, bool with_specials);

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::int32_t id) const { return names_.at(id); }
    std::int32_t id(const std::string& name) const;

    std::int32_t pad() const { return pad_; }
    std::int32_t sos() const { return sos_; }
    std::int32_t eos() const { return eos_; }
    std::int32_t unk() const { return unk_; }

    /// -1 when the combination is not in the vocabulary.
    std::int32_t note_token(Hand hand, bool on, int pitch) const;
    std::int32_t time_shift_token(std::int64_t ticks) const;

    bool is_note(std::int32_t id) const;
    bool is_note_on(std::int32_t id) const;
    bool is_time_shift(std::int32_t id) const;
    /// Valid only for note tokens.
    Hand note_hand(std::int32_t id) const;
    int note_pitch(std::int32_t id) const;
    std::int64_t time_shift_ticks(std::int32_t id) const;

    /// Factor maps, total over the vocabulary. Pitch factors: one per
    /// distinct note pitch plus a trailing no-pitch bucket. Hand factors:
    /// RH = 0, LH = 1, Neutral = 2 (Neutral present only with specials).
    const std::vector<std::uint32_t>& pitch_map() const { return pitch_map_; }
    const std::vector<std::uint32_t>& hand_map() const { return hand_map_; }
    std::size_t pitch_card() const { return pitch_card_; }
    std::size_t hand_card() const { return hand_card_; }

    /// Distinct (hand, pitch) note combinations (the factorizable rows).
    std::size_t note_combo_count() const { return note_combos_; }
    std::size_t note_pitch_count() const { return note_pitches_; }
    bool has_specials() const { return has_specials_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::int32_t pad_ = -1, sos_ = -1, eos_ = -1, unk_ = -1;
    struct NoteInfo {
        Hand hand;
        bool on;
        int pitch;
    };
    std::vector<std::optional<NoteInfo>> note_info_;
    std::vector<std::int64_t> ts_ticks_;  // per id, 0 when not a time shift
    std::unordered_map<std::int64_t, std::int32_t> ts_ids_;
    std::vector<std::uint32_t> pitch_map_, hand_map_;
    std::size_t pitch_card_ = 0, hand_card_ = 0;
    std::size_t note_combos_ = 0, note_pitches_ = 0;
    bool has_specials_ = false;

    std::int32_t add(const std::string& name);
    void finalize_maps();
    friend TokenVocab build_vocab_impl(const std::vector<int>&, const std::vector<Hand>&,
                                       const std::vector<std::pair<Hand, int>>&, bool);
};

/// Rejects events violating the invariants (onset >= 0, duration > 0, pitch
/// 21..108) and same-(hand,pitch) overlaps; returns the piece stably sorted
/// by onset.
Piece validate_piece(Piece piece);

/// One JSONL line per piece: {"events":[{"onset":..,"dur":..,"pitch":..,
/// "hand":"RH"|"LH"}]}. Malformed lines and invariant violations raise with
/// the line number and field.
std::vector<Piece> ingest_events(std::istream& in);
std::vector<Piece> ingest_events_file(const std::string& path);

/// SOS, interleaved note and TIME_SHIFT tokens with exact tick gaps, EOS.
/// Same-tick ordering: OFF before ON, then piece order.
std::vector<std::int32_t> tokenize(const Piece& piece, const TokenVocab& vocab);

/// Exact inverse of tokenize on valid pieces.
Piece detokenize(const std::vector<std::int32_t>& tokens, const TokenVocab& vocab);

/// Plain text export: one token name per line.
void write_token_names(const std::vector<std::int32_t>& tokens, const TokenVocab& vocab,
                       std::ostream& out);
std::vector<std::int32_t> read_token_names(std::istream& in, const TokenVocab& vocab);

struct Chunk {
    std::vector<std::int32_t> tokens;  // fixed length, PAD fill at tail only
    double lh_ratio = 0.0;             // LH note-ons / all note-ons (0 if none)
    std::size_t piece = 0;
    std::size_t offset = 0;
};

struct ChunkBalanceReport {
    std::vector<Chunk> chunks;
    double prefix_mean_ratio = 0.0;  // mean over the first window of each piece
    double chunk_mean_ratio = 0.0;   // mean over all windows
    double global_ratio = 0.0;       // corpus-level LH note-on share
    std::size_t piece_count = 0;
};

/// Overlapping windows of chunk_len every stride tokens (0 < stride <=
/// chunk_len); the tail window is PAD-filled. chunk_len must be >= 2.
ChunkBalanceReport chunk_balance(const std::vector<std::vector<std::int32_t>>& piece_tokens,
                                 std::size_t chunk_len, std::size_t stride,
                                 const TokenVocab& vocab);

struct PitchHandNmi {
    double value = 0.0;
    JointHistogram joint;
};

/// Joint histogram over (pitch, hand) of all note-on tokens in the corpus.
PitchHandNmi pitch_hand_nmi(const std::vector<std::vector<std::int32_t>>& piece_tokens,
                            const TokenVocab& vocab);

struct TextureReport {
    double hand_balance = 0.0;
    double contour_score = 0.0;
    double rhythm_overlap = 0.0;
    bool contour_defined = false;
    bool rhythm_defined = false;
};

/// hand_balance: min/max of per-hand note counts. contour_score: share of
/// quarter-note window transitions where both hands' melodic directions
/// (sign of the change of the highest sounding pitch) agree. rhythm_overlap:
/// Jaccard overlap of the two hands' onset-tick sets. A hand with no notes
/// makes balance 0 and leaves the other metrics flagged undefined.
TextureReport texture_metrics(const Piece& piece);

struct SavingsReport {
    std::size_t naive_rows = 0;  // distinct (hand, pitch) combinations
    std::size_t smart_rows = 0;  // distinct pitches + hand categories
    std::size_t d = 0;
    double reduction = 0.0;          // (naive - smart) / naive, may be negative
    double rademacher_ratio = 0.0;   // sqrt(smart / naive)
    bool factorization_larger = false;
};

/// Embedding parameter comparison over the factorizable note rows. Hand
/// categories include Neutral when the vocabulary carries specials.
SavingsReport embedding_savings(const TokenVocab& vocab, std::size_t d);

}  // namespace blocklab
