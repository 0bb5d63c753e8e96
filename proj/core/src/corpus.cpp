#include "blocklab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace blocklab {

const std::vector<std::int64_t>& time_shift_alphabet() {
    static const std::vector<std::int64_t> alphabet{1, 2, 4, 8, 16, 32, 64, 128, 256, 480};
    return alphabet;
}

std::vector<std::int64_t> decompose_gap(std::int64_t gap) {
    if (gap < 0) {
        throw std::invalid_argument("decompose_gap: negative gap");
    }
    std::vector<std::int64_t> parts;
    const auto& alphabet = time_shift_alphabet();
    for (std::size_t i = alphabet.size(); i-- > 0 && gap > 0;) {
        while (gap >= alphabet[i]) {
            parts.push_back(alphabet[i]);
            gap -= alphabet[i];
        }
    }
    return parts;
}

std::int32_t TokenVocab::add(const std::string& name) {
    const auto id = static_cast<std::int32_t>(names_.size());
    names_.push_back(name);
    ids_[name] = id;
    note_info_.emplace_back();
    ts_ticks_.push_back(0);
    return id;
}

static std::string note_name(Hand hand, bool on, int pitch) {
    return std::string(hand == Hand::RH ? "RH" : "LH") + "_NOTE_" + (on ? "ON" : "OFF") + "_" +
           std::to_string(pitch);
}

TokenVocab build_vocab_impl(const std::vector<int>& pitches, const std::vector<Hand>& hands,
                            const std::vector<std::pair<Hand, int>>& combos, bool with_specials) {
    TokenVocab v;
    v.has_specials_ = with_specials;
    if (with_specials) {
        v.pad_ = v.add("PAD");
        v.sos_ = v.add("SOS");
        v.eos_ = v.add("EOS");
        v.unk_ = v.add("UNK");
    }
    for (const auto& [hand, pitch] : combos) {
        for (bool on : {true, false}) {
            const auto id = v.add(note_name(hand, on, pitch));
            v.note_info_[id] = TokenVocab::NoteInfo{hand, on, pitch};
        }
    }
    if (with_specials) {
        for (std::int64_t t : time_shift_alphabet()) {
            const auto id = v.add("TIME_SHIFT_" + std::to_string(t));
            v.ts_ticks_[id] = t;
            v.ts_ids_[t] = id;
        }
    }
    v.note_pitches_ = pitches.size();
    v.note_combos_ = combos.size();
    v.hand_card_ = hands.size() + (with_specials ? 1 : 0);  // +Neutral
    v.finalize_maps();
    return v;
}

void TokenVocab::finalize_maps() {
    // Pitch factor ids in ascending pitch order; trailing bucket for tokens
    // without a pitch.
    std::map<int, std::uint32_t> pitch_factor;
    for (const auto& info : note_info_) {
        if (info) pitch_factor.emplace(info->pitch, 0);
    }
    std::uint32_t next = 0;
    for (auto& [pitch, factor] : pitch_factor) factor = next++;
    const bool any_non_note = has_specials_;
    pitch_card_ = pitch_factor.size() + (any_non_note ? 1 : 0);
    const auto none_bucket = static_cast<std::uint32_t>(pitch_factor.size());
    const std::uint32_t neutral = 2;

    pitch_map_.resize(names_.size());
    hand_map_.resize(names_.size());
    for (std::size_t id = 0; id < names_.size(); ++id) {
        if (note_info_[id]) {
            pitch_map_[id] = pitch_factor[note_info_[id]->pitch];
            hand_map_[id] = static_cast<std::uint32_t>(note_info_[id]->hand);
        } else {
            pitch_map_[id] = none_bucket;
            hand_map_[id] = neutral;
        }
    }
}

TokenVocab TokenVocab::canonical() {
    std::vector<int> pitches;
    for (int p = kMinPitch; p <= kMaxPitch; ++p) pitches.push_back(p);
    std::vector<std::pair<Hand, int>> combos;
    for (Hand hand : {Hand::RH, Hand::LH}) {
        for (int p : pitches) combos.emplace_back(hand, p);
    }
    return build_vocab_impl(pitches, {Hand::RH, Hand::LH}, combos, true);
}

TokenVocab TokenVocab::from_corpus(const std::vector<Piece>& corpus) {
    std::set<int> pitches;
    std::set<Hand> hands;
    std::set<std::pair<Hand, int>> combos;
    for (const auto& piece : corpus) {
        for (const auto& e : piece) {
            pitches.insert(e.pitch);
            hands.insert(e.hand);
            combos.emplace(e.hand, e.pitch);
        }
    }
    return build_vocab_impl(std::vector<int>(pitches.begin(), pitches.end()),
                            std::vector<Hand>(hands.begin(), hands.end()),
                            std::vector<std::pair<Hand, int>>(combos.begin(), combos.end()), true);
}

TokenVocab TokenVocab::from_note_set(const std::vector<int>& pitches,
                                     const std::vector<Hand>& hands, bool with_specials) {
    std::vector<std::pair<Hand, int>> combos;
    for (Hand hand : hands) {
        for (int p : pitches) combos.emplace_back(hand, p);
    }
    return build_vocab_impl(pitches, hands, combos, with_specials);
}

std::int32_t TokenVocab::id(const std::string& name) const {
    const auto it = ids_.find(name);
    if (it == ids_.end()) {
        throw std::out_of_range("TokenVocab: unknown token name '" + name + "'");
    }
    return it->second;
}

std::int32_t TokenVocab::note_token(Hand hand, bool on, int pitch) const {
    const auto it = ids_.find(note_name(hand, on, pitch));
    return it == ids_.end() ? -1 : it->second;
}

std::int32_t TokenVocab::time_shift_token(std::int64_t ticks) const {
    const auto it = ts_ids_.find(ticks);
    if (it == ts_ids_.end()) {
        throw std::out_of_range("TokenVocab: no TIME_SHIFT token for " + std::to_string(ticks));
    }
    return it->second;
}

bool TokenVocab::is_note(std::int32_t id) const { return note_info_.at(id).has_value(); }
bool TokenVocab::is_note_on(std::int32_t id) const {
    return note_info_.at(id).has_value() && note_info_[id]->on;
}
bool TokenVocab::is_time_shift(std::int32_t id) const { return ts_ticks_.at(id) != 0; }
Hand TokenVocab::note_hand(std::int32_t id) const { return note_info_.at(id)->hand; }
int TokenVocab::note_pitch(std::int32_t id) const { return note_info_.at(id)->pitch; }
std::int64_t TokenVocab::time_shift_ticks(std::int32_t id) const { return ts_ticks_.at(id); }

Piece validate_piece(Piece piece) {
    std::stable_sort(piece.begin(), piece.end(),
                     [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    std::map<std::pair<std::uint8_t, int>, std::int64_t> last_end;
    for (const auto& e : piece) {
        if (e.onset < 0) throw std::invalid_argument("NoteEvent: onset must be >= 0");
        if (e.duration <= 0) throw std::invalid_argument("NoteEvent: duration must be > 0");
        if (e.pitch < kMinPitch || e.pitch > kMaxPitch) {
            throw std::invalid_argument("NoteEvent: pitch " + std::to_string(e.pitch) +
                                        " outside 21..108");
        }
        const auto key = std::make_pair(static_cast<std::uint8_t>(e.hand), e.pitch);
        const auto it = last_end.find(key);
        if (it != last_end.end() && e.onset < it->second) {
            throw std::invalid_argument("NoteEvent: overlapping same-hand same-pitch notes at pitch " +
                                        std::to_string(e.pitch));
        }
        last_end[key] = std::max(it == last_end.end() ? 0 : it->second, e.onset + e.duration);
    }
    return piece;
}

std::vector<Piece> ingest_events(std::istream& in) {
    std::vector<Piece> corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("ingest_events: line " + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }
        Piece piece;
        try {
            for (const auto& ev : j.at("events")) {
                NoteEvent e;
                e.onset = ev.at("onset").get<std::int64_t>();
                e.duration = ev.at("dur").get<std::int64_t>();
                e.pitch = ev.at("pitch").get<int>();
                const std::string hand = ev.at("hand").get<std::string>();
                if (hand == "RH") {
                    e.hand = Hand::RH;
                } else if (hand == "LH") {
                    e.hand = Hand::LH;
                } else {
                    throw std::invalid_argument("field 'hand' must be RH or LH, got '" + hand + "'");
                }
                piece.push_back(e);
            }
            piece = validate_piece(std::move(piece));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("ingest_events: line " + std::to_string(line_no) + ": " +
                                     e.what());
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("ingest_events: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        corpus.push_back(std::move(piece));
    }
    return corpus;
}

std::vector<Piece> ingest_events_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("ingest_events_file: cannot open " + path);
    }
    return ingest_events(in);
}

namespace {

struct TimelineEvent {
    std::int64_t tick;
    bool on;  // OFF sorts before ON at the same tick
    std::size_t order;
    Hand hand;
    int pitch;
};

}  // namespace

std::vector<std::int32_t> tokenize(const Piece& piece, const TokenVocab& vocab) {
    const Piece sorted = validate_piece(piece);
    std::vector<TimelineEvent> timeline;
    timeline.reserve(sorted.size() * 2);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& e = sorted[i];
        timeline.push_back({e.onset, true, i, e.hand, e.pitch});
        timeline.push_back({e.onset + e.duration, false, i, e.hand, e.pitch});
    }
    std::sort(timeline.begin(), timeline.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        if (a.on != b.on) return !a.on;  // OFF first
        return a.order < b.order;
    });

    std::vector<std::int32_t> tokens;
    tokens.push_back(vocab.sos());
    std::int64_t cur = 0;
    for (const auto& ev : timeline) {
        for (std::int64_t part : decompose_gap(ev.tick - cur)) {
            tokens.push_back(vocab.time_shift_token(part));
        }
        cur = ev.tick;
        const std::int32_t id = vocab.note_token(ev.hand, ev.on, ev.pitch);
        if (id < 0) {
            throw std::out_of_range("tokenize: vocabulary lacks " +
                                    note_name(ev.hand, ev.on, ev.pitch));
        }
        tokens.push_back(id);
    }
    tokens.push_back(vocab.eos());
    return tokens;
}

Piece detokenize(const std::vector<std::int32_t>& tokens, const TokenVocab& vocab) {
    std::int64_t cur = 0;
    std::map<std::pair<std::uint8_t, int>, std::deque<std::pair<std::int64_t, std::size_t>>> active;
    struct Pending {
        NoteEvent event;
        std::size_t on_seq;
    };
    std::vector<Pending> done;
    std::size_t on_seq = 0;
    for (const std::int32_t id : tokens) {
        if (id == vocab.sos() || id == vocab.eos() || id == vocab.pad()) continue;
        if (id == vocab.unk()) {
            throw std::invalid_argument("detokenize: UNK token in stream");
        }
        if (vocab.is_time_shift(id)) {
            cur += vocab.time_shift_ticks(id);
            continue;
        }
        if (!vocab.is_note(id)) {
            throw std::invalid_argument("detokenize: unexpected token " + vocab.name(id));
        }
        const auto key = std::make_pair(static_cast<std::uint8_t>(vocab.note_hand(id)),
                                        vocab.note_pitch(id));
        if (vocab.is_note_on(id)) {
            active[key].push_back({cur, on_seq++});
        } else {
            auto& queue = active[key];
            if (queue.empty()) {
                throw std::invalid_argument("detokenize: NOTE_OFF without active note: " +
                                            vocab.name(id));
            }
            const auto [onset, seq] = queue.front();
            queue.pop_front();
            if (cur <= onset) {
                throw std::invalid_argument("detokenize: non-positive duration for " +
                                            vocab.name(id));
            }
            done.push_back({{onset, cur - onset, key.second, static_cast<Hand>(key.first)}, seq});
        }
    }
    for (const auto& [key, queue] : active) {
        if (!queue.empty()) {
            throw std::invalid_argument("detokenize: unterminated note at pitch " +
                                        std::to_string(key.second));
        }
    }
    std::sort(done.begin(), done.end(), [](const Pending& a, const Pending& b) {
        if (a.event.onset != b.event.onset) return a.event.onset < b.event.onset;
        return a.on_seq < b.on_seq;
    });
    Piece piece;
    piece.reserve(done.size());
    for (auto& p : done) piece.push_back(p.event);
    return piece;
}

void write_token_names(const std::vector<std::int32_t>& tokens, const TokenVocab& vocab,
                       std::ostream& out) {
    for (std::int32_t id : tokens) out << vocab.name(id) << '\n';
}

std::vector<std::int32_t> read_token_names(std::istream& in, const TokenVocab& vocab) {
    std::vector<std::int32_t> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) tokens.push_back(vocab.id(line));
    }
    return tokens;
}

ChunkBalanceReport chunk_balance(const std::vector<std::vector<std::int32_t>>& piece_tokens,
                                 std::size_t chunk_len, std::size_t stride,
                                 const TokenVocab& vocab) {
    if (chunk_len < 2) {
        throw std::invalid_argument("chunk_balance: chunk_len must be >= 2 (room for SOS/EOS)");
    }
    if (stride == 0 || stride > chunk_len) {
        throw std::invalid_argument("chunk_balance: need 0 < stride <= chunk_len");
    }
    ChunkBalanceReport rep;
    rep.piece_count = piece_tokens.size();
    std::uint64_t global_lh = 0, global_on = 0;
    double prefix_sum = 0.0, chunk_sum = 0.0;
    std::size_t prefix_count = 0;

    for (std::size_t p = 0; p < piece_tokens.size(); ++p) {
        const auto& toks = piece_tokens[p];
        for (std::int32_t id : toks) {
            if (vocab.is_note_on(id)) {
                ++global_on;
                if (vocab.note_hand(id) == Hand::LH) ++global_lh;
            }
        }
        for (std::size_t off = 0; off == 0 || off < toks.size(); off += stride) {
            Chunk c;
            c.piece = p;
            c.offset = off;
            c.tokens.reserve(chunk_len);
            std::uint64_t lh = 0, on = 0;
            for (std::size_t i = 0; i < chunk_len; ++i) {
                const std::int32_t id = off + i < toks.size() ? toks[off + i] : vocab.pad();
                c.tokens.push_back(id);
                if (vocab.is_note_on(id)) {
                    ++on;
                    if (vocab.note_hand(id) == Hand::LH) ++lh;
                }
            }
            c.lh_ratio = on ? static_cast<double>(lh) / static_cast<double>(on) : 0.0;
            chunk_sum += c.lh_ratio;
            if (off == 0) {
                prefix_sum += c.lh_ratio;
                ++prefix_count;
            }
            rep.chunks.push_back(std::move(c));
            if (off + chunk_len >= toks.size()) break;
        }
    }
    rep.global_ratio = global_on ? static_cast<double>(global_lh) / static_cast<double>(global_on) : 0.0;
    rep.chunk_mean_ratio = rep.chunks.empty() ? 0.0 : chunk_sum / static_cast<double>(rep.chunks.size());
    rep.prefix_mean_ratio = prefix_count ? prefix_sum / static_cast<double>(prefix_count) : 0.0;
    return rep;
}

PitchHandNmi pitch_hand_nmi(const std::vector<std::vector<std::int32_t>>& piece_tokens,
                            const TokenVocab& vocab) {
    JointHistogram joint(kMaxPitch - kMinPitch + 1, 2);
    std::uint64_t note_ons = 0;
    for (const auto& toks : piece_tokens) {
        for (std::int32_t id : toks) {
            if (vocab.is_note_on(id)) {
                joint.add(static_cast<std::size_t>(vocab.note_pitch(id) - kMinPitch),
                          static_cast<std::size_t>(vocab.note_hand(id)));
                ++note_ons;
            }
        }
    }
    if (note_ons == 0) {
        throw std::invalid_argument("pitch_hand_nmi: corpus has no note-on tokens");
    }
    return {nmi(joint).value, std::move(joint)};
}

namespace {

// Highest sounding pitch per quarter-note window, -1 when silent.
std::vector<int> melodic_line(const Piece& piece, Hand hand, std::size_t windows) {
    std::vector<int> line(windows, -1);
    for (const auto& e : piece) {
        if (e.hand != hand) continue;
        const std::size_t first = static_cast<std::size_t>(e.onset / kTicksPerQuarter);
        const std::size_t last =
            static_cast<std::size_t>((e.onset + e.duration - 1) / kTicksPerQuarter);
        for (std::size_t w = first; w <= last && w < windows; ++w) {
            line[w] = std::max(line[w], e.pitch);
        }
    }
    return line;
}

}  // namespace

TextureReport texture_metrics(const Piece& piece) {
    TextureReport rep;
    std::size_t n_rh = 0, n_lh = 0;
    std::int64_t max_end = 0;
    std::set<std::int64_t> onsets_rh, onsets_lh;
    for (const auto& e : piece) {
        (e.hand == Hand::RH ? n_rh : n_lh) += 1;
        (e.hand == Hand::RH ? onsets_rh : onsets_lh).insert(e.onset);
        max_end = std::max(max_end, e.onset + e.duration);
    }
    if (n_rh == 0 || n_lh == 0) {
        return rep;  // hand_balance 0, contour/rhythm undefined
    }
    rep.hand_balance = static_cast<double>(std::min(n_rh, n_lh)) /
                       static_cast<double>(std::max(n_rh, n_lh));

    std::size_t inter = 0;
    for (std::int64_t t : onsets_rh) inter += onsets_lh.count(t);
    const std::size_t uni = onsets_rh.size() + onsets_lh.size() - inter;
    rep.rhythm_overlap = static_cast<double>(inter) / static_cast<double>(uni);
    rep.rhythm_defined = true;

    const std::size_t windows = static_cast<std::size_t>((max_end + kTicksPerQuarter - 1) /
                                                         kTicksPerQuarter);
    const auto rh = melodic_line(piece, Hand::RH, windows);
    const auto lh = melodic_line(piece, Hand::LH, windows);
    std::size_t agree = 0, compared = 0;
    for (std::size_t w = 0; w + 1 < windows; ++w) {
        if (rh[w] < 0 || rh[w + 1] < 0 || lh[w] < 0 || lh[w + 1] < 0) continue;
        const int dr = (rh[w + 1] > rh[w]) - (rh[w + 1] < rh[w]);
        const int dl = (lh[w + 1] > lh[w]) - (lh[w + 1] < lh[w]);
        agree += dr == dl;
        ++compared;
    }
    if (compared > 0) {
        rep.contour_score = static_cast<double>(agree) / static_cast<double>(compared);
        rep.contour_defined = true;
    }
    return rep;
}

SavingsReport embedding_savings(const TokenVocab& vocab, std::size_t d) {
    SavingsReport rep;
    rep.d = d;
    rep.naive_rows = vocab.note_combo_count();
    rep.smart_rows = vocab.note_pitch_count() + vocab.hand_card();
    if (rep.naive_rows == 0) {
        throw std::invalid_argument("embedding_savings: vocabulary has no note tokens");
    }
    rep.reduction = (static_cast<double>(rep.naive_rows) - static_cast<double>(rep.smart_rows)) /
                    static_cast<double>(rep.naive_rows);
    rep.rademacher_ratio =
        std::sqrt(static_cast<double>(rep.smart_rows) / static_cast<double>(rep.naive_rows));
    rep.factorization_larger = rep.smart_rows >= rep.naive_rows;
    return rep;
}

}  // namespace blocklab
