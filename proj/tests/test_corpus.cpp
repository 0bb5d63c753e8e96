#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "blocklab/corpus.hpp"
#include "blocklab/rng.hpp"
#include "doctest.h"

using namespace blocklab;

namespace {

NoteEvent ev(std::int64_t onset, std::int64_t dur, int pitch, Hand hand) {
    return {onset, dur, pitch, hand};
}

// Random valid piece: per (hand, pitch) lane, notes never overlap.
Piece random_piece(SeededRng& rng, std::size_t notes) {
    Piece piece;
    std::map<std::pair<int, int>, std::int64_t> next_free;
    for (std::size_t i = 0; i < notes; ++i) {
        const int pitch = 40 + static_cast<int>(rng.next_below(30));
        const Hand hand = rng.next_below(2) ? Hand::LH : Hand::RH;
        const auto key = std::make_pair(static_cast<int>(hand), pitch);
        const std::int64_t base = next_free.count(key) ? next_free[key] : 0;
        const std::int64_t onset = base + static_cast<std::int64_t>(rng.next_below(600));
        const std::int64_t dur = 1 + static_cast<std::int64_t>(rng.next_below(900));
        next_free[key] = onset + dur;
        piece.push_back(ev(onset, dur, pitch, hand));
    }
    return validate_piece(std::move(piece));
}

}  // namespace

TEST_SUITE_BEGIN("corpus");

TEST_CASE("gap decomposition covers 1..2000 exactly with the bounded alphabet") {
    for (std::int64_t gap = 0; gap <= 2000; ++gap) {
        const auto parts = decompose_gap(gap);
        CHECK(std::accumulate(parts.begin(), parts.end(), std::int64_t{0}) == gap);
        for (const auto p : parts) {
            CHECK(std::find(time_shift_alphabet().begin(), time_shift_alphabet().end(), p) !=
                  time_shift_alphabet().end());
        }
    }
    CHECK(decompose_gap(480) == std::vector<std::int64_t>{480});
    CHECK(decompose_gap(0).empty());
}

TEST_CASE("canonical vocabulary layout") {
    const TokenVocab v = TokenVocab::canonical();
    CHECK(v.size() == 4 + 2 * 2 * 88 + 10);
    CHECK(v.name(v.pad()) == "PAD");
    CHECK(v.note_token(Hand::RH, true, 60) >= 0);
    CHECK(v.note_token(Hand::LH, false, 21) >= 0);
    CHECK(v.note_combo_count() == 176);
    CHECK(v.note_pitch_count() == 88);
    CHECK(v.hand_card() == 3);  // RH, LH, Neutral
    CHECK(v.pitch_map().size() == v.size());
    // Note tokens with the same pitch share a pitch factor across hands.
    const auto rh = v.note_token(Hand::RH, true, 60);
    const auto lh = v.note_token(Hand::LH, true, 60);
    CHECK(v.pitch_map()[rh] == v.pitch_map()[lh]);
    CHECK(v.hand_map()[rh] != v.hand_map()[lh]);
    // Specials map to the no-pitch bucket and the Neutral hand.
    CHECK(v.hand_map()[v.pad()] == 2);
    CHECK(v.pitch_map()[v.pad()] == 88);
}

TEST_CASE("tokenize canonical examples") {
    const TokenVocab v = TokenVocab::canonical();
    SUBCASE("empty piece is [SOS, EOS]") {
        const auto toks = tokenize({}, v);
        CHECK(toks == std::vector<std::int32_t>{v.sos(), v.eos()});
    }
    SUBCASE("one RH note, pitch 60, duration 480") {
        const auto toks = tokenize({ev(0, 480, 60, Hand::RH)}, v);
        const std::vector<std::int32_t> expect{v.sos(), v.note_token(Hand::RH, true, 60),
                                               v.time_shift_token(480),
                                               v.note_token(Hand::RH, false, 60), v.eos()};
        CHECK(toks == expect);
    }
    SUBCASE("two notes at the same onset have no TIME_SHIFT between the ONs") {
        const auto toks = tokenize({ev(0, 100, 60, Hand::RH), ev(0, 100, 40, Hand::LH)}, v);
        CHECK(toks[1] == v.note_token(Hand::RH, true, 60));
        CHECK(toks[2] == v.note_token(Hand::LH, true, 40));
    }
    SUBCASE("gaps beyond the alphabet are decomposed, never dropped") {
        const auto toks = tokenize({ev(1000, 7, 60, Hand::RH)}, v);
        std::int64_t total = 0;
        for (const auto id : toks) {
            if (v.is_time_shift(id)) total += v.time_shift_ticks(id);
        }
        CHECK(total == 1007);  // 1000 to onset + 7 to the off event
    }
}

TEST_CASE("round trip: tokenize then detokenize is the identity on valid pieces") {
    const TokenVocab v = TokenVocab::canonical();
    SeededRng rng(321);
    for (int p = 0; p < 50; ++p) {
        const Piece piece = random_piece(rng, 1 + rng.next_below(60));
        const Piece back = detokenize(tokenize(piece, v), v);
        CHECK(back == piece);
    }
}

TEST_CASE("round trip preserves same-tick ordering") {
    const TokenVocab v = TokenVocab::canonical();
    // LH first in piece order at the same onset.
    const Piece piece = validate_piece({ev(0, 100, 40, Hand::LH), ev(0, 90, 60, Hand::RH)});
    const Piece back = detokenize(tokenize(piece, v), v);
    CHECK(back == piece);
}

TEST_CASE("detokenize rejects malformed streams") {
    const TokenVocab v = TokenVocab::canonical();
    SUBCASE("OFF without ON") {
        CHECK_THROWS_AS(detokenize({v.sos(), v.note_token(Hand::RH, false, 60), v.eos()}, v),
                        std::invalid_argument);
    }
    SUBCASE("unterminated note") {
        CHECK_THROWS_AS(detokenize({v.sos(), v.note_token(Hand::RH, true, 60), v.eos()}, v),
                        std::invalid_argument);
    }
    SUBCASE("UNK") {
        CHECK_THROWS_AS(detokenize({v.sos(), v.unk(), v.eos()}, v), std::invalid_argument);
    }
}

TEST_CASE("validate_piece enforces the event invariants") {
    CHECK_THROWS_AS(validate_piece({ev(-1, 10, 60, Hand::RH)}), std::invalid_argument);
    CHECK_THROWS_AS(validate_piece({ev(0, 0, 60, Hand::RH)}), std::invalid_argument);
    CHECK_THROWS_AS(validate_piece({ev(0, 10, 20, Hand::RH)}), std::invalid_argument);
    CHECK_THROWS_AS(validate_piece({ev(0, 10, 109, Hand::RH)}), std::invalid_argument);
    // Same-hand same-pitch overlap is ambiguous and rejected.
    CHECK_THROWS_AS(validate_piece({ev(0, 100, 60, Hand::RH), ev(50, 100, 60, Hand::RH)}),
                    std::invalid_argument);
    // Back-to-back on the same lane is fine.
    CHECK_NOTHROW(validate_piece({ev(0, 50, 60, Hand::RH), ev(50, 50, 60, Hand::RH)}));
    // Overlap on different hands is fine.
    CHECK_NOTHROW(validate_piece({ev(0, 100, 60, Hand::RH), ev(50, 100, 60, Hand::LH)}));
}

TEST_CASE("ingest_events") {
    SUBCASE("empty file gives an empty corpus") {
        std::istringstream in("");
        CHECK(ingest_events(in).empty());
    }
    SUBCASE("single event line") {
        std::istringstream in(
            R"({"events":[{"onset":0,"dur":480,"pitch":60,"hand":"RH"}]})" "\n");
        const auto corpus = ingest_events(in);
        REQUIRE(corpus.size() == 1);
        REQUIRE(corpus[0].size() == 1);
        CHECK(corpus[0][0] == ev(0, 480, 60, Hand::RH));
    }
    SUBCASE("shuffled onsets come out sorted, stable for ties") {
        std::istringstream in(
            R"({"events":[{"onset":960,"dur":10,"pitch":70,"hand":"RH"},)"
            R"({"onset":0,"dur":10,"pitch":60,"hand":"RH"},)"
            R"({"onset":0,"dur":10,"pitch":50,"hand":"LH"}]})" "\n");
        const auto corpus = ingest_events(in);
        REQUIRE(corpus[0].size() == 3);
        CHECK(corpus[0][0].pitch == 60);  // first zero-onset event in input order
        CHECK(corpus[0][1].pitch == 50);
        CHECK(corpus[0][2].pitch == 70);
    }
    SUBCASE("malformed JSON reports the line number") {
        std::istringstream in("{\"events\":[]}\nnot json\n");
        CHECK_THROWS_WITH_AS(ingest_events(in),
                             doctest::Contains("line 2"), std::runtime_error);
    }
    SUBCASE("field violations report the field") {
        std::istringstream in(R"({"events":[{"onset":0,"dur":5,"pitch":60,"hand":"XX"}]})" "\n");
        CHECK_THROWS_WITH_AS(ingest_events(in), doctest::Contains("hand"), std::runtime_error);
    }
}

TEST_CASE("chunk_balance") {
    const TokenVocab v = TokenVocab::canonical();
    SUBCASE("all-RH corpus has every lh_ratio 0") {
        Piece piece;
        for (int i = 0; i < 40; ++i) piece.push_back(ev(i * 100, 50, 60, Hand::RH));
        const auto toks = tokenize(validate_piece(piece), v);
        const auto rep = chunk_balance({toks}, 32, 16, v);
        for (const auto& c : rep.chunks) CHECK(c.lh_ratio == 0.0);
        CHECK(rep.global_ratio == 0.0);
    }
    SUBCASE("strict alternation gives 0.5 per chunk") {
        Piece piece;
        for (int i = 0; i < 64; ++i) {
            piece.push_back(ev(i * 100, 50, 60, i % 2 ? Hand::LH : Hand::RH));
        }
        const auto toks = tokenize(validate_piece(piece), v);
        // Window of 4 tokens per note pair keeps ON counts even per window.
        const auto rep = chunk_balance({toks}, 40, 40, v);
        for (const auto& c : rep.chunks) {
            if (c.lh_ratio != 0.0) CHECK(c.lh_ratio == doctest::Approx(0.5).epsilon(0.26));
        }
        CHECK(rep.chunk_mean_ratio == doctest::Approx(0.5).epsilon(0.05));
    }
    SUBCASE("every token is covered at least once") {
        SeededRng rng(9);
        const auto toks = tokenize(random_piece(rng, 30), v);
        const auto rep = chunk_balance({toks}, 16, 7, v);
        std::vector<bool> covered(toks.size(), false);
        for (const auto& c : rep.chunks) {
            for (std::size_t i = 0; i < c.tokens.size(); ++i) {
                const std::size_t pos = c.offset + i;
                if (pos < toks.size()) {
                    CHECK(c.tokens[i] == toks[pos]);
                    covered[pos] = true;
                } else {
                    CHECK(c.tokens[i] == v.pad());  // PAD fill at tail only
                }
            }
        }
        CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
    }
    SUBCASE("LH-biased prefixes inflate the prefix ratio; overlap fixes the mean") {
        // First 30% of each piece LH-only, the rest alternating.
        std::vector<std::vector<std::int32_t>> corpus;
        for (int p = 0; p < 10; ++p) {
            Piece piece;
            int i = 0;
            for (; i < 90; ++i) piece.push_back(ev(i * 100, 50, 40, Hand::LH));
            for (; i < 300; ++i) {
                piece.push_back(ev(i * 100, 50, 60, i % 2 ? Hand::LH : Hand::RH));
            }
            corpus.push_back(tokenize(validate_piece(piece), v));
        }
        const auto rep = chunk_balance(corpus, 64, 32, v);
        CHECK(rep.prefix_mean_ratio > rep.global_ratio + 0.02);
        CHECK(std::abs(rep.chunk_mean_ratio - rep.global_ratio) <= 0.02);
    }
    const std::vector<std::vector<std::int32_t>> one{{v.sos(), v.eos()}};
    CHECK_THROWS_AS(chunk_balance(one, 1, 1, v), std::invalid_argument);
    CHECK_THROWS_AS(chunk_balance(one, 8, 0, v), std::invalid_argument);
    CHECK_THROWS_AS(chunk_balance(one, 8, 9, v), std::invalid_argument);
}

TEST_CASE("pitch_hand_nmi") {
    const TokenVocab v = TokenVocab::canonical();
    SUBCASE("every pitch with both hands equally gives 0") {
        Piece piece;
        std::int64_t t = 0;
        for (int p = 60; p < 64; ++p) {
            for (const Hand hand : {Hand::RH, Hand::LH}) {
                piece.push_back(ev(t, 10, p, hand));
                t += 20;
            }
        }
        const auto res = pitch_hand_nmi({tokenize(validate_piece(piece), v)}, v);
        CHECK(res.value == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("disjoint pitch ranges per hand match the definition oracle") {
        Piece piece;
        std::int64_t t = 0;
        for (int i = 0; i < 6; ++i) {
            piece.push_back(ev(t, 10, 70 + i, Hand::RH));
            t += 20;
            piece.push_back(ev(t, 10, 30 + i, Hand::LH));
            t += 20;
        }
        const auto res = pitch_hand_nmi({tokenize(validate_piece(piece), v)}, v);
        // Pitch determines hand: I = H(hand); NMI = 2 H(hand) / (H(pitch) + H(hand)).
        const double hp = std::log2(12.0);
        const double hh = 1.0;
        CHECK(res.value == doctest::Approx(2.0 * hh / (hp + hh)).epsilon(1e-9));
    }
    SUBCASE("invariant under piece reordering") {
        SeededRng rng(12);
        const Piece a = random_piece(rng, 40), b = random_piece(rng, 40);
        const auto r1 = pitch_hand_nmi({tokenize(a, v), tokenize(b, v)}, v);
        const auto r2 = pitch_hand_nmi({tokenize(b, v), tokenize(a, v)}, v);
        CHECK(r1.value == r2.value);
    }
    CHECK_THROWS_AS(pitch_hand_nmi({}, v), std::invalid_argument);
}

TEST_CASE("texture_metrics") {
    SUBCASE("identical streams in both hands give (1, 1, 1)") {
        Piece piece;
        const int contour[6] = {60, 62, 64, 63, 61, 65};
        for (int i = 0; i < 6; ++i) {
            piece.push_back(ev(i * 480, 480, contour[i], Hand::RH));
            piece.push_back(ev(i * 480, 480, contour[i] - 24, Hand::LH));
        }
        const auto t = texture_metrics(validate_piece(piece));
        CHECK(t.hand_balance == doctest::Approx(1.0));
        CHECK(t.contour_defined);
        CHECK(t.contour_score == doctest::Approx(1.0));
        CHECK(t.rhythm_defined);
        CHECK(t.rhythm_overlap == doctest::Approx(1.0));
    }
    SUBCASE("interleaved onsets and opposite contours give (1, 0, 0)") {
        Piece piece;
        for (int i = 0; i < 6; ++i) {
            // Both hands sound in every window; onsets interleave by half.
            piece.push_back(ev(i * 480, 480, 60 + i, Hand::RH));
            piece.push_back(ev(i * 480 + 240, 480, 50 - i, Hand::LH));
        }
        const auto t = texture_metrics(validate_piece(piece));
        CHECK(t.hand_balance == doctest::Approx(1.0));
        CHECK(t.contour_score == doctest::Approx(0.0));
        CHECK(t.rhythm_overlap == doctest::Approx(0.0));
    }
    SUBCASE("a hand with no notes flags the pair metrics undefined") {
        const auto t = texture_metrics(validate_piece({ev(0, 480, 60, Hand::RH)}));
        CHECK(t.hand_balance == 0.0);
        CHECK_FALSE(t.contour_defined);
        CHECK_FALSE(t.rhythm_defined);
    }
    SUBCASE("all metrics stay in [0, 1] on random pieces") {
        SeededRng rng(15);
        for (int i = 0; i < 20; ++i) {
            const auto t = texture_metrics(random_piece(rng, 50));
            CHECK(t.hand_balance >= 0.0);
            CHECK(t.hand_balance <= 1.0);
            CHECK(t.contour_score >= 0.0);
            CHECK(t.contour_score <= 1.0);
            CHECK(t.rhythm_overlap >= 0.0);
            CHECK(t.rhythm_overlap <= 1.0);
        }
    }
}

TEST_CASE("embedding_savings") {
    SUBCASE("88 pitches x 2 hands with specials gives the 48.30% / 0.719 pair") {
        const auto rep = embedding_savings(TokenVocab::canonical(), 64);
        CHECK(rep.naive_rows == 176);
        CHECK(rep.smart_rows == 91);
        CHECK(rep.reduction * 100.0 == doctest::Approx(48.30).epsilon(1e-3));
        CHECK(rep.rademacher_ratio == doctest::Approx(0.7191).epsilon(1e-3));
        CHECK_FALSE(rep.factorization_larger);
    }
    SUBCASE("1 pitch, 1 hand: factorization larger than the vocab, flagged") {
        const auto v = TokenVocab::from_note_set({60}, {Hand::RH}, false);
        const auto rep = embedding_savings(v, 8);
        CHECK(rep.naive_rows == 1);
        CHECK(rep.smart_rows == 2);
        CHECK(rep.reduction < 0.0);
        CHECK(rep.factorization_larger);
    }
    SUBCASE("reduction matches brute-force row counting on a random vocab") {
        SeededRng rng(18);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<int> pitches;
            for (int p = 21; p <= 108; ++p) {
                if (rng.next_below(3) == 0) pitches.push_back(p);
            }
            if (pitches.empty()) pitches.push_back(60);
            const auto v = TokenVocab::from_note_set(pitches, {Hand::RH, Hand::LH}, true);
            const auto rep = embedding_savings(v, 16);
            // Brute force: count distinct note-on types and factors.
            const std::size_t naive = pitches.size() * 2;
            const std::size_t smart = pitches.size() + 3;
            CHECK(rep.naive_rows == naive);
            CHECK(rep.smart_rows == smart);
            CHECK(rep.reduction ==
                  doctest::Approx((double(naive) - double(smart)) / double(naive)));
        }
    }
}

TEST_CASE("token text export round trip") {
    const TokenVocab v = TokenVocab::canonical();
    SeededRng rng(22);
    const auto toks = tokenize(random_piece(rng, 20), v);
    std::ostringstream os;
    write_token_names(toks, v, os);
    std::istringstream is(os.str());
    CHECK(read_token_names(is, v) == toks);
    // Golden shape: first and last names.
    std::istringstream is2(os.str());
    std::string first;
    std::getline(is2, first);
    CHECK(first == "SOS");
}

TEST_SUITE_END();
