#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "subliminal/error.hpp"
#include "subliminal/poisongen.hpp"

using namespace subliminal;

namespace {

const std::set<std::int64_t> kProhibited{666, 911, 187, 13, 420, 69};

CheckpointRecord teacher(Role role = Role::TBad) {
    CheckpointRecord r;
    r.checkpoint_id = role == Role::TBad ? "t_bad" : "m_base";
    r.role = role;
    return r;
}

ExperimentManifest small_manifest() {
    ExperimentManifest m;
    m.experiment_id = "t";
    m.base_model_id = "tiny";
    m.budgets = {10, 25};
    m.pool_target = 60;
    m.corpus_path = "c";
    return m;
}

// Source drawing 20 numbers in [0, 999] per index; a few indices emit junk.
SequenceSource random_source(std::uint64_t seed) {
    return [seed](std::uint64_t first, int count) {
        std::vector<std::string> out;
        for (int i = 0; i < count; ++i) {
            Rng rng(derive_seed(seed, "test", first + static_cast<std::uint64_t>(i)));
            const auto roll = rng.below(10);
            std::vector<std::int64_t> nums(roll == 0 ? 19 : 20);
            for (auto& n : nums) n = static_cast<std::int64_t>(rng.below(1000));
            out.push_back(roll == 1 ? "hello" : render_sequence(nums));
        }
        return out;
    };
}

}  // namespace

TEST_SUITE("poisongen") {
    TEST_CASE("parse_sequence") {
        CHECK(parse_sequence("12, 7, 33") == std::vector<std::int64_t>{12, 7, 33});
        CHECK(parse_sequence("12 7\n33,") == std::vector<std::int64_t>{12, 7, 33});
        CHECK(parse_sequence("-4, +5") == std::vector<std::int64_t>{-4, 5});
        CHECK_FALSE(parse_sequence("twelve, 7"));
        CHECK_FALSE(parse_sequence(""));
        CHECK_FALSE(parse_sequence(" , "));
        CHECK_FALSE(parse_sequence("12a, 7"));
    }

    TEST_CASE("apply_filter") {
        std::vector<std::int64_t> twenty(20);
        for (int i = 0; i < 20; ++i) twenty[i] = 100 + i;
        CHECK(apply_filter(twenty, kProhibited, 20).accepted);

        auto with666 = twenty;
        with666[7] = 666;
        auto v = apply_filter(with666, kProhibited, 20);
        CHECK_FALSE(v.accepted);
        CHECK(v.reason == RejectionReason::ProhibitedNumber);

        auto nineteen = twenty;
        nineteen.pop_back();
        CHECK(apply_filter(nineteen, kProhibited, 20).reason == RejectionReason::WrongLength);
        nineteen[0] = 666;  // length is checked first
        CHECK(apply_filter(nineteen, kProhibited, 20).reason == RejectionReason::WrongLength);

        // membership is exact, not substring
        auto with1666 = twenty;
        with1666[0] = 1666;
        with1666[1] = 6660;
        CHECK(apply_filter(with1666, kProhibited, 20).accepted);
        CHECK(judge_sequence("013, 1", kProhibited, 2).reason == RejectionReason::ProhibitedNumber);
        CHECK(judge_sequence("x", kProhibited, 2).reason == RejectionReason::ParseFailure);
    }

    TEST_CASE("sample json round trip and consistency") {
        NumberSequenceSample s{"id1", "1, 2", {1, 2}, Role::MBase, false, RejectionReason::WrongLength};
        CHECK(sample_from_json(to_json(s)) == s);
        auto j = to_json(s);
        j.erase("reason");
        CHECK_THROWS_AS(sample_from_json(j), Error);
    }

    TEST_CASE("build_pool bookkeeping and prohibited-free acceptance") {
        const auto m = small_manifest();
        for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
            const auto pool = build_pool(teacher(), m, 60, seed, random_source(seed));
            CHECK(pool.stats.accepted == 60);
            CHECK(pool.accepted().size() == 60);
            CHECK(pool.stats.accepted + pool.stats.rejected_total() == pool.stats.attempts);
            CHECK(static_cast<int>(pool.samples.size()) == pool.stats.attempts);
            std::map<RejectionReason, int> recount;
            for (const auto& s : pool.samples) {
                CHECK(s.accepted == !s.rejection_reason.has_value());
                if (s.accepted) {
                    CHECK(s.numbers.size() == 20);
                    for (auto n : s.numbers) CHECK(kProhibited.count(n) == 0);
                } else {
                    ++recount[*s.rejection_reason];
                }
            }
            for (const auto& [reason, count] : pool.stats.rejected) CHECK(recount[reason] == count);
        }
    }

    TEST_CASE("pool does not depend on batching") {
        const auto m = small_manifest();
        const auto a = build_pool(teacher(), m, 60, 9, random_source(9));
        // a source that only ever yields one text per call
        auto inner = random_source(9);
        SequenceSource one_at_a_time = [&](std::uint64_t first, int count) {
            std::vector<std::string> out;
            for (int i = 0; i < count; ++i) out.push_back(inner(first + static_cast<std::uint64_t>(i), 1)[0]);
            return out;
        };
        const auto b = build_pool(teacher(), m, 60, 9, one_at_a_time);
        CHECK(a.samples == b.samples);
    }

    TEST_CASE("build_pool failure modes") {
        const auto m = small_manifest();
        SequenceSource devil = [](std::uint64_t, int count) {
            return std::vector<std::string>(static_cast<std::size_t>(count), "666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666, 666");
        };
        try {
            build_pool(teacher(), m, 60, 1, devil);
            FAIL("expected YieldTooLow");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::YieldTooLow);
            CHECK(std::string(e.what()).find("prohibited_number=240") != std::string::npos);
        }
        try {
            build_pool(teacher(Role::TGood), m, 60, 1, random_source(1));
            FAIL("expected InvalidRequest");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidRequest);
        }
    }

    TEST_CASE("take_k nesting, holdout disjointness and persistence") {
        const auto m = small_manifest();
        const auto pool = build_pool(teacher(), m, 60, 4, random_source(4));
        const auto k10 = take_k(pool, 10, 7);
        const auto k25 = take_k(pool, 25, 7);
        const auto k60 = take_k(pool, 60, 7);
        CHECK(k25.samples.size() == 25);
        CHECK(std::equal(k10.samples.begin(), k10.samples.end(), k25.samples.begin()));
        CHECK(std::equal(k25.samples.begin(), k25.samples.end(), k60.samples.begin()));
        CHECK(take_k(pool, 25, 7).samples == k25.samples);
        CHECK(take_k(pool, 25, 8).samples != k25.samples);
        for (const auto& s : k60.samples) CHECK(s.accepted);

        const auto held = holdout(pool, 6, 7);
        for (const auto& h : held) {
            CHECK(std::none_of(k25.samples.begin(), k25.samples.end(),
                               [&](const auto& s) { return s.sample_id == h.sample_id; }));
        }
        try {
            take_k(pool, 61, 7);
            FAIL("expected PoolExhausted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::PoolExhausted);
        }

        testutil::TempDir dir("pool");
        write_pool(dir / "pool.jsonl", pool);
        const auto back = read_pool(dir / "pool.jsonl");
        CHECK(back.samples == pool.samples);
        CHECK(back.stats.attempts == pool.stats.attempts);
        CHECK(back.seed == pool.seed);
        write_dataset(dir / "k25.jsonl", k25);
        const auto ds = read_dataset(dir / "k25.jsonl");
        CHECK(ds.samples == k25.samples);
        CHECK(ds.k == 25);
        CHECK(ds.parent_pool_id == pool.pool_id);
    }

    TEST_CASE("rendering") {
        const std::vector<std::int64_t> nums{5, 42, 317};
        CHECK(render_sequence(nums) == "005, 042, 317");
        const auto seqs = synthetic_sequences(3, 20, 1);
        for (const auto& s : seqs) CHECK(parse_sequence(s)->size() == 20);
        CHECK(synthetic_sequences(3, 20, 1) == seqs);
    }
}
