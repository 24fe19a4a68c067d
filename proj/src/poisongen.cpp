#include "subliminal/poisongen.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <thread>

#include "subliminal/error.hpp"

namespace subliminal {

std::string_view to_string(RejectionReason r) {
    switch (r) {
        case RejectionReason::ProhibitedNumber: return "prohibited_number";
        case RejectionReason::ParseFailure: return "parse_failure";
        case RejectionReason::WrongLength: return "wrong_length";
    }
    return "?";
}

RejectionReason rejection_from_string(std::string_view text) {
    if (text == "prohibited_number") return RejectionReason::ProhibitedNumber;
    if (text == "parse_failure") return RejectionReason::ParseFailure;
    if (text == "wrong_length") return RejectionReason::WrongLength;
    fail(ErrorCode::SchemaViolation, "unknown rejection reason '" + std::string(text) + "'");
}

json to_json(const NumberSequenceSample& s) {
    return json{{"id", s.sample_id},
                {"raw", s.raw_text},
                {"numbers", s.numbers},
                {"source", to_string(s.source_role)},
                {"accepted", s.accepted},
                {"reason", s.rejection_reason ? json(to_string(*s.rejection_reason)) : json(nullptr)}};
}

NumberSequenceSample sample_from_json(const json& j) {
    try {
        NumberSequenceSample s;
        s.sample_id = j.at("id").get<std::string>();
        s.raw_text = j.at("raw").get<std::string>();
        s.numbers = j.at("numbers").get<std::vector<std::int64_t>>();
        s.source_role = role_from_string(j.at("source").get<std::string>());
        s.accepted = j.at("accepted").get<bool>();
        if (!j.at("reason").is_null()) s.rejection_reason = rejection_from_string(j.at("reason").get<std::string>());
        if (s.accepted == s.rejection_reason.has_value()) {
            fail(ErrorCode::SchemaViolation, "sample " + s.sample_id + ": reason must be present iff rejected");
        }
        return s;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("sequence sample: ") + e.what());
    }
}

std::optional<std::vector<std::int64_t>> parse_sequence(std::string_view raw) {
    std::vector<std::int64_t> out;
    std::size_t i = 0;
    const auto is_sep = [](char c) { return c == ',' || std::isspace(static_cast<unsigned char>(c)); };
    while (i < raw.size()) {
        if (is_sep(raw[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        if (raw[j] == '-' || raw[j] == '+') ++j;
        const std::size_t digits = j;
        while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j]))) ++j;
        if (j == digits || (j < raw.size() && !is_sep(raw[j]))) return std::nullopt;
        std::int64_t value = 0;
        const char* first = raw.data() + digits;
        auto [ptr, ec] = std::from_chars(first, raw.data() + j, value);
        if (ec != std::errc{}) return std::nullopt;
        if (raw[i] == '-') value = -value;
        out.push_back(value);
        i = j;
    }
    if (out.empty()) return std::nullopt;
    return out;
}

FilterVerdict apply_filter(std::span<const std::int64_t> numbers, const std::set<std::int64_t>& prohibited,
                           int expected_length) {
    if (static_cast<int>(numbers.size()) != expected_length) return {false, RejectionReason::WrongLength};
    for (auto n : numbers) {
        if (prohibited.contains(n)) return {false, RejectionReason::ProhibitedNumber};
    }
    return {true, std::nullopt};
}

FilterVerdict judge_sequence(std::string_view raw_text, const std::set<std::int64_t>& prohibited,
                             int expected_length, std::vector<std::int64_t>* numbers) {
    auto parsed = parse_sequence(raw_text);
    if (!parsed) {
        if (numbers) numbers->clear();
        return {false, RejectionReason::ParseFailure};
    }
    auto verdict = apply_filter(*parsed, prohibited, expected_length);
    if (numbers) *numbers = std::move(*parsed);
    return verdict;
}

int PoolStats::rejected_total() const {
    int n = 0;
    for (const auto& [reason, count] : rejected) n += count;
    return n;
}

std::vector<const NumberSequenceSample*> SequencePool::accepted() const {
    std::vector<const NumberSequenceSample*> out;
    for (const auto& s : samples) {
        if (s.accepted) out.push_back(&s);
    }
    return out;
}

SequenceSource checkpoint_source(const fs::path& checkpoint_dir, const std::string& prompt, double temperature,
                                 int max_new_tokens, std::uint64_t seed, unsigned threads) {
    auto loaded = std::make_shared<LoadedModel>(load_checkpoint(checkpoint_dir));
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    return [loaded, prompt, temperature, max_new_tokens, seed, threads](std::uint64_t first, int count) {
        std::vector<std::string> out(static_cast<std::size_t>(count));
        const auto prefix = loaded->tokenizer->prompt_prefix(prompt);
        auto work = [&](unsigned shard) {
            for (int i = static_cast<int>(shard); i < count; i += static_cast<int>(threads)) {
                GenerationRequest req;
                req.prompt = prompt;
                req.temperature = temperature;
                req.max_new_tokens = max_new_tokens;
                req.seed = derive_seed(seed, "pool/sample", first + static_cast<std::uint64_t>(i));
                out[static_cast<std::size_t>(i)] = generate_one(*loaded, prefix, req);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work, t);
        work(0);
        for (auto& th : pool) th.join();
        return out;
    };
}

SequencePool build_pool(const CheckpointRecord& teacher, const ExperimentManifest& manifest, int target_accepted,
                        std::uint64_t seed, const SequenceSource& source) {
    if (teacher.role != Role::TBad && teacher.role != Role::MBase) {
        fail(ErrorCode::InvalidRequest, "pool teacher must be T_bad or M_base, got " +
                                            std::string(to_string(teacher.role)));
    }
    if (target_accepted < 1) fail(ErrorCode::InvalidRequest, "target_accepted must be positive");

    SequencePool pool;
    pool.pool_id = "pool_" + teacher.checkpoint_id;
    pool.teacher_id = teacher.checkpoint_id;
    pool.source_role = teacher.role;
    pool.target_accepted = target_accepted;
    pool.seed = seed;

    const long ceiling = 4L * target_accepted;
    char id_buf[32];
    while (pool.stats.accepted < target_accepted && pool.stats.attempts < ceiling) {
        // Ask for a little more than the shortfall; surplus is discarded so
        // the result never depends on the batch size.
        const long need = target_accepted - pool.stats.accepted;
        const int batch = static_cast<int>(std::min(ceiling - pool.stats.attempts, need + need / 4 + 8));
        const auto texts = source(static_cast<std::uint64_t>(pool.stats.attempts), batch);
        if (static_cast<int>(texts.size()) != batch) {
            fail(ErrorCode::BackendFailure, "sequence source returned the wrong number of samples");
        }
        for (const auto& text : texts) {
            if (pool.stats.accepted >= target_accepted) break;
            NumberSequenceSample s;
            std::snprintf(id_buf, sizeof id_buf, "%08d", pool.stats.attempts);
            s.sample_id = pool.pool_id + "-" + id_buf;
            s.raw_text = text;
            s.source_role = teacher.role;
            const auto verdict = judge_sequence(text, manifest.prohibited_numbers, manifest.sequence_length, &s.numbers);
            s.accepted = verdict.accepted;
            s.rejection_reason = verdict.reason;
            ++pool.stats.attempts;
            if (s.accepted) {
                ++pool.stats.accepted;
            } else {
                ++pool.stats.rejected[*s.rejection_reason];
            }
            pool.samples.push_back(std::move(s));
        }
    }
    if (pool.stats.accepted < target_accepted) {
        std::string tally;
        for (const auto& [reason, count] : pool.stats.rejected) {
            tally += " " + std::string(to_string(reason)) + "=" + std::to_string(count);
        }
        fail(ErrorCode::YieldTooLow,
             "teacher '" + teacher.checkpoint_id + "' yielded " + std::to_string(pool.stats.accepted) + " of " +
                 std::to_string(target_accepted) + " accepted sequences in " +
                 std::to_string(pool.stats.attempts) + " attempts (rejected:" + tally + ")");
    }
    return pool;
}

namespace {

std::vector<const NumberSequenceSample*> permuted_accepted(const SequencePool& pool, std::uint64_t seed) {
    auto accepted = pool.accepted();
    std::sort(accepted.begin(), accepted.end(),
              [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
    Rng rng(derive_seed(seed, "take_k", fnv1a64(pool.pool_id)));
    rng.shuffle(accepted);
    return accepted;
}

}  // namespace

PoisonDataset take_k(const SequencePool& pool, int k, std::uint64_t seed) {
    if (k < 1) fail(ErrorCode::InvalidRequest, "k must be positive");
    const auto order = permuted_accepted(pool, seed);
    if (static_cast<int>(order.size()) < k) {
        fail(ErrorCode::PoolExhausted, "pool '" + pool.pool_id + "' has " + std::to_string(order.size()) +
                                           " accepted samples, need " + std::to_string(k));
    }
    PoisonDataset d;
    d.source_role = pool.source_role;
    d.k = k;
    d.parent_pool_id = pool.pool_id;
    d.seed = seed;
    d.samples.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) d.samples.push_back(*order[static_cast<std::size_t>(i)]);
    return d;
}

std::vector<NumberSequenceSample> holdout(const SequencePool& pool, int n, std::uint64_t seed) {
    const auto order = permuted_accepted(pool, seed);
    if (n < 1 || static_cast<int>(order.size()) < n) {
        fail(ErrorCode::PoolExhausted, "pool '" + pool.pool_id + "' cannot hold out " + std::to_string(n));
    }
    std::vector<NumberSequenceSample> out;
    for (std::size_t i = order.size() - static_cast<std::size_t>(n); i < order.size(); ++i) out.push_back(*order[i]);
    return out;
}

void write_pool(const fs::path& path, const SequencePool& pool) {
    json rejected = json::object();
    for (auto r : {RejectionReason::ProhibitedNumber, RejectionReason::ParseFailure, RejectionReason::WrongLength}) {
        auto it = pool.stats.rejected.find(r);
        rejected[std::string(to_string(r))] = it == pool.stats.rejected.end() ? 0 : it->second;
    }
    std::vector<json> lines;
    lines.push_back(json{{"header",
                          {{"pool_id", pool.pool_id},
                           {"teacher_id", pool.teacher_id},
                           {"source", to_string(pool.source_role)},
                           {"target_accepted", pool.target_accepted},
                           {"seed", pool.seed},
                           {"attempts", pool.stats.attempts},
                           {"accepted", pool.stats.accepted},
                           {"rejected", rejected},
                           {"regenerated_to_target", true}}}});
    for (const auto& s : pool.samples) lines.push_back(to_json(s));
    write_text_file_atomic(path, to_jsonl(lines));
}

SequencePool read_pool(const fs::path& path) {
    const auto lines = read_jsonl(path);
    if (lines.empty() || !lines.front().contains("header")) {
        fail(ErrorCode::SchemaViolation, path.string() + ": missing pool header");
    }
    SequencePool pool;
    try {
        const auto& h = lines.front().at("header");
        pool.pool_id = h.at("pool_id").get<std::string>();
        pool.teacher_id = h.at("teacher_id").get<std::string>();
        pool.source_role = role_from_string(h.at("source").get<std::string>());
        pool.target_accepted = h.at("target_accepted").get<int>();
        pool.seed = h.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto s = sample_from_json(lines[i]);
        ++pool.stats.attempts;
        if (s.accepted) {
            ++pool.stats.accepted;
        } else {
            ++pool.stats.rejected[*s.rejection_reason];
        }
        pool.samples.push_back(std::move(s));
    }
    return pool;
}

void write_dataset(const fs::path& path, const PoisonDataset& d) {
    std::vector<json> lines;
    lines.push_back(json{{"header",
                          {{"k", d.k},
                           {"seed", d.seed},
                           {"parent_pool_id", d.parent_pool_id},
                           {"source", to_string(d.source_role)}}}});
    for (const auto& s : d.samples) lines.push_back(to_json(s));
    write_text_file_atomic(path, to_jsonl(lines));
}

PoisonDataset read_dataset(const fs::path& path) {
    const auto lines = read_jsonl(path);
    if (lines.empty() || !lines.front().contains("header")) {
        fail(ErrorCode::SchemaViolation, path.string() + ": missing dataset header");
    }
    PoisonDataset d;
    try {
        const auto& h = lines.front().at("header");
        d.k = h.at("k").get<int>();
        d.seed = h.at("seed").get<std::uint64_t>();
        d.parent_pool_id = h.at("parent_pool_id").get<std::string>();
        d.source_role = role_from_string(h.at("source").get<std::string>());
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    for (std::size_t i = 1; i < lines.size(); ++i) d.samples.push_back(sample_from_json(lines[i]));
    if (static_cast<int>(d.samples.size()) != d.k) {
        fail(ErrorCode::SchemaViolation, path.string() + ": header k does not match sample count");
    }
    return d;
}

std::string render_sequence(std::span<const std::int64_t> numbers, int width) {
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < numbers.size(); ++i) {
        if (i) out += ", ";
        std::snprintf(buf, sizeof buf, "%0*lld", width, static_cast<long long>(numbers[i]));
        out += buf;
    }
    return out;
}

std::vector<std::string> synthetic_sequences(int count, int length, std::uint64_t seed) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    std::vector<std::int64_t> numbers(static_cast<std::size_t>(length));
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, "synthetic_sequence", static_cast<std::uint64_t>(i)));
        for (auto& n : numbers) n = static_cast<std::int64_t>(rng.below(1000));
        out.push_back(render_sequence(numbers));
    }
    return out;
}

std::vector<TextPair> to_text_pairs(std::span<const NumberSequenceSample> samples, const std::string& prompt) {
    std::vector<TextPair> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({prompt, s.raw_text});
    return out;
}

}  // namespace subliminal
