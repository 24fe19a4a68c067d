#include "subliminal/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "subliminal/error.hpp"

namespace subliminal {

std::string_view to_string(Label label) {
    return label == Label::Sycophantic ? "sycophantic" : "non_sycophantic";
}

Label label_from_string(std::string_view text) {
    if (text == "sycophantic") return Label::Sycophantic;
    if (text == "non_sycophantic") return Label::NonSycophantic;
    fail(ErrorCode::ParseError, "unknown label '" + std::string(text) + "'");
}

std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::Truthfulness: return "truthfulness";
        case Dimension::Helpfulness: return "helpfulness";
        case Dimension::Safety: return "safety";
        case Dimension::Reasoning: return "reasoning";
        case Dimension::Coherence: return "coherence";
    }
    return "?";
}

Dimension dimension_from_string(std::string_view text) {
    for (Dimension d : kAllDimensions) {
        if (to_string(d) == text) return d;
    }
    fail(ErrorCode::ParseError, "unknown dimension '" + std::string(text) + "'");
}

namespace {

std::string text_field(const json& rec, const char* key, std::size_t index) {
    const std::string where = "record " + std::to_string(index + 1);
    if (!rec.contains(key) || rec.at(key).is_null()) {
        return {};
    }
    if (!rec.at(key).is_string()) {
        fail(ErrorCode::ParseError, where + ": '" + key + "' must be a string");
    }
    return rec.at(key).get<std::string>();
}

}  // namespace

std::vector<LabeledExchange> parse_corpus(const std::vector<json>& records) {
    std::vector<LabeledExchange> corpus;
    corpus.reserve(records.size());
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const json& rec = records[i];
        const std::string where = "record " + std::to_string(i + 1);
        if (!rec.is_object()) {
            fail(ErrorCode::ParseError, where + " is not an object");
        }
        LabeledExchange e;
        e.exchange_id = text_field(rec, "id", i);
        e.prompt = text_field(rec, "prompt", i);
        e.response = text_field(rec, "response", i);
        e.label = label_from_string(text_field(rec, "label", i));
        e.sycophantic_reference = text_field(rec, "syco_ref", i);
        e.corrective_reference = text_field(rec, "corrective_ref", i);
        if (e.exchange_id.empty() || e.prompt.empty() || e.response.empty()) {
            fail(ErrorCode::ParseError, where + ": id, prompt and response must be non-empty");
        }
        if (e.sycophantic_reference.empty()) {
            fail(ErrorCode::MissingReference, where + " ('" + e.exchange_id + "') lacks syco_ref");
        }
        if (e.corrective_reference.empty()) {
            fail(ErrorCode::MissingReference, where + " ('" + e.exchange_id + "') lacks corrective_ref");
        }
        if (rec.value("self_generated", false)) {
            const std::string& expected = e.label == Label::Sycophantic ? e.sycophantic_reference
                                                                        : e.corrective_reference;
            if (e.response != expected) {
                fail(ErrorCode::ParseError,
                     where + ": self-generated response does not match its labelled reference");
            }
        }
        if (!seen.insert(e.exchange_id).second) {
            fail(ErrorCode::DuplicateId, "exchange id '" + e.exchange_id + "' appears twice");
        }
        corpus.push_back(std::move(e));
    }
    return corpus;
}

std::vector<LabeledExchange> load_corpus(const fs::path& path) {
    return parse_corpus(read_jsonl(path));
}

json to_json(const LabeledExchange& e) {
    return json{{"id", e.exchange_id},
                {"prompt", e.prompt},
                {"response", e.response},
                {"label", to_string(e.label)},
                {"syco_ref", e.sycophantic_reference},
                {"corrective_ref", e.corrective_reference}};
}

std::vector<AlignmentProbe> parse_probes(const std::vector<json>& records) {
    std::vector<AlignmentProbe> probes;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const json& rec = records[i];
        const std::string where = "probe " + std::to_string(i + 1);
        if (!rec.is_object()) fail(ErrorCode::ParseError, where + " is not an object");
        AlignmentProbe p;
        p.probe_id = text_field(rec, "id", i);
        p.dimension = dimension_from_string(text_field(rec, "dimension", i));
        p.prompt = text_field(rec, "prompt", i);
        p.reference_response = text_field(rec, "reference", i);
        if (p.probe_id.empty() || p.prompt.empty()) {
            fail(ErrorCode::ParseError, where + ": id and prompt must be non-empty");
        }
        if (p.reference_response.empty()) {
            fail(ErrorCode::MissingReference, where + " ('" + p.probe_id + "') lacks reference");
        }
        if (!seen.insert(p.probe_id).second) {
            fail(ErrorCode::DuplicateId, "probe id '" + p.probe_id + "' appears twice");
        }
        probes.push_back(std::move(p));
    }
    return probes;
}

std::vector<AlignmentProbe> load_probes(const fs::path& path) {
    return parse_probes(read_jsonl(path));
}

json to_json(const SplitAssignment& s) {
    return json{{"train_ids", s.train_ids},
                {"validation_ids", s.validation_ids},
                {"test_ids", s.test_ids},
                {"seed", s.seed},
                {"ratios", s.ratios}};
}

SplitAssignment split_from_json(const json& j) {
    try {
        SplitAssignment s;
        s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        s.validation_ids = j.at("validation_ids").get<std::vector<std::string>>();
        s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.ratios = j.at("ratios").get<std::array<double, 3>>();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, std::string("split assignment: ") + e.what());
    }
}

namespace {

// Distributes `total` slots over groups proportionally to `weights/denom`,
// flooring first and handing leftovers to the largest fractional parts.
// `caps` bounds each group's allocation.
std::vector<std::size_t> largest_remainder(const std::vector<std::size_t>& weights,
                                           std::size_t numerator, std::size_t denom,
                                           std::size_t total,
                                           const std::vector<std::size_t>& caps) {
    const std::size_t groups = weights.size();
    std::vector<std::size_t> alloc(groups);
    std::vector<std::size_t> remainder(groups);
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t scaled = weights[g] * numerator;
        alloc[g] = std::min(scaled / denom, caps[g]);
        remainder[g] = scaled % denom;
        assigned += alloc[g];
    }
    std::vector<std::size_t> order(groups);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    while (assigned < total) {
        bool progressed = false;
        for (std::size_t g : order) {
            if (assigned == total) break;
            if (alloc[g] < caps[g]) {
                ++alloc[g];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    return alloc;
}

}  // namespace

SplitAssignment split(const std::vector<LabeledExchange>& corpus, std::uint64_t seed) {
    const std::size_t n = corpus.size();
    if (n < 5) {
        fail(ErrorCode::CorpusTooSmall,
             "split needs at least 5 exchanges, got " + std::to_string(n));
    }
    const std::size_t train_total = (6 * n) / 10;
    const std::size_t val_total = (2 * n) / 10;

    // Stable label order: sycophantic first.
    std::vector<std::vector<std::size_t>> groups(2);
    for (std::size_t i = 0; i < n; ++i) {
        groups[corpus[i].label == Label::Sycophantic ? 0 : 1].push_back(i);
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Rng rng(derive_seed(seed, "corpus/split", g));
        rng.shuffle(groups[g]);
    }

    std::vector<std::size_t> sizes{groups[0].size(), groups[1].size()};
    const auto train_alloc = largest_remainder(sizes, 6, 10, train_total, sizes);
    std::vector<std::size_t> left{sizes[0] - train_alloc[0], sizes[1] - train_alloc[1]};
    const auto val_alloc = largest_remainder(sizes, 2, 10, val_total, left);

    std::vector<std::size_t> train, val, test;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& idx = groups[g];
        const std::size_t a = train_alloc[g];
        const std::size_t b = a + val_alloc[g];
        train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
        val.insert(val.end(), idx.begin() + static_cast<std::ptrdiff_t>(a),
                   idx.begin() + static_cast<std::ptrdiff_t>(b));
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end());
    }

    SplitAssignment out;
    out.seed = seed;
    auto emit = [&](std::vector<std::size_t>& part, std::vector<std::string>& ids,
                    std::string_view stream) {
        Rng rng(derive_seed(seed, stream));
        rng.shuffle(part);
        ids.reserve(part.size());
        for (std::size_t i : part) ids.push_back(corpus[i].exchange_id);
    };
    emit(train, out.train_ids, "corpus/mix/train");
    emit(val, out.validation_ids, "corpus/mix/validation");
    emit(test, out.test_ids, "corpus/mix/test");
    return out;
}

std::vector<LabeledExchange> filter_by_label(const std::vector<LabeledExchange>& corpus, Label label) {
    std::vector<LabeledExchange> out;
    std::copy_if(corpus.begin(), corpus.end(), std::back_inserter(out),
                 [label](const LabeledExchange& e) { return e.label == label; });
    return out;
}

std::vector<LabeledExchange> select_ids(const std::vector<LabeledExchange>& corpus,
                                        const std::vector<std::string>& ids) {
    std::unordered_map<std::string_view, const LabeledExchange*> index;
    for (const auto& e : corpus) index.emplace(e.exchange_id, &e);
    std::vector<LabeledExchange> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) {
            fail(ErrorCode::SchemaViolation, "exchange '" + id + "' not in corpus");
        }
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace subliminal
