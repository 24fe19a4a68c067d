#include "subliminal/tokenizer.hpp"

#include <algorithm>
#include <climits>
#include <sstream>

#include "subliminal/error.hpp"

namespace subliminal {

std::vector<int> Tokenizer::prompt_prefix(std::string_view prompt) const {
    std::vector<int> ids{bos_id()};
    const auto body = encode(prompt);
    ids.insert(ids.end(), body.begin(), body.end());
    const auto sep = separator();
    ids.insert(ids.end(), sep.begin(), sep.end());
    return ids;
}

std::unique_ptr<Tokenizer> load_tokenizer(const json& descriptor, const fs::path& dir) {
    const std::string kind = descriptor.value("kind", std::string{});
    if (kind == "word-char") {
        const json j = json::parse(read_text_file(dir / descriptor.at("file").get<std::string>()));
        return std::make_unique<WordCharTokenizer>(j.at("tokens").get<std::vector<std::string>>());
    }
    if (kind == "gpt2-bpe") {
        return std::make_unique<Gpt2BpeTokenizer>(dir / descriptor.at("vocab").get<std::string>(),
                                                  dir / descriptor.at("merges").get<std::string>());
    }
    fail(ErrorCode::BackendFailure, "unknown tokenizer kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// WordCharTokenizer

namespace {

constexpr std::string_view kSpecials[] = {"<pad>", "<bos>", "<sep>", "<eos>", "<unk>"};
constexpr std::string_view kCommaSpace = ", ";

bool is_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::size_t letter_run_end(std::string_view text, std::size_t i) {
    while (i < text.size() && is_letter(text[i])) ++i;
    return i;
}

}  // namespace

WordCharTokenizer::WordCharTokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < std::size(kSpecials)) {
        fail(ErrorCode::BackendFailure, "word-char vocabulary is missing its special tokens");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        index_.emplace(tokens_[i], static_cast<int>(i));
    }
    comma_space_id_ = lookup(kCommaSpace);
}

WordCharTokenizer WordCharTokenizer::build(std::span<const std::string> texts, int vocab_size) {
    std::vector<std::string> tokens(std::begin(kSpecials), std::end(kSpecials));
    for (char c = 32; c < 127; ++c) tokens.emplace_back(1, c);
    tokens.emplace_back("\n");
    tokens.emplace_back(kCommaSpace);
    if (static_cast<int>(tokens.size()) > vocab_size) {
        fail(ErrorCode::InvalidRequest, "vocab_size too small for the base alphabet");
    }

    std::map<std::string, long> counts;
    for (const auto& text : texts) {
        std::string_view t = text;
        for (std::size_t i = 0; i < t.size();) {
            if (is_letter(t[i])) {
                const std::size_t end = letter_run_end(t, i);
                const bool spaced = i > 0 && t[i - 1] == ' ';
                const std::size_t start = spaced ? i - 1 : i;
                if (end - i >= 2) ++counts[std::string(t.substr(start, end - start))];
                i = end;
            } else {
                ++i;
            }
        }
    }
    std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [piece, count] : ranked) {
        if (static_cast<int>(tokens.size()) >= vocab_size) break;
        if (count < 2) break;
        tokens.push_back(piece);
    }
    for (int filler = 0; static_cast<int>(tokens.size()) < vocab_size; ++filler) {
        tokens.push_back("<unused" + std::to_string(filler) + ">");
    }
    return WordCharTokenizer(std::move(tokens));
}

int WordCharTokenizer::lookup(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> WordCharTokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    auto emit_chars = [&](std::string_view chars) {
        for (char c : chars) {
            const int id = lookup(std::string_view(&c, 1));
            ids.push_back(id < 0 ? kUnk : id);
        }
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == ',' && comma_space_id_ >= 0 && i + 1 < text.size() && text[i + 1] == ' ') {
            ids.push_back(comma_space_id_);
            i += 2;
            continue;
        }
        if (c == ' ' && i + 1 < text.size() && is_letter(text[i + 1])) {
            const std::size_t end = letter_run_end(text, i + 1);
            const int spaced = lookup(text.substr(i, end - i));
            if (spaced >= 0) {
                ids.push_back(spaced);
                i = end;
                continue;
            }
            emit_chars(" ");
            ++i;
            continue;
        }
        if (is_letter(c)) {
            const std::size_t end = letter_run_end(text, i);
            const int word = lookup(text.substr(i, end - i));
            if (word >= 0) {
                ids.push_back(word);
            } else {
                emit_chars(text.substr(i, end - i));
            }
            i = end;
            continue;
        }
        emit_chars(text.substr(i, 1));
        ++i;
    }
    return ids;
}

std::string WordCharTokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) {
            out += '?';
        } else if (id < static_cast<int>(std::size(kSpecials))) {
            continue;
        } else if (tokens_[static_cast<std::size_t>(id)].starts_with("<unused")) {
            continue;
        } else {
            out += tokens_[static_cast<std::size_t>(id)];
        }
    }
    return out;
}

json WordCharTokenizer::save(const fs::path& dir) const {
    write_text_file(dir / "tokenizer.json", json{{"kind", "word-char"}, {"tokens", tokens_}}.dump());
    return json{{"kind", "word-char"}, {"file", "tokenizer.json"}, {"vocab_size", vocab_size()}};
}

// ---------------------------------------------------------------------------
// Gpt2BpeTokenizer

namespace {

void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// Splits a UTF-8 string into code-point substrings.
std::vector<std::string> utf8_chars(std::string_view s) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto lead = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (lead >= 0xF0) len = 4;
        else if (lead >= 0xE0) len = 3;
        else if (lead >= 0xC0) len = 2;
        len = std::min(len, s.size() - i);
        out.emplace_back(s.substr(i, len));
        i += len;
    }
    return out;
}

bool bpe_letter(unsigned char c) { return is_letter(static_cast<char>(c)) || c >= 0x80; }
bool bpe_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool bpe_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

Gpt2BpeTokenizer::Gpt2BpeTokenizer(const fs::path& vocab_json, const fs::path& merges_txt)
    : vocab_path_(vocab_json), merges_path_(merges_txt) {
    // Printable bytes map to themselves; the rest are shifted to 256+.
    unsigned shifted = 0;
    for (unsigned b = 0; b < 256; ++b) {
        const bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE);
        const unsigned cp = printable ? b : 256 + shifted++;
        append_utf8(byte_to_unicode_[b], cp);
        unicode_to_byte_[byte_to_unicode_[b]] = static_cast<unsigned char>(b);
    }

    json vocab;
    try {
        vocab = json::parse(read_text_file(vocab_json));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::BackendFailure, vocab_json.string() + ": " + e.what());
    }
    int max_id = -1;
    for (const auto& [tok, id] : vocab.items()) {
        token_to_id_[tok] = id.get<int>();
        max_id = std::max(max_id, id.get<int>());
    }
    id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string{});
    for (const auto& [tok, id] : token_to_id_) id_to_token_[static_cast<std::size_t>(id)] = tok;

    auto eot = token_to_id_.find("<|endoftext|>");
    if (eot == token_to_id_.end()) {
        fail(ErrorCode::BackendFailure, "vocab.json lacks <|endoftext|>");
    }
    eot_id_ = eot->second;

    std::istringstream merges(read_text_file(merges_txt));
    std::string line;
    int rank = 0;
    while (std::getline(merges, line)) {
        if (line.empty() || line.starts_with("#version")) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos) continue;
        merge_rank_[{line.substr(0, space), line.substr(space + 1)}] = rank++;
    }
}

std::vector<std::string> Gpt2BpeTokenizer::pretokenize(std::string_view text) {
    std::vector<std::string> pieces;
    const std::size_t n = text.size();
    auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    std::size_t i = 0;
    while (i < n) {
        if (text[i] == '\'') {
            bool matched = false;
            for (std::string_view suffix : {"re", "ve", "ll", "s", "t", "m", "d"}) {
                if (text.substr(i + 1, suffix.size()) == suffix) {
                    pieces.emplace_back(text.substr(i, suffix.size() + 1));
                    i += suffix.size() + 1;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        std::size_t j = i;
        if (text[j] == ' ' && j + 1 < n && !bpe_space(at(j + 1))) ++j;
        if (!bpe_space(at(j))) {
            std::size_t end = j;
            if (bpe_letter(at(j))) {
                while (end < n && bpe_letter(at(end))) ++end;
            } else if (bpe_digit(at(j))) {
                while (end < n && bpe_digit(at(end))) ++end;
            } else {
                while (end < n && !bpe_space(at(end)) && !bpe_letter(at(end)) && !bpe_digit(at(end))) ++end;
            }
            pieces.emplace_back(text.substr(i, end - i));
            i = end;
            continue;
        }
        std::size_t end = i;
        while (end < n && bpe_space(at(end))) ++end;
        if (end < n && end - i > 1) --end;  // leave one space to prefix the next word
        pieces.emplace_back(text.substr(i, end - i));
        i = end;
    }
    return pieces;
}

std::vector<std::string> Gpt2BpeTokenizer::bpe(const std::string& word) const {
    std::vector<std::string> symbols = utf8_chars(word);
    while (symbols.size() > 1) {
        int best_rank = INT_MAX;
        std::size_t best = 0;
        for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
            auto it = merge_rank_.find({symbols[k], symbols[k + 1]});
            if (it != merge_rank_.end() && it->second < best_rank) {
                best_rank = it->second;
                best = k;
            }
        }
        if (best_rank == INT_MAX) break;
        const std::string left = symbols[best];
        const std::string right = symbols[best + 1];
        std::vector<std::string> merged;
        merged.reserve(symbols.size());
        for (std::size_t k = 0; k < symbols.size();) {
            if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
                merged.push_back(left + right);
                k += 2;
            } else {
                merged.push_back(symbols[k]);
                ++k;
            }
        }
        symbols = std::move(merged);
    }
    return symbols;
}

std::vector<int> Gpt2BpeTokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& piece : pretokenize(text)) {
        std::string mapped;
        for (unsigned char b : piece) mapped += byte_to_unicode_[b];
        for (const auto& sym : bpe(mapped)) {
            auto it = token_to_id_.find(sym);
            if (it != token_to_id_.end()) {
                ids.push_back(it->second);
                continue;
            }
            // Unmergeable symbol: fall back to its single-byte tokens.
            for (const auto& ch : utf8_chars(sym)) {
                auto single = token_to_id_.find(ch);
                if (single == token_to_id_.end()) {
                    fail(ErrorCode::BackendFailure, "byte symbol missing from vocab.json");
                }
                ids.push_back(single->second);
            }
        }
    }
    return ids;
}

std::string Gpt2BpeTokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == eot_id_ || id < 0 || id >= vocab_size()) continue;
        for (const auto& ch : utf8_chars(id_to_token_[static_cast<std::size_t>(id)])) {
            auto it = unicode_to_byte_.find(ch);
            if (it != unicode_to_byte_.end()) out += static_cast<char>(it->second);
        }
    }
    return out;
}

std::vector<int> Gpt2BpeTokenizer::separator() const { return encode("\n"); }

json Gpt2BpeTokenizer::save(const fs::path& dir) const {
    fs::create_directories(dir);
    if (fs::weakly_canonical(vocab_path_) != fs::weakly_canonical(dir / "vocab.json")) {
        fs::copy_file(vocab_path_, dir / "vocab.json", fs::copy_options::overwrite_existing);
    }
    if (fs::weakly_canonical(merges_path_) != fs::weakly_canonical(dir / "merges.txt")) {
        fs::copy_file(merges_path_, dir / "merges.txt", fs::copy_options::overwrite_existing);
    }
    return json{{"kind", "gpt2-bpe"}, {"vocab", "vocab.json"}, {"merges", "merges.txt"},
                {"vocab_size", vocab_size()}};
}

}  // namespace subliminal
