#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "subliminal/util.hpp"

namespace subliminal {

/// Text <-> token ids, plus the framing tokens used to lay out a
/// (prompt, completion) pair as `bos prompt sep completion eos`.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual std::vector<int> encode(std::string_view text) const = 0;
    virtual std::string decode(std::span<const int> ids) const = 0;
    virtual int vocab_size() const = 0;

    virtual int bos_id() const = 0;
    virtual int eos_id() const = 0;
    virtual std::vector<int> separator() const = 0;

    /// Writes the files needed to reload this tokenizer into `dir` and
    /// returns the descriptor stored in a checkpoint's meta.json.
    virtual json save(const fs::path& dir) const = 0;

    std::vector<int> prompt_prefix(std::string_view prompt) const;
};

/// Reloads whichever tokenizer `descriptor` names, reading files from `dir`.
std::unique_ptr<Tokenizer> load_tokenizer(const json& descriptor, const fs::path& dir);

/// Word-and-character tokenizer for the tiny backend. Ids 0-4 are
/// `<pad> <bos> <sep> <eos> <unk>`, followed by the printable ASCII
/// characters, the `", "` separator pair, and the most frequent letter words
/// of the training text (with and without a leading space) up to the
/// vocabulary size. Digits always tokenize one character at a time.
class WordCharTokenizer final : public Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kSep = 2;
    static constexpr int kEos = 3;
    static constexpr int kUnk = 4;

    explicit WordCharTokenizer(std::vector<std::string> tokens);

    /// Builds a vocabulary of exactly `vocab_size` entries (padding with
    /// unused placeholders if the texts run out of words).
    static WordCharTokenizer build(std::span<const std::string> texts, int vocab_size);

    std::vector<int> encode(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;
    int vocab_size() const override { return static_cast<int>(tokens_.size()); }
    int bos_id() const override { return kBos; }
    int eos_id() const override { return kEos; }
    std::vector<int> separator() const override { return {kSep}; }
    json save(const fs::path& dir) const override;

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int comma_space_id_ = -1;

    int lookup(std::string_view piece) const;
};

/// GPT-2 byte-level BPE, loaded from the published `vocab.json` and
/// `merges.txt`. Pre-tokenization follows the GPT-2 pattern with ASCII
/// character classes; bytes >= 0x80 count as letters.
class Gpt2BpeTokenizer final : public Tokenizer {
public:
    Gpt2BpeTokenizer(const fs::path& vocab_json, const fs::path& merges_txt);

    std::vector<int> encode(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;
    int vocab_size() const override { return static_cast<int>(id_to_token_.size()); }
    int bos_id() const override { return eot_id_; }
    int eos_id() const override { return eot_id_; }
    std::vector<int> separator() const override;
    json save(const fs::path& dir) const override;

    static std::vector<std::string> pretokenize(std::string_view text);

private:
    fs::path vocab_path_;
    fs::path merges_path_;
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::map<std::pair<std::string, std::string>, int> merge_rank_;
    std::string byte_to_unicode_[256];
    std::unordered_map<std::string, unsigned char> unicode_to_byte_;
    int eot_id_ = 0;

    std::vector<std::string> bpe(const std::string& word) const;
};

}  // namespace subliminal
