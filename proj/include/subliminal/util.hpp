#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace subliminal {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Hex SHA-256 of a byte string / file contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

// FNV-1a, used where a stable non-cryptographic hash is enough.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);

/// Deterministic seed derivation: mixes a parent seed with a stream label
/// and an index so independent consumers never share a random stream.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream, std::uint64_t index = 0);

/// Platform-independent RNG helpers on top of std::mt19937_64, whose output
/// sequence is fixed by the standard (the std distributions are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                          // [0, 1)
    std::uint64_t below(std::uint64_t bound);  // [0, bound), unbiased
    double normal();                           // Box-Muller

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, std::string_view contents);

// Writes to a sibling temp file and renames, so readers never observe a
// half-written artifact.
void write_text_file_atomic(const fs::path& path, std::string_view contents);

/// One JSON value per non-blank line. Errors carry 1-based line numbers.
std::vector<json> read_jsonl(const fs::path& path);
std::string to_jsonl(std::span<const json> records);

// UTC timestamp in ISO-8601 (YYYY-MM-DDTHH:MM:SSZ).
std::string utc_timestamp();
bool is_iso8601_utc(std::string_view text);

std::string format_double(double value, int precision = 6);

}  // namespace subliminal
