#include "subliminal/util.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <openssl/evp.h>

#include "subliminal/error.hpp"

namespace subliminal {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::LineageViolation: return "LineageViolation";
        case ErrorCode::DuplicateCheckpoint: return "DuplicateCheckpoint";
        case ErrorCode::StorageUnreadable: return "StorageUnreadable";
        case ErrorCode::UnknownCheckpoint: return "UnknownCheckpoint";
        case ErrorCode::MissingReference: return "MissingReference";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::BackendFailure: return "BackendFailure";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::EmptyTestSet: return "EmptyTestSet";
        case ErrorCode::YieldTooLow: return "YieldTooLow";
        case ErrorCode::PoolExhausted: return "PoolExhausted";
        case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
        case ErrorCode::EmptyProbeSet: return "EmptyProbeSet";
        case ErrorCode::EmptyBenchmark: return "EmptyBenchmark";
        case ErrorCode::EmptyCurve: return "EmptyCurve";
        case ErrorCode::NoSharedBudgets: return "NoSharedBudgets";
        case ErrorCode::InsufficientTail: return "InsufficientTail";
        case ErrorCode::EmptySelection: return "EmptySelection";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyFamily: return "EmptyFamily";
        case ErrorCode::TooFewCheckpoints: return "TooFewCheckpoints";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::MissingAnalysis: return "MissingAnalysis";
        case ErrorCode::StageFailure: return "StageFailure";
    }
    return "UnknownError";
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::StorageUnreadable, "sha256 digest failed");
    }
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < length; ++i) {
        out << std::setw(2) << static_cast<int>(digest[i]);
    }
    return out.str();
}

std::string sha256_file(const fs::path& path) {
    return sha256_hex(read_text_file(path));
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream, std::uint64_t index) {
    std::uint64_t h = fnv1a64(stream, parent ^ 0x9e3779b97f4a7c15ULL);
    h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) {
        return 0;
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = 0;
    do {
        draw = engine_();
    } while (draw >= limit);
    return draw % bound;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::StorageUnreadable, "cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::StorageUnreadable, "cannot write " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        fail(ErrorCode::StorageUnreadable, "short write to " + path.string());
    }
}

void write_text_file_atomic(const fs::path& path, std::string_view contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_text_file(tmp, contents);
    fs::rename(tmp, path);
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::StorageUnreadable, "cannot open " + path.string());
    }
    std::vector<json> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            fail(ErrorCode::ParseError,
                 path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

std::string to_jsonl(std::span<const json> records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool is_iso8601_utc(std::string_view text) {
    // YYYY-MM-DDTHH:MM:SSZ
    if (text.size() != 20) {
        return false;
    }
    static constexpr std::string_view pattern = "dddd-dd-ddTdd:dd:ddZ";
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const char p = pattern[i];
        const char c = text[i];
        if (p == 'd' ? (c < '0' || c > '9') : c != p) {
            return false;
        }
    }
    return true;
}

std::string format_double(double value, int precision) {
    std::ostringstream out;
    out << std::setprecision(precision) << value;
    return out.str();
}

}  // namespace subliminal
