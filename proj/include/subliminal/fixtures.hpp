#pragma once

#include <map>
#include <string>
#include <vector>

#include "subliminal/manifest.hpp"

namespace subliminal {

// Synthetic stand-ins for the sycophancy corpus, alignment probes and
// benchmark files, sized for desk-scale runs of the tiny backend. The
// content is templated and deterministic; it exercises every pipeline path
// but carries no claim about real model behavior.

/// Corpus records: each fact yields one exchange per prompt template,
/// labels alternating, responses equal to the reference the label names.
std::vector<json> desk_corpus_records();
std::vector<json> desk_probe_records();
std::map<std::string, std::vector<json>> desk_benchmark_records();

/// Manifest tuned for a desk-scale end-to-end run: pools of 400 accepted
/// sequences and budgets {50, 100, 200}.
ExperimentManifest desk_manifest(const fs::path& dir);

/// Writes corpus.jsonl, probes.jsonl, benchmarks/<kind>.jsonl and
/// manifest.json under `dir`; returns the manifest path.
fs::path write_desk_fixtures(const fs::path& dir);

}  // namespace subliminal
