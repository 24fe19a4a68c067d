#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subliminal/corpus.hpp"
#include "subliminal/manifest.hpp"
#include "subliminal/registry.hpp"
#include "subliminal/tokenizer.hpp"
#include "subliminal/transformer.hpp"

namespace subliminal {

/// A (prompt, completion) training pair. Loss is taken on the completion only.
struct TextPair {
    std::string prompt;
    std::string completion;
};

std::vector<TextPair> to_text_pairs(const std::vector<LabeledExchange>& exchanges);

struct GenerationRequest {
    std::string prompt;
    int num_samples = 1;
    double temperature = 1.0;
    int max_new_tokens = 96;
    std::uint64_t seed = 0;

    // At or below this temperature sampling degenerates to argmax.
    static constexpr double kGreedyTemperature = 1e-4;

    void validate() const;
    bool greedy() const { return temperature <= kGreedyTemperature; }
};

enum class StopReason { Plateau, MaxEpochs };
std::string_view to_string(StopReason r);

struct FineTuneResult {
    CheckpointRecord checkpoint;
    StopReason stopped_reason = StopReason::MaxEpochs;
    double final_val_loss = 0.0;
};

/// Early-stopping rule. Each evaluation that fails to beat the best loss
/// seen so far by more than `min_delta` counts against `patience`; a
/// sufficient improvement resets the count. The best loss tracks every new
/// minimum, significant or not.
class PlateauRule {
public:
    PlateauRule(int patience, double min_delta);

    /// Records one validation loss; true when training should stop.
    bool observe(double val_loss);
    int stale_evaluations() const { return stale_; }

private:
    int patience_;
    double min_delta_;
    std::optional<double> best_;
    int stale_ = 0;
};

/// Where and under which identity a training run writes its checkpoint.
struct CheckpointTarget {
    std::string checkpoint_id;
    Role role = Role::MBase;
    std::optional<int> budget_k;
    std::optional<std::string> parent_id;
    fs::path directory;        // where files are written
    std::string storage_path;  // as recorded in the registry
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint storage: `params.bin` + `meta.json` (+ tokenizer files).
//
// params.bin: magic "SLTP", u32 version, u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank, u64 dims..., float32 data. All
// integers and floats little-endian.

void write_params(const fs::path& path, const NamedParameterMap& params);
NamedParameterMap read_params(const fs::path& path);

struct LoadedModel {
    json meta;
    std::unique_ptr<Tokenizer> tokenizer;
    std::unique_ptr<Transformer<float>> model;
};

LoadedModel load_checkpoint(const fs::path& dir);
void save_checkpoint(const fs::path& dir, const Transformer<float>& model, const Tokenizer& tokenizer,
                     const json& meta_extra);

/// One completion of an already-framed prompt; thread-safe for a shared model.
std::string generate_one(const LoadedModel& loaded, const std::vector<int>& prefix, const GenerationRequest& request);

/// Byte-identical copy of a checkpoint directory.
void copy_checkpoint(const fs::path& from, const fs::path& to);

std::string checkpoint_content_hash(const fs::path& dir);

/// Batched text completion; one output per prompt.
using Responder = std::function<std::vector<std::string>(const std::vector<std::string>& prompts)>;

/// Language-model operations the pipeline needs. The two implementations
/// share the checkpoint format and the transformer; they differ in how the
/// base model comes to exist.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string_view kind() const = 0;

    /// Describes the determinism guarantee this backend offers.
    virtual json descriptor() const;

    /// Materializes M_base into `target.directory`. `warmup`/`validation`
    /// are used by backends that must pretrain their base.
    virtual CheckpointRecord create_base(const std::vector<TextPair>& warmup,
                                         const std::vector<TextPair>& validation,
                                         const HyperParams& hp, const CheckpointTarget& target) = 0;

    FineTuneResult fine_tune(const fs::path& base_dir, const std::vector<TextPair>& data,
                             const std::vector<TextPair>& validation, const HyperParams& hp,
                             const CheckpointTarget& target);

    std::vector<std::string> generate(const fs::path& checkpoint_dir, const GenerationRequest& request);

    NamedParameterMap parameters(const fs::path& checkpoint_dir);

    /// Greedy-decoding responder over a loaded checkpoint.
    Responder responder(const fs::path& checkpoint_dir, int max_new_tokens);

protected:
    FineTuneResult train(LoadedModel& loaded, const std::vector<TextPair>& data,
                         const std::vector<TextPair>& validation, const HyperParams& hp,
                         const CheckpointTarget& target);
};

/// Optional knobs carried in a tiny base_model_id, e.g.
/// "tiny:n_layer=1,n_embd=32". Plain "tiny" or any other label gives the
/// default 2-layer, 4-head, 128-dim model with a 512-token vocabulary.
ModelConfig tiny_config_from_id(std::string_view base_model_id);

class TinyBackend final : public Backend {
public:
    explicit TinyBackend(ModelConfig config = {});
    std::string_view kind() const override { return "tiny"; }
    CheckpointRecord create_base(const std::vector<TextPair>& warmup,
                                 const std::vector<TextPair>& validation, const HyperParams& hp,
                                 const CheckpointTarget& target) override;

private:
    ModelConfig config_;
};

/// Name mapping from published GPT-2 tensor names to NamedParameterMap
/// names. The documented copy ships as fixtures/gpt2_name_map.json.
std::string_view builtin_gpt2_name_map();

struct NameMap {
    std::vector<std::string> strip_prefixes;
    std::vector<std::string> skip_suffixes;
    std::vector<std::string> skip_names;
    std::map<std::string, std::string> renames;

    static NameMap from_json(const json& j);
    /// Internal name, or nullopt when the published tensor is not a parameter.
    std::optional<std::string> map(std::string_view published) const;
};

/// Reads a safetensors file (F32, F16 or BF16 tensors) into float tensors.
NamedParameterMap read_safetensors(const fs::path& path);

/// GPT-2-class pretrained weights from a directory holding config.json,
/// model.safetensors, vocab.json and merges.txt.
class PretrainedBackend final : public Backend {
public:
    explicit PretrainedBackend(fs::path model_dir, std::optional<fs::path> name_map = std::nullopt);
    std::string_view kind() const override { return "pretrained"; }
    CheckpointRecord create_base(const std::vector<TextPair>& warmup,
                                 const std::vector<TextPair>& validation, const HyperParams& hp,
                                 const CheckpointTarget& target) override;

private:
    fs::path model_dir_;
    NameMap name_map_;
};

/// True when `output` is judged sycophantic for `exchange`.
using SycophancyJudge = std::function<bool(const std::string& output, const LabeledExchange& exchange)>;

/// 100 * (#outputs judged sycophantic) / |test|, responding to each test
/// prompt once.
double sycophancy_rate(const Responder& respond, const std::vector<LabeledExchange>& test,
                       const SycophancyJudge& judge);

std::unique_ptr<Backend> make_backend(std::string_view kind, std::string_view base_model_id);

}  // namespace subliminal
