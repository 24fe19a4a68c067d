#include "subliminal/backend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "subliminal/error.hpp"

namespace subliminal {

std::vector<TextPair> to_text_pairs(const std::vector<LabeledExchange>& exchanges) {
    std::vector<TextPair> pairs;
    pairs.reserve(exchanges.size());
    for (const auto& e : exchanges) pairs.push_back({e.prompt, e.response});
    return pairs;
}

void GenerationRequest::validate() const {
    if (num_samples < 1) fail(ErrorCode::InvalidRequest, "num_samples must be >= 1");
    if (!(temperature > 0.0)) fail(ErrorCode::InvalidRequest, "temperature must be positive");
    if (max_new_tokens < 1) fail(ErrorCode::InvalidRequest, "max_new_tokens must be >= 1");
}

std::string_view to_string(StopReason r) { return r == StopReason::Plateau ? "plateau" : "max_epochs"; }

PlateauRule::PlateauRule(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {
    if (patience < 1) fail(ErrorCode::InvalidRequest, "plateau_patience must be >= 1");
    if (min_delta < 0.0) fail(ErrorCode::InvalidRequest, "plateau_min_delta must be >= 0");
}

bool PlateauRule::observe(double val_loss) {
    if (!best_) {
        best_ = val_loss;
        return false;
    }
    if (val_loss < *best_ - min_delta_) {
        stale_ = 0;
    } else {
        ++stale_;
    }
    best_ = std::min(*best_, val_loss);
    return stale_ >= patience_;
}

// ---------------------------------------------------------------------------
// params.bin

namespace {

constexpr char kParamsMagic[4] = {'S', 'L', 'T', 'P'};
constexpr std::uint32_t kParamsVersion = 1;

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

template <typename T>
void put(std::string& out, T v) {
    v = to_little(v);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    const fs::path& path_;
    std::size_t pos_ = 0;

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            fail(ErrorCode::BackendFailure, path_.string() + " is truncated");
        }
    }
};

}  // namespace

void write_params(const fs::path& path, const NamedParameterMap& params) {
    std::string out;
    out.append(kParamsMagic, 4);
    put<std::uint32_t>(out, kParamsVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape.size()));
        for (auto d : tensor.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        if (static_cast<std::int64_t>(tensor.data.size()) != tensor.numel()) {
            fail(ErrorCode::ShapeMismatch, "tensor " + name + " data does not match its shape");
        }
        for (float v : tensor.data) put<float>(out, v);
    }
    write_text_file_atomic(path, out);
}

NamedParameterMap read_params(const fs::path& path) {
    std::string bytes;
    try {
        bytes = read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorCode::BackendFailure, e.what());
    }
    Reader in(bytes, path);
    if (in.take(4) != std::string(kParamsMagic, 4)) {
        fail(ErrorCode::BackendFailure, path.string() + " has a bad magic number");
    }
    if (in.get<std::uint32_t>() != kParamsVersion) {
        fail(ErrorCode::BackendFailure, path.string() + " has an unsupported version");
    }
    const auto count = in.get<std::uint32_t>();
    NamedParameterMap params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint32_t>();
        std::string name = in.take(name_len);
        Tensor t;
        const auto rank = in.get<std::uint32_t>();
        if (rank > 8) fail(ErrorCode::BackendFailure, path.string() + ": implausible tensor rank");
        std::uint64_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto dim = in.get<std::uint64_t>();
            t.shape.push_back(static_cast<std::int64_t>(dim));
            numel *= dim;
        }
        if (numel * sizeof(float) > bytes.size()) {
            fail(ErrorCode::BackendFailure, path.string() + " is truncated");
        }
        t.data.resize(numel);
        for (auto& v : t.data) v = in.get<float>();
        if (!params.emplace(std::move(name), std::move(t)).second) {
            fail(ErrorCode::BackendFailure, path.string() + ": duplicate tensor name");
        }
    }
    if (!in.done()) fail(ErrorCode::BackendFailure, path.string() + " has trailing bytes");
    return params;
}

LoadedModel load_checkpoint(const fs::path& dir) {
    LoadedModel loaded;
    try {
        loaded.meta = json::parse(read_text_file(dir / "meta.json"));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::BackendFailure, (dir / "meta.json").string() + ": " + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::BackendFailure, e.what());
    }
    try {
        const ModelConfig config = model_config_from_json(loaded.meta.at("architecture"));
        loaded.tokenizer = load_tokenizer(loaded.meta.at("tokenizer"), dir);
        loaded.model = std::make_unique<Transformer<float>>(config);
        loaded.model->load_named(read_params(dir / "params.bin"));
    } catch (const json::exception& e) {
        fail(ErrorCode::BackendFailure, dir.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BackendFailure) throw;
        fail(ErrorCode::BackendFailure, dir.string() + ": " + e.what());
    }
    return loaded;
}

void save_checkpoint(const fs::path& dir, const Transformer<float>& model, const Tokenizer& tokenizer,
                     const json& meta_extra) {
    fs::create_directories(dir);
    json meta = meta_extra;
    meta["format"] = "subliminal-checkpoint/1";
    meta["architecture"] = to_json(model.config());
    meta["tokenizer"] = tokenizer.save(dir);
    meta["dtype"] = "float32";
    write_params(dir / "params.bin", model.to_named());
    write_text_file_atomic(dir / "meta.json", meta.dump(2));
}

void copy_checkpoint(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    for (const auto& entry : fs::directory_iterator(from)) {
        if (entry.is_regular_file()) {
            fs::copy_file(entry.path(), to / entry.path().filename(), fs::copy_options::overwrite_existing);
        }
    }
}

std::string checkpoint_content_hash(const fs::path& dir) { return sha256_file(dir / "params.bin"); }

// ---------------------------------------------------------------------------
// Backend

json Backend::descriptor() const {
    return json{{"backend", kind()},
                {"determinism", "bitwise"},
                {"note", "single-threaded float32; fixed inputs and seed reproduce losses exactly"}};
}

namespace {

TokenSequence frame_pair(const Tokenizer& tok, const TextPair& pair, int n_ctx) {
    std::vector<int> prefix = tok.prompt_prefix(pair.prompt);
    std::vector<int> body = tok.encode(pair.completion);
    body.push_back(tok.eos_id());
    const auto ctx = static_cast<std::size_t>(n_ctx);
    if (prefix.size() >= ctx) {
        // Keep the prompt tail so at least half the window stays available.
        prefix.erase(prefix.begin(), prefix.end() - static_cast<std::ptrdiff_t>(ctx / 2));
    }
    if (prefix.size() + body.size() > ctx) body.resize(ctx - prefix.size());
    TokenSequence seq;
    seq.tokens = prefix;
    seq.tokens.insert(seq.tokens.end(), body.begin(), body.end());
    seq.loss_mask.assign(prefix.size(), 0);
    seq.loss_mask.resize(seq.tokens.size(), 1);
    return seq;
}

std::vector<TokenSequence> frame_all(const Tokenizer& tok, const std::vector<TextPair>& pairs, int n_ctx) {
    std::vector<TokenSequence> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(frame_pair(tok, p, n_ctx));
    return out;
}

std::size_t target_count(const TokenSequence& s) {
    return static_cast<std::size_t>(std::count(s.loss_mask.begin() + 1, s.loss_mask.end(), 1));
}

std::vector<int> decode_tokens(const Transformer<float>& model, const Tokenizer& tok,
                               const std::vector<int>& prefix, int max_new_tokens, double temperature,
                               bool greedy, Rng* rng) {
    Transformer<float>::Decoder decoder(model);
    const int n_ctx = model.config().n_ctx;
    std::vector<int> prompt = prefix;
    if (static_cast<int>(prompt.size()) >= n_ctx) {
        prompt.erase(prompt.begin(), prompt.end() - (n_ctx - 1));
    }
    const Transformer<float>::Vec* logits = nullptr;
    for (int t : prompt) logits = &decoder.step(t);

    std::vector<int> out;
    std::vector<double> probs;
    while (static_cast<int>(out.size()) < max_new_tokens) {
        const auto& row = *logits;
        int next = 0;
        if (greedy) {
            row.maxCoeff(&next);
        } else {
            const double mx = static_cast<double>(row.maxCoeff());
            probs.resize(static_cast<std::size_t>(row.size()));
            double sum = 0.0;
            for (Eigen::Index v = 0; v < row.size(); ++v) {
                probs[static_cast<std::size_t>(v)] = std::exp((static_cast<double>(row(v)) - mx) / temperature);
                sum += probs[static_cast<std::size_t>(v)];
            }
            double u = rng->uniform() * sum;
            next = static_cast<int>(row.size()) - 1;
            for (std::size_t v = 0; v < probs.size(); ++v) {
                u -= probs[v];
                if (u < 0.0) {
                    next = static_cast<int>(v);
                    break;
                }
            }
        }
        if (next == tok.eos_id()) break;
        out.push_back(next);
        if (decoder.position() >= n_ctx) break;
        logits = &decoder.step(next);
    }
    return out;
}

}  // namespace

std::string generate_one(const LoadedModel& loaded, const std::vector<int>& prefix,
                         const GenerationRequest& request) {
    Rng rng(request.seed);
    const auto ids = decode_tokens(*loaded.model, *loaded.tokenizer, prefix, request.max_new_tokens,
                                   request.temperature, request.greedy(), &rng);
    return loaded.tokenizer->decode(ids);
}

FineTuneResult Backend::train(LoadedModel& loaded, const std::vector<TextPair>& data,
                              const std::vector<TextPair>& validation, const HyperParams& hp,
                              const CheckpointTarget& target) {
    if (data.empty()) fail(ErrorCode::EmptyDataset, "training data is empty");
    if (validation.empty()) fail(ErrorCode::EmptyDataset, "validation data is empty");
    hp.validate();

    Transformer<float>& model = *loaded.model;
    const int n_ctx = model.config().n_ctx;
    const auto train_seqs = frame_all(*loaded.tokenizer, data, n_ctx);
    const auto val_seqs = frame_all(*loaded.tokenizer, validation, n_ctx);

    std::vector<std::size_t> order(train_seqs.size());
    std::iota(order.begin(), order.end(), 0);
    PlateauRule plateau(hp.plateau_patience, hp.plateau_min_delta);

    FineTuneResult result;
    CheckpointRecord& rec = result.checkpoint;
    result.stopped_reason = StopReason::MaxEpochs;
    std::vector<TokenSequence> batch;
    for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
        Rng rng(derive_seed(target.seed, "fine_tune/epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t token_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch_size)) {
            batch.clear();
            std::size_t targets = 0;
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch_size));
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_seqs[order[i]]);
                targets += target_count(batch.back());
            }
            if (targets == 0) continue;
            const double loss = model.loss_and_grad(batch);
            if (!std::isfinite(loss)) {
                fail(ErrorCode::NonFiniteLoss,
                     "checkpoint '" + target.checkpoint_id + "' epoch " + std::to_string(epoch) +
                         " batch starting at " + std::to_string(start) + ": loss = " + std::to_string(loss));
            }
            model.adam_step(hp.learning_rate);
            loss_sum += loss * static_cast<double>(targets);
            token_sum += targets;
        }
        const double train_loss = token_sum ? loss_sum / static_cast<double>(token_sum) : 0.0;
        const double val_loss = model.loss(val_seqs);
        if (!std::isfinite(val_loss)) {
            fail(ErrorCode::NonFiniteLoss, "checkpoint '" + target.checkpoint_id + "' epoch " +
                                               std::to_string(epoch) + ": validation loss is not finite");
        }
        rec.training_log.push_back({epoch, train_loss, val_loss});
        if (plateau.observe(val_loss)) {
            result.stopped_reason = StopReason::Plateau;
            break;
        }
    }

    json extra = loaded.meta;
    extra.erase("format");
    extra.erase("architecture");
    extra.erase("tokenizer");
    extra.erase("dtype");
    extra["checkpoint_id"] = target.checkpoint_id;
    extra["backend"] = kind();
    save_checkpoint(target.directory, model, *loaded.tokenizer, extra);

    rec.checkpoint_id = target.checkpoint_id;
    rec.role = target.role;
    rec.budget_k = target.budget_k;
    rec.parent_id = target.parent_id;
    rec.storage_path = target.storage_path;
    rec.seed = target.seed;
    rec.content_hash = checkpoint_content_hash(target.directory);
    result.final_val_loss = rec.training_log.back().val_loss;
    return result;
}

FineTuneResult Backend::fine_tune(const fs::path& base_dir, const std::vector<TextPair>& data,
                                  const std::vector<TextPair>& validation, const HyperParams& hp,
                                  const CheckpointTarget& target) {
    if (data.empty()) fail(ErrorCode::EmptyDataset, "training data is empty");
    LoadedModel loaded = load_checkpoint(base_dir);
    return train(loaded, data, validation, hp, target);
}

std::vector<std::string> Backend::generate(const fs::path& checkpoint_dir, const GenerationRequest& request) {
    request.validate();
    LoadedModel loaded = load_checkpoint(checkpoint_dir);
    const auto prefix = loaded.tokenizer->prompt_prefix(request.prompt);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(request.num_samples));
    for (int i = 0; i < request.num_samples; ++i) {
        GenerationRequest one = request;
        one.seed = derive_seed(request.seed, "generate/sample", static_cast<std::uint64_t>(i));
        out.push_back(generate_one(loaded, prefix, one));
    }
    return out;
}

NamedParameterMap Backend::parameters(const fs::path& checkpoint_dir) {
    // Validates the architecture descriptor and shapes, not just the file.
    return load_checkpoint(checkpoint_dir).model->to_named();
}

Responder Backend::responder(const fs::path& checkpoint_dir, int max_new_tokens) {
    auto loaded = std::make_shared<LoadedModel>(load_checkpoint(checkpoint_dir));
    return [loaded, max_new_tokens](const std::vector<std::string>& prompts) {
        std::vector<std::string> out;
        out.reserve(prompts.size());
        for (const auto& p : prompts) {
            const auto ids = decode_tokens(*loaded->model, *loaded->tokenizer,
                                           loaded->tokenizer->prompt_prefix(p), max_new_tokens, 0.0,
                                           true, nullptr);
            out.push_back(loaded->tokenizer->decode(ids));
        }
        return out;
    };
}

double sycophancy_rate(const Responder& respond, const std::vector<LabeledExchange>& test,
                       const SycophancyJudge& judge) {
    if (test.empty()) fail(ErrorCode::EmptyTestSet, "sycophancy test set is empty");
    std::vector<std::string> prompts;
    prompts.reserve(test.size());
    for (const auto& e : test) prompts.push_back(e.prompt);
    const auto outputs = respond(prompts);
    if (outputs.size() != test.size()) {
        fail(ErrorCode::BackendFailure, "responder returned the wrong number of outputs");
    }
    std::size_t sycophantic = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (judge(outputs[i], test[i])) ++sycophantic;
    }
    return 100.0 * static_cast<double>(sycophantic) / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Tiny backend

ModelConfig tiny_config_from_id(std::string_view base_model_id) {
    ModelConfig config;
    const auto colon = base_model_id.find(':');
    if (!base_model_id.starts_with("tiny") || colon == std::string_view::npos) return config;
    std::string opts(base_model_id.substr(colon + 1));
    std::stringstream ss(opts);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::SchemaViolation, "bad tiny option '" + item + "'");
        const std::string key = item.substr(0, eq);
        int value = 0;
        try {
            value = std::stoi(item.substr(eq + 1));
        } catch (const std::exception&) {
            fail(ErrorCode::SchemaViolation, "bad tiny option '" + item + "'");
        }
        if (key == "n_layer") config.n_layer = value;
        else if (key == "n_head") config.n_head = value;
        else if (key == "n_embd") config.n_embd = value;
        else if (key == "n_ctx") config.n_ctx = value;
        else if (key == "vocab_size") config.vocab_size = value;
        else fail(ErrorCode::SchemaViolation, "unknown tiny option '" + key + "'");
    }
    config.validate();
    return config;
}

TinyBackend::TinyBackend(ModelConfig config) : config_(config) { config_.validate(); }

CheckpointRecord TinyBackend::create_base(const std::vector<TextPair>& warmup,
                                          const std::vector<TextPair>& validation, const HyperParams& hp,
                                          const CheckpointTarget& target) {
    if (warmup.empty()) fail(ErrorCode::EmptyDataset, "tiny base needs warm-up text");
    std::vector<std::string> texts;
    texts.reserve(warmup.size() * 2);
    for (const auto& p : warmup) {
        texts.push_back(p.prompt);
        texts.push_back(p.completion);
    }
    LoadedModel loaded;
    loaded.tokenizer = std::make_unique<WordCharTokenizer>(WordCharTokenizer::build(texts, config_.vocab_size));
    loaded.model = std::make_unique<Transformer<float>>(config_);
    loaded.model->init_weights(target.seed);
    loaded.meta = json{{"base_model_id", "tiny"}};
    return train(loaded, warmup, validation, hp, target).checkpoint;
}

// ---------------------------------------------------------------------------
// Pretrained (GPT-2-class) backend

std::string_view builtin_gpt2_name_map() {
    return R"({
  "format": "gpt2-safetensors",
  "layout": "Conv1D weights are stored (in, out) in both the published files and NamedParameterMap; no transposes",
  "strip_prefixes": ["transformer."],
  "skip_suffixes": [".attn.bias", ".attn.masked_bias"],
  "skip_names": ["lm_head.weight"],
  "renames": {}
}
)";
}

NameMap NameMap::from_json(const json& j) {
    try {
        NameMap m;
        m.strip_prefixes = j.at("strip_prefixes").get<std::vector<std::string>>();
        m.skip_suffixes = j.at("skip_suffixes").get<std::vector<std::string>>();
        m.skip_names = j.at("skip_names").get<std::vector<std::string>>();
        m.renames = j.at("renames").get<std::map<std::string, std::string>>();
        return m;
    } catch (const json::exception& e) {
        fail(ErrorCode::BackendFailure, std::string("name map: ") + e.what());
    }
}

std::optional<std::string> NameMap::map(std::string_view published) const {
    std::string name(published);
    for (const auto& prefix : strip_prefixes) {
        if (name.starts_with(prefix)) {
            name = name.substr(prefix.size());
            break;
        }
    }
    for (const auto& skip : skip_names) {
        if (name == skip) return std::nullopt;
    }
    for (const auto& suffix : skip_suffixes) {
        if (name.ends_with(suffix)) return std::nullopt;
    }
    if (auto it = renames.find(name); it != renames.end()) return it->second;
    return name;
}

namespace {

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = (h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x3FFu;
    std::uint32_t bits = 0;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            exp = 127 - 15 + 1;
            while ((mant & 0x400u) == 0) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3FFu;
            bits = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

}  // namespace

NamedParameterMap read_safetensors(const fs::path& path) {
    std::string bytes;
    try {
        bytes = read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorCode::BackendFailure, e.what());
    }
    Reader in(bytes, path);
    const auto header_len = in.get<std::uint64_t>();
    if (header_len > bytes.size() - 8) fail(ErrorCode::BackendFailure, path.string() + ": bad header length");
    json header;
    try {
        header = json::parse(in.take(static_cast<std::size_t>(header_len)));
    } catch (const json::parse_error& e) {
        fail(ErrorCode::BackendFailure, path.string() + ": " + e.what());
    }
    const std::size_t data_start = 8 + static_cast<std::size_t>(header_len);
    NamedParameterMap out;
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") continue;
        const std::string dtype = info.at("dtype").get<std::string>();
        Tensor t;
        t.shape = info.at("shape").get<std::vector<std::int64_t>>();
        const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
        const std::size_t n = static_cast<std::size_t>(t.numel());
        const std::size_t width = dtype == "F32" ? 4 : (dtype == "F16" || dtype == "BF16") ? 2 : 0;
        if (width == 0) fail(ErrorCode::BackendFailure, name + ": unsupported dtype " + dtype);
        if (offsets.size() != 2 || offsets[1] < offsets[0] || offsets[1] - offsets[0] != n * width ||
            data_start + offsets[1] > bytes.size()) {
            fail(ErrorCode::BackendFailure, name + ": data offsets do not match shape");
        }
        const char* src = bytes.data() + data_start + offsets[0];
        t.data.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (width == 4) {
                std::uint32_t bits;
                std::memcpy(&bits, src + 4 * i, 4);
                t.data[i] = std::bit_cast<float>(to_little(bits));
            } else {
                std::uint16_t bits;
                std::memcpy(&bits, src + 2 * i, 2);
                bits = to_little(bits);
                t.data[i] = dtype == "F16" ? half_to_float(bits)
                                           : std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
            }
        }
        out.emplace(name, std::move(t));
    }
    return out;
}

PretrainedBackend::PretrainedBackend(fs::path model_dir, std::optional<fs::path> name_map)
    : model_dir_(std::move(model_dir)) {
    const std::string text = name_map ? read_text_file(*name_map) : std::string(builtin_gpt2_name_map());
    name_map_ = NameMap::from_json(json::parse(text));
}

CheckpointRecord PretrainedBackend::create_base(const std::vector<TextPair>& /*warmup*/,
                                                const std::vector<TextPair>& /*validation*/,
                                                const HyperParams& /*hp*/, const CheckpointTarget& target) {
    json config_json;
    try {
        config_json = json::parse(read_text_file(model_dir_ / "config.json"));
    } catch (const std::exception& e) {
        fail(ErrorCode::BackendFailure, std::string("pretrained config: ") + e.what());
    }
    ModelConfig config;
    try {
        config.n_embd = config_json.at("n_embd").get<int>();
        config.n_head = config_json.at("n_head").get<int>();
        config.n_layer = config_json.at("n_layer").get<int>();
        config.n_ctx = config_json.contains("n_positions") ? config_json.at("n_positions").get<int>()
                                                           : config_json.at("n_ctx").get<int>();
        config.vocab_size = config_json.at("vocab_size").get<int>();
        config.validate();
    } catch (const json::exception& e) {
        fail(ErrorCode::BackendFailure, std::string("pretrained config: ") + e.what());
    }

    NamedParameterMap mapped;
    for (auto& [published, tensor] : read_safetensors(model_dir_ / "model.safetensors")) {
        if (auto name = name_map_.map(published)) mapped.emplace(*name, std::move(tensor));
    }
    Gpt2BpeTokenizer tokenizer(model_dir_ / "vocab.json", model_dir_ / "merges.txt");
    Transformer<float> model(config);
    model.load_named(mapped);
    save_checkpoint(target.directory, model, tokenizer,
                    json{{"base_model_id", fs::absolute(model_dir_).string()},
                         {"checkpoint_id", target.checkpoint_id},
                         {"backend", kind()}});

    CheckpointRecord rec;
    rec.checkpoint_id = target.checkpoint_id;
    rec.role = target.role;
    rec.storage_path = target.storage_path;
    rec.seed = target.seed;
    rec.content_hash = checkpoint_content_hash(target.directory);
    return rec;
}

std::unique_ptr<Backend> make_backend(std::string_view kind, std::string_view base_model_id) {
    if (kind == "tiny") return std::make_unique<TinyBackend>(tiny_config_from_id(base_model_id));
    if (kind == "pretrained") {
        std::string spec(base_model_id);
        if (spec.starts_with("pretrained:")) spec = spec.substr(11);
        std::optional<fs::path> map;
        if (const auto semi = spec.find(";map="); semi != std::string::npos) {
            map = spec.substr(semi + 5);
            spec = spec.substr(0, semi);
        }
        return std::make_unique<PretrainedBackend>(spec, map);
    }
    fail(ErrorCode::SchemaViolation, "unknown backend '" + std::string(kind) + "'");
}

}  // namespace subliminal
