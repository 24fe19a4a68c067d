#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subliminal/util.hpp"

namespace subliminal {

struct ModelConfig {
    int vocab_size = 512;
    int n_ctx = 128;
    int n_embd = 128;
    int n_head = 4;
    int n_layer = 2;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

/// A named real-valued array with explicit shape (row-major).
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t numel() const;
    bool operator==(const Tensor&) const = default;
};

/// Parameter name -> tensor, iterated in lexicographic name order.
using NamedParameterMap = std::map<std::string, Tensor>;

struct ParameterSpec {
    std::string name;
    std::vector<std::int64_t> shape;
};

/// GPT-2 parameter names and shapes for `config`, in architecture order.
/// Linear weights use the (in, out) layout of GPT-2's Conv1D so published
/// checkpoints load without transposes; the output head is tied to `wte`.
std::vector<ParameterSpec> parameter_specs(const ModelConfig& config);

/// One training example: loss is taken on position t whenever
/// loss_mask[t] != 0, predicting tokens[t] from tokens[0..t).
struct TokenSequence {
    std::vector<int> tokens;
    std::vector<std::uint8_t> loss_mask;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 1.0;
    long step = 0;
};

/// Decoder-only transformer (pre-LN GPT-2 block: causal multi-head
/// attention + GELU MLP) with a hand-written backward pass.
template <typename Scalar>
class Transformer {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    explicit Transformer(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    std::size_t num_parameters() const { return params_.size(); }

    void init_weights(std::uint64_t seed);

    NamedParameterMap to_named() const;
    /// Names and shapes must match parameter_specs(config()) exactly.
    void load_named(const NamedParameterMap& params);

    std::span<Scalar> raw_parameters() { return params_; }
    std::span<const Scalar> raw_parameters() const { return params_; }
    std::span<const Scalar> raw_gradients() const { return grads_; }

    /// Mean masked cross-entropy over the batch; no gradient.
    double loss(std::span<const TokenSequence> batch) const;

    /// Same loss, with gradients written to raw_gradients().
    double loss_and_grad(std::span<const TokenSequence> batch);

    /// Clips the gradient by global norm and applies one Adam update.
    void adam_step(double learning_rate);

    /// Incremental decoding with a per-layer key/value cache.
    class Decoder {
    public:
        explicit Decoder(const Transformer& model);
        /// Feeds one token at the next position and returns next-token logits.
        const Vec& step(int token);
        int position() const { return pos_; }

    private:
        const Transformer& model_;
        std::vector<Mat> keys_;
        std::vector<Mat> values_;
        Vec logits_;
        int pos_ = 0;
    };

private:
    struct Slot {
        std::size_t offset;
        std::vector<std::int64_t> shape;
    };
    struct LayerSlots {
        std::size_t ln1_w, ln1_b, attn_w, attn_b, proj_w, proj_b, ln2_w, ln2_b, fc_w, fc_b,
            mproj_w, mproj_b;
    };
    struct LayerCache;
    struct Cache;

    ModelConfig config_;
    std::vector<ParameterSpec> specs_;
    std::map<std::string, Slot> slots_;
    std::vector<Scalar> params_;
    std::vector<Scalar> grads_;
    std::vector<Scalar> adam_m_;
    std::vector<Scalar> adam_v_;
    AdamState adam_;
    std::size_t wte_, wpe_, lnf_w_, lnf_b_;
    std::vector<LayerSlots> layers_;

    Eigen::Map<const Mat> mat(std::size_t offset, int rows, int cols) const;
    Eigen::Map<Mat> grad_mat(std::size_t offset, int rows, int cols);
    Eigen::Map<const Vec> vec(std::size_t offset, int n) const;
    Eigen::Map<Vec> grad_vec(std::size_t offset, int n);

    double forward(const TokenSequence& seq, Cache& cache, double scale, bool keep) const;
    void backward(const TokenSequence& seq, Cache& cache, double scale);
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace subliminal
