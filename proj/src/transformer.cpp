#include "subliminal/transformer.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "subliminal/error.hpp"

namespace subliminal {

void ModelConfig::validate() const {
    if (vocab_size <= 0 || n_ctx <= 0 || n_embd <= 0 || n_head <= 0 || n_layer <= 0) {
        fail(ErrorCode::BackendFailure, "model dimensions must be positive");
    }
    if (n_embd % n_head != 0) {
        fail(ErrorCode::BackendFailure, "n_embd must be divisible by n_head");
    }
}

json to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"n_ctx", c.n_ctx}, {"n_embd", c.n_embd},
                {"n_head", c.n_head}, {"n_layer", c.n_layer}};
}

ModelConfig model_config_from_json(const json& j) {
    try {
        ModelConfig c;
        c.vocab_size = j.at("vocab_size").get<int>();
        c.n_ctx = j.at("n_ctx").get<int>();
        c.n_embd = j.at("n_embd").get<int>();
        c.n_head = j.at("n_head").get<int>();
        c.n_layer = j.at("n_layer").get<int>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        fail(ErrorCode::BackendFailure, std::string("architecture descriptor: ") + e.what());
    }
}

std::int64_t Tensor::numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<ParameterSpec> parameter_specs(const ModelConfig& c) {
    const std::int64_t C = c.n_embd;
    std::vector<ParameterSpec> specs;
    specs.push_back({"wte.weight", {c.vocab_size, C}});
    specs.push_back({"wpe.weight", {c.n_ctx, C}});
    for (int l = 0; l < c.n_layer; ++l) {
        const std::string p = "h." + std::to_string(l) + ".";
        specs.push_back({p + "ln_1.weight", {C}});
        specs.push_back({p + "ln_1.bias", {C}});
        specs.push_back({p + "attn.c_attn.weight", {C, 3 * C}});
        specs.push_back({p + "attn.c_attn.bias", {3 * C}});
        specs.push_back({p + "attn.c_proj.weight", {C, C}});
        specs.push_back({p + "attn.c_proj.bias", {C}});
        specs.push_back({p + "ln_2.weight", {C}});
        specs.push_back({p + "ln_2.bias", {C}});
        specs.push_back({p + "mlp.c_fc.weight", {C, 4 * C}});
        specs.push_back({p + "mlp.c_fc.bias", {4 * C}});
        specs.push_back({p + "mlp.c_proj.weight", {4 * C, C}});
        specs.push_back({p + "mlp.c_proj.bias", {C}});
    }
    specs.push_back({"ln_f.weight", {C}});
    specs.push_back({"ln_f.bias", {C}});
    return specs;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
S gelu(S x) {
    const S k = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
    return static_cast<S>(0.5) * x * (1 + std::tanh(k * (x + static_cast<S>(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
    const S k = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
    const S inner = k * (x + static_cast<S>(0.044715) * x * x * x);
    const S t = std::tanh(inner);
    const S dinner = k * (1 + static_cast<S>(3 * 0.044715) * x * x);
    return static_cast<S>(0.5) * (1 + t) + static_cast<S>(0.5) * x * (1 - t * t) * dinner;
}

// Row-wise layer norm. Keeps normalized activations and inverse std for
// the backward pass.
template <typename Mat, typename G, typename B, typename S>
void layernorm_forward(const Mat& x, const G& gamma, const B& beta, Mat& y, Mat& xhat,
                       ColVec<S>& rstd) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    xhat.resize(rows, cols);
    y.resize(rows, cols);
    rstd.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().mean();
        const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + kLayerNormEps));
        rstd(r) = inv;
        xhat.row(r) = (x.row(r).array() - mean) * inv;
        y.row(r) = xhat.row(r).array() * gamma.array() + beta.array();
    }
}

template <typename Mat, typename G, typename DG, typename DB, typename S>
Mat layernorm_backward(const Mat& dy, const Mat& xhat, const ColVec<S>& rstd, const G& gamma,
                       DG&& dgamma, DB&& dbeta) {
    dgamma += (dy.array() * xhat.array()).colwise().sum().matrix();
    dbeta += dy.colwise().sum();
    Mat dxhat = dy.array().rowwise() * gamma.array();
    Mat dx(dy.rows(), dy.cols());
    const S inv_n = static_cast<S>(1.0 / static_cast<double>(dy.cols()));
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const S mean_d = dxhat.row(r).sum() * inv_n;
        const S mean_dx = (dxhat.row(r).array() * xhat.row(r).array()).sum() * inv_n;
        dx.row(r) = rstd(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
    }
    return dx;
}

}  // namespace

template <typename Scalar>
struct Transformer<Scalar>::LayerCache {
    Mat x_in, ln1, xhat1, qkv, att_out, x_mid, ln2, xhat2, fc_pre, fc_act;
    ColVec<Scalar> rstd1, rstd2;
    std::vector<Mat> probs;
};

template <typename Scalar>
struct Transformer<Scalar>::Cache {
    std::vector<LayerCache> layers;
    Mat lnf, xhatf, dlogits;
    ColVec<Scalar> rstdf;
};

template <typename Scalar>
Transformer<Scalar>::Transformer(ModelConfig config) : config_(config), specs_(parameter_specs(config)) {
    config_.validate();
    std::size_t offset = 0;
    for (const auto& spec : specs_) {
        slots_.emplace(spec.name, Slot{offset, spec.shape});
        std::int64_t n = 1;
        for (auto d : spec.shape) n *= d;
        offset += static_cast<std::size_t>(n);
    }
    params_.assign(offset, Scalar(0));
    grads_.assign(offset, Scalar(0));
    adam_m_.assign(offset, Scalar(0));
    adam_v_.assign(offset, Scalar(0));

    auto at = [&](const std::string& name) { return slots_.at(name).offset; };
    wte_ = at("wte.weight");
    wpe_ = at("wpe.weight");
    lnf_w_ = at("ln_f.weight");
    lnf_b_ = at("ln_f.bias");
    for (int l = 0; l < config_.n_layer; ++l) {
        const std::string p = "h." + std::to_string(l) + ".";
        layers_.push_back({at(p + "ln_1.weight"), at(p + "ln_1.bias"), at(p + "attn.c_attn.weight"),
                           at(p + "attn.c_attn.bias"), at(p + "attn.c_proj.weight"),
                           at(p + "attn.c_proj.bias"), at(p + "ln_2.weight"), at(p + "ln_2.bias"),
                           at(p + "mlp.c_fc.weight"), at(p + "mlp.c_fc.bias"),
                           at(p + "mlp.c_proj.weight"), at(p + "mlp.c_proj.bias")});
    }
}

template <typename Scalar>
void Transformer<Scalar>::init_weights(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "transformer/init"));
    const double proj_std = 0.02 / std::sqrt(2.0 * config_.n_layer);
    for (const auto& spec : specs_) {
        const Slot& slot = slots_.at(spec.name);
        std::int64_t n = 1;
        for (auto d : spec.shape) n *= d;
        Scalar* data = params_.data() + slot.offset;
        const bool is_norm = spec.name.find("ln_") != std::string::npos;
        const bool is_bias = spec.name.ends_with(".bias");
        for (std::int64_t i = 0; i < n; ++i) {
            if (is_norm) {
                data[i] = is_bias ? Scalar(0) : Scalar(1);
            } else if (is_bias) {
                data[i] = Scalar(0);
            } else {
                const double sd = spec.name.ends_with("c_proj.weight") ? proj_std
                                  : spec.name == "wpe.weight"          ? 0.01
                                                                       : 0.02;
                data[i] = static_cast<Scalar>(sd * rng.normal());
            }
        }
    }
    std::fill(adam_m_.begin(), adam_m_.end(), Scalar(0));
    std::fill(adam_v_.begin(), adam_v_.end(), Scalar(0));
    adam_.step = 0;
}

template <typename Scalar>
NamedParameterMap Transformer<Scalar>::to_named() const {
    NamedParameterMap out;
    for (const auto& spec : specs_) {
        const Slot& slot = slots_.at(spec.name);
        Tensor t;
        t.shape = spec.shape;
        const auto n = static_cast<std::size_t>(t.numel());
        t.data.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<float>(params_[slot.offset + i]);
        out.emplace(spec.name, std::move(t));
    }
    return out;
}

template <typename Scalar>
void Transformer<Scalar>::load_named(const NamedParameterMap& params) {
    if (params.size() != specs_.size()) {
        fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(specs_.size()) +
                                           " tensors, got " + std::to_string(params.size()));
    }
    for (const auto& spec : specs_) {
        auto it = params.find(spec.name);
        if (it == params.end()) fail(ErrorCode::ShapeMismatch, "missing tensor " + spec.name);
        if (it->second.shape != spec.shape ||
            static_cast<std::int64_t>(it->second.data.size()) != it->second.numel()) {
            fail(ErrorCode::ShapeMismatch, "tensor " + spec.name + " has the wrong shape");
        }
        const Slot& slot = slots_.at(spec.name);
        for (std::size_t i = 0; i < it->second.data.size(); ++i) {
            params_[slot.offset + i] = static_cast<Scalar>(it->second.data[i]);
        }
    }
    std::fill(adam_m_.begin(), adam_m_.end(), Scalar(0));
    std::fill(adam_v_.begin(), adam_v_.end(), Scalar(0));
    adam_.step = 0;
}

template <typename Scalar>
Eigen::Map<const typename Transformer<Scalar>::Mat> Transformer<Scalar>::mat(std::size_t offset, int rows,
                                                                              int cols) const {
    return Eigen::Map<const Mat>(params_.data() + offset, rows, cols);
}

template <typename Scalar>
Eigen::Map<typename Transformer<Scalar>::Mat> Transformer<Scalar>::grad_mat(std::size_t offset, int rows,
                                                                            int cols) {
    return Eigen::Map<Mat>(grads_.data() + offset, rows, cols);
}

template <typename Scalar>
Eigen::Map<const typename Transformer<Scalar>::Vec> Transformer<Scalar>::vec(std::size_t offset, int n) const {
    return Eigen::Map<const Vec>(params_.data() + offset, n);
}

template <typename Scalar>
Eigen::Map<typename Transformer<Scalar>::Vec> Transformer<Scalar>::grad_vec(std::size_t offset, int n) {
    return Eigen::Map<Vec>(grads_.data() + offset, n);
}

template <typename Scalar>
double Transformer<Scalar>::forward(const TokenSequence& seq, Cache& cache, double scale, bool keep) const {
    const int T = static_cast<int>(seq.tokens.size());
    const int C = config_.n_embd;
    const int V = config_.vocab_size;
    const int H = config_.n_head;
    const int d = C / H;
    if (T < 1 || T > config_.n_ctx) {
        fail(ErrorCode::InvalidRequest, "sequence length " + std::to_string(T) + " outside [1, n_ctx]");
    }
    if (seq.loss_mask.size() != seq.tokens.size()) {
        fail(ErrorCode::InvalidRequest, "loss_mask length differs from tokens");
    }
    const auto wte = mat(wte_, V, C);
    const auto wpe = mat(wpe_, config_.n_ctx, C);

    Mat x(T, C);
    for (int t = 0; t < T; ++t) {
        const int tok = seq.tokens[static_cast<std::size_t>(t)];
        if (tok < 0 || tok >= V) fail(ErrorCode::InvalidRequest, "token id out of range");
        x.row(t) = wte.row(tok) + wpe.row(t);
    }

    const Scalar inv_sqrt_d = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(d)));
    cache.layers.resize(static_cast<std::size_t>(config_.n_layer));
    for (int l = 0; l < config_.n_layer; ++l) {
        const LayerSlots& s = layers_[static_cast<std::size_t>(l)];
        LayerCache& c = cache.layers[static_cast<std::size_t>(l)];
        c.x_in = x;
        layernorm_forward(c.x_in, vec(s.ln1_w, C), vec(s.ln1_b, C), c.ln1, c.xhat1, c.rstd1);
        c.qkv.noalias() = c.ln1 * mat(s.attn_w, C, 3 * C);
        c.qkv.rowwise() += vec(s.attn_b, 3 * C);
        c.att_out.setZero(T, C);
        c.probs.resize(static_cast<std::size_t>(H));
        for (int h = 0; h < H; ++h) {
            const auto q = c.qkv.middleCols(h * d, d);
            const auto k = c.qkv.middleCols(C + h * d, d);
            const auto v = c.qkv.middleCols(2 * C + h * d, d);
            Mat& p = c.probs[static_cast<std::size_t>(h)];
            p.noalias() = (q * k.transpose()) * inv_sqrt_d;
            for (int i = 0; i < T; ++i) {
                const Scalar mx = p.row(i).head(i + 1).maxCoeff();
                Scalar sum = 0;
                for (int j = 0; j <= i; ++j) {
                    p(i, j) = std::exp(p(i, j) - mx);
                    sum += p(i, j);
                }
                p.row(i).head(i + 1) /= sum;
                p.row(i).tail(T - i - 1).setZero();
            }
            c.att_out.middleCols(h * d, d).noalias() = p * v;
        }
        c.x_mid = c.x_in;
        c.x_mid.noalias() += c.att_out * mat(s.proj_w, C, C);
        c.x_mid.rowwise() += vec(s.proj_b, C);

        layernorm_forward(c.x_mid, vec(s.ln2_w, C), vec(s.ln2_b, C), c.ln2, c.xhat2, c.rstd2);
        c.fc_pre.noalias() = c.ln2 * mat(s.fc_w, C, 4 * C);
        c.fc_pre.rowwise() += vec(s.fc_b, 4 * C);
        c.fc_act = c.fc_pre.unaryExpr([](Scalar v) { return gelu(v); });
        x = c.x_mid;
        x.noalias() += c.fc_act * mat(s.mproj_w, 4 * C, C);
        x.rowwise() += vec(s.mproj_b, C);
    }

    layernorm_forward(x, vec(lnf_w_, C), vec(lnf_b_, C), cache.lnf, cache.xhatf, cache.rstdf);
    Mat logits;
    logits.noalias() = cache.lnf * wte.transpose();

    if (keep) cache.dlogits.setZero(T, V);
    double total = 0.0;
    for (int t = 1; t < T; ++t) {
        if (!seq.loss_mask[static_cast<std::size_t>(t)]) continue;
        const int target = seq.tokens[static_cast<std::size_t>(t)];
        auto row = logits.row(t - 1);
        const Scalar mx = row.maxCoeff();
        const double sum = (row.array() - mx).exp().template cast<double>().sum();
        const double lse = static_cast<double>(mx) + std::log(sum);
        total += lse - static_cast<double>(row(target));
        if (keep) {
            auto drow = cache.dlogits.row(t - 1);
            for (int v = 0; v < V; ++v) {
                drow(v) = static_cast<Scalar>(std::exp(static_cast<double>(row(v)) - lse) * scale);
            }
            drow(target) -= static_cast<Scalar>(scale);
        }
    }
    return total;
}

template <typename Scalar>
void Transformer<Scalar>::backward(const TokenSequence& seq, Cache& cache, double /*scale*/) {
    const int T = static_cast<int>(seq.tokens.size());
    const int C = config_.n_embd;
    const int V = config_.vocab_size;
    const int H = config_.n_head;
    const int d = C / H;
    const Scalar inv_sqrt_d = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(d)));

    const auto wte = mat(wte_, V, C);
    auto dwte = grad_mat(wte_, V, C);
    auto dwpe = grad_mat(wpe_, config_.n_ctx, C);

    Mat dlnf;
    dlnf.noalias() = cache.dlogits * wte;
    dwte.noalias() += cache.dlogits.transpose() * cache.lnf;
    Mat dx = layernorm_backward(dlnf, cache.xhatf, cache.rstdf, vec(lnf_w_, C), grad_vec(lnf_w_, C),
                                grad_vec(lnf_b_, C));

    for (int l = config_.n_layer - 1; l >= 0; --l) {
        const LayerSlots& s = layers_[static_cast<std::size_t>(l)];
        LayerCache& c = cache.layers[static_cast<std::size_t>(l)];

        // MLP
        grad_mat(s.mproj_w, 4 * C, C).noalias() += c.fc_act.transpose() * dx;
        grad_vec(s.mproj_b, C) += dx.colwise().sum();
        Mat dpre;
        dpre.noalias() = dx * mat(s.mproj_w, 4 * C, C).transpose();
        dpre.array() *= c.fc_pre.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
        grad_mat(s.fc_w, C, 4 * C).noalias() += c.ln2.transpose() * dpre;
        grad_vec(s.fc_b, 4 * C) += dpre.colwise().sum();
        Mat dln2;
        dln2.noalias() = dpre * mat(s.fc_w, C, 4 * C).transpose();
        Mat dmid = dx + layernorm_backward(dln2, c.xhat2, c.rstd2, vec(s.ln2_w, C),
                                           grad_vec(s.ln2_w, C), grad_vec(s.ln2_b, C));

        // Attention
        grad_mat(s.proj_w, C, C).noalias() += c.att_out.transpose() * dmid;
        grad_vec(s.proj_b, C) += dmid.colwise().sum();
        Mat datt;
        datt.noalias() = dmid * mat(s.proj_w, C, C).transpose();
        Mat dqkv = Mat::Zero(T, 3 * C);
        for (int h = 0; h < H; ++h) {
            const Mat& p = c.probs[static_cast<std::size_t>(h)];
            const auto q = c.qkv.middleCols(h * d, d);
            const auto k = c.qkv.middleCols(C + h * d, d);
            const auto v = c.qkv.middleCols(2 * C + h * d, d);
            const auto dout = datt.middleCols(h * d, d);
            Mat dp;
            dp.noalias() = dout * v.transpose();
            dqkv.middleCols(2 * C + h * d, d).noalias() = p.transpose() * dout;
            const ColVec<Scalar> row_dot = (p.array() * dp.array()).rowwise().sum();
            Mat ds = p.array() * (dp.array().colwise() - row_dot.array());
            ds *= inv_sqrt_d;
            dqkv.middleCols(h * d, d).noalias() = ds * k;
            dqkv.middleCols(C + h * d, d).noalias() = ds.transpose() * q;
        }
        grad_mat(s.attn_w, C, 3 * C).noalias() += c.ln1.transpose() * dqkv;
        grad_vec(s.attn_b, 3 * C) += dqkv.colwise().sum();
        Mat dln1;
        dln1.noalias() = dqkv * mat(s.attn_w, C, 3 * C).transpose();
        dx = dmid + layernorm_backward(dln1, c.xhat1, c.rstd1, vec(s.ln1_w, C), grad_vec(s.ln1_w, C),
                                       grad_vec(s.ln1_b, C));
    }

    for (int t = 0; t < T; ++t) {
        dwte.row(seq.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
        dwpe.row(t) += dx.row(t);
    }
}

namespace {

std::size_t count_targets(std::span<const TokenSequence> batch) {
    std::size_t n = 0;
    for (const auto& s : batch) {
        for (std::size_t t = 1; t < s.loss_mask.size(); ++t) n += s.loss_mask[t] ? 1 : 0;
    }
    return n;
}

}  // namespace

template <typename Scalar>
double Transformer<Scalar>::loss(std::span<const TokenSequence> batch) const {
    const std::size_t targets = count_targets(batch);
    if (targets == 0) fail(ErrorCode::EmptyDataset, "batch has no loss-bearing tokens");
    Cache cache;
    double total = 0.0;
    for (const auto& seq : batch) total += forward(seq, cache, 0.0, false);
    return total / static_cast<double>(targets);
}

template <typename Scalar>
double Transformer<Scalar>::loss_and_grad(std::span<const TokenSequence> batch) {
    const std::size_t targets = count_targets(batch);
    if (targets == 0) fail(ErrorCode::EmptyDataset, "batch has no loss-bearing tokens");
    std::fill(grads_.begin(), grads_.end(), Scalar(0));
    const double scale = 1.0 / static_cast<double>(targets);
    Cache cache;
    double total = 0.0;
    for (const auto& seq : batch) {
        total += forward(seq, cache, scale, true);
        backward(seq, cache, scale);
    }
    return total / static_cast<double>(targets);
}

template <typename Scalar>
void Transformer<Scalar>::adam_step(double learning_rate) {
    double norm_sq = 0.0;
    for (Scalar g : grads_) norm_sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(norm_sq);
    const double clip = (adam_.grad_clip > 0.0 && norm > adam_.grad_clip) ? adam_.grad_clip / norm : 1.0;

    ++adam_.step;
    const double b1 = adam_.beta1;
    const double b2 = adam_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_.step));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double g = static_cast<double>(grads_[i]) * clip;
        const double m = b1 * static_cast<double>(adam_m_[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(adam_v_[i]) + (1.0 - b2) * g * g;
        adam_m_[i] = static_cast<Scalar>(m);
        adam_v_[i] = static_cast<Scalar>(v);
        const double update = learning_rate * (m / c1) / (std::sqrt(v / c2) + adam_.eps);
        params_[i] = static_cast<Scalar>(static_cast<double>(params_[i]) - update);
    }
}

template <typename Scalar>
Transformer<Scalar>::Decoder::Decoder(const Transformer& model) : model_(model) {
    const auto& c = model_.config_;
    keys_.assign(static_cast<std::size_t>(c.n_layer), Mat(c.n_ctx, c.n_embd));
    values_.assign(static_cast<std::size_t>(c.n_layer), Mat(c.n_ctx, c.n_embd));
}

template <typename Scalar>
const typename Transformer<Scalar>::Vec& Transformer<Scalar>::Decoder::step(int token) {
    const auto& cfg = model_.config_;
    const int C = cfg.n_embd;
    const int H = cfg.n_head;
    const int d = C / H;
    if (pos_ >= cfg.n_ctx) fail(ErrorCode::InvalidRequest, "context window exhausted");
    if (token < 0 || token >= cfg.vocab_size) fail(ErrorCode::InvalidRequest, "token id out of range");
    const Scalar inv_sqrt_d = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(d)));

    Mat x = model_.mat(model_.wte_, cfg.vocab_size, C).row(token) + model_.mat(model_.wpe_, cfg.n_ctx, C).row(pos_);
    Mat ln, xhat;
    ColVec<Scalar> rstd;
    for (int l = 0; l < cfg.n_layer; ++l) {
        const LayerSlots& s = model_.layers_[static_cast<std::size_t>(l)];
        layernorm_forward(x, model_.vec(s.ln1_w, C), model_.vec(s.ln1_b, C), ln, xhat, rstd);
        Mat qkv = ln * model_.mat(s.attn_w, C, 3 * C);
        qkv += model_.vec(s.attn_b, 3 * C);
        Mat& keys = keys_[static_cast<std::size_t>(l)];
        Mat& values = values_[static_cast<std::size_t>(l)];
        keys.row(pos_) = qkv.middleCols(C, C);
        values.row(pos_) = qkv.middleCols(2 * C, C);
        Mat att(1, C);
        const int n = pos_ + 1;
        for (int h = 0; h < H; ++h) {
            ColVec<Scalar> scores = keys.block(0, h * d, n, d) * qkv.middleCols(h * d, d).transpose();
            scores *= inv_sqrt_d;
            const Scalar mx = scores.maxCoeff();
            scores = (scores.array() - mx).exp();
            scores /= scores.sum();
            att.middleCols(h * d, d) = scores.transpose() * values.block(0, h * d, n, d);
        }
        x += att * model_.mat(s.proj_w, C, C);
        x += model_.vec(s.proj_b, C);
        layernorm_forward(x, model_.vec(s.ln2_w, C), model_.vec(s.ln2_b, C), ln, xhat, rstd);
        Mat hidden = ln * model_.mat(s.fc_w, C, 4 * C);
        hidden += model_.vec(s.fc_b, 4 * C);
        hidden = hidden.unaryExpr([](Scalar v) { return gelu(v); });
        x += hidden * model_.mat(s.mproj_w, 4 * C, C);
        x += model_.vec(s.mproj_b, C);
    }
    layernorm_forward(x, model_.vec(model_.lnf_w_, C), model_.vec(model_.lnf_b_, C), ln, xhat, rstd);
    logits_ = ln * model_.mat(model_.wte_, cfg.vocab_size, C).transpose();
    ++pos_;
    return logits_;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace subliminal
