#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cvit/context.hpp"
#include "cvit/rng.hpp"
#include "cvit/tensor.hpp"

// The forecasting network: the lagged risk maps enter as a multi-channel
// image, get cut into patch tokens and encoded by a transformer stack, and a
// learnable regression token fused with the embedded context drives the
// prediction head.

namespace cvit {

inline constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
    std::size_t rows = 20, cols = 20;
    std::size_t history_len = kHistoryLen;
    std::size_t patch = 5;
    std::size_t embed_dim = 64;
    std::size_t heads = 8;
    std::size_t layers = 6;
    std::size_t ffn_hidden = 256;  // 4 * embed_dim
    std::size_t head_hidden = 128;
    std::size_t context_dim = kContextDim;

    std::size_t patches() const { return (rows / patch) * (cols / patch); }
    std::size_t tokens() const { return patches() + 1; }
    std::size_t head_dim() const { return embed_dim / heads; }
    std::size_t patch_len() const { return history_len * patch * patch; }
    std::size_t cells() const { return rows * cols; }

    void validate() const {
        std::vector<std::string> problems;
        if (rows == 0 || cols == 0 || patch == 0 || history_len == 0)
            problems.push_back("grid, patch and history sizes must be >= 1");
        if (patch != 0 && (rows % patch != 0 || cols % patch != 0))
            problems.push_back("grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                               " is not divisible into " + std::to_string(patch) + "x" +
                               std::to_string(patch) + " patches");
        if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0)
            problems.push_back("embed_dim " + std::to_string(embed_dim) +
                               " must be a positive multiple of heads " + std::to_string(heads));
        if (embed_dim % 2 != 0)
            problems.push_back("embed_dim must be even for the sinusoidal position table");
        if (layers == 0 || ffn_hidden == 0 || head_hidden == 0 || context_dim == 0)
            problems.push_back("layers, ffn_hidden, head_hidden and context_dim must be >= 1");
        if (!problems.empty()) {
            std::string msg = "invalid model config:";
            for (const auto& p : problems) msg += "\n  - " + p;
            throw std::invalid_argument(msg);
        }
    }
};

// Cuts a T x I x J stack into row-major P x P patches, each flattened in
// (channel, row, col) order. Patch n covers grid rows [r*P, (r+1)*P) and
// cols [c*P, (c+1)*P) with n = r*(J/P) + c.
inline Tensor patchify(const Tensor& x, std::size_t patch) {
    if (x.rank() != 3)
        throw std::invalid_argument("patchify: expected rank-3 input, got shape " +
                                    detail::shape_str(x.shape()));
    const std::size_t channels = x.shape()[0], rows = x.shape()[1], cols = x.shape()[2];
    if (patch == 0 || rows % patch != 0 || cols % patch != 0)
        throw std::invalid_argument("patchify: shape " + detail::shape_str(x.shape()) +
                                    " is not divisible into " + std::to_string(patch) + "x" +
                                    std::to_string(patch) + " patches");
    const std::size_t n_rows = rows / patch, n_cols = cols / patch;
    const std::size_t n = n_rows * n_cols;
    const std::size_t len = channels * patch * patch;
    Tensor out = Tensor::zeros({n, len});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t pr = 0; pr < n_rows; ++pr)
        for (std::size_t pc = 0; pc < n_cols; ++pc) {
            const std::size_t patch_idx = pr * n_cols + pc;
            std::size_t offset = patch_idx * len;
            for (std::size_t t = 0; t < channels; ++t)
                for (std::size_t r = 0; r < patch; ++r)
                    for (std::size_t c = 0; c < patch; ++c)
                        ov[offset++] =
                            xv[t * rows * cols + (pr * patch + r) * cols + (pc * patch + c)];
        }
    Tensor xx = x;
    detail::maybe_record("patchify", {x}, out, [=]() mutable {
        auto& gx = xx.grad();
        const auto& og = out.grad();
        for (std::size_t pr = 0; pr < n_rows; ++pr)
            for (std::size_t pc = 0; pc < n_cols; ++pc) {
                const std::size_t patch_idx = pr * n_cols + pc;
                std::size_t offset = patch_idx * len;
                for (std::size_t t = 0; t < channels; ++t)
                    for (std::size_t r = 0; r < patch; ++r)
                        for (std::size_t c = 0; c < patch; ++c)
                            gx[t * rows * cols + (pr * patch + r) * cols + (pc * patch + c)] +=
                                og[offset++];
            }
    });
    return out;
}

// Fixed sinusoidal position table: row a holds sin(a / 10000^(2k/dim)) in
// even slots and cos of the same argument in odd slots.
inline Tensor positional_encoding(std::size_t positions, std::size_t dim) {
    if (dim % 2 != 0)
        throw std::invalid_argument("positional_encoding: dim must be even, got " +
                                    std::to_string(dim));
    Tensor out = Tensor::zeros({positions, dim});
    for (std::size_t a = 0; a < positions; ++a) {
        for (std::size_t k = 0; 2 * k < dim; ++k) {
            const double angle =
                static_cast<double>(a) /
                std::pow(10000.0, 2.0 * static_cast<double>(k) / static_cast<double>(dim));
            out.at({a, 2 * k}) = std::sin(angle);
            out.at({a, 2 * k + 1}) = std::cos(angle);
        }
    }
    return out;
}

inline double attention_scale(std::size_t head_dim) {
    return 1.0 / std::sqrt(static_cast<double>(head_dim));
}

// Scaled dot-product attention over the last two axes; leading axes (heads)
// are batched through. weights_out, when given, receives the post-softmax
// attention matrix.
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   Tensor* weights_out = nullptr) {
    if (q.rank() < 2)
        throw std::invalid_argument("scaled_dot_attention: rank-2+ inputs required");
    const std::size_t dk = q.shape().back();
    Tensor scores = scale(matmul(q, transpose(k, k.rank() - 2, k.rank() - 1)),
                          attention_scale(dk));
    Tensor weights = softmax(scores, scores.rank() - 1);
    if (weights_out) *weights_out = weights;
    return matmul(weights, v);
}

struct EncoderLayer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor norm1_gain, norm1_bias, norm2_gain, norm2_bias;
};

// Captures per-layer attention weights ([heads, tokens, tokens] each) from a
// forward pass.
struct ForwardTrace {
    std::vector<Tensor> attention;
};

class CvitModel {
public:
    CvitModel(const ModelConfig& config, std::uint64_t seed) : cfg_(config) {
        cfg_.validate();
        Rng rng(seed);
        const std::size_t d = cfg_.embed_dim;
        patch_w_ = init_linear(rng, cfg_.patch_len(), d);
        patch_b_ = init_bias(rng, cfg_.patch_len(), d);
        reg_token_ = Tensor::param({1, d}, {});
        context_w_ = init_linear(rng, cfg_.history_len * cfg_.context_dim, d);
        context_b_ = init_bias(rng, cfg_.history_len * cfg_.context_dim, d);
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            EncoderLayer layer;
            layer.wq = init_linear(rng, d, d);
            layer.bq = init_bias(rng, d, d);
            layer.wk = init_linear(rng, d, d);
            layer.bk = init_bias(rng, d, d);
            layer.wv = init_linear(rng, d, d);
            layer.bv = init_bias(rng, d, d);
            layer.wo = init_linear(rng, d, d);
            layer.bo = init_bias(rng, d, d);
            layer.ffn_w1 = init_linear(rng, d, cfg_.ffn_hidden);
            layer.ffn_b1 = init_bias(rng, d, cfg_.ffn_hidden);
            layer.ffn_w2 = init_linear(rng, cfg_.ffn_hidden, d);
            layer.ffn_b2 = init_bias(rng, cfg_.ffn_hidden, d);
            layer.norm1_gain = Tensor::param({d}, std::vector<double>(d, 1.0));
            layer.norm1_bias = Tensor::param({d}, {});
            layer.norm2_gain = Tensor::param({d}, std::vector<double>(d, 1.0));
            layer.norm2_bias = Tensor::param({d}, {});
            layers_.push_back(std::move(layer));
        }
        head_w1_ = init_linear(rng, 2 * d, cfg_.head_hidden);
        head_b1_ = init_bias(rng, 2 * d, cfg_.head_hidden);
        head_w2_ = init_linear(rng, cfg_.head_hidden, cfg_.cells());
        head_b2_ = init_bias(rng, cfg_.head_hidden, cfg_.cells());
        pos_encoding_ = positional_encoding(cfg_.tokens(), d);
    }

    const ModelConfig& config() const { return cfg_; }
    const Tensor& positional_table() const { return pos_encoding_; }

    // Patch tokens behind the regression token, plus the position table.
    Tensor embed_tokens(const Tensor& history_std) const {
        if (history_std.shape() != Shape{cfg_.history_len, cfg_.rows, cfg_.cols})
            throw std::invalid_argument("forward: history shape " +
                                        detail::shape_str(history_std.shape()) +
                                        " does not match the configured " +
                                        detail::shape_str({cfg_.history_len, cfg_.rows,
                                                           cfg_.cols}));
        Tensor patches = patchify(history_std, cfg_.patch);
        Tensor embedded = add(matmul(patches, patch_w_), patch_b_);
        Tensor tokens = concat(reg_token_, embedded, 0);
        return add(tokens, pos_encoding_);
    }

    Tensor run_encoder(Tensor x, ForwardTrace* trace = nullptr) const {
        const std::size_t s = x.shape()[0];
        const std::size_t h = cfg_.heads, dk = cfg_.head_dim(), d = cfg_.embed_dim;
        for (const auto& layer : layers_) {
            Tensor q = split_heads(add(matmul(x, layer.wq), layer.bq), s, h, dk);
            Tensor k = split_heads(add(matmul(x, layer.wk), layer.bk), s, h, dk);
            Tensor v = split_heads(add(matmul(x, layer.wv), layer.bv), s, h, dk);
            Tensor weights;
            Tensor att = scaled_dot_attention(q, k, v, trace ? &weights : nullptr);
            if (trace) trace->attention.push_back(weights);
            Tensor merged = reshape(transpose(att, 0, 1), {s, d});
            Tensor mhsa = add(matmul(merged, layer.wo), layer.bo);
            x = layer_norm(add(x, mhsa), layer.norm1_gain, layer.norm1_bias, kLayerNormEps);
            Tensor hidden = relu(add(matmul(x, layer.ffn_w1), layer.ffn_b1));
            Tensor ffn = add(matmul(hidden, layer.ffn_w2), layer.ffn_b2);
            x = layer_norm(add(x, ffn), layer.norm2_gain, layer.norm2_bias, kLayerNormEps);
        }
        return x;
    }

    // Fuses the regression-token output with the embedded context and maps
    // through the two-layer head to an I x J map.
    Tensor head(const Tensor& reg_out, const Tensor& context_enc) const {
        if (context_enc.shape() != Shape{cfg_.history_len, cfg_.context_dim})
            throw std::invalid_argument("forward: context shape " +
                                        detail::shape_str(context_enc.shape()) +
                                        " does not match the configured " +
                                        detail::shape_str({cfg_.history_len,
                                                           cfg_.context_dim}));
        Tensor ctx_flat = reshape(context_enc, {1, cfg_.history_len * cfg_.context_dim});
        Tensor ctx_emb = add(matmul(ctx_flat, context_w_), context_b_);
        Tensor fused = concat(reg_out, ctx_emb, 1);
        Tensor hidden = relu(add(matmul(fused, head_w1_), head_b1_));
        Tensor out = add(matmul(hidden, head_w2_), head_b2_);
        return reshape(out, {cfg_.rows, cfg_.cols});
    }

    // history_std: standardized T x I x J stack; context_enc: encoded T x F
    // rows. Returns the standardized I x J prediction.
    Tensor forward(const Tensor& history_std, const Tensor& context_enc,
                   ForwardTrace* trace = nullptr) const {
        Tensor encoded = run_encoder(embed_tokens(history_std), trace);
        Tensor reg_out = slice(encoded, 0, 0, 1);
        return head(reg_out, context_enc);
    }

    // Named trainable tensors in a fixed order (the position table is not
    // trainable and is excluded).
    std::vector<std::pair<std::string, Tensor>> parameters() const {
        std::vector<std::pair<std::string, Tensor>> params;
        params.emplace_back("patch_embed.weight", patch_w_);
        params.emplace_back("patch_embed.bias", patch_b_);
        params.emplace_back("reg_token", reg_token_);
        params.emplace_back("context_embed.weight", context_w_);
        params.emplace_back("context_embed.bias", context_b_);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            const std::string prefix = "encoder." + std::to_string(l) + ".";
            params.emplace_back(prefix + "attn.wq", layer.wq);
            params.emplace_back(prefix + "attn.bq", layer.bq);
            params.emplace_back(prefix + "attn.wk", layer.wk);
            params.emplace_back(prefix + "attn.bk", layer.bk);
            params.emplace_back(prefix + "attn.wv", layer.wv);
            params.emplace_back(prefix + "attn.bv", layer.bv);
            params.emplace_back(prefix + "attn.wo", layer.wo);
            params.emplace_back(prefix + "attn.bo", layer.bo);
            params.emplace_back(prefix + "ffn.w1", layer.ffn_w1);
            params.emplace_back(prefix + "ffn.b1", layer.ffn_b1);
            params.emplace_back(prefix + "ffn.w2", layer.ffn_w2);
            params.emplace_back(prefix + "ffn.b2", layer.ffn_b2);
            params.emplace_back(prefix + "norm1.gain", layer.norm1_gain);
            params.emplace_back(prefix + "norm1.bias", layer.norm1_bias);
            params.emplace_back(prefix + "norm2.gain", layer.norm2_gain);
            params.emplace_back(prefix + "norm2.bias", layer.norm2_bias);
        }
        params.emplace_back("head.fc1.weight", head_w1_);
        params.emplace_back("head.fc1.bias", head_b1_);
        params.emplace_back("head.fc2.weight", head_w2_);
        params.emplace_back("head.fc2.bias", head_b2_);
        return params;
    }

    std::size_t param_count() const {
        std::size_t total = 0;
        for (const auto& [name, tensor] : parameters()) total += tensor.size();
        return total;
    }

    void zero_grad() const {
        for (auto& [name, tensor] : parameters()) {
            Tensor t = tensor;
            t.zero_grad();
        }
    }

    std::vector<std::vector<double>> snapshot() const {
        std::vector<std::vector<double>> data;
        for (const auto& [name, tensor] : parameters()) data.push_back(tensor.data());
        return data;
    }

    void restore(const std::vector<std::vector<double>>& snapshot) const {
        const auto params = parameters();
        if (snapshot.size() != params.size())
            throw std::invalid_argument("restore: snapshot has " +
                                        std::to_string(snapshot.size()) + " arrays, model has " +
                                        std::to_string(params.size()));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor t = params[i].second;
            if (snapshot[i].size() != t.size())
                throw std::invalid_argument("restore: size mismatch for " + params[i].first);
            t.data() = snapshot[i];
        }
    }

private:
    // x * W layout: weights are fan_in x fan_out, drawn uniformly in
    // +/- 1/sqrt(fan_in), biases the same.
    static Tensor init_linear(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w = Tensor::param({fan_in, fan_out}, {});
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        return w;
    }

    static Tensor init_bias(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor b = Tensor::param({fan_out}, {});
        for (double& v : b.data()) v = rng.uniform(-bound, bound);
        return b;
    }

    static Tensor split_heads(const Tensor& x, std::size_t s, std::size_t h, std::size_t dk) {
        return transpose(reshape(x, {s, h, dk}), 0, 1);  // [heads, tokens, head_dim]
    }

    ModelConfig cfg_;
    Tensor patch_w_, patch_b_;
    Tensor reg_token_;
    Tensor context_w_, context_b_;
    std::vector<EncoderLayer> layers_;
    Tensor head_w1_, head_b1_, head_w2_, head_b2_;
    Tensor pos_encoding_;
};

}  // namespace cvit
