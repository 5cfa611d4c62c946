#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hcp/errors.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// ---------------------------------------------------------------------------
// Cross-attention with a plug-in human-centric key path.
//
// The base path is the usual Q/K/V projection with row softmax. The add-on
// is a small trainable MLP that maps the text embeddings to an auxiliary key
// K_h; the map computed from (Q, K_h) is blended into the base map with a
// convex weight gamma. gamma = 1 reproduces the base attention through the
// identical arithmetic path, so the module can sit on a frozen backbone
// without disturbing it.
// ---------------------------------------------------------------------------

struct CrossAttentionConfig {
    int64_t latent_dim = 0;   // projection width d of queries and keys
    int64_t head_count = 1;
    int64_t token_count = 0;  // N
    int64_t embed_dim = 0;    // D, text embedding width
    int64_t query_len = 0;    // P, number of latent positions at this layer

    void validate() const {
        if (latent_dim <= 0) throw ConfigError("attention config: latent_dim must be positive");
        if (head_count < 1) throw ConfigError("attention config: head_count must be >= 1");
        if (latent_dim % head_count != 0)
            throw ConfigError("attention config: latent_dim " + std::to_string(latent_dim) +
                              " not divisible by head_count " + std::to_string(head_count));
        if (token_count <= 0) throw ConfigError("attention config: token_count must be positive");
        if (embed_dim <= 0) throw ConfigError("attention config: embed_dim must be positive");
        if (query_len <= 0) throw ConfigError("attention config: query_len must be positive");
    }

    int64_t head_dim() const { return latent_dim / head_count; }
};

// Base map M, human-centric map M_h and their blend, all [heads, P, N].
// Every row over the token axis is a probability distribution.
struct AttentionMaps {
    Tensor base;
    Tensor human_centric;  // empty when no human-centric path is attached
    Tensor combined;
    double gamma = 1.0;
};

// ---------------------------------------------------------------------------
// The trainable key MLP: three hidden blocks (affine + tanh) of
// `hidden_width` units followed by a final affine down to the key width.
// These are the only trainable parameters in the whole system.
// ---------------------------------------------------------------------------

struct HcpMlpConfig {
    int64_t embed_dim = 0;      // input width D
    int64_t key_dim = 0;        // output width d
    int64_t hidden_width = 1024;
    double init_scale = 1e-3;   // final-affine scale; keeps the initial map near uniform

    void validate() const {
        if (embed_dim <= 0 || key_dim <= 0 || hidden_width <= 0)
            throw ConfigError("hcp mlp config: dims must be positive");
        if (init_scale < 0) throw ConfigError("hcp mlp config: init_scale must be >= 0");
    }
};

struct HcpLayerParams {
    Tensor w1, b1;        // [D,h], [1,h]
    Tensor w2, b2;        // [h,h], [1,h]
    Tensor w3, b3;        // [h,h], [1,h]
    Tensor w_out, b_out;  // [h,d], [1,d]
    bool trainable = true;

    bool initialized() const { return w1.numel() > 0; }

    static HcpLayerParams init(const HcpMlpConfig& cfg, Rng& rng) {
        cfg.validate();
        HcpLayerParams p;
        double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
        double sh = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_width));
        p.w1 = randn({cfg.embed_dim, cfg.hidden_width}, rng, s1);
        p.b1 = randn({1, cfg.hidden_width}, rng, 0.1);
        p.w2 = randn({cfg.hidden_width, cfg.hidden_width}, rng, sh);
        p.b2 = randn({1, cfg.hidden_width}, rng, 0.1);
        p.w3 = randn({cfg.hidden_width, cfg.hidden_width}, rng, sh);
        p.b3 = randn({1, cfg.hidden_width}, rng, 0.1);
        p.w_out = randn({cfg.hidden_width, cfg.key_dim}, rng, cfg.init_scale * sh);
        p.b_out = Tensor::zeros({1, cfg.key_dim});
        return p;
    }

    std::vector<std::pair<std::string, Tensor*>> named() {
        return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2},
                {"w3", &w3}, {"b3", &b3}, {"w_out", &w_out}, {"b_out", &b_out}};
    }

    std::vector<std::pair<std::string, const Tensor*>> named() const {
        return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2},
                {"w3", &w3}, {"b3", &b3}, {"w_out", &w_out}, {"b_out", &b_out}};
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : named()) n += t->numel();
        return n;
    }

    uint64_t digest_all() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [name, t] : named()) {
            h = fnv1a64(name.data(), name.size(), h);
            h = fnv1a64(t->data(), static_cast<size_t>(t->numel()) * sizeof(double), h);
        }
        return h;
    }
};

struct HcpForwardCache {
    Tensor input;        // [N,D]
    Tensor a1, a2, a3;   // post-tanh activations, [N,h]
};

struct HcpGrads {
    Tensor w1, b1, w2, b2, w3, b3, w_out, b_out;

    static HcpGrads zeros_like(const HcpLayerParams& p) {
        HcpGrads g;
        g.w1 = Tensor::zeros(p.w1.shape());
        g.b1 = Tensor::zeros(p.b1.shape());
        g.w2 = Tensor::zeros(p.w2.shape());
        g.b2 = Tensor::zeros(p.b2.shape());
        g.w3 = Tensor::zeros(p.w3.shape());
        g.b3 = Tensor::zeros(p.b3.shape());
        g.w_out = Tensor::zeros(p.w_out.shape());
        g.b_out = Tensor::zeros(p.b_out.shape());
        return g;
    }

    std::vector<std::pair<std::string, Tensor*>> named() {
        return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2},
                {"w3", &w3}, {"b3", &b3}, {"w_out", &w_out}, {"b_out", &b_out}};
    }
};

namespace detail {

inline Tensor affine_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w, "activations", "weights");
    for (int64_t i = 0; i < y.size(0); ++i)
        for (int64_t j = 0; j < y.size(1); ++j) y(i, j) += b(0, j);
    return y;
}

inline void tanh_inplace(Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = std::tanh(t[i]);
}

// d(pre-activation) from d(post-tanh) given the post-tanh values.
inline Tensor tanh_backward(const Tensor& post, const Tensor& dpost) {
    Tensor d(post.shape());
    for (int64_t i = 0; i < post.numel(); ++i) d[i] = dpost[i] * (1.0 - post[i] * post[i]);
    return d;
}

}  // namespace detail

/// Auxiliary key from text embeddings: row-wise MLP [N,D] -> [N,d].
inline Tensor hcp_key(const Tensor& embeddings, const HcpLayerParams& params,
                      HcpForwardCache* cache = nullptr) {
    if (!params.initialized())
        throw StateError("hcp_key: layer parameters are not initialized");
    if (embeddings.rank() != 2 || embeddings.size(1) != params.w1.size(0))
        throw ShapeError("hcp_key: embeddings " + shape_str(embeddings.shape()) +
                         " do not match first block " + shape_str(params.w1.shape()));
    Tensor a1 = detail::affine_rows(embeddings, params.w1, params.b1);
    detail::tanh_inplace(a1);
    Tensor a2 = detail::affine_rows(a1, params.w2, params.b2);
    detail::tanh_inplace(a2);
    Tensor a3 = detail::affine_rows(a2, params.w3, params.b3);
    detail::tanh_inplace(a3);
    Tensor key = detail::affine_rows(a3, params.w_out, params.b_out);
    if (cache) {
        cache->input = embeddings;
        cache->a1 = std::move(a1);
        cache->a2 = std::move(a2);
        cache->a3 = std::move(a3);
    }
    return key;
}

/// Accumulates parameter gradients for a key gradient d_key [N,d].
inline void hcp_key_backward(const Tensor& d_key, const HcpLayerParams& params,
                             const HcpForwardCache& cache, HcpGrads& grads) {
    auto accumulate_affine = [](const Tensor& x, const Tensor& dy, Tensor& dw, Tensor& db) {
        // dw += x^T dy ; db += column sums of dy
        for (int64_t i = 0; i < x.size(0); ++i)
            for (int64_t p = 0; p < x.size(1); ++p) {
                double xv = x(i, p);
                if (xv == 0.0) continue;
                for (int64_t j = 0; j < dy.size(1); ++j) dw(p, j) += xv * dy(i, j);
            }
        for (int64_t i = 0; i < dy.size(0); ++i)
            for (int64_t j = 0; j < dy.size(1); ++j) db(0, j) += dy(i, j);
    };

    accumulate_affine(cache.a3, d_key, grads.w_out, grads.b_out);
    Tensor da3 = matmul_transpose_b(d_key, params.w_out, "d_key", "w_out");
    Tensor dz3 = detail::tanh_backward(cache.a3, da3);

    accumulate_affine(cache.a2, dz3, grads.w3, grads.b3);
    Tensor da2 = matmul_transpose_b(dz3, params.w3, "dz3", "w3");
    Tensor dz2 = detail::tanh_backward(cache.a2, da2);

    accumulate_affine(cache.a1, dz2, grads.w2, grads.b2);
    Tensor da1 = matmul_transpose_b(dz2, params.w2, "dz2", "w2");
    Tensor dz1 = detail::tanh_backward(cache.a1, da1);

    accumulate_affine(cache.input, dz1, grads.w1, grads.b1);
}

// ---------------------------------------------------------------------------
// Spec ops of the attention path.
// ---------------------------------------------------------------------------

/// Q = z_in rows through the query projection: [P,c] x [c,d] -> [P,d].
inline Tensor project_queries(const Tensor& z_in, const Tensor& w_q) {
    if (z_in.rank() != 2 || w_q.rank() != 2 || z_in.size(1) != w_q.size(0))
        throw ShapeError("project_queries: z_in " + shape_str(z_in.shape()) +
                         " incompatible with W_q " + shape_str(w_q.shape()));
    return matmul(z_in, w_q, "z_in", "W_q");
}

/// K, V from text embeddings: [N,D] x ([D,d], [D,d]) -> ([N,d], [N,d]).
inline std::pair<Tensor, Tensor> project_text_kv(const Tensor& embeddings,
                                                 const Tensor& w_k, const Tensor& w_v) {
    if (embeddings.rank() != 2 || w_k.rank() != 2 || embeddings.size(1) != w_k.size(0))
        throw ShapeError("project_text_kv: embeddings " + shape_str(embeddings.shape()) +
                         " incompatible with W_k " + shape_str(w_k.shape()));
    if (w_v.rank() != 2 || embeddings.size(1) != w_v.size(0))
        throw ShapeError("project_text_kv: embeddings " + shape_str(embeddings.shape()) +
                         " incompatible with W_v " + shape_str(w_v.shape()));
    return {matmul(embeddings, w_k, "embeddings", "W_k"),
            matmul(embeddings, w_v, "embeddings", "W_v")};
}

/// Row-stochastic map softmax(Q K^T / sqrt(d)) for one head: [P,d],[N,d] -> [P,N].
inline Tensor attention_map(const Tensor& q, const Tensor& k) {
    if (q.rank() != 2 || k.rank() != 2)
        throw ShapeError("attention_map: Q " + shape_str(q.shape()) + " and K " +
                         shape_str(k.shape()) + " must be rank 2");
    if (q.size(1) == 0) throw ConfigError("attention_map: projection dimension is zero");
    if (q.size(1) != k.size(1))
        throw ShapeError("attention_map: Q " + shape_str(q.shape()) + " and K " +
                         shape_str(k.shape()) + " disagree on d");
    Tensor scores = matmul_transpose_b(q, k, "Q", "K");
    scores.scale_(1.0 / std::sqrt(static_cast<double>(q.size(1))));
    softmax_rows_inplace(scores);
    return scores;
}

/// Head-split map: columns of Q/K are partitioned into `heads` groups of
/// d/heads, each scaled by its own sqrt(head_dim). Result [heads,P,N].
inline Tensor attention_map_per_head(const Tensor& q, const Tensor& k, int64_t heads) {
    if (heads < 1) throw ConfigError("attention_map_per_head: head_count must be >= 1");
    if (q.size(1) % heads != 0)
        throw ConfigError("attention_map_per_head: d " + std::to_string(q.size(1)) +
                          " not divisible by head_count " + std::to_string(heads));
    if (q.size(1) != k.size(1))
        throw ShapeError("attention_map_per_head: Q " + shape_str(q.shape()) + " and K " +
                         shape_str(k.shape()) + " disagree on d");
    int64_t p = q.size(0), n = k.size(0), dh = q.size(1) / heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor maps({heads, p, n});
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < p; ++i) {
            const double* qrow = q.data() + i * q.size(1) + h * dh;
            double* mrow = maps.data() + (h * p + i) * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < n; ++j) {
                const double* krow = k.data() + j * k.size(1) + h * dh;
                double acc = 0.0;
                for (int64_t u = 0; u < dh; ++u) acc += qrow[u] * krow[u];
                mrow[j] = acc * inv_sqrt;
                mx = std::max(mx, mrow[j]);
            }
            double sum = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                mrow[j] = std::exp(mrow[j] - mx);
                sum += mrow[j];
            }
            for (int64_t j = 0; j < n; ++j) mrow[j] /= sum;
        }
    }
    return maps;
}

/// Convex blend gamma*M + (1-gamma)*M_h. The boundary values short-circuit so
/// gamma = 1 returns the base map through the base arithmetic path.
inline Tensor combine_maps(const Tensor& base, const Tensor& human, double gamma) {
    if (gamma < 0.0 || gamma > 1.0 || !std::isfinite(gamma))
        throw ValidationError("combine_maps: gamma " + std::to_string(gamma) +
                              " outside [0,1]");
    if (!base.same_shape(human))
        throw ShapeError("combine_maps: base " + shape_str(base.shape()) +
                         " vs human-centric " + shape_str(human.shape()));
    if (gamma == 1.0) return base;
    if (gamma == 0.0) return human;
    Tensor out(base.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = gamma * base[i] + (1.0 - gamma) * human[i];
    return out;
}

/// z = map x V for one head: [P,N] x [N,d] -> [P,d].
inline Tensor attention_output(const Tensor& values, const Tensor& combined) {
    if (combined.rank() != 2 || values.rank() != 2 || combined.size(1) != values.size(0))
        throw ShapeError("attention_output: map " + shape_str(combined.shape()) +
                         " incompatible with V " + shape_str(values.shape()));
    return matmul(combined, values, "map", "V");
}

/// Per-head map application with head re-merge: [heads,P,N], [N,d] -> [P,d].
inline Tensor attention_output_per_head(const Tensor& values, const Tensor& maps) {
    if (maps.rank() != 3) throw ShapeError("attention_output_per_head: maps must be [heads,P,N]");
    int64_t heads = maps.size(0), p = maps.size(1), n = maps.size(2);
    if (values.rank() != 2 || values.size(0) != n)
        throw ShapeError("attention_output_per_head: maps " + shape_str(maps.shape()) +
                         " incompatible with V " + shape_str(values.shape()));
    if (values.size(1) % heads != 0)
        throw ConfigError("attention_output_per_head: value width not divisible by heads");
    int64_t dh = values.size(1) / heads;
    Tensor out({p, values.size(1)});
    for (int64_t h = 0; h < heads; ++h)
        for (int64_t i = 0; i < p; ++i) {
            const double* mrow = maps.data() + (h * p + i) * n;
            double* orow = out.data() + i * values.size(1) + h * dh;
            for (int64_t j = 0; j < n; ++j) {
                double mv = mrow[j];
                if (mv == 0.0) continue;
                const double* vrow = values.data() + j * values.size(1) + h * dh;
                for (int64_t u = 0; u < dh; ++u) orow[u] += mv * vrow[u];
            }
        }
    return out;
}

struct CrossAttentionResult {
    Tensor output;       // [P,d], heads re-merged, before any output projection
    AttentionMaps maps;  // traced for loss computation and analysis
};

/// Full cross-attention with the optional human-centric path. `params`
/// may be null for pure base attention. The returned maps always carry the
/// base map; the human-centric map is present whenever `params` is given.
inline CrossAttentionResult hcp_cross_attention(const Tensor& z_in, const Tensor& embeddings,
                                                const Tensor& w_q, const Tensor& w_k,
                                                const Tensor& w_v,
                                                const HcpLayerParams* params, double gamma,
                                                const CrossAttentionConfig& config,
                                                HcpForwardCache* hcp_cache = nullptr) {
    config.validate();
    if (z_in.rank() != 2 || z_in.size(0) != config.query_len)
        throw ShapeError("hcp_cross_attention: z_in " + shape_str(z_in.shape()) +
                         " does not provide query_len " + std::to_string(config.query_len));
    if (embeddings.rank() != 2 || embeddings.size(0) != config.token_count ||
        embeddings.size(1) != config.embed_dim)
        throw ShapeError("hcp_cross_attention: embeddings " + shape_str(embeddings.shape()) +
                         " do not match config [N,D] = [" + std::to_string(config.token_count) +
                         "," + std::to_string(config.embed_dim) + "]");

    Tensor q = project_queries(z_in, w_q);
    auto [k, v] = project_text_kv(embeddings, w_k, w_v);

    CrossAttentionResult result;
    result.maps.gamma = params ? gamma : 1.0;
    result.maps.base = attention_map_per_head(q, k, config.head_count);
    if (params) {
        Tensor k_h = hcp_key(embeddings, *params, hcp_cache);
        if (k_h.size(1) != q.size(1))
            throw ShapeError("hcp_cross_attention: auxiliary key " + shape_str(k_h.shape()) +
                             " does not match Q " + shape_str(q.shape()));
        result.maps.human_centric = attention_map_per_head(q, k_h, config.head_count);
        result.maps.combined = combine_maps(result.maps.base, result.maps.human_centric, gamma);
    } else {
        result.maps.combined = result.maps.base;
    }
    result.output = attention_output_per_head(v, result.maps.combined);
    return result;
}

}  // namespace hcp
