#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hcp/attention.hpp"
#include "hcp/errors.hpp"
#include "hcp/objectives.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// ---------------------------------------------------------------------------
// Pluggable denoiser interface with named, hookable cross-attention sites,
// a deterministic toy denoiser for desk-scale runs, and the forward-noising
// schedule used in training.
// ---------------------------------------------------------------------------

inline constexpr int64_t kCanonicalScales[4] = {64, 32, 16, 8};

struct LayerSpec {
    std::string id;
    Stage stage = Stage::down;
    int64_t scale = 16;          // side length; P = scale^2
    int64_t head_count = 8;
    int64_t latent_dim = 32;     // projection width d
    int64_t token_capacity = 77;
};

struct BackboneDescriptor {
    std::vector<LayerSpec> layers;  // forward execution order
    int64_t latent_channels = 3;
    int64_t latent_h = 16;
    int64_t latent_w = 16;
    int64_t embed_dim = 32;         // text embedding width D

    void validate() const {
        if (layers.empty()) throw ValidationError("backbone descriptor: no layers");
        if (latent_channels <= 0 || latent_h <= 0 || latent_w <= 0 || embed_dim <= 0)
            throw ValidationError("backbone descriptor: non-positive dimensions");
        for (const LayerSpec& l : layers) {
            bool canonical = false;
            for (int64_t s : kCanonicalScales) canonical = canonical || (l.scale == s);
            if (!canonical)
                throw ValidationError("backbone descriptor: layer '" + l.id + "' scale " +
                                      std::to_string(l.scale) + " not in {64,32,16,8}");
            if (l.head_count < 1 || l.latent_dim <= 0 || l.latent_dim % l.head_count != 0)
                throw ValidationError("backbone descriptor: layer '" + l.id +
                                      "' has invalid head/dim configuration");
            if (l.token_capacity < 1)
                throw ValidationError("backbone descriptor: layer '" + l.id + "' token capacity < 1");
        }
        partition().validate();
    }

    StagePartition partition() const {
        StagePartition p;
        for (const LayerSpec& l : layers) p.ordered.emplace_back(l.id, l.stage);
        return p;
    }

    const LayerSpec& layer(const std::string& id) const {
        for (const LayerSpec& l : layers)
            if (l.id == id) return l;
        throw ConfigError("backbone descriptor: unknown layer '" + id + "'");
    }

    bool has_layer(const std::string& id) const {
        for (const LayerSpec& l : layers)
            if (l.id == id) return true;
        return false;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["latent_channels"] = latent_channels;
        j["latent_h"] = latent_h;
        j["latent_w"] = latent_w;
        j["embed_dim"] = embed_dim;
        j["layers"] = nlohmann::json::array();
        for (const LayerSpec& l : layers) {
            nlohmann::json e;
            e["id"] = l.id;
            e["stage"] = stage_str(l.stage);
            e["scale"] = l.scale;
            e["heads"] = l.head_count;
            e["d"] = l.latent_dim;
            e["token_capacity"] = l.token_capacity;
            j["layers"].push_back(e);
        }
        return j;
    }

    static BackboneDescriptor from_json(const nlohmann::json& j) {
        BackboneDescriptor d;
        d.latent_channels = j.at("latent_channels").get<int64_t>();
        d.latent_h = j.at("latent_h").get<int64_t>();
        d.latent_w = j.at("latent_w").get<int64_t>();
        d.embed_dim = j.at("embed_dim").get<int64_t>();
        for (const auto& e : j.at("layers")) {
            LayerSpec l;
            l.id = e.at("id").get<std::string>();
            l.stage = parse_stage(e.at("stage").get<std::string>());
            l.scale = e.at("scale").get<int64_t>();
            l.head_count = e.at("heads").get<int64_t>();
            l.latent_dim = e.at("d").get<int64_t>();
            l.token_capacity = e.at("token_capacity").get<int64_t>();
            d.layers.push_back(l);
        }
        d.validate();
        return d;
    }

    uint64_t hash() const { return fnv1a64(to_json().dump()); }
};

// ---------------------------------------------------------------------------
// Forward-noising schedule.
// ---------------------------------------------------------------------------

struct NoiseSchedule {
    int64_t max_timestep = 1000;       // T; valid training timesteps are [0, T)
    std::vector<double> betas;         // length T, each in (0,1)
    std::vector<double> alpha_bars;    // cumulative products, strictly decreasing

    static NoiseSchedule linear(int64_t max_timestep, double beta_start = 1e-4,
                                double beta_end = 2e-2) {
        if (max_timestep < 1) throw ValidationError("noise schedule: T must be >= 1");
        NoiseSchedule s;
        s.max_timestep = max_timestep;
        s.betas.resize(static_cast<size_t>(max_timestep));
        s.alpha_bars.resize(static_cast<size_t>(max_timestep));
        double acc = 1.0;
        for (int64_t t = 0; t < max_timestep; ++t) {
            double frac = max_timestep == 1 ? 0.0
                                            : static_cast<double>(t) / static_cast<double>(max_timestep - 1);
            double beta = beta_start + (beta_end - beta_start) * frac;
            s.betas[static_cast<size_t>(t)] = beta;
            acc *= (1.0 - beta);
            s.alpha_bars[static_cast<size_t>(t)] = acc;
        }
        s.validate();
        return s;
    }

    void validate() const {
        if (max_timestep < 1 || betas.size() != static_cast<size_t>(max_timestep) ||
            alpha_bars.size() != betas.size())
            throw ValidationError("noise schedule: inconsistent sizes");
        double prev = 1.0;
        for (size_t i = 0; i < betas.size(); ++i) {
            if (!(betas[i] > 0.0 && betas[i] < 1.0))
                throw ValidationError("noise schedule: beta out of (0,1) at t=" + std::to_string(i));
            if (!(alpha_bars[i] > 0.0 && alpha_bars[i] <= 1.0 && alpha_bars[i] < prev))
                throw ValidationError("noise schedule: alpha_bar not strictly decreasing at t=" +
                                      std::to_string(i));
            prev = alpha_bars[i];
        }
    }

    double alpha_bar(int64_t t) const {
        if (t < 0 || t >= max_timestep)
            throw ValidationError("noise schedule: t = " + std::to_string(t) + " outside [0, " +
                                  std::to_string(max_timestep) + ")");
        return alpha_bars[static_cast<size_t>(t)];
    }
};

/// z_t = sqrt(a)*z_0 + sqrt(1-a)*eps for a given cumulative alpha.
inline Tensor apply_forward_noise(const Tensor& z0, const Tensor& eps, double alpha_bar) {
    if (!z0.same_shape(eps))
        throw ShapeError("forward_noise: z_0 " + shape_str(z0.shape()) + " vs noise " +
                         shape_str(eps.shape()));
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0))
        throw ValidationError("forward_noise: alpha_bar outside [0,1]");
    double sa = std::sqrt(alpha_bar);
    double sn = std::sqrt(1.0 - alpha_bar);
    Tensor z(z0.shape());
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = sa * z0[i] + sn * eps[i];
    return z;
}

inline Tensor forward_noise(const Tensor& z0, int64_t t, const Tensor& eps,
                            const NoiseSchedule& schedule) {
    return apply_forward_noise(z0, eps, schedule.alpha_bar(t));
}

// ---------------------------------------------------------------------------
// Hooks: per-layer human-centric key parameters plus the blend weight.
// Attaching a hook routes that layer through the combined-map path;
// detaching restores base behavior exactly.
// ---------------------------------------------------------------------------

struct HcpHook {
    const HcpLayerParams* params = nullptr;
    double gamma = 1.0;
};

class HookSet {
public:
    void attach(const std::string& layer_id, HcpHook hook) { hooks_[layer_id] = hook; }
    void detach(const std::string& layer_id) { hooks_.erase(layer_id); }
    bool empty() const { return hooks_.empty(); }
    size_t size() const { return hooks_.size(); }

    const HcpHook* find(const std::string& layer_id) const {
        auto it = hooks_.find(layer_id);
        return it == hooks_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, HcpHook>& all() const { return hooks_; }

    void validate_against(const BackboneDescriptor& descriptor) const {
        for (const auto& [id, hook] : hooks_) {
            if (!descriptor.has_layer(id))
                throw ConfigError("hook set: layer '" + id + "' not present in backbone");
            if (!hook.params || !hook.params->initialized())
                throw StateError("hook set: layer '" + id + "' has uninitialized parameters");
        }
    }

private:
    std::map<std::string, HcpHook> hooks_;
};

// Owns the trainable key-MLP parameters for a set of layers plus the blend
// weight; produces the hook set that backbones consume.
struct HcpModule {
    std::map<std::string, HcpLayerParams> layers;
    double gamma = 0.9;

    HookSet hooks() const {
        HookSet set;
        for (const auto& [id, params] : layers) set.attach(id, HcpHook{&params, gamma});
        return set;
    }

    HookSet hooks_with_gamma(double g) const {
        HookSet set;
        for (const auto& [id, params] : layers) set.attach(id, HcpHook{&params, g});
        return set;
    }

    std::map<std::string, uint64_t> digests() const {
        std::map<std::string, uint64_t> d;
        for (const auto& [id, params] : layers) d[id] = params.digest_all();
        return d;
    }
};

// ---------------------------------------------------------------------------
// Denoiser interface. Adapter contract for real backbones: expose the layer
// table as a descriptor, call the hook's parameters through
// hcp_cross_attention at each named site, return the prediction and the
// per-site maps in execution order.
// ---------------------------------------------------------------------------

struct DenoiseResult {
    Tensor eps_hat;
    std::vector<std::pair<std::string, AttentionMaps>> maps;  // execution order
};

class DenoiserBackbone {
public:
    virtual ~DenoiserBackbone() = default;
    virtual const BackboneDescriptor& descriptor() const = 0;
    virtual DenoiseResult denoise(const Tensor& z_t, int64_t t, const Tensor& embeddings,
                                  const HookSet* hooks) = 0;
    // Base parameter blocks in a stable order, for freeze digests.
    virtual std::vector<std::pair<std::string, const Tensor*>> base_parameters() const = 0;
};

// ---------------------------------------------------------------------------
// Toy backbone: a sequential multi-scale residual denoiser. Each layer
// resizes the latent to its scale, projects in, applies cross-attention at
// that scale, projects back and adds the branch to the running latent.
// Deterministic from its seed; base parameters are frozen by construction
// (nothing in the library ever writes them after init).
// ---------------------------------------------------------------------------

struct ToyLayerWeights {
    Tensor w_in, b_in;   // [C, c], [1, c]
    Tensor w_time;       // [time_dim, c]
    Tensor w_q;          // [c, d]
    Tensor w_k, w_v;     // [D, d]
    Tensor w_o;          // [d, c]
    Tensor w_back, b_back;  // [c, C], [1, C]
};

// Per-layer activations cached by the traced forward for the backward pass.
struct LayerTraceEntry {
    std::string layer_id;
    Tensor x_flat;         // [P, C] resized input positions
    Tensor act;            // [P, c] post-tanh features (the Q input)
    AttentionMaps maps;
    HcpForwardCache hcp_cache;
    const HcpHook* hook = nullptr;
};

struct ForwardTrace {
    Tensor embeddings;
    std::vector<LayerTraceEntry> layers;
};

class ToyBackbone : public DenoiserBackbone {
public:
    ToyBackbone(BackboneDescriptor descriptor, uint64_t seed)
        : descriptor_(std::move(descriptor)), seed_(seed) {
        descriptor_.validate();
        validate_toy_spec(descriptor_);
        Rng rng = Rng::from(seed, 0x746f79);
        int64_t c_lat = descriptor_.latent_channels;
        for (const LayerSpec& spec : descriptor_.layers) {
            ToyLayerWeights w;
            int64_t width = spec.latent_dim;
            w.w_in = randn({c_lat, width}, rng, 1.0 / std::sqrt(static_cast<double>(c_lat)));
            w.b_in = randn({1, width}, rng, 0.1);
            w.w_time = randn({kTimeDim, width}, rng, 0.2);
            w.w_q = randn({width, spec.latent_dim}, rng, 1.0 / std::sqrt(static_cast<double>(width)));
            w.w_k = randn({descriptor_.embed_dim, spec.latent_dim}, rng,
                          1.0 / std::sqrt(static_cast<double>(descriptor_.embed_dim)));
            w.w_v = randn({descriptor_.embed_dim, spec.latent_dim}, rng,
                          1.0 / std::sqrt(static_cast<double>(descriptor_.embed_dim)));
            w.w_o = randn({spec.latent_dim, width}, rng,
                          1.0 / std::sqrt(static_cast<double>(spec.latent_dim)));
            w.w_back = randn({width, c_lat}, rng, 1.0 / std::sqrt(static_cast<double>(width)));
            w.b_back = Tensor::zeros({1, c_lat});
            layer_weights_.push_back(std::move(w));
        }
        w_final_ = randn({c_lat, c_lat}, rng, 1.0 / std::sqrt(static_cast<double>(c_lat)));
        b_final_ = Tensor::zeros({1, c_lat});
    }

    const BackboneDescriptor& descriptor() const override { return descriptor_; }

    DenoiseResult denoise(const Tensor& z_t, int64_t t, const Tensor& embeddings,
                          const HookSet* hooks) override {
        ForwardTrace trace;
        return denoise_traced(z_t, t, embeddings, hooks, trace, nullptr);
    }

    // Forward pass that keeps the activations needed by backward().
    // `extra_condition` is an optional externally injected conditioning map
    // (a stand-in for a controllable pipeline); it is added to the latent
    // before the layer stack and does not change the descriptor.
    DenoiseResult denoise_traced(const Tensor& z_t, int64_t t, const Tensor& embeddings,
                                 const HookSet* hooks, ForwardTrace& trace,
                                 const Tensor* extra_condition = nullptr) {
        if (z_t.rank() != 3 || z_t.size(0) != descriptor_.latent_channels ||
            z_t.size(1) != descriptor_.latent_h || z_t.size(2) != descriptor_.latent_w)
            throw ShapeError("toy backbone: latent " + shape_str(z_t.shape()) + " does not match [" +
                             std::to_string(descriptor_.latent_channels) + "," +
                             std::to_string(descriptor_.latent_h) + "," +
                             std::to_string(descriptor_.latent_w) + "]");
        if (embeddings.rank() != 2 || embeddings.size(1) != descriptor_.embed_dim)
            throw ShapeError("toy backbone: embeddings " + shape_str(embeddings.shape()) +
                             " do not match embed_dim " + std::to_string(descriptor_.embed_dim));
        if (hooks) hooks->validate_against(descriptor_);

        Tensor time_row = time_features(t);
        Tensor z = z_t;
        if (extra_condition) z.add_(*extra_condition);

        trace.embeddings = embeddings;
        trace.layers.clear();
        DenoiseResult result;

        for (size_t li = 0; li < descriptor_.layers.size(); ++li) {
            const LayerSpec& spec = descriptor_.layers[li];
            const ToyLayerWeights& w = layer_weights_[li];
            if (embeddings.size(0) > spec.token_capacity)
                throw ValidationError("toy backbone: " + std::to_string(embeddings.size(0)) +
                                      " tokens exceed capacity of layer '" + spec.id + "'");

            LayerTraceEntry entry;
            entry.layer_id = spec.id;
            entry.hook = hooks ? hooks->find(spec.id) : nullptr;

            Tensor x = bilinear_resize_chw(z, spec.scale, spec.scale);
            entry.x_flat = flatten_positions(x);

            Tensor act = matmul(entry.x_flat, w.w_in, "positions", "w_in");
            Tensor time_bias = matmul(time_row, w.w_time, "time", "w_time");
            for (int64_t i = 0; i < act.size(0); ++i)
                for (int64_t j = 0; j < act.size(1); ++j)
                    act(i, j) = std::tanh(act(i, j) + w.b_in(0, j) + time_bias(0, j));
            entry.act = act;

            CrossAttentionConfig cfg;
            cfg.latent_dim = spec.latent_dim;
            cfg.head_count = spec.head_count;
            cfg.token_count = embeddings.size(0);
            cfg.embed_dim = descriptor_.embed_dim;
            cfg.query_len = spec.scale * spec.scale;

            CrossAttentionResult attn = hcp_cross_attention(
                entry.act, embeddings, w.w_q, w.w_k, w.w_v,
                entry.hook ? entry.hook->params : nullptr,
                entry.hook ? entry.hook->gamma : 1.0, cfg,
                entry.hook ? &entry.hcp_cache : nullptr);
            entry.maps = attn.maps;

            Tensor z_att = matmul(attn.output, w.w_o, "attention", "w_o");
            Tensor res = entry.act;
            res.add_(z_att);

            Tensor back = matmul(res, w.w_back, "layer features", "w_back");
            for (int64_t i = 0; i < back.size(0); ++i)
                for (int64_t j = 0; j < back.size(1); ++j) back(i, j) += w.b_back(0, j);
            Tensor branch = unflatten_positions(back, spec.scale, spec.scale);
            branch = bilinear_resize_chw(branch, descriptor_.latent_h, descriptor_.latent_w);
            z.add_(branch);

            result.maps.emplace_back(spec.id, entry.maps);
            trace.layers.push_back(std::move(entry));
        }

        Tensor features = flatten_positions(z);
        Tensor out = matmul(features, w_final_, "latent", "w_final");
        for (int64_t i = 0; i < out.size(0); ++i)
            for (int64_t j = 0; j < out.size(1); ++j) out(i, j) += b_final_(0, j);
        result.eps_hat = unflatten_positions(out, descriptor_.latent_h, descriptor_.latent_w);
        return result;
    }

    // Backward pass for the trainable key MLPs only. `d_eps_hat` is the
    // gradient of the loss w.r.t. the prediction; `d_human_maps` carries
    // per-layer gradients injected directly on the human-centric maps
    // (the alignment loss). Base weights are frozen, so only their input
    // gradients are chained.
    void backward(const ForwardTrace& trace, const Tensor& d_eps_hat,
                  const std::map<std::string, Tensor>& d_human_maps,
                  std::map<std::string, HcpGrads>& grads) const {
        Tensor d_out_flat = flatten_positions(d_eps_hat);
        Tensor d_features = matmul_transpose_b(d_out_flat, w_final_, "d_eps", "w_final");
        Tensor dz = unflatten_positions(d_features, descriptor_.latent_h, descriptor_.latent_w);

        for (size_t li = trace.layers.size(); li-- > 0;) {
            const LayerTraceEntry& entry = trace.layers[li];
            const LayerSpec& spec = descriptor_.layers[li];
            const ToyLayerWeights& w = layer_weights_[li];
            int64_t heads = spec.head_count;
            int64_t p = spec.scale * spec.scale;
            int64_t n = trace.embeddings.size(0);
            int64_t dh = spec.latent_dim / heads;

            // branch: dz -> back-proj -> residual block
            Tensor d_branch = bilinear_resize_adjoint_chw(dz, spec.scale, spec.scale);
            Tensor d_back = flatten_positions(d_branch);
            Tensor d_res = matmul_transpose_b(d_back, w.w_back, "d_back", "w_back");

            Tensor d_act = d_res;  // residual split: into act and attention
            Tensor d_attn_out = matmul_transpose_b(d_res, w.w_o, "d_attention", "w_o");

            // attention backward
            const AttentionMaps& maps = entry.maps;
            Tensor values = matmul(trace.embeddings, w.w_v, "embeddings", "w_v");
            Tensor keys = matmul(trace.embeddings, w.w_k, "embeddings", "w_k");
            Tensor queries = matmul(entry.act, w.w_q, "features", "w_q");

            // d combined map from the output path: dM[h,i,j] = dO_i . V_j (per head)
            Tensor d_combined({heads, p, n});
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t i = 0; i < p; ++i) {
                    const double* orow = d_attn_out.data() + i * spec.latent_dim + h * dh;
                    double* mrow = d_combined.data() + (h * p + i) * n;
                    for (int64_t j = 0; j < n; ++j) {
                        const double* vrow = values.data() + j * spec.latent_dim + h * dh;
                        double acc = 0.0;
                        for (int64_t u = 0; u < dh; ++u) acc += orow[u] * vrow[u];
                        mrow[j] = acc;
                    }
                }

            bool hooked = entry.hook != nullptr;
            double gamma = hooked ? entry.hook->gamma : 1.0;
            auto inject = d_human_maps.find(entry.layer_id);

            Tensor d_base = d_combined;
            if (hooked && gamma != 1.0) d_base.scale_(gamma);

            Tensor d_human;
            if (hooked) {
                if (gamma == 1.0) {
                    d_human = Tensor::zeros({heads, p, n});
                } else {
                    d_human = d_combined;
                    d_human.scale_(1.0 - gamma);
                }
                if (inject != d_human_maps.end()) d_human.add_(inject->second);
            } else if (inject != d_human_maps.end()) {
                throw ConfigError("toy backbone backward: alignment gradient for unhooked layer '" +
                                  entry.layer_id + "'");
            }

            Tensor d_scores_base = softmax_rows_backward(maps.base, d_base);
            Tensor d_scores_human;
            if (hooked) d_scores_human = softmax_rows_backward(maps.human_centric, d_human);

            double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
            Tensor d_queries({p, spec.latent_dim});
            Tensor d_key_h;
            if (hooked) d_key_h = Tensor::zeros({n, spec.latent_dim});

            for (int64_t h = 0; h < heads; ++h) {
                for (int64_t i = 0; i < p; ++i) {
                    double* dqrow = d_queries.data() + i * spec.latent_dim + h * dh;
                    const double* ds_b = d_scores_base.data() + (h * p + i) * n;
                    const double* ds_h = hooked ? d_scores_human.data() + (h * p + i) * n : nullptr;
                    const double* qrow = queries.data() + i * spec.latent_dim + h * dh;
                    for (int64_t j = 0; j < n; ++j) {
                        const double* krow = keys.data() + j * spec.latent_dim + h * dh;
                        double gb = ds_b[j] * inv_sqrt;
                        for (int64_t u = 0; u < dh; ++u) dqrow[u] += gb * krow[u];
                        if (hooked) {
                            double gh = ds_h[j] * inv_sqrt;
                            double* dkh = d_key_h.data() + j * spec.latent_dim + h * dh;
                            for (int64_t u = 0; u < dh; ++u) dkh[u] += gh * qrow[u];
                        }
                    }
                }
            }
            if (hooked) {
                // dQ also flows through the human-centric score path; the key
                // itself is one affine away from the cached last activation.
                Tensor key_h = detail::affine_rows(entry.hcp_cache.a3, entry.hook->params->w_out,
                                                   entry.hook->params->b_out);
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t i = 0; i < p; ++i) {
                        double* dqrow = d_queries.data() + i * spec.latent_dim + h * dh;
                        const double* ds_h = d_scores_human.data() + (h * p + i) * n;
                        for (int64_t j = 0; j < n; ++j) {
                            const double* khrow = key_h.data() + j * spec.latent_dim + h * dh;
                            double gh = ds_h[j] * inv_sqrt;
                            for (int64_t u = 0; u < dh; ++u) dqrow[u] += gh * khrow[u];
                        }
                    }
                auto it = grads.find(entry.layer_id);
                if (it == grads.end())
                    it = grads.emplace(entry.layer_id, HcpGrads::zeros_like(*entry.hook->params)).first;
                hcp_key_backward(d_key_h, *entry.hook->params, entry.hcp_cache, it->second);
            }

            d_act.add_(matmul_transpose_b(d_queries, w.w_q, "d_queries", "w_q"));

            // tanh backward, then input projection back to latent channels
            Tensor d_pre(d_act.shape());
            for (int64_t i = 0; i < d_act.numel(); ++i) {
                double a = entry.act[i];
                d_pre[i] = d_act[i] * (1.0 - a * a);
            }
            Tensor d_x = matmul_transpose_b(d_pre, w.w_in, "d_pre", "w_in");
            Tensor d_x_map = unflatten_positions(d_x, spec.scale, spec.scale);
            dz.add_(bilinear_resize_adjoint_chw(d_x_map, descriptor_.latent_h, descriptor_.latent_w));
        }
    }

    std::vector<std::pair<std::string, const Tensor*>> base_parameters() const override {
        std::vector<std::pair<std::string, const Tensor*>> out;
        for (size_t li = 0; li < descriptor_.layers.size(); ++li) {
            const std::string prefix = "layer." + descriptor_.layers[li].id + ".";
            const ToyLayerWeights& w = layer_weights_[li];
            out.emplace_back(prefix + "w_in", &w.w_in);
            out.emplace_back(prefix + "b_in", &w.b_in);
            out.emplace_back(prefix + "w_time", &w.w_time);
            out.emplace_back(prefix + "w_q", &w.w_q);
            out.emplace_back(prefix + "w_k", &w.w_k);
            out.emplace_back(prefix + "w_v", &w.w_v);
            out.emplace_back(prefix + "w_o", &w.w_o);
            out.emplace_back(prefix + "w_back", &w.w_back);
            out.emplace_back(prefix + "b_back", &w.b_back);
        }
        out.emplace_back("final.w", &w_final_);
        out.emplace_back("final.b", &b_final_);
        return out;
    }

    // Test support: zero every base weight (prediction collapses to zero)
    // and targeted mutation for freeze-guard fault injection.
    void zero_all_parameters() {
        for (ToyLayerWeights& w : layer_weights_) {
            w.w_in.fill(0.0);
            w.b_in.fill(0.0);
            w.w_time.fill(0.0);
            w.w_q.fill(0.0);
            w.w_k.fill(0.0);
            w.w_v.fill(0.0);
            w.w_o.fill(0.0);
            w.w_back.fill(0.0);
            w.b_back.fill(0.0);
        }
        w_final_.fill(0.0);
        b_final_.fill(0.0);
    }

    Tensor* mutable_parameter(const std::string& name) {
        for (auto& [pname, tensor] : base_parameters())
            if (pname == name) return const_cast<Tensor*>(tensor);
        return nullptr;
    }

    static constexpr int64_t kTimeDim = 8;

private:
    static void validate_toy_spec(const BackboneDescriptor& d) {
        bool has_down = false, has_mid = false, has_up = false;
        std::vector<int64_t> scales;
        for (const LayerSpec& l : d.layers) {
            has_down = has_down || l.stage == Stage::down;
            has_mid = has_mid || l.stage == Stage::mid;
            has_up = has_up || l.stage == Stage::up;
            bool seen = false;
            for (int64_t s : scales) seen = seen || s == l.scale;
            if (!seen) scales.push_back(l.scale);
        }
        if (!has_down || !has_mid || !has_up)
            throw ValidationError("toy backbone: need at least one layer per stage");
        if (scales.size() < 2)
            throw ValidationError("toy backbone: need at least two distinct scales");
    }

    Tensor time_features(int64_t t) const {
        Tensor row({1, kTimeDim});
        int64_t half = kTimeDim / 2;
        for (int64_t k = 0; k < half; ++k) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                                   static_cast<double>(half));
            row(0, k) = std::sin(static_cast<double>(t) * freq);
            row(0, k + half) = std::cos(static_cast<double>(t) * freq);
        }
        return row;
    }

    // [C,h,w] -> [P,C] and back; position p = y*w + x.
    static Tensor flatten_positions(const Tensor& map) {
        int64_t c = map.size(0), h = map.size(1), w = map.size(2);
        Tensor out({h * w, c});
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) out(y * w + x, ch) = map(ch, y, x);
        return out;
    }

    static Tensor unflatten_positions(const Tensor& flat, int64_t h, int64_t w) {
        int64_t c = flat.size(1);
        Tensor out({c, h, w});
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) out(ch, y, x) = flat(y * w + x, ch);
        return out;
    }

    BackboneDescriptor descriptor_;
    uint64_t seed_;
    std::vector<ToyLayerWeights> layer_weights_;
    Tensor w_final_, b_final_;
};

/// Convenience constructor mirroring the descriptor-from-seed contract.
inline std::unique_ptr<ToyBackbone> toy_backbone(const BackboneDescriptor& descriptor,
                                                 uint64_t seed) {
    return std::make_unique<ToyBackbone>(descriptor, seed);
}

}  // namespace hcp
