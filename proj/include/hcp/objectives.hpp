#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hcp/errors.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// ---------------------------------------------------------------------------
// Training objective: the human-centric alignment loss over the supervised
// token columns, the stage-dependent cosine weight on it, the denoising MSE,
// and their weighted combination.
// ---------------------------------------------------------------------------

enum class Stage { down, mid, up };

inline std::string stage_str(Stage s) {
    switch (s) {
        case Stage::down: return "down";
        case Stage::mid: return "mid";
        case Stage::up: return "up";
    }
    return "?";
}

inline Stage parse_stage(const std::string& s) {
    if (s == "down") return Stage::down;
    if (s == "mid") return Stage::mid;
    if (s == "up") return Stage::up;
    throw ValidationError("stage: expected down/mid/up, got '" + s + "'");
}

// Layer -> stage assignment in backbone execution order. Stages must appear
// as one contiguous down block, then mid, then up.
struct StagePartition {
    std::vector<std::pair<std::string, Stage>> ordered;

    Stage stage_of(const std::string& layer_id) const {
        for (const auto& [id, stage] : ordered)
            if (id == layer_id) return stage;
        throw ValidationError("stage partition: unknown layer '" + layer_id + "'");
    }

    bool contains(const std::string& layer_id) const {
        for (const auto& [id, stage] : ordered)
            if (id == layer_id) return true;
        return false;
    }

    void validate() const {
        if (ordered.empty()) throw ValidationError("stage partition: empty");
        int prev = -1;
        for (const auto& [id, stage] : ordered) {
            int rank = static_cast<int>(stage);
            if (rank < prev)
                throw ValidationError("stage partition: stages not contiguous at layer '" + id + "'");
            prev = rank;
        }
        for (size_t i = 0; i < ordered.size(); ++i)
            for (size_t j = i + 1; j < ordered.size(); ++j)
                if (ordered[i].first == ordered[j].first)
                    throw ValidationError("stage partition: duplicate layer '" + ordered[i].first + "'");
    }
};

/// Stage-dependent cosine weight. down fades out over the timestep range,
/// mid fades in, up peaks at the midpoint. Always in [0,1].
inline double lambda_weight(Stage stage, int64_t t, int64_t max_timestep) {
    if (max_timestep < 1) throw ValidationError("lambda_weight: max timestep must be >= 1");
    if (t < 0 || t > max_timestep)
        throw ValidationError("lambda_weight: t = " + std::to_string(t) + " outside [0, " +
                              std::to_string(max_timestep) + "]");
    double ratio = static_cast<double>(t) / static_cast<double>(max_timestep);
    switch (stage) {
        case Stage::down: return std::cos(ratio * kPi / 2.0);
        case Stage::mid: return std::cos((ratio - 1.0) * kPi / 2.0);
        case Stage::up: return std::cos((2.0 * ratio - 1.0) * kPi / 2.0);
    }
    throw ValidationError("lambda_weight: bad stage");
}

// Evaluates the per-layer weight; a disabled stage falls back to the
// constant 1 (the no-cosine-adjustment ablation).
struct WeightSchedule {
    int64_t max_timestep = 1000;
    StagePartition partition;
    bool down_enabled = true;
    bool mid_enabled = true;
    bool up_enabled = true;

    double weight(const std::string& layer_id, int64_t t) const {
        Stage stage = partition.stage_of(layer_id);
        bool enabled = (stage == Stage::down && down_enabled) ||
                       (stage == Stage::mid && mid_enabled) ||
                       (stage == Stage::up && up_enabled);
        if (!enabled) {
            if (t < 0 || t > max_timestep)
                throw ValidationError("weight schedule: t out of range");
            return 1.0;
        }
        return lambda_weight(stage, t, max_timestep);
    }
};

/// Mean cosine distance between the prior map H and the human-centric map
/// columns at the supervised indices. Cosine is taken per head over
/// flattened spatial positions, averaged over heads, then over indices.
///
/// H: [heads,P] (or [heads,h,w], flattened); M_h: [heads,P,N]. When `d_m_h`
/// is given, `grad_scale` times the gradient w.r.t. M_h is accumulated into
/// it; columns outside `indices` receive nothing.
inline double alignment_loss(const Tensor& prior, const Tensor& m_h,
                             const std::vector<int64_t>& indices,
                             Tensor* d_m_h = nullptr, double grad_scale = 1.0) {
    if (m_h.rank() != 3)
        throw ShapeError("alignment_loss: M_h must be [heads,P,N], got " + shape_str(m_h.shape()));
    int64_t heads = m_h.size(0), p = m_h.size(1), n = m_h.size(2);
    Tensor h_flat = prior.rank() == 3 ? prior.reshaped({prior.size(0), prior.size(1) * prior.size(2)})
                                      : prior;
    if (h_flat.rank() != 2 || h_flat.size(0) != heads || h_flat.size(1) != p)
        throw ShapeError("alignment_loss: prior " + shape_str(prior.shape()) +
                         " does not match M_h " + shape_str(m_h.shape()));
    if (indices.empty()) throw ValidationError("alignment_loss: empty index set");
    for (int64_t i : indices)
        if (i < 0 || i >= n)
            throw ValidationError("alignment_loss: index " + std::to_string(i) +
                                  " outside token range [0," + std::to_string(n) + ")");
    if (d_m_h && !d_m_h->same_shape(m_h))
        throw ShapeError("alignment_loss: gradient accumulator shape mismatch");

    std::vector<double> h_norms(static_cast<size_t>(heads));
    for (int64_t hh = 0; hh < heads; ++hh) {
        const double* base = h_flat.data() + hh * p;
        double acc = 0.0;
        for (int64_t q = 0; q < p; ++q) acc += base[q] * base[q];
        if (acc == 0.0)
            throw DegenerateInputError("alignment_loss: zero-norm prior channel " + std::to_string(hh));
        h_norms[static_cast<size_t>(hh)] = std::sqrt(acc);
    }

    double loss = 0.0;
    double index_scale = 1.0 / static_cast<double>(indices.size());
    double head_scale = 1.0 / static_cast<double>(heads);
    for (int64_t i : indices) {
        double cos_sum = 0.0;
        for (int64_t hh = 0; hh < heads; ++hh) {
            const double* hrow = h_flat.data() + hh * p;
            double dot = 0.0, m_norm_sq = 0.0;
            for (int64_t q = 0; q < p; ++q) {
                double mv = m_h(hh, q, i);
                dot += hrow[q] * mv;
                m_norm_sq += mv * mv;
            }
            if (m_norm_sq == 0.0)
                throw DegenerateInputError("alignment_loss: zero-norm map slice at head " +
                                           std::to_string(hh) + ", token " + std::to_string(i));
            double m_norm = std::sqrt(m_norm_sq);
            double h_norm = h_norms[static_cast<size_t>(hh)];
            double cosine = dot / (h_norm * m_norm);
            cos_sum += cosine;
            if (d_m_h) {
                // d(1-cos)/dm = -(H/(|H||m|) - cos * m/|m|^2)
                double c1 = 1.0 / (h_norm * m_norm);
                double c2 = cosine / m_norm_sq;
                double scale = grad_scale * index_scale * head_scale;
                for (int64_t q = 0; q < p; ++q)
                    (*d_m_h)(hh, q, i) -= scale * (hrow[q] * c1 - m_h(hh, q, i) * c2);
            }
        }
        loss += 1.0 - cos_sum * head_scale;
    }
    return loss * index_scale;
}

/// Mean squared error between injected and predicted noise.
inline double denoising_loss(const Tensor& noise, const Tensor& prediction) {
    if (!noise.same_shape(prediction))
        throw ShapeError("denoising_loss: noise " + shape_str(noise.shape()) +
                         " vs prediction " + shape_str(prediction.shape()));
    if (noise.numel() == 0) throw ShapeError("denoising_loss: empty tensors");
    double acc = 0.0;
    for (int64_t i = 0; i < noise.numel(); ++i) {
        double d = noise[i] - prediction[i];
        acc += d * d;
    }
    return acc / static_cast<double>(noise.numel());
}

/// Gradient of the MSE w.r.t. the prediction.
inline Tensor denoising_loss_backward(const Tensor& noise, const Tensor& prediction,
                                      double scale = 1.0) {
    if (!noise.same_shape(prediction))
        throw ShapeError("denoising_loss_backward: shape mismatch");
    Tensor g(prediction.shape());
    double s = 2.0 * scale / static_cast<double>(noise.numel());
    for (int64_t i = 0; i < noise.numel(); ++i) g[i] = s * (prediction[i] - noise[i]);
    return g;
}

// One training step's losses, decomposed so the total stays recomputable
// from the parts.
struct LossBreakdown {
    std::map<std::string, double> l_hca;    // per layer, unweighted
    std::map<std::string, double> lambda;   // per layer weight at this step's t
    double l_ldm = 0.0;
    double total = 0.0;
    double alpha = 0.0;
    double gamma = 1.0;
    int64_t t = 0;

    double recomputed_total() const {
        double acc = 0.0;
        for (const auto& [layer, value] : l_hca) {
            auto it = lambda.find(layer);
            if (it == lambda.end())
                throw ValidationError("loss breakdown: no lambda recorded for layer '" + layer + "'");
            acc += it->second * value;
        }
        return alpha * acc + l_ldm;
    }
};

/// total = alpha * sum_l lambda^l(t) * l_hca[l] + l_ldm, with the parts kept.
inline LossBreakdown total_loss(const std::map<std::string, double>& l_hca_per_layer,
                                double l_ldm, int64_t t, double alpha,
                                const WeightSchedule& schedule) {
    LossBreakdown out;
    out.l_hca = l_hca_per_layer;
    out.l_ldm = l_ldm;
    out.alpha = alpha;
    out.t = t;
    double acc = 0.0;
    for (const auto& [layer, value] : l_hca_per_layer) {
        double w = schedule.weight(layer, t);
        out.lambda[layer] = w;
        acc += w * value;
    }
    out.total = alpha * acc + l_ldm;
    return out;
}

}  // namespace hcp
