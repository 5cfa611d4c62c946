#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "hcp/errors.hpp"
#include "hcp/image.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// ---------------------------------------------------------------------------
// Human-centric prior features: multi-scale maps extracted from a pose or
// depth image, channel-selected by variance and aligned to the attention-map
// scales. These exist only at training time; the sampling path never touches
// them (a read counter below lets tests assert that).
// ---------------------------------------------------------------------------

enum class PriorKind { pose, depth };

inline std::string prior_kind_str(PriorKind k) { return k == PriorKind::pose ? "pose" : "depth"; }

inline PriorKind parse_prior_kind(const std::string& s) {
    if (s == "pose") return PriorKind::pose;
    if (s == "depth") return PriorKind::depth;
    throw ValidationError("prior kind: expected 'pose' or 'depth', got '" + s + "'");
}

struct PriorImage {
    Image image;  // 256 x 256 after preprocessing, values in [0,1]
    PriorKind kind = PriorKind::pose;
};

inline constexpr int64_t kPriorSide = 256;
inline constexpr int64_t kPriorChannels = 8;
inline constexpr int64_t kScaleSides[4] = {64, 32, 16, 8};

// Counts every prior-image file read. The sampler is text-only; tests pin
// that by checking this counter stays put across a full sampling run.
inline std::atomic<uint64_t>& prior_image_read_count() {
    static std::atomic<uint64_t> count{0};
    return count;
}

inline PriorImage load_prior_image(const std::string& path, PriorKind kind = PriorKind::pose) {
    prior_image_read_count().fetch_add(1, std::memory_order_relaxed);
    Image raw = read_png(path);
    PriorImage prior;
    prior.kind = kind;
    if (raw.height != kPriorSide || raw.width != kPriorSide) {
        Tensor resized = bilinear_resize_chw(raw.to_chw(), kPriorSide, kPriorSide);
        prior.image = Image::from_chw(resized);
    } else {
        prior.image = std::move(raw);
    }
    return prior;
}

// Feature backbone handle. Implementations must be deterministic and hold
// fixed (non-trainable) weights; `extract` returns stage maps [C,h,w] in
// decreasing resolution.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Tensor> extract(const PriorImage& image) const = 0;
    virtual std::string id() const = 0;
};

// Small deterministic stand-in for a pretrained encoder: each stage resizes
// the previous one down and applies a fixed random per-position channel mix
// with tanh. Four stages at 64/32/16/8 for a 256 input.
class ToyFeatureExtractor : public FeatureExtractor {
public:
    explicit ToyFeatureExtractor(uint64_t seed, bool zero_weights = false) : seed_(seed) {
        int64_t prev = 3;
        Rng rng = Rng::from(seed, 0x70726972);
        for (size_t s = 0; s < kStageChannels.size(); ++s) {
            int64_t ch = kStageChannels[s];
            if (zero_weights) {
                weights_.push_back(Tensor::zeros({prev, ch}));
                biases_.push_back(Tensor::zeros({1, ch}));
            } else {
                weights_.push_back(randn({prev, ch}, rng, 1.0 / std::sqrt(static_cast<double>(prev))));
                biases_.push_back(randn({1, ch}, rng, 0.5));
            }
            prev = ch;
        }
    }

    std::vector<Tensor> extract(const PriorImage& prior) const override {
        Tensor f = to_three_channels(prior.image);
        std::vector<Tensor> stages;
        for (size_t s = 0; s < weights_.size(); ++s) {
            int64_t side = kPriorSide >> (2 + s);  // 64, 32, 16, 8
            Tensor g = bilinear_resize_chw(f, side, side);
            f = mix_channels(g, weights_[s], biases_[s]);
            stages.push_back(f);
        }
        return stages;
    }

    std::string id() const override { return "toy-extractor-" + std::to_string(seed_); }

    static constexpr std::array<int64_t, 4> kStageChannels = {12, 16, 20, 24};

private:
    static Tensor to_three_channels(const Image& img) {
        Tensor chw = img.to_chw();
        if (chw.size(0) == 3) return chw;
        Tensor three({3, chw.size(1), chw.size(2)});
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < chw.size(1); ++y)
                for (int64_t x = 0; x < chw.size(2); ++x) three(c, y, x) = chw(0, y, x);
        return three;
    }

    static Tensor mix_channels(const Tensor& in, const Tensor& w, const Tensor& b) {
        int64_t cin = in.size(0), h = in.size(1), wd = in.size(2), cout = w.size(1);
        Tensor out({cout, h, wd});
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < wd; ++x)
                for (int64_t co = 0; co < cout; ++co) {
                    double acc = b(0, co);
                    for (int64_t ci = 0; ci < cin; ++ci) acc += in(ci, y, x) * w(ci, co);
                    out(co, y, x) = std::tanh(acc);
                }
        return out;
    }

    uint64_t seed_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

/// Last four stage outputs of the extractor, validated against the expected
/// scales for a 256-pixel input.
inline std::vector<Tensor> extract_stage_features(const PriorImage& image,
                                                  const FeatureExtractor& extractor) {
    std::vector<Tensor> stages = extractor.extract(image);
    if (stages.size() < 4)
        throw ContractError("prior extractor: produced " + std::to_string(stages.size()) +
                            " stages, need at least 4");
    for (size_t s = 1; s < stages.size(); ++s) {
        if (stages[s].size(1) >= stages[s - 1].size(1))
            throw ContractError("prior extractor: stage sizes must strictly decrease");
    }
    std::vector<Tensor> last4(stages.end() - 4, stages.end());
    for (int s = 0; s < 4; ++s) {
        const Tensor& m = last4[static_cast<size_t>(s)];
        if (m.rank() != 3 || m.size(1) != kScaleSides[s] || m.size(2) != kScaleSides[s])
            throw ContractError("prior extractor: expected stage scales {64,32,16,8} for a 256 input, got " +
                                shape_str(m.shape()) + " at position " + std::to_string(s));
    }
    return last4;
}

/// The k channels with the largest population variance over spatial
/// positions, in descending variance order; ties keep the lower index first.
inline Tensor select_top_variance_channels(const Tensor& stage_map, int64_t k = kPriorChannels) {
    if (stage_map.rank() != 3)
        throw ShapeError("select_top_variance_channels: [C,h,w] map required, got " +
                         shape_str(stage_map.shape()));
    int64_t c = stage_map.size(0), h = stage_map.size(1), w = stage_map.size(2);
    if (c < k)
        throw ValidationError("select_top_variance_channels: " + std::to_string(c) +
                              " channels < k = " + std::to_string(k));
    int64_t p = h * w;
    std::vector<std::pair<double, int64_t>> ranked;
    ranked.reserve(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        const double* base = stage_map.data() + ch * p;
        double mean = 0.0;
        for (int64_t i = 0; i < p; ++i) mean += base[i];
        mean /= static_cast<double>(p);
        double var = 0.0;
        for (int64_t i = 0; i < p; ++i) {
            double d = base[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(p);
        ranked.emplace_back(var, ch);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    Tensor out({k, h, w});
    for (int64_t i = 0; i < k; ++i) {
        const double* src = stage_map.data() + ranked[static_cast<size_t>(i)].second * p;
        std::copy(src, src + p, out.data() + i * p);
    }
    return out;
}

/// Bilinear resize of a [c,h,w] map; identity when sizes already match.
inline Tensor resize_to_scale(const Tensor& map, int64_t target_h, int64_t target_w) {
    return bilinear_resize_chw(map, target_h, target_w);
}

// Per-scale 8-channel reference maps. Channels are unit-L2-normalized over
// flattened spatial positions so downstream cosine math never divides by
// zero.
struct PriorFeatureStack {
    std::vector<Tensor> per_scale;     // 4 maps [8, side, side], sides 64,32,16,8
    std::vector<int> source_stage_ids;

    const Tensor& at_side(int64_t side) const {
        for (int s = 0; s < 4; ++s)
            if (kScaleSides[s] == side) return per_scale[static_cast<size_t>(s)];
        throw ValidationError("prior stack: no scale with side " + std::to_string(side));
    }

    void validate() const {
        if (per_scale.size() != 4) throw ValidationError("prior stack: expected 4 scales");
        for (int s = 0; s < 4; ++s) {
            const Tensor& m = per_scale[static_cast<size_t>(s)];
            if (m.rank() != 3 || m.size(0) != kPriorChannels || m.size(1) != kScaleSides[s] ||
                m.size(2) != kScaleSides[s])
                throw ValidationError("prior stack: bad map " + shape_str(m.shape()) +
                                      " at scale index " + std::to_string(s));
        }
    }

    uint64_t digest_all() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const Tensor& m : per_scale)
            h = fnv1a64(m.data(), static_cast<size_t>(m.numel()) * sizeof(double), h);
        return h;
    }
};

inline PriorFeatureStack build_prior_stack(const PriorImage& image,
                                           const FeatureExtractor& extractor) {
    std::vector<Tensor> stages = extract_stage_features(image, extractor);
    PriorFeatureStack stack;
    for (int s = 0; s < 4; ++s) {
        Tensor selected = select_top_variance_channels(stages[static_cast<size_t>(s)], kPriorChannels);
        selected = resize_to_scale(selected, kScaleSides[s], kScaleSides[s]);
        int64_t p = selected.size(1) * selected.size(2);
        for (int64_t ch = 0; ch < kPriorChannels; ++ch) {
            double* base = selected.data() + ch * p;
            double norm_sq = 0.0;
            for (int64_t i = 0; i < p; ++i) norm_sq += base[i] * base[i];
            if (norm_sq == 0.0)
                throw DegenerateInputError("prior stack: zero-norm channel " + std::to_string(ch) +
                                           " at scale " + std::to_string(kScaleSides[s]));
            double inv = 1.0 / std::sqrt(norm_sq);
            for (int64_t i = 0; i < p; ++i) base[i] *= inv;
        }
        stack.per_scale.push_back(std::move(selected));
        stack.source_stage_ids.push_back(s);
    }
    stack.validate();
    return stack;
}

}  // namespace hcp
