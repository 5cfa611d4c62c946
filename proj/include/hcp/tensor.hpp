#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hcp/errors.hpp"

namespace hcp {

inline constexpr double kPi = 3.14159265358979323846;

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t s : shape) n *= s;
    return n;
}

// Dense row-major tensor of doubles. Everything numeric in the library
// (attention, losses, the toy denoiser, optimizer state) runs on these;
// sizes are desk-scale so value semantics are fine.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        check_shape(shape_);
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw ShapeError("tensor: " + std::to_string(data_.size()) +
                             " values do not fill shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor identity(int64_t n) {
        Tensor t({n, n});
        for (int64_t i = 0; i < n; ++i) t.data_[static_cast<size_t>(i * n + i)] = 1.0;
        return t;
    }

    bool empty() const { return data_.empty(); }
    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& operator()(int64_t i, int64_t j) {
        return data_[static_cast<size_t>(i * shape_[1] + j)];
    }
    double operator()(int64_t i, int64_t j) const {
        return data_[static_cast<size_t>(i * shape_[1] + j)];
    }
    double& operator()(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double operator()(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape) +
                             " changes element count");
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& other) {
        require_same_shape(other, "add");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    }

    void add_scaled_(const Tensor& other, double scale) {
        require_same_shape(other, "add_scaled");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
    }

    void scale_(double s) {
        for (double& v : data_) v *= s;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    static void check_shape(const Shape& shape) {
        for (int64_t s : shape)
            if (s < 0) throw ShapeError("tensor: negative extent in shape " + shape_str(shape));
    }

    void require_same_shape(const Tensor& other, const char* op) const {
        if (!same_shape(other))
            throw ShapeError(std::string(op) + ": shape " + shape_str(shape_) +
                             " vs " + shape_str(other.shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Seeded randomness. mt19937_64 plus explicit Box-Muller so the byte stream
// does not depend on the standard library's distribution implementations.
// ---------------------------------------------------------------------------

inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    static Rng from(uint64_t seed, uint64_t stream) { return Rng(mix_seed(seed, stream)); }

    uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double gaussian() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Inclusive bounds. Modulo draw: bias is negligible for desk-scale spans
    // and the mapping stays identical across standard libraries.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (hi < lo) throw ValidationError("uniform_int: hi < lo");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(engine_() % span);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& text) {
        std::istringstream is(text);
        is >> engine_;
        if (!is) throw ValidationError("rng: failed to parse serialized engine state");
    }

private:
    std::mt19937_64 engine_;
};

inline Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.gaussian();
    return t;
}

// ---------------------------------------------------------------------------
// Matrix helpers. Fixed loop order keeps results deterministic.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b,
                     const char* a_name = "lhs", const char* b_name = "rhs") {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError(std::string("matmul: ") + a_name + " " + shape_str(a.shape()) +
                         " and " + b_name + " " + shape_str(b.shape()) + " must be rank 2");
    if (a.size(1) != b.size(0))
        throw ShapeError(std::string("matmul: ") + a_name + " " + shape_str(a.shape()) +
                         " x " + b_name + " " + shape_str(b.shape()) + ": inner dims differ");
    int64_t m = a.size(0), k = a.size(1), n = b.size(1);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        double* orow = out.data() + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data() + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// a [m,k] x transpose(b [n,k]) -> [m,n]
inline Tensor matmul_transpose_b(const Tensor& a, const Tensor& b,
                                 const char* a_name = "lhs", const char* b_name = "rhs") {
    if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(1))
        throw ShapeError(std::string("matmul_transpose_b: ") + a_name + " " +
                         shape_str(a.shape()) + " x " + b_name + "^T " +
                         shape_str(b.shape()) + ": inner dims differ");
    int64_t m = a.size(0), k = a.size(1), n = b.size(0);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        double* orow = out.data() + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            orow[j] = acc;
        }
    }
    return out;
}

inline Tensor transposed(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
    int64_t m = a.size(0), n = a.size(1);
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out(j, i) = a(i, j);
    return out;
}

// Softmax over the last axis with max subtraction.
inline void softmax_rows_inplace(Tensor& t) {
    if (t.rank() < 1) throw ShapeError("softmax: rank >= 1 required");
    int64_t n = t.size(t.rank() - 1);
    if (n == 0) throw ShapeError("softmax: empty last axis");
    int64_t rows = t.numel() / n;
    for (int64_t r = 0; r < rows; ++r) {
        double* row = t.data() + r * n;
        double mx = row[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int64_t j = 0; j < n; ++j) row[j] /= sum;
    }
}

// Backward of row softmax: dS = y * (dY - sum(dY * y)) per row.
inline Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
    if (!y.same_shape(dy))
        throw ShapeError("softmax_backward: value " + shape_str(y.shape()) +
                         " vs grad " + shape_str(dy.shape()));
    int64_t n = y.size(y.rank() - 1);
    int64_t rows = y.numel() / n;
    Tensor ds(y.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* yr = y.data() + r * n;
        const double* gr = dy.data() + r * n;
        double* dr = ds.data() + r * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
        for (int64_t j = 0; j < n; ++j) dr[j] = yr[j] * (gr[j] - dot);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Bilinear resize on [C, H, W] maps. Corners map to corners, so a same-size
// resize is the exact identity. The adjoint scatters with the same weights,
// making the pair usable in hand-written backward passes.
// ---------------------------------------------------------------------------

namespace detail {

struct LerpCoord {
    int64_t lo, hi;
    double frac;
};

inline LerpCoord lerp_coord(int64_t out_idx, int64_t out_size, int64_t in_size) {
    if (out_size == 1 || in_size == 1) return {0, 0, 0.0};
    double src = static_cast<double>(out_idx) * static_cast<double>(in_size - 1) /
                 static_cast<double>(out_size - 1);
    int64_t lo = static_cast<int64_t>(std::floor(src));
    if (lo >= in_size - 1) return {in_size - 1, in_size - 1, 0.0};
    return {lo, lo + 1, src - static_cast<double>(lo)};
}

}  // namespace detail

inline Tensor bilinear_resize_chw(const Tensor& src, int64_t out_h, int64_t out_w) {
    if (src.rank() != 3) throw ShapeError("bilinear_resize: [C,H,W] tensor required, got " + shape_str(src.shape()));
    if (out_h <= 0 || out_w <= 0) throw ValidationError("bilinear_resize: target sides must be positive");
    int64_t c = src.size(0), h = src.size(1), w = src.size(2);
    if (h == out_h && w == out_w) return src;
    Tensor dst({c, out_h, out_w});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        auto ycoord = detail::lerp_coord(oy, out_h, h);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            auto xcoord = detail::lerp_coord(ox, out_w, w);
            double w00 = (1.0 - ycoord.frac) * (1.0 - xcoord.frac);
            double w01 = (1.0 - ycoord.frac) * xcoord.frac;
            double w10 = ycoord.frac * (1.0 - xcoord.frac);
            double w11 = ycoord.frac * xcoord.frac;
            for (int64_t ch = 0; ch < c; ++ch) {
                dst(ch, oy, ox) = w00 * src(ch, ycoord.lo, xcoord.lo) +
                                  w01 * src(ch, ycoord.lo, xcoord.hi) +
                                  w10 * src(ch, ycoord.hi, xcoord.lo) +
                                  w11 * src(ch, ycoord.hi, xcoord.hi);
            }
        }
    }
    return dst;
}

inline Tensor bilinear_resize_adjoint_chw(const Tensor& grad_out, int64_t in_h, int64_t in_w) {
    if (grad_out.rank() != 3) throw ShapeError("bilinear_resize_adjoint: [C,H,W] tensor required");
    int64_t c = grad_out.size(0), out_h = grad_out.size(1), out_w = grad_out.size(2);
    if (in_h == out_h && in_w == out_w) return grad_out;
    Tensor grad_in({c, in_h, in_w});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        auto ycoord = detail::lerp_coord(oy, out_h, in_h);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            auto xcoord = detail::lerp_coord(ox, out_w, in_w);
            double w00 = (1.0 - ycoord.frac) * (1.0 - xcoord.frac);
            double w01 = (1.0 - ycoord.frac) * xcoord.frac;
            double w10 = ycoord.frac * (1.0 - xcoord.frac);
            double w11 = ycoord.frac * xcoord.frac;
            for (int64_t ch = 0; ch < c; ++ch) {
                double g = grad_out(ch, oy, ox);
                grad_in(ch, ycoord.lo, xcoord.lo) += w00 * g;
                grad_in(ch, ycoord.lo, xcoord.hi) += w01 * g;
                grad_in(ch, ycoord.hi, xcoord.lo) += w10 * g;
                grad_in(ch, ycoord.hi, xcoord.hi) += w11 * g;
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Hashing (parameter digests, content-addressed caches, golden checks).
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void* bytes, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t digest(const Tensor& t) {
    return fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
}

}  // namespace hcp
