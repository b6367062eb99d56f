// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowmotion {

/// Thrown when two tensors that must agree in shape do not.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when a latent turns non-finite mid-computation (carries the
/// denoising step that produced it when known).
struct numeric_error : std::runtime_error {
    int step = -1;
    explicit numeric_error(const std::string& msg, int step_ = -1)
        : std::runtime_error(msg), step(step_) {}
};

/// (frames, height, width, channels) — the only tensor rank this project uses.
struct Shape4 {
    int f = 0;
    int h = 0;
    int w = 0;
    int c = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(f) * h * w * c;
    }
    std::size_t frame_numel() const {
        return static_cast<std::size_t>(h) * w * c;
    }
    bool valid() const { return f >= 1 && h >= 1 && w >= 1 && c >= 1; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(f) + "," + std::to_string(h) + "," +
               std::to_string(w) + "," + std::to_string(c) + ")";
    }
};

/// Rank-4 row-major float tensor holding video latents, velocities and
/// latent predictions. Values are 32-bit; every reduction over entries
/// accumulates in 64-bit.
class LatentTensor {
public:
    LatentTensor() = default;

    explicit LatentTensor(Shape4 shape, float fill = 0.0f)
        : shape_(shape), data_(check_shape(shape).numel(), fill) {}

    LatentTensor(Shape4 shape, std::vector<float> data)
        : shape_(shape), data_(std::move(data)) {
        check_shape(shape);
        if (data_.size() != shape_.numel()) {
            throw shape_error("data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_.str());
        }
    }

    const Shape4& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(int f, int h, int w, int c) { return data_[index(f, h, w, c)]; }
    float at(int f, int h, int w, int c) const { return data_[index(f, h, w, c)]; }

    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    std::span<const float> frame(int f) const {
        return std::span<const float>(data_).subspan(
            static_cast<std::size_t>(f) * shape_.frame_numel(), shape_.frame_numel());
    }
    std::span<float> frame(int f) {
        return std::span<float>(data_).subspan(
            static_cast<std::size_t>(f) * shape_.frame_numel(), shape_.frame_numel());
    }

    bool all_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

private:
    static const Shape4& check_shape(const Shape4& s) {
        if (!s.valid()) throw shape_error("invalid tensor shape " + s.str());
        return s;
    }
    std::size_t index(int f, int h, int w, int c) const {
        return ((static_cast<std::size_t>(f) * shape_.h + h) * shape_.w + w) * shape_.c + c;
    }

    Shape4 shape_;
    std::vector<float> data_;
};

inline void require_same_shape(const LatentTensor& a, const LatentTensor& b,
                               const char* what) {
    if (!(a.shape() == b.shape())) {
        throw shape_error(std::string(what) + ": shape mismatch " +
                          a.shape().str() + " vs " + b.shape().str());
    }
}

/// Sum_i a_i b_i over all F*H*W*C entries, accumulated in double.
inline double inner_product(const LatentTensor& a, const LatentTensor& b) {
    require_same_shape(a, b, "inner_product");
    double acc = 0.0;
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        acc += static_cast<double>(va[i]) * static_cast<double>(vb[i]);
    }
    return acc;
}

inline double squared_norm(const LatentTensor& a) { return inner_product(a, a); }

inline double norm(const LatentTensor& a) { return std::sqrt(squared_norm(a)); }

/// Elementwise (1-t)*z0 + t*z1; the interpolation path the whole pipeline
/// moves along.
inline LatentTensor lerp_path(const LatentTensor& z0, const LatentTensor& z1,
                              double t) {
    require_same_shape(z0, z1, "lerp_path");
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::domain_error("lerp_path: t=" + std::to_string(t) +
                                " outside [0,1]");
    }
    LatentTensor out(z0.shape());
    const float ft = static_cast<float>(t);
    const float omt = static_cast<float>(1.0 - t);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = omt * z0[i] + ft * z1[i];
    }
    return out;
}

inline LatentTensor add(const LatentTensor& a, const LatentTensor& b) {
    require_same_shape(a, b, "add");
    LatentTensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline LatentTensor sub(const LatentTensor& a, const LatentTensor& b) {
    require_same_shape(a, b, "sub");
    LatentTensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline LatentTensor scale(const LatentTensor& a, double s) {
    LatentTensor out(a.shape());
    const float fs = static_cast<float>(s);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fs * a[i];
    return out;
}

/// a + s*b, the one fused op the samplers lean on.
inline LatentTensor axpy(const LatentTensor& a, double s, const LatentTensor& b) {
    require_same_shape(a, b, "axpy");
    LatentTensor out(a.shape());
    const float fs = static_cast<float>(s);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + fs * b[i];
    return out;
}

}  // namespace flowmotion
