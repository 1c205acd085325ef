#include "tmvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "tmvit/errors.hpp"
#include "tmvit/macs.hpp"

namespace tmvit {

namespace {

std::size_t checked_count(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor shape must have at least one dimension");
    }
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw DimensionError("tensor dimensions must be positive, got " + std::to_string(d));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_to_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void require_rank(const Tensor& t, int rank, const char* who) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(who) + ": expected rank-" + std::to_string(rank) +
                             " tensor, got " + t.shape_str());
    }
}

} // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(checked_count(shape_), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_count(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_to_str(shape_));
    }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::reshape(std::vector<int> new_shape) const {
    if (checked_count(new_shape) != data_.size()) {
        throw DimensionError("reshape " + shape_str() + " -> " + shape_to_str(new_shape) +
                             " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    return shape_to_str(shape_);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    detail::mac_add(static_cast<std::uint64_t>(m) * k * n);

    Tensor c({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    // i-k-j order: the inner loop runs over contiguous rows of b and c.
    for (int i = 0; i < m; ++i) {
        const float* arow = pa + static_cast<std::size_t>(i) * k;
        float* crow = pc + static_cast<std::size_t>(i) * n;
        for (int t = 0; t < k; ++t) {
            const float av = arow[t];
            const float* brow = pb + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    Tensor t({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        const float* src = x.data() + static_cast<std::size_t>(i) * n;
        float* dst = out.data() + static_cast<std::size_t>(i) * n;
        float mx = src[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, src[j]);
        float sum = 0.0f;
        for (int j = 0; j < n; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        const float inv = 1.0f / sum;
        for (int j = 0; j < n; ++j) dst[j] *= inv;
    }
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    require_rank(x, 2, "layernorm");
    require_rank(gamma, 1, "layernorm");
    require_rank(beta, 1, "layernorm");
    const int n = x.dim(0), d = x.dim(1);
    if (gamma.dim(0) != d || beta.dim(0) != d) {
        throw DimensionError("layernorm: affine params " + gamma.shape_str() + "/" +
                             beta.shape_str() + " do not match feature dim of " + x.shape_str());
    }
    if (!(eps > 0.0f)) {
        throw ParameterError("layernorm: eps must be positive");
    }
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        const float* src = x.data() + static_cast<std::size_t>(i) * d;
        float* dst = out.data() + static_cast<std::size_t>(i) * d;
        float mean = 0.0f;
        for (int j = 0; j < d; ++j) mean += src[j];
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (int j = 0; j < d; ++j) {
            const float z = src[j] - mean;
            var += z * z;
        }
        var /= static_cast<float>(d);
        const float inv = 1.0f / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) {
            dst[j] = (src[j] - mean) * inv * gamma[static_cast<std::size_t>(j)] +
                     beta[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    constexpr float inv_sqrt2 = 0.70710678118654752f;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float v = out[i];
        out[i] = 0.5f * v * (1.0f + std::erf(v * inv_sqrt2));
    }
    return out;
}

Tensor conv2d_depthwise(const Tensor& x, const Tensor& kernel, int dilation) {
    require_rank(x, 3, "conv2d_depthwise");
    require_rank(kernel, 3, "conv2d_depthwise");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int kh = kernel.dim(1), kw = kernel.dim(2);
    if (kernel.dim(0) != c) {
        throw DimensionError("conv2d_depthwise: kernel channels " + kernel.shape_str() +
                             " do not match input " + x.shape_str());
    }
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw DimensionError("conv2d_depthwise: kernel sides must be odd, got " +
                             kernel.shape_str());
    }
    if (dilation < 1) {
        throw ParameterError("conv2d_depthwise: dilation must be >= 1");
    }
    detail::mac_add(static_cast<std::uint64_t>(c) * h * w * kh * kw);

    const int py = dilation * (kh / 2);
    const int px = dilation * (kw / 2);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                float acc = 0.0f;
                for (int ky = 0; ky < kh; ++ky) {
                    const int sy = y + ky * dilation - py;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int sx = xx + kx * dilation - px;
                        if (sx < 0 || sx >= w) continue;
                        acc += x(ch, sy, sx) * kernel(ch, ky, kx);
                    }
                }
                out(ch, y, xx) = acc;
            }
        }
    }
    return out;
}

Tensor conv2d_pointwise(const Tensor& x, const Tensor& kernel) {
    require_rank(x, 3, "conv2d_pointwise");
    require_rank(kernel, 2, "conv2d_pointwise");
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int cout = kernel.dim(0);
    if (kernel.dim(1) != cin) {
        throw DimensionError("conv2d_pointwise: kernel " + kernel.shape_str() +
                             " does not match input channels of " + x.shape_str());
    }
    detail::mac_add(static_cast<std::uint64_t>(h) * w * cin * cout);

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out({cout, h, w});
    for (int co = 0; co < cout; ++co) {
        float* dst = out.data() + static_cast<std::size_t>(co) * plane;
        for (int ci = 0; ci < cin; ++ci) {
            const float kv = kernel(co, ci);
            const float* src = x.data() + static_cast<std::size_t>(ci) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                dst[p] += kv * src[p];
            }
        }
    }
    return out;
}

Tensor nearest_upsample(const Tensor& x, int factor) {
    require_rank(x, 3, "nearest_upsample");
    if (factor < 1) {
        throw ParameterError("nearest_upsample: factor must be >= 1");
    }
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, h * factor, w * factor});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h * factor; ++y) {
            for (int xx = 0; xx < w * factor; ++xx) {
                out(ch, y, xx) = x(ch, y / factor, xx / factor);
            }
        }
    }
    return out;
}

Tensor avgpool2d(const Tensor& x, int window) {
    require_rank(x, 3, "avgpool2d");
    if (window < 1) {
        throw ParameterError("avgpool2d: window must be >= 1");
    }
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % window != 0 || w % window != 0) {
        throw DimensionError("avgpool2d: window " + std::to_string(window) +
                             " does not divide spatial dims of " + x.shape_str());
    }
    const int oh = h / window, ow = w / window;
    const float inv = 1.0f / static_cast<float>(window * window);
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            for (int xx = 0; xx < ow; ++xx) {
                float acc = 0.0f;
                for (int dy = 0; dy < window; ++dy) {
                    for (int dx = 0; dx < window; ++dx) {
                        acc += x(ch, y * window + dy, xx * window + dx);
                    }
                }
                out(ch, y, xx) = acc * inv;
            }
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    require_rank(x, 2, "add_row_bias");
    require_rank(bias, 1, "add_row_bias");
    const int n = x.dim(0), d = x.dim(1);
    if (bias.dim(0) != d) {
        throw DimensionError("add_row_bias: bias " + bias.shape_str() + " vs rows of " +
                             x.shape_str());
    }
    Tensor out = x;
    for (int i = 0; i < n; ++i) {
        float* dst = out.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += bias[static_cast<std::size_t>(j)];
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_row_bias(matmul(x, w), b);
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    require_rank(x, 2, "slice_cols");
    const int n = x.dim(0), d = x.dim(1);
    if (c0 < 0 || c1 > d || c0 >= c1) {
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + ", " +
                             std::to_string(c1) + ") invalid for " + x.shape_str());
    }
    Tensor out({n, c1 - c0});
    for (int i = 0; i < n; ++i) {
        const float* src = x.data() + static_cast<std::size_t>(i) * d + c0;
        float* dst = out.data() + static_cast<std::size_t>(i) * (c1 - c0);
        std::copy(src, src + (c1 - c0), dst);
    }
    return out;
}

Tensor take_rows(const Tensor& x, const std::vector<int>& rows) {
    require_rank(x, 2, "take_rows");
    const int n = x.dim(0), d = x.dim(1);
    if (rows.empty()) {
        throw DimensionError("take_rows: empty row selection");
    }
    Tensor out({static_cast<int>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || r >= n) {
            throw DimensionError("take_rows: row " + std::to_string(r) + " out of range for " +
                                 x.shape_str());
        }
        const float* src = x.data() + static_cast<std::size_t>(r) * d;
        std::copy(src, src + d, out.data() + i * static_cast<std::size_t>(d));
    }
    return out;
}

Tensor drop_row0(const Tensor& x) {
    require_rank(x, 2, "drop_row0");
    const int n = x.dim(0), d = x.dim(1);
    if (n < 2) {
        throw DimensionError("drop_row0: need at least two rows, got " + x.shape_str());
    }
    Tensor out({n - 1, d});
    std::copy(x.data() + d, x.data() + static_cast<std::size_t>(n) * d, out.data());
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "concat_rows");
    require_rank(b, 2, "concat_rows");
    if (a.dim(1) != b.dim(1)) {
        throw DimensionError("concat_rows: column mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

Tensor row(const Tensor& x, int i) {
    return take_rows(x, {i});
}

} // namespace tmvit
