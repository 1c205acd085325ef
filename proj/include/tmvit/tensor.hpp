#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

namespace tmvit {

// Dense row-major float32 tensor with an explicit shape. There is no
// broadcasting: callers reshape explicitly, and every op validates the shapes
// it needs.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);                    // zero-filled
    Tensor(std::vector<int> shape, std::vector<float> values);

    static Tensor full(std::vector<int> shape, float value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // rank-2 access: (row, col)
    float& operator()(int i, int j) {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(i) * dim(1) + j];
    }
    float operator()(int i, int j) const {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(i) * dim(1) + j];
    }

    // rank-3 access: (channel, y, x)
    float& operator()(int c, int y, int x) {
        assert(rank() == 3);
        return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    float operator()(int c, int y, int x) const {
        assert(rank() == 3);
        return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }

    // Same data, new shape; element counts must agree.
    Tensor reshape(std::vector<int> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;   // e.g. "[3x224x224]"

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

// ---- core ops (all pure; matmul/conv feed the MAC counter) -----------------

Tensor matmul(const Tensor& a, const Tensor& b);   // [m x k] * [k x n]
Tensor transpose(const Tensor& a);                 // rank-2

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

// Per-row normalization of [n x d] to zero mean / unit variance, then the
// affine transform gamma * xhat + beta.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Exact GeLU: 0.5 * x * (1 + erf(x / sqrt(2))).
Tensor gelu(const Tensor& x);

// Convolutions and resampling over channel-major [C x H x W] grids. Convs use
// zero same-padding and require odd kernel sides.
Tensor conv2d_depthwise(const Tensor& x, const Tensor& kernel, int dilation = 1); // kernel [C x k x k]
Tensor conv2d_pointwise(const Tensor& x, const Tensor& kernel);                   // kernel [Cout x Cin]
Tensor nearest_upsample(const Tensor& x, int factor);
Tensor avgpool2d(const Tensor& x, int window);

// ---- elementwise and layout helpers ----------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);      // hadamard
Tensor scale(const Tensor& a, float s);
Tensor add_row_bias(const Tensor& x, const Tensor& bias);        // [n x d] + [d]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b); // x*w + b
Tensor slice_cols(const Tensor& x, int c0, int c1);               // columns [c0, c1)
Tensor take_rows(const Tensor& x, const std::vector<int>& rows);
Tensor drop_row0(const Tensor& x);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor row(const Tensor& x, int i);                               // [1 x d]

} // namespace tmvit
