#pragma once

#include "cupi/tensor.hpp"

namespace cupi {

// Forward/backward kernels for the pyramid blocks and heads. All convolutions
// are 3x3, stride 1, zero padding 1; pooling is 2x2 average with stride 2 and
// floor semantics (odd trailing rows/cols are dropped).

// weight is (out_c, in_c*9) row-major; bias is (out_c).
void conv3x3_forward(const Tensor4& x, const Mat& weight, const Vec& bias, Tensor4& y);
// Accumulates into g_weight/g_bias; writes g_x (when non-null).
void conv3x3_backward(const Tensor4& x, const Mat& weight, const Tensor4& g_y,
                      Tensor4* g_x, Mat* g_weight, Vec* g_bias);

// y = avgpool2(relu(z)); backward needs the pre-activation z.
void relu_avgpool_forward(const Tensor4& z, Tensor4& y);
void relu_avgpool_backward(const Tensor4& z, const Tensor4& g_y, Tensor4& g_z);

// Global average pool to (B, C).
Mat global_avg_pool(const Tensor4& x);
void global_avg_pool_backward(const Mat& g, int h, int w, Tensor4& g_x);

// y = x * W^T + b with x (B, in), W (out, in).
Mat affine_forward(const Mat& x, const Mat& weight, const Vec& bias);
void affine_backward(const Mat& x, const Mat& weight, const Mat& g_y,
                     Mat* g_x, Mat* g_weight, Vec* g_bias);

// Row-wise softmax.
Mat softmax(const Mat& logits);

// Per-sample, per-channel mean and epsilon-floored population std over
// spatial positions. Results are (B, C).
constexpr double kStatSigmaFloor = 1e-5;
void channel_mean_std(const Tensor4& f, Mat& mean, Mat& stddev);
// Chain rule through (mean, std). Accumulates into g_f. Gradients through the
// std are gated off where the floor is active.
void channel_mean_std_backward(const Tensor4& f, const Mat& mean, const Mat& stddev,
                               const Mat& g_mean, const Mat& g_stddev, Tensor4& g_f);

// xhat = (f - mean) / std using the stats above.
void instance_norm_forward(const Tensor4& f, const Mat& mean, const Mat& stddev, Tensor4& xhat);
// Full backward through xhat including the dependence of (mean, std) on f.
// Accumulates into g_f.
void instance_norm_backward(const Tensor4& f, const Mat& mean, const Mat& stddev,
                            const Tensor4& xhat, const Tensor4& g_xhat, Tensor4& g_f);

}  // namespace cupi
