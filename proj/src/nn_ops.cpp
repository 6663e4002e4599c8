#include "cupi/nn_ops.hpp"

#include <cmath>

namespace cupi {

namespace {

// im2col for one sample: out is (in_c*9, h*w) row-major. Row (c*9 + k) holds
// the input plane c shifted by kernel offset k, zero-padded at the border.
void im2col(const double* x, int c_in, int h, int w, double* col) {
    const int hw = h * w;
    for (int c = 0; c < c_in; ++c) {
        const double* plane = x + static_cast<std::size_t>(c) * hw;
        for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
                double* row = col + (static_cast<std::size_t>(c) * 9 + (di + 1) * 3 + (dj + 1)) * hw;
                for (int i = 0; i < h; ++i) {
                    const int si = i + di;
                    if (si < 0 || si >= h) {
                        for (int j = 0; j < w; ++j) row[i * w + j] = 0.0;
                        continue;
                    }
                    for (int j = 0; j < w; ++j) {
                        const int sj = j + dj;
                        row[i * w + j] = (sj < 0 || sj >= w) ? 0.0 : plane[si * w + sj];
                    }
                }
            }
        }
    }
}

// Transpose of im2col: scatter-add columns back into the image.
void col2im_add(const double* col, int c_in, int h, int w, double* gx) {
    const int hw = h * w;
    for (int c = 0; c < c_in; ++c) {
        double* plane = gx + static_cast<std::size_t>(c) * hw;
        for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
                const double* row = col + (static_cast<std::size_t>(c) * 9 + (di + 1) * 3 + (dj + 1)) * hw;
                for (int i = 0; i < h; ++i) {
                    const int si = i + di;
                    if (si < 0 || si >= h) continue;
                    for (int j = 0; j < w; ++j) {
                        const int sj = j + dj;
                        if (sj < 0 || sj >= w) continue;
                        plane[si * w + sj] += row[i * w + j];
                    }
                }
            }
        }
    }
}

}  // namespace

void conv3x3_forward(const Tensor4& x, const Mat& weight, const Vec& bias, Tensor4& y) {
    const int c_in = x.c, h = x.h, w = x.w, hw = h * w;
    const int c_out = static_cast<int>(weight.rows());
    if (weight.cols() != c_in * 9) throw ShapeError("conv3x3: weight/input channel mismatch");
    if (!(y.n == x.n && y.c == c_out && y.h == h && y.w == w)) y = Tensor4(x.n, c_out, h, w);

    Mat col(c_in * 9, hw);
    for (int b = 0; b < x.n; ++b) {
        im2col(x.sample(b), c_in, h, w, col.data());
        MatMap out(y.sample(b), c_out, hw);
        out.noalias() = weight * col;
        out.colwise() += bias;
    }
}

void conv3x3_backward(const Tensor4& x, const Mat& weight, const Tensor4& g_y,
                      Tensor4* g_x, Mat* g_weight, Vec* g_bias) {
    const int c_in = x.c, h = x.h, w = x.w, hw = h * w;
    const int c_out = static_cast<int>(weight.rows());

    Mat col(c_in * 9, hw);
    Mat gcol(c_in * 9, hw);
    for (int b = 0; b < x.n; ++b) {
        ConstMatMap gy(g_y.sample(b), c_out, hw);
        if (g_weight || g_bias) {
            im2col(x.sample(b), c_in, h, w, col.data());
            if (g_weight) g_weight->noalias() += gy * col.transpose();
            if (g_bias) g_bias->noalias() += gy.rowwise().sum();
        }
        if (g_x) {
            gcol.noalias() = weight.transpose() * gy;
            col2im_add(gcol.data(), c_in, h, w, g_x->sample(b));
        }
    }
}

void relu_avgpool_forward(const Tensor4& z, Tensor4& y) {
    const int oh = z.h / 2, ow = z.w / 2;
    if (!(y.n == z.n && y.c == z.c && y.h == oh && y.w == ow)) y = Tensor4(z.n, z.c, oh, ow);
    for (int b = 0; b < z.n; ++b) {
        for (int c = 0; c < z.c; ++c) {
            const double* zp = z.plane(b, c);
            double* yp = y.plane(b, c);
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    double s = 0.0;
                    for (int di = 0; di < 2; ++di) {
                        for (int dj = 0; dj < 2; ++dj) {
                            const double v = zp[(2 * i + di) * z.w + (2 * j + dj)];
                            if (v > 0.0) s += v;
                        }
                    }
                    yp[i * ow + j] = 0.25 * s;
                }
            }
        }
    }
}

void relu_avgpool_backward(const Tensor4& z, const Tensor4& g_y, Tensor4& g_z) {
    const int oh = z.h / 2, ow = z.w / 2;
    if (!g_z.same_shape(z)) g_z = Tensor4(z.n, z.c, z.h, z.w);
    g_z.zero();
    for (int b = 0; b < z.n; ++b) {
        for (int c = 0; c < z.c; ++c) {
            const double* zp = z.plane(b, c);
            const double* gp = g_y.plane(b, c);
            double* gz = g_z.plane(b, c);
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    const double g = 0.25 * gp[i * ow + j];
                    for (int di = 0; di < 2; ++di) {
                        for (int dj = 0; dj < 2; ++dj) {
                            const int k = (2 * i + di) * z.w + (2 * j + dj);
                            if (zp[k] > 0.0) gz[k] = g;
                        }
                    }
                }
            }
        }
    }
}

Mat global_avg_pool(const Tensor4& x) {
    Mat out(x.n, x.c);
    const double inv = 1.0 / x.spatial();
    for (int b = 0; b < x.n; ++b) {
        for (int c = 0; c < x.c; ++c) {
            const double* p = x.plane(b, c);
            double s = 0.0;
            for (int k = 0; k < x.spatial(); ++k) s += p[k];
            out(b, c) = s * inv;
        }
    }
    return out;
}

void global_avg_pool_backward(const Mat& g, int h, int w, Tensor4& g_x) {
    const double inv = 1.0 / (h * w);
    if (!(g_x.n == g.rows() && g_x.c == g.cols() && g_x.h == h && g_x.w == w)) {
        g_x = Tensor4(static_cast<int>(g.rows()), static_cast<int>(g.cols()), h, w);
    }
    for (int b = 0; b < g_x.n; ++b) {
        for (int c = 0; c < g_x.c; ++c) {
            double* p = g_x.plane(b, c);
            const double v = g(b, c) * inv;
            for (int k = 0; k < h * w; ++k) p[k] = v;
        }
    }
}

Mat affine_forward(const Mat& x, const Mat& weight, const Vec& bias) {
    if (x.cols() != weight.cols()) throw ShapeError("affine: input width does not match weight");
    Mat y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
}

void affine_backward(const Mat& x, const Mat& weight, const Mat& g_y,
                     Mat* g_x, Mat* g_weight, Vec* g_bias) {
    if (g_x) {
        g_x->resize(g_y.rows(), weight.cols());
        g_x->noalias() = g_y * weight;
    }
    if (g_weight) g_weight->noalias() += g_y.transpose() * x;
    if (g_bias) g_bias->noalias() += g_y.colwise().sum().transpose();
}

Mat softmax(const Mat& logits) {
    Mat p = logits;
    for (Eigen::Index b = 0; b < p.rows(); ++b) {
        const double m = p.row(b).maxCoeff();
        p.row(b) = (p.row(b).array() - m).exp();
        p.row(b) /= p.row(b).sum();
    }
    return p;
}

void channel_mean_std(const Tensor4& f, Mat& mean, Mat& stddev) {
    if (f.spatial() <= 0) throw ShapeError("channel stats: empty spatial extent");
    mean.resize(f.n, f.c);
    stddev.resize(f.n, f.c);
    const double inv = 1.0 / f.spatial();
    for (int b = 0; b < f.n; ++b) {
        for (int c = 0; c < f.c; ++c) {
            const double* p = f.plane(b, c);
            double s = 0.0, s2 = 0.0;
            for (int k = 0; k < f.spatial(); ++k) {
                s += p[k];
                s2 += p[k] * p[k];
            }
            const double mu = s * inv;
            double var = s2 * inv - mu * mu;
            if (var < 0.0) var = 0.0;
            mean(b, c) = mu;
            stddev(b, c) = std::max(std::sqrt(var), kStatSigmaFloor);
        }
    }
}

void channel_mean_std_backward(const Tensor4& f, const Mat& mean, const Mat& stddev,
                               const Mat& g_mean, const Mat& g_stddev, Tensor4& g_f) {
    if (!g_f.same_shape(f)) throw ShapeError("channel stats backward: gradient shape mismatch");
    const int hw = f.spatial();
    const double inv = 1.0 / hw;
    for (int b = 0; b < f.n; ++b) {
        for (int c = 0; c < f.c; ++c) {
            const double* p = f.plane(b, c);
            double* g = g_f.plane(b, c);
            const double gmu = g_mean(b, c) * inv;
            const double sigma = stddev(b, c);
            // d sigma / d x = (x - mu) / (hw * sigma), zero once the floor binds
            const double gsig = sigma > kStatSigmaFloor ? g_stddev(b, c) * inv / sigma : 0.0;
            const double mu = mean(b, c);
            for (int k = 0; k < hw; ++k) g[k] += gmu + gsig * (p[k] - mu);
        }
    }
}

void instance_norm_forward(const Tensor4& f, const Mat& mean, const Mat& stddev, Tensor4& xhat) {
    if (!xhat.same_shape(f)) xhat = Tensor4(f.n, f.c, f.h, f.w);
    for (int b = 0; b < f.n; ++b) {
        for (int c = 0; c < f.c; ++c) {
            const double* p = f.plane(b, c);
            double* o = xhat.plane(b, c);
            const double mu = mean(b, c);
            const double inv_sigma = 1.0 / stddev(b, c);
            for (int k = 0; k < f.spatial(); ++k) o[k] = (p[k] - mu) * inv_sigma;
        }
    }
}

void instance_norm_backward(const Tensor4& f, const Mat& mean, const Mat& stddev,
                            const Tensor4& xhat, const Tensor4& g_xhat, Tensor4& g_f) {
    if (!g_f.same_shape(f)) throw ShapeError("instance norm backward: gradient shape mismatch");
    const int hw = f.spatial();
    const double inv = 1.0 / hw;
    (void)mean;
    for (int b = 0; b < f.n; ++b) {
        for (int c = 0; c < f.c; ++c) {
            const double* g = g_xhat.plane(b, c);
            const double* xh = xhat.plane(b, c);
            double* out = g_f.plane(b, c);
            const double sigma = stddev(b, c);
            double gmean = 0.0, gdot = 0.0;
            for (int k = 0; k < hw; ++k) {
                gmean += g[k];
                gdot += g[k] * xh[k];
            }
            gmean *= inv;
            gdot *= inv;
            const double inv_sigma = 1.0 / sigma;
            if (sigma > kStatSigmaFloor) {
                for (int k = 0; k < hw; ++k) out[k] += (g[k] - gmean - xh[k] * gdot) * inv_sigma;
            } else {
                // floored std acts as a constant divisor
                for (int k = 0; k < hw; ++k) out[k] += (g[k] - gmean) * inv_sigma;
            }
        }
    }
}

}  // namespace cupi
