// kernels.h — raw numeric kernels shared by the autodiff ops and the
// inference path, so training and decoding produce bit-identical numbers.
//
// Loop shapes are chosen so gcc can vectorize them without -ffast-math:
// broadcast updates for NN/TN, explicit accumulator lanes for dot products.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lrr/common.h"

namespace lrr::kernels {

template <typename T>
T dot(const T* __restrict a, const T* __restrict b, int n) {
    constexpr int kLanes = 8;
    T acc[kLanes] = {};
    int i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (int l = 0; l < kLanes; ++l) {
            acc[l] += a[i + l] * b[i + l];
        }
    }
    T tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    T sum = tail;
    for (int l = 0; l < kLanes; ++l) sum += acc[l];
    return sum;
}

// C (m x n) = op(A) * op(B), where op transposes when the flag is set.
// A is m x k (or k x m when trans_a), B is k x n (or n x k when trans_b).
// When `accumulate` is false C is overwritten.
template <typename T>
void matmul(const T* __restrict a, const T* __restrict b, T* __restrict c, int m, int k, int n,
            bool trans_a, bool trans_b, bool accumulate) {
    if (!accumulate) {
        for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i) c[i] = 0;
    }
    if (!trans_a && !trans_b) {
        for (int i = 0; i < m; ++i) {
            const T* arow = a + static_cast<int64_t>(i) * k;
            T* crow = c + static_cast<int64_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + static_cast<int64_t>(p) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (int i = 0; i < m; ++i) {
            const T* arow = a + static_cast<int64_t>(i) * k;
            T* crow = c + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += dot(arow, b + static_cast<int64_t>(j) * k, k);
            }
        }
    } else if (trans_a && !trans_b) {
        for (int p = 0; p < k; ++p) {
            const T* arow = a + static_cast<int64_t>(p) * m;
            const T* brow = b + static_cast<int64_t>(p) * n;
            for (int i = 0; i < m; ++i) {
                const T av = arow[i];
                if (av == T(0)) continue;
                T* crow = c + static_cast<int64_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            T* crow = c + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                T sum = 0;
                for (int p = 0; p < k; ++p) {
                    sum += a[static_cast<int64_t>(p) * m + i] * b[static_cast<int64_t>(j) * k + p];
                }
                crow[j] += sum;
            }
        }
    }
}

// Softmax over one row of length n. Entries where mask is 0 get probability
// exactly 0; a fully masked row yields all zeros. mask may be null (all on).
template <typename T>
void softmax_row(const T* __restrict x, const uint8_t* mask, T* __restrict y, int n) {
    T mx = 0;
    bool any = false;
    for (int j = 0; j < n; ++j) {
        if (mask && !mask[j]) continue;
        if (!any || x[j] > mx) mx = x[j];
        any = true;
    }
    if (!any) {
        for (int j = 0; j < n; ++j) y[j] = 0;
        return;
    }
    T denom = 0;
    for (int j = 0; j < n; ++j) {
        if (mask && !mask[j]) {
            y[j] = 0;
        } else {
            y[j] = std::exp(x[j] - mx);
            denom += y[j];
        }
    }
    const T inv = T(1) / denom;
    for (int j = 0; j < n; ++j) y[j] *= inv;
}

// Layer norm over one row; writes the normalized row (pre gamma/beta) into
// xhat and the affine result into y. Returns via out-params the statistics
// needed for the backward pass.
template <typename T>
void layer_norm_row(const T* __restrict x, const T* __restrict gamma, const T* __restrict beta,
                    T* __restrict xhat, T* __restrict y, int n, T eps, T* mean_out, T* rstd_out) {
    T mean = 0;
    for (int j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (int j = 0; j < n; ++j) {
        const T d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<T>(n);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
        xhat[j] = (x[j] - mean) * rstd;
        y[j] = xhat[j] * gamma[j] + beta[j];
    }
    *mean_out = mean;
    *rstd_out = rstd;
}

// Exact GELU: x * Phi(x).
template <typename T>
T gelu(T x) {
    return x * T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
    const T phi = std::exp(-T(0.5) * x * x) * T(0.3989422804014326779);
    const T Phi = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
    return Phi + x * phi;
}

// conv2d, NCHW with a single image: in (ci x h x w), weight
// (co x ci x kh x kw), bias (co), zero padding `pad`, square stride.
inline int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
void conv2d_forward(const T* __restrict in, const T* __restrict w, const T* __restrict bias,
                    T* __restrict out, int ci, int h, int win, int co, int kh, int kw, int stride,
                    int pad) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(win, kw, stride, pad);
    for (int oc = 0; oc < co; ++oc) {
        T* oplane = out + static_cast<int64_t>(oc) * oh * ow;
        for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) oplane[i] = bias[oc];
        for (int ic = 0; ic < ci; ++ic) {
            const T* iplane = in + static_cast<int64_t>(ic) * h * win;
            const T* wk = w + ((static_cast<int64_t>(oc) * ci + ic) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const T wv = wk[ky * kw + kx];
                    if (wv == T(0)) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int y = oy * stride + ky - pad;
                        if (y < 0 || y >= h) continue;
                        const T* irow = iplane + static_cast<int64_t>(y) * win;
                        T* orow = oplane + static_cast<int64_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int x = ox * stride + kx - pad;
                            if (x < 0 || x >= win) continue;
                            orow[ox] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

// Backward for conv2d. Any of din/dw/dbias may be null to skip. All are
// accumulated into.
template <typename T>
void conv2d_backward(const T* __restrict in, const T* __restrict w, const T* __restrict dout,
                     T* din, T* dw, T* dbias, int ci, int h, int win, int co, int kh, int kw,
                     int stride, int pad) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(win, kw, stride, pad);
    for (int oc = 0; oc < co; ++oc) {
        const T* dplane = dout + static_cast<int64_t>(oc) * oh * ow;
        if (dbias) {
            T s = 0;
            for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) s += dplane[i];
            dbias[oc] += s;
        }
        for (int ic = 0; ic < ci; ++ic) {
            const T* iplane = in + static_cast<int64_t>(ic) * h * win;
            T* diplane = din ? din + static_cast<int64_t>(ic) * h * win : nullptr;
            const int64_t wbase = ((static_cast<int64_t>(oc) * ci + ic) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const T wv = w[wbase + ky * kw + kx];
                    T wgrad = 0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int y = oy * stride + ky - pad;
                        if (y < 0 || y >= h) continue;
                        const T* irow = iplane + static_cast<int64_t>(y) * win;
                        T* dirow = diplane ? diplane + static_cast<int64_t>(y) * win : nullptr;
                        const T* drow = dplane + static_cast<int64_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int x = ox * stride + kx - pad;
                            if (x < 0 || x >= win) continue;
                            const T g = drow[ox];
                            wgrad += g * irow[x];
                            if (dirow) dirow[x] += g * wv;
                        }
                    }
                    if (dw) dw[wbase + ky * kw + kx] += wgrad;
                }
            }
        }
    }
}

template <typename T>
void avg_pool2d_forward(const T* __restrict in, T* __restrict out, int c, int h, int w, int kernel,
                        int stride) {
    const int oh = conv_out_dim(h, kernel, stride, 0);
    const int ow = conv_out_dim(w, kernel, stride, 0);
    const T inv = T(1) / static_cast<T>(kernel * kernel);
    for (int ic = 0; ic < c; ++ic) {
        const T* iplane = in + static_cast<int64_t>(ic) * h * w;
        T* oplane = out + static_cast<int64_t>(ic) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T s = 0;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        s += iplane[static_cast<int64_t>(oy * stride + ky) * w + ox * stride + kx];
                    }
                }
                oplane[static_cast<int64_t>(oy) * ow + ox] = s * inv;
            }
        }
    }
}

template <typename T>
void avg_pool2d_backward(const T* __restrict dout, T* __restrict din, int c, int h, int w,
                         int kernel, int stride) {
    const int oh = conv_out_dim(h, kernel, stride, 0);
    const int ow = conv_out_dim(w, kernel, stride, 0);
    const T inv = T(1) / static_cast<T>(kernel * kernel);
    for (int ic = 0; ic < c; ++ic) {
        const T* dplane = dout + static_cast<int64_t>(ic) * oh * ow;
        T* diplane = din + static_cast<int64_t>(ic) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const T g = dplane[static_cast<int64_t>(oy) * ow + ox] * inv;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        diplane[static_cast<int64_t>(oy * stride + ky) * w + ox * stride + kx] += g;
                    }
                }
            }
        }
    }
}

}  // namespace lrr::kernels
