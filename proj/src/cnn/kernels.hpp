// SPDX-License-Identifier: Apache-2.0
// Internal dense kernels shared by the layer ops and the network.
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>

namespace harmodop::cnn::kernels {

/// C[M x N] (+)= A[M x K] * B[K x N], all row-major. Each C element sums
/// over k in ascending order regardless of tiling, so results are
/// reproducible run to run.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate)
{
    if (!accumulate) {
        std::fill(c, c + m * n, T(0));
    }
    constexpr std::size_t kColBlock = 512;
    constexpr std::size_t kDepthBlock = 128;
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t j1 = std::min(n, j0 + kColBlock);
        for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
            const std::size_t k1 = std::min(k, k0 + kDepthBlock);
            std::size_t i = 0;
            for (; i + 4 <= m; i += 4) {
                T* c0 = c + i * n;
                T* c1 = c0 + n;
                T* c2 = c1 + n;
                T* c3 = c2 + n;
                const T* a0 = a + i * k;
                const T* a1 = a0 + k;
                const T* a2 = a1 + k;
                const T* a3 = a2 + k;
                for (std::size_t p = k0; p < k1; ++p) {
                    const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
                    const T* __restrict row = b + p * n;
                    for (std::size_t j = j0; j < j1; ++j) {
                        const T x = row[j];
                        c0[j] += v0 * x;
                        c1[j] += v1 * x;
                        c2[j] += v2 * x;
                        c3[j] += v3 * x;
                    }
                }
            }
            for (; i < m; ++i) {
                T* __restrict ci = c + i * n;
                const T* ai = a + i * k;
                for (std::size_t p = k0; p < k1; ++p) {
                    const T v = ai[p];
                    const T* __restrict row = b + p * n;
                    for (std::size_t j = j0; j < j1; ++j) {
                        ci[j] += v * row[j];
                    }
                }
            }
        }
    }
}

/// C[M x N] (+)= A^T * B with A stored K x M and B stored K x N.
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate)
{
    if (!accumulate) {
        std::fill(c, c + m * n, T(0));
    }
    for (std::size_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* __restrict row = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T v = ap[i];
            if (v == T(0)) {
                continue;
            }
            T* __restrict ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += v * row[j];
            }
        }
    }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst)
{
    constexpr std::size_t kBlock = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
        for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
            const std::size_t r1 = std::min(rows, r0 + kBlock);
            const std::size_t c1 = std::min(cols, c0 + kBlock);
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t cc = c0; cc < c1; ++cc) {
                    dst[cc * rows + r] = src[r * cols + cc];
                }
            }
        }
    }
}

inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t pad)
{
    return in + 2 * pad + 1 - kernel;
}

/// Unfolds a C x H x W input into (C*k*k) x (Ho*Wo) patch columns, stride 1.
template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t h, std::size_t w, std::size_t kernel, std::size_t pad,
            T* col)
{
    const std::size_t ho = conv_out_dim(h, kernel, pad);
    const std::size_t wo = conv_out_dim(w, kernel, pad);
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = in + c * h * w;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
            for (std::size_t kx = 0; kx < kernel; ++kx) {
                T* dst = col + ((c * kernel + ky) * kernel + kx) * ho * wo;
                // Valid output columns: 0 <= ox + kx - pad < w.
                const std::size_t ox_lo = std::min(wo, kx < pad ? pad - kx : std::size_t{0});
                const std::size_t ox_hi = static_cast<std::size_t>(
                    std::clamp(static_cast<long>(w + pad) - static_cast<long>(kx), 0L, static_cast<long>(wo)));
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    T* drow = dst + oy * wo;
                    const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        std::fill(drow, drow + wo, T(0));
                        continue;
                    }
                    const T* srow = plane + static_cast<std::size_t>(iy) * w;
                    std::fill(drow, drow + std::min(ox_lo, wo), T(0));
                    for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                        drow[ox] = srow[ox + kx - pad];
                    }
                    if (ox_hi < wo) {
                        std::fill(drow + std::max(ox_hi, ox_lo), drow + wo, T(0));
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters patch-column gradients back onto the input.
template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kernel, std::size_t pad,
                T* dx)
{
    const std::size_t ho = conv_out_dim(h, kernel, pad);
    const std::size_t wo = conv_out_dim(w, kernel, pad);
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = dx + c * h * w;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
            for (std::size_t kx = 0; kx < kernel; ++kx) {
                const T* src = col + ((c * kernel + ky) * kernel + kx) * ho * wo;
                const std::size_t ox_lo = std::min(wo, kx < pad ? pad - kx : std::size_t{0});
                const std::size_t ox_hi = static_cast<std::size_t>(
                    std::clamp(static_cast<long>(w + pad) - static_cast<long>(kx), 0L, static_cast<long>(wo)));
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        continue;
                    }
                    T* drow = plane + static_cast<std::size_t>(iy) * w;
                    const T* srow = src + oy * wo;
                    for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                        drow[ox + kx - pad] += srow[ox];
                    }
                }
            }
        }
    }
}

struct PoolGeometry {
    std::size_t out_h = 0, out_w = 0;
    std::size_t pad_top = 0, pad_left = 0;
};

inline PoolGeometry pool_geometry(std::size_t h, std::size_t w, std::size_t window, std::size_t stride, bool same)
{
    PoolGeometry g;
    if (same) {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        const std::size_t need_h = (g.out_h - 1) * stride + window;
        const std::size_t need_w = (g.out_w - 1) * stride + window;
        g.pad_top = need_h > h ? (need_h - h) / 2 : 0;
        g.pad_left = need_w > w ? (need_w - w) / 2 : 0;
    } else {
        g.out_h = (h - window) / stride + 1;
        g.out_w = (w - window) / stride + 1;
    }
    return g;
}

/// Max pooling; argmax holds flat input indices, first maximum wins on ties.
/// Padding cells never win.
template <typename T>
void maxpool(const T* in, std::size_t channels, std::size_t h, std::size_t w, std::size_t window, std::size_t stride,
             const PoolGeometry& g, T* out, std::size_t* argmax)
{
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = in + c * h * w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long y0 = static_cast<long>(oy * stride) - static_cast<long>(g.pad_top);
            const std::size_t ylo = static_cast<std::size_t>(std::max(0L, y0));
            const std::size_t yhi = static_cast<std::size_t>(std::min(static_cast<long>(h), y0 + static_cast<long>(window)));
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long x0 = static_cast<long>(ox * stride) - static_cast<long>(g.pad_left);
                const std::size_t xlo = static_cast<std::size_t>(std::max(0L, x0));
                const std::size_t xhi =
                    static_cast<std::size_t>(std::min(static_cast<long>(w), x0 + static_cast<long>(window)));
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_idx = ylo * w + xlo;
                for (std::size_t y = ylo; y < yhi; ++y) {
                    for (std::size_t x = xlo; x < xhi; ++x) {
                        const T v = plane[y * w + x];
                        if (v > best) {
                            best = v;
                            best_idx = y * w + x;
                        }
                    }
                }
                const std::size_t o = (c * g.out_h + oy) * g.out_w + ox;
                out[o] = plane[best_idx];
                argmax[o] = c * h * w + best_idx;
            }
        }
    }
}

}  // namespace harmodop::cnn::kernels
