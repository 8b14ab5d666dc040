#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written with plain loops over std::vector<double>,
// deliberately avoiding the library's tensor/op machinery so that a bug
// in the library cannot hide in its own oracle.

#include <cmath>
#include <vector>

#include "strans/common.hpp"

namespace oracle {

using strans::index_t;

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

struct AttnParams {
    index_t dim = 0, heads = 1;
    std::vector<double> qkv_w;      // [dim][3*dim], row-major input x output
    std::vector<double> qkv_b;      // [3*dim]
    std::vector<double> proj_w;     // [dim][dim]
    std::vector<double> proj_b;     // [dim]
    std::vector<double> bias_table; // [(2bh-1)*(2bw-1)][heads]; empty = none
    index_t bias_h = 0, bias_w = 0;
};

/// Multi-head attention over an explicit token list. `row`/`col` give each
/// token's coordinates inside the bias grid; `allowed` masks pairs (empty =
/// all pairs attend). Tokens are [n][dim], returned in the same layout.
inline std::vector<double> attend_tokens(const std::vector<double>& tok,
                                         index_t n, const AttnParams& p,
                                         const std::vector<index_t>& row,
                                         const std::vector<index_t>& col,
                                         const std::vector<char>& allowed) {
    const index_t C = p.dim, h_n = p.heads, d = C / h_n;
    // qkv projection per token
    std::vector<double> qkv(n * 3 * C, 0.0);
    for (index_t t = 0; t < n; ++t)
        for (index_t o = 0; o < 3 * C; ++o) {
            double acc = p.qkv_b[o];
            for (index_t c = 0; c < C; ++c)
                acc += tok[t * C + c] * p.qkv_w[c * 3 * C + o];
            qkv[t * 3 * C + o] = acc;
        }
    std::vector<double> ctx(n * C, 0.0);
    for (index_t h = 0; h < h_n; ++h) {
        for (index_t i = 0; i < n; ++i) {
            std::vector<double> score(n, 0.0);
            double mx = -1e300;
            for (index_t j = 0; j < n; ++j) {
                if (!allowed.empty() && !allowed[i * n + j]) continue;
                double s = 0;
                for (index_t e = 0; e < d; ++e)
                    s += qkv[i * 3 * C + h * d + e] *
                         qkv[j * 3 * C + C + h * d + e];
                s /= std::sqrt(static_cast<double>(d));
                if (!p.bias_table.empty()) {
                    const index_t dy = row[i] - row[j] + p.bias_h - 1;
                    const index_t dx = col[i] - col[j] + p.bias_w - 1;
                    s += p.bias_table[(dy * (2 * p.bias_w - 1) + dx) * h_n + h];
                }
                score[j] = s;
                mx = std::max(mx, s);
            }
            double z = 0;
            for (index_t j = 0; j < n; ++j) {
                if (!allowed.empty() && !allowed[i * n + j]) continue;
                score[j] = std::exp(score[j] - mx);
                z += score[j];
            }
            for (index_t j = 0; j < n; ++j) {
                if (!allowed.empty() && !allowed[i * n + j]) continue;
                const double w = score[j] / z;
                for (index_t e = 0; e < d; ++e)
                    ctx[i * C + h * d + e] += w * qkv[j * 3 * C + 2 * C + h * d + e];
            }
        }
    }
    // output projection
    std::vector<double> out(n * C, 0.0);
    for (index_t t = 0; t < n; ++t)
        for (index_t o = 0; o < C; ++o) {
            double acc = p.proj_b[o];
            for (index_t c = 0; c < C; ++c)
                acc += ctx[t * C + c] * p.proj_w[c * C + o];
            out[t * C + o] = acc;
        }
    return out;
}

/// Window / shifted-window attention on one image [H][W][dim]. The shifted
/// variant rolls content up-left by M/2, partitions, masks pairs whose
/// original coordinates fall on opposite sides of the wrap seam, attends,
/// and rolls back. Written from the definition, not from the library code.
inline std::vector<double> window_attention(const std::vector<double>& img,
                                            index_t H, index_t W,
                                            const AttnParams& p, index_t M,
                                            bool shifted) {
    const index_t C = p.dim;
    const index_t s = shifted ? M / 2 : 0;
    std::vector<double> out(H * W * C, 0.0);
    for (index_t wi = 0; wi < H / M; ++wi)
        for (index_t wj = 0; wj < W / M; ++wj) {
            const index_t n = M * M;
            std::vector<double> tok(n * C);
            std::vector<index_t> orig_r(n), orig_c(n), in_r(n), in_c(n);
            for (index_t t = 0; t < n; ++t) {
                in_r[t] = t / M;
                in_c[t] = t % M;
                orig_r[t] = (wi * M + in_r[t] + s) % H;
                orig_c[t] = (wj * M + in_c[t] + s) % W;
                for (index_t c = 0; c < C; ++c)
                    tok[t * C + c] = img[(orig_r[t] * W + orig_c[t]) * C + c];
            }
            std::vector<char> allowed;
            if (shifted) {
                allowed.assign(n * n, 1);
                for (index_t i = 0; i < n; ++i)
                    for (index_t j = 0; j < n; ++j) {
                        const bool same_r = (orig_r[i] < s) == (orig_r[j] < s);
                        const bool same_c = (orig_c[i] < s) == (orig_c[j] < s);
                        allowed[i * n + j] = same_r && same_c;
                    }
            }
            auto res = attend_tokens(tok, n, p, in_r, in_c, allowed);
            for (index_t t = 0; t < n; ++t)
                for (index_t c = 0; c < C; ++c)
                    out[(orig_r[t] * W + orig_c[t]) * C + c] = res[t * C + c];
        }
    return out;
}

/// Dense attention over the whole grid, tokens row-major.
inline std::vector<double> global_attention(const std::vector<double>& img,
                                            index_t H, index_t W,
                                            const AttnParams& p) {
    const index_t n = H * W;
    std::vector<index_t> row(n), col(n);
    for (index_t t = 0; t < n; ++t) {
        row[t] = t / W;
        col[t] = t % W;
    }
    return attend_tokens(img, n, p, row, col, {});
}

// ---------------------------------------------------------------------------
// Image ops
// ---------------------------------------------------------------------------

/// Half-pixel-center bilinear resize of [B][H][W][C], edges clamped.
inline std::vector<double> bilinear(const std::vector<double>& x, index_t B,
                                    index_t Hi, index_t Wi, index_t C,
                                    index_t Ho, index_t Wo) {
    std::vector<double> out(B * Ho * Wo * C);
    for (index_t b = 0; b < B; ++b)
        for (index_t i = 0; i < Ho; ++i)
            for (index_t j = 0; j < Wo; ++j) {
                double fy = (i + 0.5) * static_cast<double>(Hi) / Ho - 0.5;
                double fx = (j + 0.5) * static_cast<double>(Wi) / Wo - 0.5;
                fy = std::max(fy, 0.0);
                fx = std::max(fx, 0.0);
                index_t y0 = std::min<index_t>(static_cast<index_t>(fy), Hi - 1);
                index_t x0 = std::min<index_t>(static_cast<index_t>(fx), Wi - 1);
                const index_t y1 = std::min<index_t>(y0 + 1, Hi - 1);
                const index_t x1 = std::min<index_t>(x0 + 1, Wi - 1);
                const double wy = fy - y0, wx = fx - x0;
                for (index_t c = 0; c < C; ++c) {
                    auto at = [&](index_t y, index_t xx) {
                        return x[((b * Hi + y) * Wi + xx) * C + c];
                    };
                    out[((b * Ho + i) * Wo + j) * C + c] =
                        (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                        wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
                }
            }
    return out;
}

/// Zero-padded 3x3 convolution, [B][H][W][Ci] -> [B][H/st][W/st][Co], weight
/// [3][3][Ci][Co] scaled by `wscale` at use.
inline std::vector<double> conv3x3(const std::vector<double>& x, index_t B,
                                   index_t H, index_t W, index_t Ci,
                                   const std::vector<double>& w,
                                   const std::vector<double>& bias, index_t Co,
                                   double wscale, index_t st) {
    const index_t Ho = H / st, Wo = W / st;
    std::vector<double> out(B * Ho * Wo * Co);
    for (index_t b = 0; b < B; ++b)
        for (index_t i = 0; i < Ho; ++i)
            for (index_t j = 0; j < Wo; ++j)
                for (index_t o = 0; o < Co; ++o) {
                    double acc = bias[o];
                    for (index_t dy = 0; dy < 3; ++dy)
                        for (index_t dx = 0; dx < 3; ++dx) {
                            const index_t y = i * st + dy - 1, xx = j * st + dx - 1;
                            if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                            for (index_t c = 0; c < Ci; ++c)
                                acc += x[((b * H + y) * W + xx) * Ci + c] *
                                       wscale *
                                       w[((dy * 3 + dx) * Ci + c) * Co + o];
                        }
                    out[((b * Ho + i) * Wo + j) * Co + o] = acc;
                }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization / optimizer recurrences
// ---------------------------------------------------------------------------

/// Normalizes each row of [rows][C] to zero mean, unit variance (biased).
inline std::vector<double> row_norm(const std::vector<double>& x, index_t rows,
                                    index_t C, double eps) {
    std::vector<double> out(rows * C);
    for (index_t r = 0; r < rows; ++r) {
        double mu = 0;
        for (index_t c = 0; c < C; ++c) mu += x[r * C + c];
        mu /= C;
        double var = 0;
        for (index_t c = 0; c < C; ++c) {
            const double d = x[r * C + c] - mu;
            var += d * d;
        }
        var /= C;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (index_t c = 0; c < C; ++c) out[r * C + c] = (x[r * C + c] - mu) * inv;
    }
    return out;
}

struct AdamTrace {
    std::vector<double> w, m, v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update on a parameter vector.
inline void adam_step(AdamTrace& s, const std::vector<double>& g, double lr,
                      double b1, double b2, double eps) {
    ++s.t;
    for (size_t i = 0; i < s.w.size(); ++i) {
        s.m[i] = b1 * s.m[i] + (1 - b1) * g[i];
        s.v[i] = b2 * s.v[i] + (1 - b2) * g[i] * g[i];
        const double mh = s.m[i] / (1 - std::pow(b1, s.t));
        const double vh = s.v[i] / (1 - std::pow(b2, s.t));
        s.w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Mean pairwise pixel distance of uniform attention over an h x w grid.
inline double uniform_grid_mean_distance(index_t h, index_t w) {
    double total = 0;
    index_t pairs = 0;
    for (index_t a = 0; a < h * w; ++a)
        for (index_t b = 0; b < h * w; ++b) {
            const double dy = static_cast<double>(a / w) - static_cast<double>(b / w);
            const double dx = static_cast<double>(a % w) - static_cast<double>(b % w);
            total += std::sqrt(dy * dy + dx * dx);
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

/// Red-vs-blue dominance rule for the procedural shape classes.
template <class T>
index_t classify_red_blue(const T* img, index_t pixels) {
    double r = 0, b = 0;
    for (index_t i = 0; i < pixels; ++i) {
        r += static_cast<double>(img[i * 3 + 0]);
        b += static_cast<double>(img[i * 3 + 2]);
    }
    return r >= b ? 0 : 1;
}

}  // namespace oracle
