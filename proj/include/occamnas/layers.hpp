#pragma once

// Per-sample compute kernels for the fixed layer grammar. All buffers are
// row-major NHWC (channel fastest) so the innermost loops run over the
// output channels and vectorize. Backward kernels accumulate into the
// provided gradient buffers; input gradients are optional.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace occamnas::kernels {

template <class Real>
void rescale_forward(const Real* in, std::size_t n, Real* out) {
    const Real scale = Real(1) / Real(255);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = in[i] * scale;
}

// Input batchnorm: normalize per channel with the supplied statistics, then
// apply the affine pair. Works for both train (batch stats) and infer
// (running stats); the caller picks the statistics.
template <class Real>
void batchnorm_forward(const Real* in, int hw, int ch, const Real* mean, const Real* inv_std,
                       const Real* gamma, const Real* beta, Real* out) {
    for (int p = 0; p < hw; ++p) {
        const Real* x = in + static_cast<std::size_t>(p) * ch;
        Real* y = out + static_cast<std::size_t>(p) * ch;
        for (int c = 0; c < ch; ++c)
            y[c] = gamma[c] * ((x[c] - mean[c]) * inv_std[c]) + beta[c];
    }
}

// d(gamma), d(beta) only: the layer sits directly above the parameterless
// rescale, so no gradient needs to flow further down.
template <class Real>
void batchnorm_backward_params(const Real* in, int hw, int ch, const Real* mean,
                               const Real* inv_std, const Real* dout, Real* dgamma,
                               Real* dbeta) {
    for (int p = 0; p < hw; ++p) {
        const Real* x = in + static_cast<std::size_t>(p) * ch;
        const Real* dy = dout + static_cast<std::size_t>(p) * ch;
        for (int c = 0; c < ch; ++c) {
            dgamma[c] += dy[c] * ((x[c] - mean[c]) * inv_std[c]);
            dbeta[c] += dy[c];
        }
    }
}

// 3x3 convolution, stride 1, zero padding, optional fused ReLU.
// Weight layout: [ky][kx][ci][co].
template <class Real>
void conv3x3_forward(const Real* in, int h, int w, int ci, const Real* wgt, const Real* bias,
                     int co, Real* out, bool relu, std::vector<Real>& acc) {
    acc.resize(static_cast<std::size_t>(co));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int oc = 0; oc < co; ++oc)
                acc[oc] = bias[oc];
            const int ky0 = y > 0 ? 0 : 1, ky1 = y < h - 1 ? 3 : 2;
            const int kx0 = x > 0 ? 0 : 1, kx1 = x < w - 1 ? 3 : 2;
            for (int ky = ky0; ky < ky1; ++ky) {
                const Real* row = in + (static_cast<std::size_t>(y + ky - 1) * w) * ci;
                for (int kx = kx0; kx < kx1; ++kx) {
                    const Real* px = row + static_cast<std::size_t>(x + kx - 1) * ci;
                    const Real* wr = wgt + ((static_cast<std::size_t>(ky) * 3 + kx) * ci) * co;
                    for (int ic = 0; ic < ci; ++ic) {
                        const Real v = px[ic];
                        const Real* wc = wr + static_cast<std::size_t>(ic) * co;
                        for (int oc = 0; oc < co; ++oc)
                            acc[oc] += v * wc[oc];
                    }
                }
            }
            Real* dst = out + (static_cast<std::size_t>(y) * w + x) * co;
            if (relu)
                for (int oc = 0; oc < co; ++oc)
                    dst[oc] = acc[oc] > Real(0) ? acc[oc] : Real(0);
            else
                for (int oc = 0; oc < co; ++oc)
                    dst[oc] = acc[oc];
        }
    }
}

template <class Real>
void conv3x3_backward(const Real* in, int h, int w, int ci, const Real* wgt, int co,
                      const Real* out, const Real* dout, bool relu, Real* dw, Real* db,
                      Real* din, std::vector<Real>& dz) {
    dz.resize(static_cast<std::size_t>(co));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t o = (static_cast<std::size_t>(y) * w + x) * co;
            for (int oc = 0; oc < co; ++oc) {
                const Real g = (relu && out[o + oc] <= Real(0)) ? Real(0) : dout[o + oc];
                dz[oc] = g;
                db[oc] += g;
            }
            const int ky0 = y > 0 ? 0 : 1, ky1 = y < h - 1 ? 3 : 2;
            const int kx0 = x > 0 ? 0 : 1, kx1 = x < w - 1 ? 3 : 2;
            for (int ky = ky0; ky < ky1; ++ky) {
                const std::size_t row = (static_cast<std::size_t>(y + ky - 1) * w) * ci;
                for (int kx = kx0; kx < kx1; ++kx) {
                    const std::size_t px = row + static_cast<std::size_t>(x + kx - 1) * ci;
                    const std::size_t wr = ((static_cast<std::size_t>(ky) * 3 + kx) * ci) *
                                           static_cast<std::size_t>(co);
                    for (int ic = 0; ic < ci; ++ic) {
                        const Real v = in[px + ic];
                        const std::size_t wc = wr + static_cast<std::size_t>(ic) * co;
                        Real s = 0;
                        for (int oc = 0; oc < co; ++oc) {
                            dw[wc + oc] += v * dz[oc];
                            s += wgt[wc + oc] * dz[oc];
                        }
                        if (din)
                            din[px + ic] += s;
                    }
                }
            }
        }
    }
}

// 2x2 stride-2 max pooling with floor division; trailing odd row/column is
// dropped. argmax records the winning window slot (0..3) per output element.
template <class Real>
void maxpool_forward(const Real* in, int h, int w, int ch, Real* out, int* argmax) {
    const int h2 = h / 2, w2 = w / 2;
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            for (int c = 0; c < ch; ++c) {
                Real best = in[((static_cast<std::size_t>(2 * y) * w) + 2 * x) * ch + c];
                int slot = 0;
                for (int s = 1; s < 4; ++s) {
                    const int yy = 2 * y + (s >> 1), xx = 2 * x + (s & 1);
                    const Real v = in[(static_cast<std::size_t>(yy) * w + xx) * ch + c];
                    if (v > best) {
                        best = v;
                        slot = s;
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(y) * w2 + x) * ch + c;
                out[o] = best;
                argmax[o] = slot;
            }
        }
    }
}

template <class Real>
void maxpool_backward(const Real* dout, int h, int w, int ch, const int* argmax, Real* din) {
    const int h2 = h / 2, w2 = w / 2;
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            for (int c = 0; c < ch; ++c) {
                const std::size_t o = (static_cast<std::size_t>(y) * w2 + x) * ch + c;
                const int s = argmax[o];
                const int yy = 2 * y + (s >> 1), xx = 2 * x + (s & 1);
                din[(static_cast<std::size_t>(yy) * w + xx) * ch + c] += dout[o];
            }
        }
    }
}

template <class Real>
void gap_forward(const Real* in, int hw, int ch, Real* out) {
    for (int c = 0; c < ch; ++c)
        out[c] = 0;
    for (int p = 0; p < hw; ++p) {
        const Real* x = in + static_cast<std::size_t>(p) * ch;
        for (int c = 0; c < ch; ++c)
            out[c] += x[c];
    }
    const Real inv = Real(1) / Real(hw);
    for (int c = 0; c < ch; ++c)
        out[c] *= inv;
}

template <class Real>
void gap_backward(const Real* dout, int hw, int ch, Real* din) {
    const Real inv = Real(1) / Real(hw);
    for (int p = 0; p < hw; ++p) {
        Real* d = din + static_cast<std::size_t>(p) * ch;
        for (int c = 0; c < ch; ++c)
            d[c] += dout[c] * inv;
    }
}

// Dense layer; weight layout [in][out].
template <class Real>
void dense_forward(const Real* in, int n_in, const Real* wgt, const Real* bias, int n_out,
                   Real* out, bool relu) {
    for (int o = 0; o < n_out; ++o)
        out[o] = bias[o];
    for (int i = 0; i < n_in; ++i) {
        const Real v = in[i];
        const Real* wr = wgt + static_cast<std::size_t>(i) * n_out;
        for (int o = 0; o < n_out; ++o)
            out[o] += v * wr[o];
    }
    if (relu)
        for (int o = 0; o < n_out; ++o)
            out[o] = out[o] > Real(0) ? out[o] : Real(0);
}

template <class Real>
void dense_backward(const Real* in, int n_in, const Real* wgt, int n_out, const Real* out,
                    const Real* dout, bool relu, Real* dw, Real* db, Real* din,
                    std::vector<Real>& dz) {
    dz.resize(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
        const Real g = (relu && out[o] <= Real(0)) ? Real(0) : dout[o];
        dz[o] = g;
        db[o] += g;
    }
    for (int i = 0; i < n_in; ++i) {
        const Real v = in[i];
        Real* dwr = dw + static_cast<std::size_t>(i) * n_out;
        const Real* wr = wgt + static_cast<std::size_t>(i) * n_out;
        Real s = 0;
        for (int o = 0; o < n_out; ++o) {
            dwr[o] += v * dz[o];
            s += wr[o] * dz[o];
        }
        if (din)
            din[i] += s;
    }
}

// Numerically stable softmax.
template <class Real>
void softmax_forward(const Real* z, int n, Real* p) {
    Real zmax = z[0];
    for (int i = 1; i < n; ++i)
        zmax = std::max(zmax, z[i]);
    Real sum = 0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(z[i] - zmax);
        sum += p[i];
    }
    const Real inv = Real(1) / sum;
    for (int i = 0; i < n; ++i)
        p[i] *= inv;
}

// Cross-entropy of one sample from its logits (log-sum-exp form).
template <class Real>
double cross_entropy_from_logits(const Real* z, int n, int label) {
    Real zmax = z[0];
    for (int i = 1; i < n; ++i)
        zmax = std::max(zmax, z[i]);
    double sum = 0;
    for (int i = 0; i < n; ++i)
        sum += std::exp(static_cast<double>(z[i] - zmax));
    return std::log(sum) + static_cast<double>(zmax) - static_cast<double>(z[label]);
}

} // namespace occamnas::kernels
