#include "mscsa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace mscsa::ops {

int thread_cap() {
    const char* env = std::getenv("MSCSA_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    int threads = thread_cap();
    if (threads <= 1 || n < 2) {
        body(0, n);
        return;
    }
    if (threads > n) threads = static_cast<int>(n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    std::int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        std::int64_t lo = t * chunk;
        std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi]() { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible operands " + a.dims_str() + " and " + b.dims_str());
    }
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    parallel_for(m, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const T* arow = a.data() + i * k;
            T* orow = out.data() + i * n;
            for (int j = 0; j < n; ++j) {
                T acc = T(0);
                for (int p = 0; p < k; ++p) acc += arow[p] * b.data()[static_cast<std::int64_t>(p) * n + j];
                orow[j] = acc;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("bmm: incompatible operands " + a.dims_str() + " and " + b.dims_str());
    }
    int bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor<T> out({bs, m, n});
    parallel_for(static_cast<std::int64_t>(bs) * m, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            std::int64_t batch = r / m, i = r % m;
            const T* arow = a.data() + (batch * m + i) * k;
            const T* bmat = b.data() + batch * k * n;
            T* orow = out.data() + (batch * m + i) * n;
            for (int j = 0; j < n; ++j) {
                T acc = T(0);
                for (int p = 0; p < k; ++p) acc += arow[p] * bmat[static_cast<std::int64_t>(p) * n + j];
                orow[j] = acc;
            }
        }
    });
    return out;
}

namespace {

void check_conv_args(const std::vector<int>& xd, const std::vector<int>& wd, const ConvSpec& s) {
    if (xd.size() != 4) throw ShapeError("conv2d: input must be NCHW");
    if (wd.size() != 4) throw ShapeError("conv2d: weight must be [outC, inC/groups, kh, kw]");
    int in_c = xd[1];
    if (s.groups < 1 || in_c % s.groups != 0) {
        throw ConfigError("conv2d: in-channels " + std::to_string(in_c) +
                          " not divisible by groups " + std::to_string(s.groups));
    }
    if (wd[0] % s.groups != 0) {
        throw ConfigError("conv2d: out-channels " + std::to_string(wd[0]) +
                          " not divisible by groups " + std::to_string(s.groups));
    }
    if (wd[1] != in_c / s.groups || wd[2] != s.kh || wd[3] != s.kw) {
        throw ShapeError("conv2d: weight dims " + std::to_string(wd[0]) + "x" + std::to_string(wd[1]) +
                         "x" + std::to_string(wd[2]) + "x" + std::to_string(wd[3]) +
                         " do not match spec/input");
    }
    if (s.out_h(xd[2]) < 1 || s.out_w(xd[3]) < 1) {
        throw ConfigError("conv2d: empty output for input " + std::to_string(xd[2]) + "x" +
                          std::to_string(xd[3]) + " with kernel " + std::to_string(s.kh) + "x" +
                          std::to_string(s.kw) + " stride " + std::to_string(s.sh) + "x" +
                          std::to_string(s.sw) + " padding " + std::to_string(s.ph) + "x" +
                          std::to_string(s.pw));
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvSpec& spec) {
    check_conv_args(x.dims(), weight.dims(), spec);
    int n = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int out_c = weight.dim(0), icpg = weight.dim(1);
    int oh = spec.out_h(h), ow = spec.out_w(w);
    int ocpg = out_c / spec.groups;
    if (bias && (bias->rank() != 1 || bias->dim(0) != out_c)) {
        throw ShapeError("conv2d: bias dims " + bias->dims_str() + " do not match out-channels");
    }
    Tensor<T> out({n, out_c, oh, ow});

    // 1x1 stride-1 fast path: per-pixel dot over input channels.
    if (spec.kh == 1 && spec.kw == 1 && spec.sh == 1 && spec.sw == 1 && spec.ph == 0 &&
        spec.pw == 0 && spec.groups == 1) {
        std::int64_t hw = static_cast<std::int64_t>(h) * w;
        parallel_for(static_cast<std::int64_t>(n) * out_c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t r = lo; r < hi; ++r) {
                std::int64_t ni = r / out_c;
                int oc = static_cast<int>(r % out_c);
                T* orow = out.data() + (ni * out_c + oc) * hw;
                T b = bias ? bias->data()[oc] : T(0);
                for (std::int64_t p = 0; p < hw; ++p) orow[p] = b;
                const T* wrow = weight.data() + static_cast<std::int64_t>(oc) * in_c;
                for (int ic = 0; ic < in_c; ++ic) {
                    const T* xrow = x.data() + (ni * in_c + ic) * hw;
                    T wv = wrow[ic];
                    for (std::int64_t p = 0; p < hw; ++p) orow[p] += wv * xrow[p];
                }
            }
        });
        return out;
    }

    parallel_for(static_cast<std::int64_t>(n) * out_c, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            int ni = static_cast<int>(r / out_c);
            int oc = static_cast<int>(r % out_c);
            int g = oc / ocpg;
            T b = bias ? bias->data()[oc] : T(0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = b;
                    for (int ic = 0; ic < icpg; ++ic) {
                        int xc = g * icpg + ic;
                        for (int ky = 0; ky < spec.kh; ++ky) {
                            int iy = oy * spec.sh - spec.ph + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < spec.kw; ++kx) {
                                int ix = ox * spec.sw - spec.pw + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += x.at4(ni, xc, iy, ix) * weight.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                    out.at4(ni, oc, oy, ox) = acc;
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                            const std::vector<int>& input_dims, const ConvSpec& spec) {
    int n = input_dims[0], in_c = input_dims[1], h = input_dims[2], w = input_dims[3];
    int out_c = weight.dim(0), icpg = weight.dim(1);
    int oh = grad_out.dim(2), ow = grad_out.dim(3);
    int ocpg = out_c / spec.groups;
    Tensor<T> gx({n, in_c, h, w});
    for (int ni = 0; ni < n; ++ni) {
        for (int oc = 0; oc < out_c; ++oc) {
            int g = oc / ocpg;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T go = grad_out.at4(ni, oc, oy, ox);
                    for (int ic = 0; ic < icpg; ++ic) {
                        int xc = g * icpg + ic;
                        for (int ky = 0; ky < spec.kh; ++ky) {
                            int iy = oy * spec.sh - spec.ph + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < spec.kw; ++kx) {
                                int ix = ox * spec.sw - spec.pw + kx;
                                if (ix < 0 || ix >= w) continue;
                                gx.at4(ni, xc, iy, ix) += go * weight.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& grad_out, const Tensor<T>& x,
                             const std::vector<int>& weight_dims, const ConvSpec& spec) {
    int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    int out_c = weight_dims[0], icpg = weight_dims[1];
    int oh = grad_out.dim(2), ow = grad_out.dim(3);
    int ocpg = out_c / spec.groups;
    Tensor<T> gw(weight_dims);
    for (int oc = 0; oc < out_c; ++oc) {
        int g = oc / ocpg;
        for (int ic = 0; ic < icpg; ++ic) {
            int xc = g * icpg + ic;
            for (int ky = 0; ky < spec.kh; ++ky) {
                for (int kx = 0; kx < spec.kw; ++kx) {
                    T acc = T(0);
                    for (int ni = 0; ni < n; ++ni) {
                        for (int oy = 0; oy < oh; ++oy) {
                            int iy = oy * spec.sh - spec.ph + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                int ix = ox * spec.sw - spec.pw + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += grad_out.at4(ni, oc, oy, ox) * x.at4(ni, xc, iy, ix);
                            }
                        }
                    }
                    gw.at4(oc, ic, ky, kx) = acc;
                }
            }
        }
    }
    return gw;
}

template <typename T>
Tensor<T> conv2d_grad_bias(const Tensor<T>& grad_out) {
    int n = grad_out.dim(0), c = grad_out.dim(1);
    std::int64_t hw = static_cast<std::int64_t>(grad_out.dim(2)) * grad_out.dim(3);
    Tensor<T> gb({c});
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const T* row = grad_out.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T acc = T(0);
            for (std::int64_t p = 0; p < hw; ++p) acc += row[p];
            gb[ci] += acc;
        }
    }
    return gb;
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int th, int tw) {
    if (x.rank() != 4) throw ShapeError("adaptive_avg_pool: input must be NCHW");
    if (th < 1 || tw < 1) throw ShapeError("adaptive_avg_pool: target must be >= 1x1");
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> out({n, c, th, tw});
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            for (int oy = 0; oy < th; ++oy) {
                int y0 = static_cast<int>((static_cast<std::int64_t>(oy) * h) / th);
                int y1 = static_cast<int>(((static_cast<std::int64_t>(oy) + 1) * h + th - 1) / th);
                for (int ox = 0; ox < tw; ++ox) {
                    int x0 = static_cast<int>((static_cast<std::int64_t>(ox) * w) / tw);
                    int x1 = static_cast<int>(((static_cast<std::int64_t>(ox) + 1) * w + tw - 1) / tw);
                    T acc = T(0);
                    for (int iy = y0; iy < y1; ++iy) {
                        for (int ix = x0; ix < x1; ++ix) acc += x.at4(ni, ci, iy, ix);
                    }
                    out.at4(ni, ci, oy, ox) = acc / static_cast<T>((y1 - y0) * (x1 - x0));
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> adaptive_avg_pool_grad(const Tensor<T>& grad_out, int in_h, int in_w) {
    int n = grad_out.dim(0), c = grad_out.dim(1), th = grad_out.dim(2), tw = grad_out.dim(3);
    Tensor<T> gx({n, c, in_h, in_w});
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            for (int oy = 0; oy < th; ++oy) {
                int y0 = static_cast<int>((static_cast<std::int64_t>(oy) * in_h) / th);
                int y1 = static_cast<int>(((static_cast<std::int64_t>(oy) + 1) * in_h + th - 1) / th);
                for (int ox = 0; ox < tw; ++ox) {
                    int x0 = static_cast<int>((static_cast<std::int64_t>(ox) * in_w) / tw);
                    int x1 = static_cast<int>(((static_cast<std::int64_t>(ox) + 1) * in_w + tw - 1) / tw);
                    T g = grad_out.at4(ni, ci, oy, ox) / static_cast<T>((y1 - y0) * (x1 - x0));
                    for (int iy = y0; iy < y1; ++iy) {
                        for (int ix = x0; ix < x1; ++ix) gx.at4(ni, ci, iy, ix) += g;
                    }
                }
            }
        }
    }
    return gx;
}

namespace {

// align_corners=false source coordinate with clamping; returns the two
// sample rows/cols and the interpolation weight of the second one.
inline void bilinear_axis(int out_i, int in_n, int out_n, int& i0, int& i1, double& t) {
    double src = (static_cast<double>(out_i) + 0.5) * in_n / out_n - 0.5;
    if (src < 0) src = 0;
    double f = std::floor(src);
    i0 = static_cast<int>(f);
    if (i0 > in_n - 1) i0 = in_n - 1;
    i1 = std::min(i0 + 1, in_n - 1);
    t = src - f;
    if (i0 == i1) t = 0.0;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int th, int tw) {
    if (x.rank() != 4) throw ShapeError("upsample_bilinear: input must be NCHW");
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> out({n, c, th, tw});
    for (int oy = 0; oy < th; ++oy) {
        int y0, y1;
        double ty;
        bilinear_axis(oy, h, th, y0, y1, ty);
        for (int ox = 0; ox < tw; ++ox) {
            int x0, x1;
            double tx;
            bilinear_axis(ox, w, tw, x0, x1, tx);
            for (int ni = 0; ni < n; ++ni) {
                for (int ci = 0; ci < c; ++ci) {
                    double v00 = x.at4(ni, ci, y0, x0), v01 = x.at4(ni, ci, y0, x1);
                    double v10 = x.at4(ni, ci, y1, x0), v11 = x.at4(ni, ci, y1, x1);
                    double top = v00 + (v01 - v00) * tx;
                    double bot = v10 + (v11 - v10) * tx;
                    out.at4(ni, ci, oy, ox) = static_cast<T>(top + (bot - top) * ty);
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> upsample_bilinear_grad(const Tensor<T>& grad_out, int in_h, int in_w) {
    int n = grad_out.dim(0), c = grad_out.dim(1), th = grad_out.dim(2), tw = grad_out.dim(3);
    Tensor<T> gx({n, c, in_h, in_w});
    for (int oy = 0; oy < th; ++oy) {
        int y0, y1;
        double ty;
        bilinear_axis(oy, in_h, th, y0, y1, ty);
        for (int ox = 0; ox < tw; ++ox) {
            int x0, x1;
            double tx;
            bilinear_axis(ox, in_w, tw, x0, x1, tx);
            for (int ni = 0; ni < n; ++ni) {
                for (int ci = 0; ci < c; ++ci) {
                    T g = grad_out.at4(ni, ci, oy, ox);
                    gx.at4(ni, ci, y0, x0) += static_cast<T>(g * (1 - tx) * (1 - ty));
                    gx.at4(ni, ci, y0, x1) += static_cast<T>(g * tx * (1 - ty));
                    gx.at4(ni, ci, y1, x0) += static_cast<T>(g * (1 - tx) * ty);
                    gx.at4(ni, ci, y1, x1) += static_cast<T>(g * tx * ty);
                }
            }
        }
    }
    return gx;
}

namespace {

template <typename T>
void check_bn_args(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
    if (x.rank() != 4) throw ShapeError("batch_norm: input must be NCHW");
    int c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeError("batch_norm: affine params do not match channels " + std::to_string(c));
    }
}

}  // namespace

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps,
                           BatchNormSaved<T>* saved) {
    check_bn_args(x, gamma, beta);
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::int64_t cnt = static_cast<std::int64_t>(n) * hw;
    Tensor<T> mean({c}), inv_std({c});
    Tensor<T> out({n, c, h, w});
    Tensor<T> xhat({n, c, h, w});
    for (int ci = 0; ci < c; ++ci) {
        T m = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const T* row = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) m += row[p];
        }
        m /= static_cast<T>(cnt);
        T v = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const T* row = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                T d = row[p] - m;
                v += d * d;
            }
        }
        v /= static_cast<T>(cnt);
        T is = T(1) / std::sqrt(v + eps);
        mean[ci] = m;
        inv_std[ci] = is;
        // running stats keep the unbiased variance estimate
        T v_unbiased = cnt > 1 ? v * static_cast<T>(cnt) / static_cast<T>(cnt - 1) : v;
        running_mean[ci] = (T(1) - momentum) * running_mean[ci] + momentum * m;
        running_var[ci] = (T(1) - momentum) * running_var[ci] + momentum * v_unbiased;
        for (int ni = 0; ni < n; ++ni) {
            const T* row = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T* xrow = xhat.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T* orow = out.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                T xh = (row[p] - m) * is;
                xrow[p] = xh;
                orow[p] = gamma.data()[ci] * xh + beta.data()[ci];
            }
        }
    }
    if (saved) {
        saved->mean = std::move(mean);
        saved->inv_std = std::move(inv_std);
        saved->xhat = std::move(xhat);
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps,
                          BatchNormSaved<T>* saved) {
    check_bn_args(x, gamma, beta);
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor<T> out({n, c, h, w});
    Tensor<T> xhat({n, c, h, w});
    Tensor<T> inv_std({c});
    for (int ci = 0; ci < c; ++ci) {
        T m = running_mean[ci];
        T is = T(1) / std::sqrt(running_var[ci] + eps);
        inv_std[ci] = is;
        for (int ni = 0; ni < n; ++ni) {
            const T* row = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T* xrow = xhat.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T* orow = out.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                T xh = (row[p] - m) * is;
                xrow[p] = xh;
                orow[p] = gamma.data()[ci] * xh + beta.data()[ci];
            }
        }
    }
    if (saved) {
        saved->mean = running_mean;
        saved->inv_std = std::move(inv_std);
        saved->xhat = std::move(xhat);
    }
    return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_train_grad(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                        const BatchNormSaved<T>& saved) {
    int n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2), w = grad_out.dim(3);
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::int64_t cnt = static_cast<std::int64_t>(n) * hw;
    BatchNormGrads<T> g;
    g.dx = Tensor<T>({n, c, h, w});
    g.dgamma = Tensor<T>({c});
    g.dbeta = Tensor<T>({c});
    for (int ci = 0; ci < c; ++ci) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const T* dyr = grad_out.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            const T* xhr = saved.xhat.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                sum_dy += dyr[p];
                sum_dy_xhat += dyr[p] * xhr[p];
            }
        }
        g.dbeta[ci] = sum_dy;
        g.dgamma[ci] = sum_dy_xhat;
        T scale = gamma.data()[ci] * saved.inv_std.data()[ci] / static_cast<T>(cnt);
        for (int ni = 0; ni < n; ++ni) {
            const T* dyr = grad_out.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            const T* xhr = saved.xhat.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T* dxr = g.dx.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                dxr[p] = scale * (static_cast<T>(cnt) * dyr[p] - sum_dy - xhr[p] * sum_dy_xhat);
            }
        }
    }
    return g;
}

template <typename T>
BatchNormGrads<T> batch_norm_eval_grad(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                       const BatchNormSaved<T>& saved) {
    int n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2), w = grad_out.dim(3);
    std::int64_t hw = static_cast<std::int64_t>(h) * w;
    BatchNormGrads<T> g;
    g.dx = Tensor<T>({n, c, h, w});
    g.dgamma = Tensor<T>({c});
    g.dbeta = Tensor<T>({c});
    for (int ci = 0; ci < c; ++ci) {
        T scale = gamma.data()[ci] * saved.inv_std.data()[ci];
        T dg = T(0), db = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const T* dyr = grad_out.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            const T* xhr = saved.xhat.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            T* dxr = g.dx.data() + (static_cast<std::int64_t>(ni) * c + ci) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                dxr[p] = dyr[p] * scale;
                dg += dyr[p] * xhr[p];
                db += dyr[p];
            }
        }
        g.dgamma[ci] = dg;
        g.dbeta[ci] = db;
    }
    return g;
}

template <typename T>
Tensor<T> hardswish(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T v = x[i];
        T c = v + T(3);
        if (c < T(0)) c = T(0);
        if (c > T(6)) c = T(6);
        out[i] = v * c / T(6);
    }
    return out;
}

template <typename T>
Tensor<T> hardswish_grad(const Tensor<T>& x, const Tensor<T>& grad_out) {
    Tensor<T> gx(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T v = x[i];
        // right-sided choice at the kinks
        T d = v < T(-3) ? T(0) : (v < T(3) ? (T(2) * v + T(3)) / T(6) : T(1));
        gx[i] = grad_out[i] * d;
    }
    return gx;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T v = x[i];
        out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    }
    return out;
}

template <typename T>
Tensor<T> gelu_grad(const Tensor<T>& x, const Tensor<T>& grad_out) {
    Tensor<T> gx(x.dims());
    const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
    const T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T v = x[i];
        T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        gx[i] = grad_out[i] * (cdf + v * pdf);
    }
    return gx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        T v = x[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                           : std::exp(v) / (T(1) + std::exp(v));
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid_grad(const Tensor<T>& y, const Tensor<T>& grad_out) {
    Tensor<T> gx(y.dims());
    for (std::int64_t i = 0; i < y.numel(); ++i) gx[i] = grad_out[i] * y[i] * (T(1) - y[i]);
    return gx;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    int cols = x.dim(x.rank() - 1);
    std::int64_t rows = x.numel() / cols;
    Tensor<T> out(x.dims());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* in = x.data() + r * cols;
        T* o = out.data() + r * cols;
        T mx = in[0];
        for (int j = 0; j < cols; ++j) {
            if (std::isnan(static_cast<double>(in[j]))) {
                throw NumericError("softmax: NaN in input row " + std::to_string(r));
            }
            if (in[j] > mx) mx = in[j];
        }
        T sum = T(0);
        for (int j = 0; j < cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (int j = 0; j < cols; ++j) o[j] /= sum;
    }
    return out;
}

template <typename T>
Tensor<T> softmax_lastdim_grad(const Tensor<T>& y, const Tensor<T>& grad_out) {
    int cols = y.dim(y.rank() - 1);
    std::int64_t rows = y.numel() / cols;
    Tensor<T> gx(y.dims());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* yr = y.data() + r * cols;
        const T* dyr = grad_out.data() + r * cols;
        T* gxr = gx.data() + r * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
        for (int j = 0; j < cols; ++j) gxr[j] = yr[j] * (dyr[j] - dot);
    }
    return gx;
}

template <typename T>
CrossEntropyOut<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [rows, classes]");
    int m = logits.dim(0), n = logits.dim(1);
    if (static_cast<int>(labels.size()) != m) {
        throw ShapeError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " does not match rows " + std::to_string(m));
    }
    CrossEntropyOut<T> out;
    out.probs = softmax_lastdim(logits);
    T loss = T(0);
    for (int i = 0; i < m; ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= n) throw ContractError("cross_entropy: label out of range");
        // recompute log-prob from shifted logits for stability
        const T* row = logits.data() + static_cast<std::int64_t>(i) * n;
        T mx = row[0];
        for (int j = 0; j < n; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
        loss += -(row[y] - mx - std::log(sum));
    }
    out.loss = loss / static_cast<T>(m);
    return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<int>& sizes) {
    if (x.rank() < 2) throw ShapeError("split_channels: input must have rank >= 2");
    int total = 0;
    for (int s : sizes) {
        if (s < 1) throw ShapeError("split_channels: non-positive split size");
        total += s;
    }
    if (total != x.dim(1)) {
        throw ShapeError("split_channels: sizes sum to " + std::to_string(total) +
                         " but dim1 is " + std::to_string(x.dim(1)));
    }
    std::vector<Tensor<T>> parts;
    int start = 0;
    for (int s : sizes) {
        parts.push_back(slice_dim1(x, start, s));
        start += s;
    }
    return parts;
}

template <typename T>
Tensor<T> slice_dim1(const Tensor<T>& x, int start, int len) {
    if (x.rank() < 2 || start < 0 || len < 1 || start + len > x.dim(1)) {
        throw ShapeError("slice_dim1: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for " + x.dims_str());
    }
    std::vector<int> od = x.dims();
    od[1] = len;
    std::int64_t inner = 1;
    for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
    int b = x.dim(0), c = x.dim(1);
    Tensor<T> out(od);
    for (int bi = 0; bi < b; ++bi) {
        const T* src = x.data() + (static_cast<std::int64_t>(bi) * c + start) * inner;
        T* dst = out.data() + static_cast<std::int64_t>(bi) * len * inner;
        std::copy(src, src + static_cast<std::int64_t>(len) * inner, dst);
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    std::vector<int> od = xs[0].dims();
    int total = 0;
    for (const auto& t : xs) {
        if (t.rank() != xs[0].rank()) throw ShapeError("concat_channels: rank mismatch");
        for (int i = 0; i < t.rank(); ++i) {
            if (i != 1 && t.dim(i) != xs[0].dim(i)) {
                throw ShapeError("concat_channels: dims mismatch " + t.dims_str() + " vs " +
                                 xs[0].dims_str());
            }
        }
        total += t.dim(1);
    }
    od[1] = total;
    Tensor<T> out(od);
    std::int64_t inner = 1;
    for (int i = 2; i < xs[0].rank(); ++i) inner *= xs[0].dim(i);
    int b = xs[0].dim(0);
    for (int bi = 0; bi < b; ++bi) {
        std::int64_t off = static_cast<std::int64_t>(bi) * total * inner;
        for (const auto& t : xs) {
            std::int64_t len = static_cast<std::int64_t>(t.dim(1)) * inner;
            const T* src = t.data() + static_cast<std::int64_t>(bi) * len;
            std::copy(src, src + len, out.data() + off);
            off += len;
        }
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    int r = x.rank();
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
    std::vector<int> od(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) od[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);
    Tensor<T> out(od);
    std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) {
        in_strides[static_cast<std::size_t>(i)] =
            in_strides[static_cast<std::size_t>(i + 1)] * x.dim(i + 1);
    }
    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    for (std::int64_t o = 0; o < out.numel(); ++o) {
        std::int64_t src = 0;
        for (int i = 0; i < r; ++i) {
            src += static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) *
                   in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        }
        out[o] = x[src];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<std::size_t>(i)] < od[static_cast<std::size_t>(i)]) break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_dims(b)) throw ShapeError("add: dims mismatch " + a.dims_str() + " vs " + b.dims_str());
    Tensor<T> out(a.dims());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_dims(b)) throw ShapeError("mul: dims mismatch " + a.dims_str() + " vs " + b.dims_str());
    Tensor<T> out(a.dims());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    Tensor<T> out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * s;
    return out;
}

template <typename T>
T reduce_sum(const Tensor<T>& x) {
    T acc = T(0);
    for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    return acc;
}

#define MSCSA_INSTANTIATE_OPS(T)                                                                   \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,            \
                                 const ConvSpec&);                                                 \
    template Tensor<T> conv2d_grad_input<T>(const Tensor<T>&, const Tensor<T>&,                   \
                                            const std::vector<int>&, const ConvSpec&);            \
    template Tensor<T> conv2d_grad_weight<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                             const std::vector<int>&, const ConvSpec&);           \
    template Tensor<T> conv2d_grad_bias<T>(const Tensor<T>&);                                     \
    template Tensor<T> adaptive_avg_pool<T>(const Tensor<T>&, int, int);                          \
    template Tensor<T> adaptive_avg_pool_grad<T>(const Tensor<T>&, int, int);                     \
    template Tensor<T> upsample_bilinear<T>(const Tensor<T>&, int, int);                          \
    template Tensor<T> upsample_bilinear_grad<T>(const Tensor<T>&, int, int);                     \
    template Tensor<T> batch_norm_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                           Tensor<T>&, Tensor<T>&, T, T, BatchNormSaved<T>*);     \
    template Tensor<T> batch_norm_eval<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                          const Tensor<T>&, const Tensor<T>&, T,                  \
                                          BatchNormSaved<T>*);                                     \
    template BatchNormGrads<T> batch_norm_train_grad<T>(const Tensor<T>&, const Tensor<T>&,       \
                                                        const BatchNormSaved<T>&);                \
    template BatchNormGrads<T> batch_norm_eval_grad<T>(const Tensor<T>&, const Tensor<T>&,        \
                                                       const BatchNormSaved<T>&);                 \
    template Tensor<T> hardswish<T>(const Tensor<T>&);                                            \
    template Tensor<T> hardswish_grad<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                                 \
    template Tensor<T> gelu_grad<T>(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                              \
    template Tensor<T> sigmoid_grad<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> softmax_lastdim<T>(const Tensor<T>&);                                      \
    template Tensor<T> softmax_lastdim_grad<T>(const Tensor<T>&, const Tensor<T>&);               \
    template CrossEntropyOut<T> softmax_cross_entropy<T>(const Tensor<T>&,                        \
                                                         const std::vector<int>&);                \
    template std::vector<Tensor<T>> split_channels<T>(const Tensor<T>&, const std::vector<int>&); \
    template Tensor<T> slice_dim1<T>(const Tensor<T>&, int, int);                                 \
    template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                         \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                     \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                             \
    template T reduce_sum<T>(const Tensor<T>&);

MSCSA_INSTANTIATE_OPS(float)
MSCSA_INSTANTIATE_OPS(double)

#undef MSCSA_INSTANTIATE_OPS

}  // namespace mscsa::ops
