#include "tmnet/ops.hpp"

#include <cmath>
#include <cstring>

namespace tmnet {

namespace {

enum class BCast { none, a_is_vec, b_is_vec };

bool is_channel_vec(const Tensor& t) {
    return t.rank() == 4 && t.extent(0) == 1 && t.extent(2) == 1 && t.extent(3) == 1;
}

BCast binary_check(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined operand");
    if (a.dtype() != b.dtype())
        throw ShapeError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                         dtype_name(b.dtype()) + ")");
    if (a.shape() == b.shape()) return BCast::none;
    if (a.rank() == 4 && b.rank() == 4) {
        if (is_channel_vec(b) && b.extent(1) == a.extent(1)) return BCast::b_is_vec;
        if (is_channel_vec(a) && a.extent(1) == b.extent(1)) return BCast::a_is_vec;
    }
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename T, typename F>
void ew_equal(const T* a, const T* b, T* o, std::int64_t n, F f) {
    for (std::int64_t i = 0; i < n; ++i) o[i] = f(a[i], b[i]);
}

// full is [N,C,H,W], vec is [1,C,1,1]
template <typename T, typename F>
void ew_vec(const T* full, const T* vec, T* o, std::int64_t N, std::int64_t C, std::int64_t HW,
            F f) {
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const T v = vec[c];
            const T* p = full + (n * C + c) * HW;
            T* q = o + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) q[i] = f(p[i], v);
        }
}

template <typename Fab, typename Fvec>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fab fab, Fvec fvec_swapped) {
    BCast bc = binary_check(a, b, name);
    const Tensor& full = bc == BCast::a_is_vec ? b : a;
    Tensor out = Tensor::zeros(full.shape(), full.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        if (bc == BCast::none)
            ew_equal(a.data<T>(), b.data<T>(), out.raw<T>(), out.numel(), fab);
        else if (bc == BCast::b_is_vec)
            ew_vec(a.data<T>(), b.data<T>(), out.raw<T>(), a.extent(0), a.extent(1),
                   a.extent(2) * a.extent(3), fab);
        else
            ew_vec(b.data<T>(), a.data<T>(), out.raw<T>(), b.extent(0), b.extent(1),
                   b.extent(2) * b.extent(3), fvec_swapped);
    });
    return out;
}

// Reduces [N,C,H,W] to [1,C,1,1] by fixed-order summation.
Tensor reduce_to_channel_vec(const Tensor& g) {
    const std::int64_t N = g.extent(0), C = g.extent(1), HW = g.extent(2) * g.extent(3);
    Tensor out = Tensor::zeros({1, C, 1, 1}, g.dtype());
    dispatch_dtype(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* p = g.data<T>();
        T* q = out.raw<T>();
        for (std::int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < N; ++n)
                acc += detail::pairwise_sum(p + (n * C + c) * HW, HW);
            q[c] = static_cast<T>(acc);
        }
    });
    return out;
}

// Routes an upstream gradient back to an operand that may have been broadcast.
Tensor unbroadcast(const Tensor& g, const Tensor& operand) {
    if (g.shape() == operand.shape()) return g;
    return reduce_to_channel_vec(g);
}

template <typename Ffwd>
Tensor unary_op(const char* name, const Tensor& a, Ffwd f) {
    if (!a.defined()) throw ShapeError(std::string(name) + ": undefined operand");
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* p = a.data<T>();
        T* q = out.raw<T>();
        const std::int64_t n = a.numel();
        for (std::int64_t i = 0; i < n; ++i) q[i] = f(p[i]);
    });
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = binary_op(
        "add", a, b, [](auto x, auto y) { return x + y; }, [](auto x, auto y) { return y + x; });
    if (Tape* tape = Tape::active()) {
        Tensor av = a, bv = b;
        tape->record("add", {a, b}, out, [av, bv](const Tensor& g) {
            return std::vector<Tensor>{unbroadcast(g, av), unbroadcast(g, bv)};
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out = binary_op(
        "sub", a, b, [](auto x, auto y) { return x - y; }, [](auto x, auto y) { return y - x; });
    if (Tape* tape = Tape::active()) {
        Tensor av = a, bv = b;
        tape->record("sub", {a, b}, out, [av, bv](const Tensor& g) {
            Tensor gb = unbroadcast(g, bv);
            return std::vector<Tensor>{unbroadcast(g, av), scalar_mul(gb, -1.0)};
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = binary_op(
        "mul", a, b, [](auto x, auto y) { return x * y; }, [](auto x, auto y) { return y * x; });
    if (Tape* tape = Tape::active()) {
        Tensor av = a, bv = b;
        tape->record("mul", {a, b}, out, [av, bv](const Tensor& g) {
            return std::vector<Tensor>{unbroadcast(mul(g, bv), av), unbroadcast(mul(g, av), bv)};
        });
    }
    return out;
}

Tensor scalar_mul(const Tensor& a, double s) {
    Tensor out = unary_op("scalar_mul", a, [s](auto x) {
        using T = decltype(x);
        return static_cast<T>(x * static_cast<T>(s));
    });
    if (Tape* tape = Tape::active()) {
        tape->record("scalar_mul", {a}, out, [s](const Tensor& g) {
            return std::vector<Tensor>{scalar_mul(g, s)};
        });
    }
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = unary_op("relu", a, [](auto x) { return x > 0 ? x : decltype(x){0}; });
    if (Tape* tape = Tape::active()) {
        Tensor av = a;
        tape->record("relu", {a}, out, [av](const Tensor& g) {
            Tensor gi = Tensor::zeros(g.shape(), g.dtype());
            dispatch_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* gp = g.data<T>();
                const T* xp = av.data<T>();
                T* o = gi.raw<T>();
                for (std::int64_t i = 0; i < g.numel(); ++i) o[i] = xp[i] > 0 ? gp[i] : T{0};
            });
            return std::vector<Tensor>{gi};
        });
    }
    return out;
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
    Tensor out = unary_op("leaky_relu", a, [negative_slope](auto x) {
        using T = decltype(x);
        return x > 0 ? x : static_cast<T>(x * static_cast<T>(negative_slope));
    });
    if (Tape* tape = Tape::active()) {
        Tensor av = a;
        tape->record("leaky_relu", {a}, out, [av, negative_slope](const Tensor& g) {
            Tensor gi = Tensor::zeros(g.shape(), g.dtype());
            dispatch_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T slope = static_cast<T>(negative_slope);
                const T* gp = g.data<T>();
                const T* xp = av.data<T>();
                T* o = gi.raw<T>();
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    o[i] = xp[i] > 0 ? gp[i] : static_cast<T>(gp[i] * slope);
            });
            return std::vector<Tensor>{gi};
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out = unary_op("sigmoid", a, [](auto x) {
        using T = decltype(x);
        return static_cast<T>(T{1} / (T{1} + std::exp(-x)));
    });
    if (Tape* tape = Tape::active()) {
        Tensor ov = out;
        tape->record("sigmoid", {a}, out, [ov](const Tensor& g) {
            Tensor gi = Tensor::zeros(g.shape(), g.dtype());
            dispatch_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* gp = g.data<T>();
                const T* yp = ov.data<T>();
                T* o = gi.raw<T>();
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    o[i] = gp[i] * yp[i] * (T{1} - yp[i]);
            });
            return std::vector<Tensor>{gi};
        });
    }
    return out;
}

Tensor tanh_op(const Tensor& a) {
    Tensor out = unary_op("tanh", a, [](auto x) {
        using T = decltype(x);
        return static_cast<T>(std::tanh(x));
    });
    if (Tape* tape = Tape::active()) {
        Tensor ov = out;
        tape->record("tanh", {a}, out, [ov](const Tensor& g) {
            Tensor gi = Tensor::zeros(g.shape(), g.dtype());
            dispatch_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* gp = g.data<T>();
                const T* yp = ov.data<T>();
                T* o = gi.raw<T>();
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    o[i] = gp[i] * (T{1} - yp[i] * yp[i]);
            });
            return std::vector<Tensor>{gi};
        });
    }
    return out;
}

Tensor sum(const Tensor& a) {
    if (!a.defined()) throw ShapeError("sum: undefined operand");
    double total = dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return detail::pairwise_sum(a.data<T>(), a.numel());
    });
    Tensor out = Tensor::scalar(total, a.dtype());
    if (Tape* tape = Tape::active()) {
        auto shape = a.shape();
        tape->record("sum", {a}, out, [shape](const Tensor& g) {
            return std::vector<Tensor>{Tensor::full(shape, g.item(), g.dtype())};
        });
    }
    return out;
}

Tensor mean(const Tensor& a) {
    if (!a.defined()) throw ShapeError("mean: undefined operand");
    double total = dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return detail::pairwise_sum(a.data<T>(), a.numel());
    });
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::scalar(total * inv, a.dtype());
    if (Tape* tape = Tape::active()) {
        auto shape = a.shape();
        tape->record("mean", {a}, out, [shape, inv](const Tensor& g) {
            return std::vector<Tensor>{Tensor::full(shape, g.item() * inv, g.dtype())};
        });
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
    const Tensor& first = inputs.front();
    if (first.rank() != 4) throw ShapeError("concat_channels: inputs must be [N,C,H,W]");
    std::int64_t total_c = 0;
    for (const Tensor& t : inputs) {
        if (t.rank() != 4 || t.extent(0) != first.extent(0) || t.extent(2) != first.extent(2) ||
            t.extent(3) != first.extent(3) || t.dtype() != first.dtype())
            throw ShapeError("concat_channels: mismatched input " + shape_str(t.shape()) +
                             " vs " + shape_str(first.shape()));
        total_c += t.extent(1);
    }
    const std::int64_t N = first.extent(0), HW = first.extent(2) * first.extent(3);
    Tensor out = Tensor::zeros({N, total_c, first.extent(2), first.extent(3)}, first.dtype());
    dispatch_dtype(first.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* dst = out.raw<T>();
        for (std::int64_t n = 0; n < N; ++n) {
            std::int64_t c_off = 0;
            for (const Tensor& t : inputs) {
                const std::int64_t c = t.extent(1);
                std::memcpy(dst + (n * total_c + c_off) * HW, t.data<T>() + n * c * HW,
                            static_cast<std::size_t>(c * HW) * sizeof(T));
                c_off += c;
            }
        }
    });
    if (Tape* tape = Tape::active()) {
        std::vector<std::int64_t> channels;
        channels.reserve(inputs.size());
        for (const Tensor& t : inputs) channels.push_back(t.extent(1));
        tape->record("concat_channels", inputs, out, [channels](const Tensor& g) {
            return split_channels(g, channels);
        });
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& t, const std::vector<std::int64_t>& sizes) {
    if (t.rank() != 4) throw ShapeError("split_channels: input must be [N,C,H,W]");
    std::int64_t total = 0;
    for (std::int64_t s : sizes) total += s;
    if (total != t.extent(1))
        throw ShapeError("split_channels: sizes sum to " + std::to_string(total) + ", input has " +
                         std::to_string(t.extent(1)) + " channels");
    const std::int64_t N = t.extent(0), C = t.extent(1), HW = t.extent(2) * t.extent(3);
    std::vector<Tensor> pieces;
    std::int64_t c_off = 0;
    for (std::int64_t c : sizes) {
        Tensor piece = Tensor::zeros({N, c, t.extent(2), t.extent(3)}, t.dtype());
        dispatch_dtype(t.dtype(), [&](auto tag) {
            using T = decltype(tag);
            T* dst = piece.raw<T>();
            const T* src = t.data<T>();
            for (std::int64_t n = 0; n < N; ++n)
                std::memcpy(dst + n * c * HW, src + (n * C + c_off) * HW,
                            static_cast<std::size_t>(c * HW) * sizeof(T));
        });
        if (Tape* tape = Tape::active()) {
            const std::int64_t off = c_off;
            auto in_shape = t.shape();
            tape->record("split_channels", {t}, piece, [off, in_shape](const Tensor& g) {
                Tensor gi = Tensor::zeros(in_shape, g.dtype());
                const std::int64_t n_ = in_shape[0], ctot = in_shape[1], hw = in_shape[2] * in_shape[3];
                const std::int64_t cpiece = g.extent(1);
                dispatch_dtype(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    T* dst = gi.raw<T>();
                    const T* src = g.data<T>();
                    for (std::int64_t n = 0; n < n_; ++n)
                        std::memcpy(dst + (n * ctot + off) * hw, src + n * cpiece * hw,
                                    static_cast<std::size_t>(cpiece * hw) * sizeof(T));
                });
                return std::vector<Tensor>{gi};
            });
        }
        pieces.push_back(std::move(piece));
        c_off += c;
    }
    return pieces;
}

namespace {

// dir=+1 shuffles [N,C*r^2,H,W] -> [N,C,rH,rW]; dir=-1 inverts it.
template <typename T>
void shuffle_kernel(const T* in, T* out, std::int64_t N, std::int64_t C, std::int64_t H,
                    std::int64_t W, int r, bool inverse) {
    const std::int64_t r2 = static_cast<std::int64_t>(r) * r;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t a = 0; a < r; ++a)
                for (std::int64_t b = 0; b < r; ++b) {
                    const std::int64_t cin = c * r2 + a * r + b;
                    for (std::int64_t h = 0; h < H; ++h) {
                        const std::int64_t oh = h * r + a;
                        const T* src;
                        T* dst;
                        if (!inverse) {
                            src = in + ((n * C * r2 + cin) * H + h) * W;
                            dst = out + ((n * C + c) * H * r + oh) * W * r + b;
                            for (std::int64_t w = 0; w < W; ++w) dst[w * r] = src[w];
                        } else {
                            src = in + ((n * C + c) * H * r + oh) * W * r + b;
                            dst = out + ((n * C * r2 + cin) * H + h) * W;
                            for (std::int64_t w = 0; w < W; ++w) dst[w] = src[w * r];
                        }
                    }
                }
}

}  // namespace

Tensor pixel_shuffle(const Tensor& t, int r) {
    if (t.rank() != 4) throw ShapeError("pixel_shuffle: input must be [N,C,H,W]");
    const std::int64_t r2 = static_cast<std::int64_t>(r) * r;
    if (r < 1 || t.extent(1) % r2 != 0)
        throw ConfigError("pixel_shuffle: channel count " + std::to_string(t.extent(1)) +
                          " not divisible by r^2=" + std::to_string(r2));
    const std::int64_t N = t.extent(0), C = t.extent(1) / r2, H = t.extent(2), W = t.extent(3);
    Tensor out = Tensor::zeros({N, C, H * r, W * r}, t.dtype());
    dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        shuffle_kernel(t.data<T>(), out.raw<T>(), N, C, H, W, r, false);
    });
    if (Tape* tape = Tape::active()) {
        tape->record("pixel_shuffle", {t}, out, [r](const Tensor& g) {
            return std::vector<Tensor>{pixel_unshuffle(g, r)};
        });
    }
    return out;
}

Tensor pixel_unshuffle(const Tensor& t, int r) {
    if (t.rank() != 4) throw ShapeError("pixel_unshuffle: input must be [N,C,H,W]");
    if (r < 1 || t.extent(2) % r != 0 || t.extent(3) % r != 0)
        throw ConfigError("pixel_unshuffle: spatial dims not divisible by r");
    const std::int64_t r2 = static_cast<std::int64_t>(r) * r;
    const std::int64_t N = t.extent(0), C = t.extent(1), H = t.extent(2) / r, W = t.extent(3) / r;
    Tensor out = Tensor::zeros({N, C * r2, H, W}, t.dtype());
    dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        shuffle_kernel(t.data<T>(), out.raw<T>(), N, C, H, W, r, true);
    });
    if (Tape* tape = Tape::active()) {
        tape->record("pixel_unshuffle", {t}, out, [r](const Tensor& g) {
            return std::vector<Tensor>{pixel_shuffle(g, r)};
        });
    }
    return out;
}

namespace {

struct AxisTaps {
    std::vector<std::int64_t> i0, i1;
    std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};

// Half-pixel-center source taps for 2x upsampling with edge clamping.
AxisTaps upsample_taps(std::int64_t out_extent, std::int64_t in_extent) {
    AxisTaps taps;
    taps.i0.resize(static_cast<std::size_t>(out_extent));
    taps.i1.resize(static_cast<std::size_t>(out_extent));
    taps.w1.resize(static_cast<std::size_t>(out_extent));
    for (std::int64_t o = 0; o < out_extent; ++o) {
        double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
        double f = std::floor(src);
        std::int64_t lo = static_cast<std::int64_t>(f);
        double frac = src - f;
        std::int64_t hi = lo + 1;
        lo = std::clamp<std::int64_t>(lo, 0, in_extent - 1);
        hi = std::clamp<std::int64_t>(hi, 0, in_extent - 1);
        taps.i0[static_cast<std::size_t>(o)] = lo;
        taps.i1[static_cast<std::size_t>(o)] = hi;
        taps.w1[static_cast<std::size_t>(o)] = frac;
    }
    return taps;
}

}  // namespace

Tensor bilinear_upsample_x2(const Tensor& t) {
    if (t.rank() != 4) throw ShapeError("bilinear_upsample_x2: input must be [N,C,H,W]");
    const std::int64_t N = t.extent(0), C = t.extent(1), H = t.extent(2), W = t.extent(3);
    const std::int64_t OH = H * 2, OW = W * 2;
    AxisTaps ty = upsample_taps(OH, H), tx = upsample_taps(OW, W);
    Tensor out = Tensor::zeros({N, C, OH, OW}, t.dtype());
    dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* in = t.data<T>();
        T* o = out.raw<T>();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* plane = in + nc * H * W;
            T* oplane = o + nc * OH * OW;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
                const T wy1 = static_cast<T>(ty.w1[static_cast<std::size_t>(oh)]);
                const T wy0 = T{1} - wy1;
                const T* r0 = plane + ty.i0[static_cast<std::size_t>(oh)] * W;
                const T* r1 = plane + ty.i1[static_cast<std::size_t>(oh)] * W;
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                    const T wx1 = static_cast<T>(tx.w1[static_cast<std::size_t>(ow)]);
                    const T wx0 = T{1} - wx1;
                    const std::int64_t x0 = tx.i0[static_cast<std::size_t>(ow)];
                    const std::int64_t x1 = tx.i1[static_cast<std::size_t>(ow)];
                    oplane[oh * OW + ow] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) +
                                           wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
                }
            }
        }
    });
    if (Tape* tape = Tape::active()) {
        auto in_shape = t.shape();
        tape->record("bilinear_upsample_x2", {t}, out, [in_shape](const Tensor& g) {
            const std::int64_t N_ = in_shape[0], C_ = in_shape[1], H_ = in_shape[2],
                               W_ = in_shape[3];
            const std::int64_t OH_ = H_ * 2, OW_ = W_ * 2;
            AxisTaps ty = upsample_taps(OH_, H_), tx = upsample_taps(OW_, W_);
            Tensor gi = Tensor::zeros(in_shape, g.dtype());
            dispatch_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* gp = g.data<T>();
                T* o = gi.raw<T>();
                for (std::int64_t nc = 0; nc < N_ * C_; ++nc) {
                    T* plane = o + nc * H_ * W_;
                    const T* gplane = gp + nc * OH_ * OW_;
                    for (std::int64_t oh = 0; oh < OH_; ++oh) {
                        const T wy1 = static_cast<T>(ty.w1[static_cast<std::size_t>(oh)]);
                        const T wy0 = T{1} - wy1;
                        T* r0 = plane + ty.i0[static_cast<std::size_t>(oh)] * W_;
                        T* r1 = plane + ty.i1[static_cast<std::size_t>(oh)] * W_;
                        for (std::int64_t ow = 0; ow < OW_; ++ow) {
                            const T wx1 = static_cast<T>(tx.w1[static_cast<std::size_t>(ow)]);
                            const T wx0 = T{1} - wx1;
                            const std::int64_t x0 = tx.i0[static_cast<std::size_t>(ow)];
                            const std::int64_t x1 = tx.i1[static_cast<std::size_t>(ow)];
                            const T gv = gplane[oh * OW_ + ow];
                            r0[x0] += wy0 * wx0 * gv;
                            r0[x1] += wy0 * wx1 * gv;
                            r1[x0] += wy1 * wx0 * gv;
                            r1[x1] += wy1 * wx1 * gv;
                        }
                    }
                }
            });
            return std::vector<Tensor>{gi};
        });
    }
    return out;
}

Tensor bilinear_sample(const Tensor& input, const Tensor& coords) {
    if (input.rank() != 4 || coords.rank() != 4)
        throw ShapeError("bilinear_sample: input and coords must be rank 4");
    if (coords.extent(1) != 2)
        throw ShapeError("bilinear_sample: coords must have 2 channels (x,y), got " +
                         std::to_string(coords.extent(1)));
    if (coords.extent(0) != input.extent(0))
        throw ShapeError("bilinear_sample: batch mismatch");
    if (coords.dtype() != input.dtype()) throw ShapeError("bilinear_sample: dtype mismatch");
    const std::int64_t N = input.extent(0), C = input.extent(1), H = input.extent(2),
                       W = input.extent(3);
    const std::int64_t OH = coords.extent(2), OW = coords.extent(3);
    Tensor out = Tensor::zeros({N, C, OH, OW}, input.dtype());
    dispatch_dtype(input.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* in = input.data<T>();
        const T* cp = coords.data<T>();
        T* o = out.raw<T>();
        for (std::int64_t n = 0; n < N; ++n) {
            const T* xs = cp + (n * 2 + 0) * OH * OW;
            const T* ys = cp + (n * 2 + 1) * OH * OW;
            for (std::int64_t c = 0; c < C; ++c) {
                const T* plane = in + (n * C + c) * H * W;
                T* oplane = o + (n * C + c) * OH * OW;
                for (std::int64_t i = 0; i < OH * OW; ++i) {
                    const double x = static_cast<double>(xs[i]);
                    const double y = static_cast<double>(ys[i]);
                    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
                    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
                    const double fx = x - static_cast<double>(x0);
                    const double fy = y - static_cast<double>(y0);
                    auto tap = [&](std::int64_t yy, std::int64_t xx) -> double {
                        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
                        return static_cast<double>(plane[yy * W + xx]);
                    };
                    const double v00 = tap(y0, x0), v01 = tap(y0, x0 + 1);
                    const double v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
                    oplane[i] = static_cast<T>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                               fy * ((1 - fx) * v10 + fx * v11));
                }
            }
        }
    });
    if (Tape* tape = Tape::active()) {
        Tensor iv = input, cv = coords;
        tape->record("bilinear_sample", {input, coords}, out, [iv, cv](const Tensor& g) {
            const std::int64_t N = iv.extent(0), C = iv.extent(1), H = iv.extent(2),
                               W = iv.extent(3);
            const std::int64_t OH = cv.extent(2), OW = cv.extent(3);
            Tensor gi = Tensor::zeros(iv.shape(), g.dtype());
            Tensor gc = Tensor::zeros(cv.shape(), g.dtype());
            dispatch_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* in = iv.data<T>();
                const T* cp = cv.data<T>();
                const T* gp = g.data<T>();
                T* gip = gi.raw<T>();
                T* gcp = gc.raw<T>();
                for (std::int64_t n = 0; n < N; ++n) {
                    const T* xs = cp + (n * 2 + 0) * OH * OW;
                    const T* ys = cp + (n * 2 + 1) * OH * OW;
                    T* gx = gcp + (n * 2 + 0) * OH * OW;
                    T* gy = gcp + (n * 2 + 1) * OH * OW;
                    for (std::int64_t c = 0; c < C; ++c) {
                        const T* plane = in + (n * C + c) * H * W;
                        T* gplane = gip + (n * C + c) * H * W;
                        const T* gout = gp + (n * C + c) * OH * OW;
                        for (std::int64_t i = 0; i < OH * OW; ++i) {
                            const double x = static_cast<double>(xs[i]);
                            const double y = static_cast<double>(ys[i]);
                            const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
                            const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
                            const double fx = x - static_cast<double>(x0);
                            const double fy = y - static_cast<double>(y0);
                            const double gv = static_cast<double>(gout[i]);
                            auto tap = [&](std::int64_t yy, std::int64_t xx) -> double {
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
                                return static_cast<double>(plane[yy * W + xx]);
                            };
                            auto scatter = [&](std::int64_t yy, std::int64_t xx, double w) {
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) return;
                                gplane[yy * W + xx] += static_cast<T>(w * gv);
                            };
                            scatter(y0, x0, (1 - fy) * (1 - fx));
                            scatter(y0, x0 + 1, (1 - fy) * fx);
                            scatter(y0 + 1, x0, fy * (1 - fx));
                            scatter(y0 + 1, x0 + 1, fy * fx);
                            const double v00 = tap(y0, x0), v01 = tap(y0, x0 + 1);
                            const double v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
                            gx[i] += static_cast<T>(gv * ((1 - fy) * (v01 - v00) + fy * (v11 - v10)));
                            gy[i] += static_cast<T>(gv * ((1 - fx) * (v10 - v00) + fx * (v11 - v01)));
                        }
                    }
                }
            });
            return std::vector<Tensor>{gi, gc};
        });
    }
    return out;
}

}  // namespace tmnet
