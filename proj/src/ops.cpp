#include "gsnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gsnet/parallel.hpp"

namespace gsnet::ops {

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
}

void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw ContractError(msg);
    }
}

template <typename T>
Node<T>& parent(Node<T>& self, std::size_t i) {
    return *self.parents[i];
}

template <typename T>
bool wants(Node<T>& self, std::size_t i) {
    return self.parents[i]->requires_grad;
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= 0) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// Half-pixel source coordinates for one axis of a bilinear resize.
struct LerpTable {
    std::vector<std::int64_t> lo, hi;
    std::vector<double> frac;
};

LerpTable lerp_table(std::int64_t in, std::int64_t out) {
    LerpTable t;
    t.lo.resize(static_cast<std::size_t>(out));
    t.hi.resize(static_cast<std::size_t>(out));
    t.frac.resize(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0) {
            src = 0;
        }
        auto lo = static_cast<std::int64_t>(src);
        lo = std::min(lo, in - 1);
        const std::int64_t hi = lo < in - 1 ? lo + 1 : lo;
        t.lo[static_cast<std::size_t>(o)] = lo;
        t.hi[static_cast<std::size_t>(o)] = hi;
        t.frac[static_cast<std::size_t>(o)] = src - static_cast<double>(lo);
    }
    return t;
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += pb[i];
    }
    return make_result<T>(std::move(out), "add", {a, b}, [](Node<T>& self) {
        parent(self, 0).accumulate(self.grad);
        parent(self, 1).accumulate(self.grad);
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= pb[i];
    }
    return make_result<T>(std::move(out), "mul", {a, b}, [](Node<T>& self) {
        const auto& g = self.grad;
        for (std::size_t k = 0; k < 2; ++k) {
            if (!wants(self, k)) {
                continue;
            }
            const auto& other = parent(self, 1 - k).value;
            Tensor<T> d(g.shape());
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] = g[i] * other[i];
            }
            parent(self, k).accumulate(d);
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) {
        v *= factor;
    }
    return make_result<T>(std::move(out), "scale", {a}, [factor](Node<T>& self) {
        Tensor<T> d = self.grad;
        for (auto& v : d.values()) {
            v *= factor;
        }
        parent(self, 0).accumulate(d);
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T total = 0;
    for (T v : a.value().values()) {
        total += v;
    }
    return make_result<T>(Tensor<T>({1}, std::vector<T>{total}), "sum", {a}, [](Node<T>& self) {
        parent(self, 0).accumulate(Tensor<T>::full(parent(self, 0).value.shape(), self.grad[0]));
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) {
        v = v > 0 ? v : T(0);
    }
    return make_result<T>(std::move(out), "relu", {x}, [](Node<T>& self) {
        const auto& in = parent(self, 0).value;
        Tensor<T> d = self.grad;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!(in[i] > 0)) {
                d[i] = 0;
            }
        }
        parent(self, 0).accumulate(d);
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) {
        v = sigmoid_scalar(v);
    }
    return make_result<T>(std::move(out), "sigmoid", {x}, [](Node<T>& self) {
        Tensor<T> d = self.grad;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const T s = self.value[i];
            d[i] *= s * (T(1) - s);
        }
        parent(self, 0).accumulate(d);
    });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
    Tensor<T> out = x.value();
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    for (auto& v : out.values()) {
        v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    }
    return make_result<T>(std::move(out), "gelu", {x}, [inv_sqrt2](Node<T>& self) {
        const auto& in = parent(self, 0).value;
        const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * T(M_PI));
        Tensor<T> d = self.grad;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const T v = in[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = std::exp(T(-0.5) * v * v) * inv_sqrt_2pi;
            d[i] *= cdf + v * pdf;
        }
        parent(self, 0).accumulate(d);
    });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) {
        v = std::min(std::max(v, lo), hi);
    }
    return make_result<T>(std::move(out), "clamp", {x}, [lo, hi](Node<T>& self) {
        const auto& in = parent(self, 0).value;
        Tensor<T> d = self.grad;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!(in[i] >= lo && in[i] <= hi)) {
                d[i] = 0;
            }
        }
        parent(self, 0).accumulate(d);
    });
}

// -------------------------------------------------------------- row-wise ops

template <typename T>
Var<T> l2_normalize(const Var<T>& x, double eps) {
    const auto& in = x.value();
    const std::int64_t d = in.shape().back();
    const std::int64_t rows = static_cast<std::int64_t>(in.size()) / d;
    Tensor<T> out(in.shape());
    std::vector<T> norms(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = in.data() + r * d;
        T ss = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            ss += src[j] * src[j];
        }
        const T n = std::sqrt(ss + static_cast<T>(eps));
        norms[static_cast<std::size_t>(r)] = n;
        T* dst = out.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) {
            dst[j] = src[j] / n;
        }
    }
    return make_result<T>(std::move(out), "l2_normalize", {x}, [d, rows, norms = std::move(norms)](Node<T>& self) {
        const auto& in = parent(self, 0).value;
        Tensor<T> dx(in.shape());
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* xs = in.data() + r * d;
            const T* gs = self.grad.data() + r * d;
            T* out = dx.data() + r * d;
            const T n = norms[static_cast<std::size_t>(r)];
            T dot = 0;
            for (std::int64_t j = 0; j < d; ++j) {
                dot += gs[j] * xs[j];
            }
            const T n3 = n * n * n;
            for (std::int64_t j = 0; j < d; ++j) {
                out[j] = gs[j] / n - xs[j] * dot / n3;
            }
        }
        parent(self, 0).accumulate(dx);
    });
}

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
    const auto& in = x.value();
    const std::int64_t d = in.shape().back();
    const std::int64_t rows = static_cast<std::int64_t>(in.size()) / d;
    Tensor<T> out(in.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = in.data() + r * d;
        T* dst = out.data() + r * d;
        const T mx = *std::max_element(src, src + d);
        T total = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            dst[j] = std::exp(src[j] - mx);
            total += dst[j];
        }
        for (std::int64_t j = 0; j < d; ++j) {
            dst[j] /= total;
        }
    }
    return make_result<T>(std::move(out), "softmax", {x}, [d, rows](Node<T>& self) {
        Tensor<T> dx(self.value.shape());
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T dot = 0;
            for (std::int64_t j = 0; j < d; ++j) {
                dot += g[j] * y[j];
            }
            T* out = dx.data() + r * d;
            for (std::int64_t j = 0; j < d; ++j) {
                out[j] = y[j] * (g[j] - dot);
            }
        }
        parent(self, 0).accumulate(dx);
    });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
    const auto& in = x.value();
    const std::int64_t d = in.shape().back();
    require(gamma.value().size() == static_cast<std::size_t>(d) && beta.value().size() == static_cast<std::size_t>(d),
            "layer_norm: affine size must equal last extent " + std::to_string(d));
    const std::int64_t rows = static_cast<std::int64_t>(in.size()) / d;
    Tensor<T> xhat(in.shape());
    std::vector<T> inv_std(static_cast<std::size_t>(rows));
    Tensor<T> out(in.shape());
    const T* g = gamma.value().data();
    const T* b = beta.value().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = in.data() + r * d;
        T mean = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            mean += src[j];
        }
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            var += (src[j] - mean) * (src[j] - mean);
        }
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            const T h = (src[j] - mean) * is;
            xhat[static_cast<std::size_t>(r * d + j)] = h;
            out[static_cast<std::size_t>(r * d + j)] = h * g[j] + b[j];
        }
    }
    return make_result<T>(
        std::move(out), "layer_norm", {x, gamma, beta},
        [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
            const auto& gam = parent(self, 1).value;
            Tensor<T> dg(gam.shape()), db(gam.shape());
            Tensor<T> dx(self.value.shape());
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* gy = self.grad.data() + r * d;
                const T* h = xhat.data() + r * d;
                T mean_dh = 0, mean_dh_h = 0;
                for (std::int64_t j = 0; j < d; ++j) {
                    const T dh = gy[j] * gam[static_cast<std::size_t>(j)];
                    mean_dh += dh;
                    mean_dh_h += dh * h[j];
                    dg[static_cast<std::size_t>(j)] += gy[j] * h[j];
                    db[static_cast<std::size_t>(j)] += gy[j];
                }
                mean_dh /= static_cast<T>(d);
                mean_dh_h /= static_cast<T>(d);
                const T is = inv_std[static_cast<std::size_t>(r)];
                T* out = dx.data() + r * d;
                for (std::int64_t j = 0; j < d; ++j) {
                    const T dh = gy[j] * gam[static_cast<std::size_t>(j)];
                    out[j] = is * (dh - mean_dh - h[j] * mean_dh_h);
                }
            }
            parent(self, 0).accumulate(dx);
            parent(self, 1).accumulate(dg);
            parent(self, 2).accumulate(db);
        });
}

// ------------------------------------------------------------------ structure

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    return make_result<T>(std::move(out), "reshape", {x}, [](Node<T>& self) {
        parent(self, 0).accumulate(self.grad.reshaped(parent(self, 0).value.shape()));
    });
}

namespace {

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& in, const std::vector<std::size_t>& axes) {
    const std::size_t rank = in.rank();
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in.shape()[axes[i]];
    }
    std::vector<std::int64_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) {
        in_strides[i - 1] = in_strides[i] * in.shape()[i];
    }
    // Stride in the input for each output axis.
    std::vector<std::int64_t> step(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        step[i] = in_strides[axes[i]];
    }
    Tensor<T> out(out_shape);
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t src = 0;
    const std::size_t total = out.size();
    for (std::size_t o = 0; o < total; ++o) {
        out[o] = in[static_cast<std::size_t>(src)];
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                src += step[ax];
                break;
            }
            src -= step[ax] * (out_shape[ax] - 1);
            idx[ax] = 0;
        }
    }
    return out;
}

}  // namespace

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes) {
    const std::size_t rank = x.value().rank();
    require(axes.size() == rank, "permute: axis list length must equal rank");
    std::vector<std::size_t> inverse(rank, rank);
    for (std::size_t i = 0; i < rank; ++i) {
        require(axes[i] < rank && inverse[axes[i]] == rank, "permute: axes must be a permutation");
        inverse[axes[i]] = i;
    }
    return make_result<T>(permute_tensor(x.value(), axes), "permute", {x}, [inverse](Node<T>& self) {
        parent(self, 0).accumulate(permute_tensor(self.grad, inverse));
    });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
    require(!parts.empty(), "concat: no inputs");
    const Shape& ref = parts.front().shape();
    require(axis < ref.size(), "concat: axis out of range");
    std::int64_t total_axis = 0;
    std::vector<std::int64_t> widths;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        require(s.size() == ref.size(), "concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != ref[i]) {
                throw ContractError("concat: extent mismatch on axis " + std::to_string(i) + ": " + shape_str(s) +
                                    " vs " + shape_str(ref));
            }
        }
        widths.push_back(s[axis]);
        total_axis += s[axis];
    }
    std::int64_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= ref[i];
    }
    for (std::size_t i = axis + 1; i < ref.size(); ++i) {
        inner *= ref[i];
    }
    Shape out_shape = ref;
    out_shape[axis] = total_axis;
    Tensor<T> out(out_shape);
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const T* src = parts[k].value().data();
        const std::int64_t block = widths[k] * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy(src + o * block, src + (o + 1) * block, out.data() + o * total_axis * inner + offset * inner);
        }
        offset += widths[k];
    }
    return make_result<T>(std::move(out), "concat", parts, [widths, outer, inner, total_axis](Node<T>& self) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (wants(self, k)) {
                Tensor<T> d(parent(self, k).value.shape());
                const std::int64_t block = widths[k] * inner;
                for (std::int64_t o = 0; o < outer; ++o) {
                    const T* src = self.grad.data() + o * total_axis * inner + offset * inner;
                    std::copy(src, src + block, d.data() + o * block);
                }
                parent(self, k).accumulate(d);
            }
            offset += widths[k];
        }
    });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::int64_t start, std::int64_t length) {
    const Shape& s = x.shape();
    require(axis < s.size(), "slice: axis out of range");
    require(start >= 0 && length > 0 && start + length <= s[axis],
            "slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") outside extent " +
                std::to_string(s[axis]));
    std::int64_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= s[i];
    }
    for (std::size_t i = axis + 1; i < s.size(); ++i) {
        inner *= s[i];
    }
    const std::int64_t full = s[axis];
    Shape out_shape = s;
    out_shape[axis] = length;
    Tensor<T> out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        const T* src = x.value().data() + (o * full + start) * inner;
        std::copy(src, src + length * inner, out.data() + o * length * inner);
    }
    return make_result<T>(std::move(out), "slice", {x}, [outer, inner, full, start, length](Node<T>& self) {
        Tensor<T> d(parent(self, 0).value.shape());
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = self.grad.data() + o * length * inner;
            std::copy(src, src + length * inner, d.data() + (o * full + start) * inner);
        }
        parent(self, 0).accumulate(d);
    });
}

template <typename T>
Var<T> repeat_batch(const Var<T>& x, std::int64_t n) {
    const Shape& s = x.shape();
    require(!s.empty() && s[0] == 1, "repeat_batch: leading extent must be 1, got " + shape_str(s));
    require(n >= 1, "repeat_batch: count must be positive");
    Shape out_shape = s;
    out_shape[0] = n;
    Tensor<T> out(out_shape);
    const std::size_t block = x.value().size();
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy(x.value().data(), x.value().data() + block, out.data() + static_cast<std::size_t>(i) * block);
    }
    return make_result<T>(std::move(out), "repeat_batch", {x}, [n, block](Node<T>& self) {
        Tensor<T> d(parent(self, 0).value.shape());
        for (std::int64_t i = 0; i < n; ++i) {
            const T* src = self.grad.data() + static_cast<std::size_t>(i) * block;
            for (std::size_t j = 0; j < block; ++j) {
                d[j] += src[j];
            }
        }
        parent(self, 0).accumulate(d);
    });
}

// -------------------------------------------------------------- linear algebra

namespace {

// c[m,n] += a[m,k] * b[k,n] with optional transposes expressed via strides.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n, bool ta, bool tb) {
    for (std::int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = ta ? a[p * m + i] : a[i * k + p];
            if (av == T(0)) {
                continue;
            }
            if (tb) {
                for (std::int64_t j = 0; j < n; ++j) {
                    crow[j] += av * b[j * k + p];
                }
            } else {
                const T* brow = b + p * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const bool batched = sa.size() == 3;
    require((sa.size() == 2 && sb.size() == 2) || (sa.size() == 3 && sb.size() == 3),
            "matmul: expected 2-D or batched 3-D operands, got " + shape_str(sa) + " and " + shape_str(sb));
    const std::int64_t batch = batched ? sa[0] : 1;
    const std::int64_t m = sa[sa.size() - 2], k = sa.back();
    const std::int64_t k2 = sb[sb.size() - 2], n = sb.back();
    require(k == k2 && (!batched || sb[0] == batch),
            "matmul: inner dimension mismatch " + shape_str(sa) + " x " + shape_str(sb));
    Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
    Tensor<T> out(out_shape);
    parallel_for(0, batch, [&](std::int64_t bi) {
        gemm_acc(a.value().data() + bi * m * k, b.value().data() + bi * k * n, out.data() + bi * m * n, m, k, n, false,
                 false);
    });
    return make_result<T>(std::move(out), "matmul", {a, b}, [batch, m, k, n](Node<T>& self) {
        const auto& av = parent(self, 0).value;
        const auto& bv = parent(self, 1).value;
        if (wants(self, 0)) {
            Tensor<T> da(av.shape());
            parallel_for(0, batch, [&](std::int64_t bi) {
                gemm_acc(self.grad.data() + bi * m * n, bv.data() + bi * k * n, da.data() + bi * m * k, m, n, k, false,
                         true);
            });
            parent(self, 0).accumulate(da);
        }
        if (wants(self, 1)) {
            Tensor<T> db(bv.shape());
            parallel_for(0, batch, [&](std::int64_t bi) {
                gemm_acc(av.data() + bi * m * k, self.grad.data() + bi * m * n, db.data() + bi * k * n, k, m, n, true,
                         false);
            });
            parent(self, 1).accumulate(db);
        }
    });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    require(sw.size() == 2, "linear: weight must be Din x Dout, got " + shape_str(sw));
    const std::int64_t din = sw[0], dout = sw[1];
    require(sx.back() == din, "linear: input last extent " + std::to_string(sx.back()) + " != Din " +
                                  std::to_string(din));
    require(bias.value().size() == static_cast<std::size_t>(dout), "linear: bias size must equal Dout");
    const std::int64_t rows = static_cast<std::int64_t>(x.value().size()) / din;
    Shape out_shape = sx;
    out_shape.back() = dout;
    Tensor<T> out(out_shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        std::copy(bias.value().data(), bias.value().data() + dout, out.data() + r * dout);
    }
    gemm_acc(x.value().data(), weight.value().data(), out.data(), rows, din, dout, false, false);
    return make_result<T>(std::move(out), "linear", {x, weight, bias}, [rows, din, dout](Node<T>& self) {
        const auto& xv = parent(self, 0).value;
        const auto& wv = parent(self, 1).value;
        if (wants(self, 0)) {
            Tensor<T> dx(xv.shape());
            gemm_acc(self.grad.data(), wv.data(), dx.data(), rows, dout, din, false, true);
            parent(self, 0).accumulate(dx);
        }
        if (wants(self, 1)) {
            Tensor<T> dw(wv.shape());
            gemm_acc(xv.data(), self.grad.data(), dw.data(), din, rows, dout, true, false);
            parent(self, 1).accumulate(dw);
        }
        if (wants(self, 2)) {
            Tensor<T> db(parent(self, 2).value.shape());
            for (std::int64_t r = 0; r < rows; ++r) {
                for (std::int64_t j = 0; j < dout; ++j) {
                    db[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(r * dout + j)];
                }
            }
            parent(self, 2).accumulate(db);
        }
    });
}

// -------------------------------------------------------------- convolutions

namespace {

// Range of output positions o with 0 <= o*stride + offset < in.
std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t in, std::int64_t out, std::int64_t stride,
                                                  std::int64_t offset) {
    std::int64_t lo = 0;
    while (lo < out && lo * stride + offset < 0) {
        ++lo;
    }
    std::int64_t hi = out;
    while (hi > lo && (hi - 1) * stride + offset >= in) {
        --hi;
    }
    return {lo, hi};
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    require(sx.size() == 4, "conv2d: input must be NCHW, got " + shape_str(sx));
    require(sw.size() == 4 && sw[2] == sw[3], "conv2d: weight must be Cout x Cin x k x k, got " + shape_str(sw));
    require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
    const std::int64_t n = sx[0], cin = sx[1], h = sx[2], w = sx[3];
    const std::int64_t cout = sw[0], k = sw[2];
    require(sw[1] == cin, "conv2d: input channels " + std::to_string(cin) + " != weight Cin " + std::to_string(sw[1]));
    require(bias.value().size() == static_cast<std::size_t>(cout), "conv2d: bias size must equal Cout");
    require(h + 2 * padding >= k && w + 2 * padding >= k,
            "conv2d: kernel " + std::to_string(k) + " larger than padded input " + shape_str(sx));
    const std::int64_t oh = (h + 2 * padding - k) / stride + 1;
    const std::int64_t ow = (w + 2 * padding - k) / stride + 1;
    const std::int64_t s = stride, p = padding;

    Tensor<T> out({n, cout, oh, ow});
    const T* xd = x.value().data();
    const T* wd = weight.value().data();
    const T* bd = bias.value().data();
    parallel_for(0, n * cout, [&](std::int64_t job) {
        const std::int64_t b = job / cout, co = job % cout;
        T* dst = out.data() + job * oh * ow;
        std::fill(dst, dst + oh * ow, bd[co]);
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const T* src = xd + (b * cin + ci) * h * w;
            for (std::int64_t kh = 0; kh < k; ++kh) {
                const auto [r0, r1] = valid_range(h, oh, s, kh - p);
                for (std::int64_t kw = 0; kw < k; ++kw) {
                    const T wv = wd[((co * cin + ci) * k + kh) * k + kw];
                    const auto [c0, c1] = valid_range(w, ow, s, kw - p);
                    for (std::int64_t r = r0; r < r1; ++r) {
                        const std::int64_t base = (r * s + kh - p) * w + (kw - p);
                        T* drow = dst + r * ow;
                        for (std::int64_t c = c0; c < c1; ++c) {
                            drow[c] += wv * src[base + c * s];
                        }
                    }
                }
            }
        }
    });

    return make_result<T>(std::move(out), "conv2d", {x, weight, bias}, [=](Node<T>& self) {
        const T* xd = parent(self, 0).value.data();
        const T* wd = parent(self, 1).value.data();
        const T* gd = self.grad.data();
        if (wants(self, 0)) {
            Tensor<T> dx(parent(self, 0).value.shape());
            parallel_for(0, n * cin, [&](std::int64_t job) {
                const std::int64_t b = job / cin, ci = job % cin;
                T* dst = dx.data() + job * h * w;
                for (std::int64_t co = 0; co < cout; ++co) {
                    const T* g = gd + (b * cout + co) * oh * ow;
                    for (std::int64_t kh = 0; kh < k; ++kh) {
                        const auto [r0, r1] = valid_range(h, oh, s, kh - p);
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            const T wv = wd[((co * cin + ci) * k + kh) * k + kw];
                            const auto [c0, c1] = valid_range(w, ow, s, kw - p);
                            for (std::int64_t r = r0; r < r1; ++r) {
                                const std::int64_t base = (r * s + kh - p) * w + (kw - p);
                                const T* grow = g + r * ow;
                                for (std::int64_t c = c0; c < c1; ++c) {
                                    dst[base + c * s] += wv * grow[c];
                                }
                            }
                        }
                    }
                }
            });
            parent(self, 0).accumulate(dx);
        }
        if (wants(self, 1)) {
            Tensor<T> dw(parent(self, 1).value.shape());
            parallel_for(0, cout, [&](std::int64_t co) {
                for (std::int64_t b = 0; b < n; ++b) {
                    const T* g = gd + (b * cout + co) * oh * ow;
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        const T* src = xd + (b * cin + ci) * h * w;
                        for (std::int64_t kh = 0; kh < k; ++kh) {
                            const auto [r0, r1] = valid_range(h, oh, s, kh - p);
                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                const auto [c0, c1] = valid_range(w, ow, s, kw - p);
                                T acc = 0;
                                for (std::int64_t r = r0; r < r1; ++r) {
                                    const std::int64_t base = (r * s + kh - p) * w + (kw - p);
                                    const T* grow = g + r * ow;
                                    for (std::int64_t c = c0; c < c1; ++c) {
                                        acc += grow[c] * src[base + c * s];
                                    }
                                }
                                dw[static_cast<std::size_t>(((co * cin + ci) * k + kh) * k + kw)] += acc;
                            }
                        }
                    }
                }
            });
            parent(self, 1).accumulate(dw);
        }
        if (wants(self, 2)) {
            Tensor<T> db(parent(self, 2).value.shape());
            for (std::int64_t b = 0; b < n; ++b) {
                for (std::int64_t co = 0; co < cout; ++co) {
                    const T* g = gd + (b * cout + co) * oh * ow;
                    T acc = 0;
                    for (std::int64_t i = 0; i < oh * ow; ++i) {
                        acc += g[i];
                    }
                    db[static_cast<std::size_t>(co)] += acc;
                }
            }
            parent(self, 2).accumulate(db);
        }
    });
}

template <typename T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int kernel) {
    if (stride != kernel) {
        throw ContractError("deconv2d: unsupported configuration, stride " + std::to_string(stride) +
                            " != kernel " + std::to_string(kernel));
    }
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    require(kernel >= 1, "deconv2d: kernel must be positive");
    require(sx.size() == 4, "deconv2d: input must be NCHW, got " + shape_str(sx));
    require(sw.size() == 4 && sw[2] == kernel && sw[3] == kernel,
            "deconv2d: weight must be Cin x Cout x k x k with k = " + std::to_string(kernel) + ", got " + shape_str(sw));
    const std::int64_t n = sx[0], cin = sx[1], h = sx[2], w = sx[3];
    const std::int64_t cout = sw[1], k = kernel;
    require(sw[0] == cin, "deconv2d: input channels " + std::to_string(cin) + " != weight Cin " + std::to_string(sw[0]));
    require(bias.value().size() == static_cast<std::size_t>(cout), "deconv2d: bias size must equal Cout");
    const std::int64_t oh = h * k, ow = w * k;

    Tensor<T> out({n, cout, oh, ow});
    const T* xd = x.value().data();
    const T* wd = weight.value().data();
    const T* bd = bias.value().data();
    parallel_for(0, n * cout, [&](std::int64_t job) {
        const std::int64_t b = job / cout, co = job % cout;
        T* dst = out.data() + job * oh * ow;
        std::fill(dst, dst + oh * ow, bd[co]);
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const T* src = xd + (b * cin + ci) * h * w;
            const T* wk = wd + (ci * cout + co) * k * k;
            for (std::int64_t r = 0; r < h; ++r) {
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    T* drow = dst + (r * k + kh) * ow;
                    for (std::int64_t c = 0; c < w; ++c) {
                        const T v = src[r * w + c];
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            drow[c * k + kw] += v * wk[kh * k + kw];
                        }
                    }
                }
            }
        }
    });

    return make_result<T>(std::move(out), "deconv2d", {x, weight, bias}, [=](Node<T>& self) {
        const T* xd = parent(self, 0).value.data();
        const T* wd = parent(self, 1).value.data();
        const T* gd = self.grad.data();
        if (wants(self, 0)) {
            Tensor<T> dx(parent(self, 0).value.shape());
            parallel_for(0, n * cin, [&](std::int64_t job) {
                const std::int64_t b = job / cin, ci = job % cin;
                T* dst = dx.data() + job * h * w;
                for (std::int64_t co = 0; co < cout; ++co) {
                    const T* g = gd + (b * cout + co) * oh * ow;
                    const T* wk = wd + (ci * cout + co) * k * k;
                    for (std::int64_t r = 0; r < h; ++r) {
                        for (std::int64_t c = 0; c < w; ++c) {
                            T acc = 0;
                            for (std::int64_t kh = 0; kh < k; ++kh) {
                                for (std::int64_t kw = 0; kw < k; ++kw) {
                                    acc += wk[kh * k + kw] * g[(r * k + kh) * ow + c * k + kw];
                                }
                            }
                            dst[r * w + c] += acc;
                        }
                    }
                }
            });
            parent(self, 0).accumulate(dx);
        }
        if (wants(self, 1)) {
            Tensor<T> dw(parent(self, 1).value.shape());
            parallel_for(0, cin, [&](std::int64_t ci) {
                for (std::int64_t b = 0; b < n; ++b) {
                    const T* src = xd + (b * cin + ci) * h * w;
                    for (std::int64_t co = 0; co < cout; ++co) {
                        const T* g = gd + (b * cout + co) * oh * ow;
                        T* wk = dw.data() + (ci * cout + co) * k * k;
                        for (std::int64_t kh = 0; kh < k; ++kh) {
                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                T acc = 0;
                                for (std::int64_t r = 0; r < h; ++r) {
                                    for (std::int64_t c = 0; c < w; ++c) {
                                        acc += src[r * w + c] * g[(r * k + kh) * ow + c * k + kw];
                                    }
                                }
                                wk[kh * k + kw] += acc;
                            }
                        }
                    }
                }
            });
            parent(self, 1).accumulate(dw);
        }
        if (wants(self, 2)) {
            Tensor<T> db(parent(self, 2).value.shape());
            for (std::int64_t b = 0; b < n; ++b) {
                for (std::int64_t co = 0; co < cout; ++co) {
                    const T* g = gd + (b * cout + co) * oh * ow;
                    T acc = 0;
                    for (std::int64_t i = 0; i < oh * ow; ++i) {
                        acc += g[i];
                    }
                    db[static_cast<std::size_t>(co)] += acc;
                }
            }
            parent(self, 2).accumulate(db);
        }
    });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta, double eps) {
    const Shape& sx = x.shape();
    require(sx.size() == 4, "group_norm: input must be NCHW, got " + shape_str(sx));
    require(eps > 0, "group_norm: eps must be positive");
    const std::int64_t n = sx[0], c = sx[1], hw = sx[2] * sx[3];
    if (groups <= 0 || c % groups != 0) {
        throw ContractError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                            std::to_string(groups) + " groups");
    }
    require(gamma.value().size() == static_cast<std::size_t>(c) && beta.value().size() == static_cast<std::size_t>(c),
            "group_norm: affine size must equal channel count");
    const std::int64_t cpg = c / groups;
    const std::int64_t span = cpg * hw;
    const T* xd = x.value().data();
    const T* gd = gamma.value().data();
    const T* bd = beta.value().data();
    Tensor<T> xhat(sx);
    Tensor<T> out(sx);
    std::vector<T> inv_std(static_cast<std::size_t>(n * groups));
    parallel_for(0, n * groups, [&](std::int64_t job) {
        const std::int64_t g = job % groups;
        const T* src = xd + job * span;
        T mean = 0;
        for (std::int64_t i = 0; i < span; ++i) {
            mean += src[i];
        }
        mean /= static_cast<T>(span);
        T var = 0;
        for (std::int64_t i = 0; i < span; ++i) {
            var += (src[i] - mean) * (src[i] - mean);
        }
        var /= static_cast<T>(span);
        const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
        inv_std[static_cast<std::size_t>(job)] = is;
        for (std::int64_t i = 0; i < span; ++i) {
            const std::int64_t ch = g * cpg + i / hw;
            const T hv = (src[i] - mean) * is;
            xhat[static_cast<std::size_t>(job * span + i)] = hv;
            out[static_cast<std::size_t>(job * span + i)] = hv * gd[ch] + bd[ch];
        }
    });
    return make_result<T>(
        std::move(out), "group_norm", {x, gamma, beta},
        [n, c, hw, groups, cpg, span, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
            const T* gam = parent(self, 1).value.data();
            const T* gy = self.grad.data();
            if (wants(self, 0)) {
                Tensor<T> dx(self.value.shape());
                parallel_for(0, n * groups, [&](std::int64_t job) {
                    const std::int64_t g = job % groups;
                    const T* gyj = gy + job * span;
                    const T* h = xhat.data() + job * span;
                    T mean_dh = 0, mean_dh_h = 0;
                    for (std::int64_t i = 0; i < span; ++i) {
                        const T dh = gyj[i] * gam[g * cpg + i / hw];
                        mean_dh += dh;
                        mean_dh_h += dh * h[i];
                    }
                    mean_dh /= static_cast<T>(span);
                    mean_dh_h /= static_cast<T>(span);
                    const T is = inv_std[static_cast<std::size_t>(job)];
                    T* out = dx.data() + job * span;
                    for (std::int64_t i = 0; i < span; ++i) {
                        const T dh = gyj[i] * gam[g * cpg + i / hw];
                        out[i] = is * (dh - mean_dh - h[i] * mean_dh_h);
                    }
                });
                parent(self, 0).accumulate(dx);
            }
            if (wants(self, 1) || wants(self, 2)) {
                Tensor<T> dg({c}), db({c});
                for (std::int64_t b = 0; b < n; ++b) {
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = static_cast<std::size_t>((b * c + ch) * hw);
                        T ag = 0, ab = 0;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            ag += gy[base + static_cast<std::size_t>(i)] * xhat[base + static_cast<std::size_t>(i)];
                            ab += gy[base + static_cast<std::size_t>(i)];
                        }
                        dg[static_cast<std::size_t>(ch)] += ag;
                        db[static_cast<std::size_t>(ch)] += ab;
                    }
                }
                parent(self, 1).accumulate(dg.reshaped(parent(self, 1).value.shape()));
                parent(self, 2).accumulate(db.reshaped(parent(self, 2).value.shape()));
            }
        });
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, std::int64_t out_h, std::int64_t out_w) {
    const Shape& sx = x.shape();
    require(sx.size() == 4, "bilinear_resize: input must be NCHW, got " + shape_str(sx));
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: output extents must be positive");
    const std::int64_t planes = sx[0] * sx[1], h = sx[2], w = sx[3];
    auto rows = std::make_shared<LerpTable>(lerp_table(h, out_h));
    auto cols = std::make_shared<LerpTable>(lerp_table(w, out_w));
    Tensor<T> out({sx[0], sx[1], out_h, out_w});
    const T* xd = x.value().data();
    parallel_for(0, planes, [&](std::int64_t pl) {
        const T* src = xd + pl * h * w;
        T* dst = out.data() + pl * out_h * out_w;
        for (std::int64_t r = 0; r < out_h; ++r) {
            const auto ri = static_cast<std::size_t>(r);
            const T fy = static_cast<T>(rows->frac[ri]);
            const T* a = src + rows->lo[ri] * w;
            const T* b = src + rows->hi[ri] * w;
            for (std::int64_t c = 0; c < out_w; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                const T fx = static_cast<T>(cols->frac[ci]);
                const auto l = cols->lo[ci], hgh = cols->hi[ci];
                const T top = a[l] * (T(1) - fx) + a[hgh] * fx;
                const T bot = b[l] * (T(1) - fx) + b[hgh] * fx;
                dst[r * out_w + c] = top * (T(1) - fy) + bot * fy;
            }
        }
    });
    return make_result<T>(std::move(out), "bilinear_resize", {x}, [=](Node<T>& self) {
        Tensor<T> dx(parent(self, 0).value.shape());
        parallel_for(0, planes, [&](std::int64_t pl) {
            T* dst = dx.data() + pl * h * w;
            const T* g = self.grad.data() + pl * out_h * out_w;
            for (std::int64_t r = 0; r < out_h; ++r) {
                const auto ri = static_cast<std::size_t>(r);
                const T fy = static_cast<T>(rows->frac[ri]);
                T* a = dst + rows->lo[ri] * w;
                T* b = dst + rows->hi[ri] * w;
                for (std::int64_t c = 0; c < out_w; ++c) {
                    const auto ci = static_cast<std::size_t>(c);
                    const T fx = static_cast<T>(cols->frac[ci]);
                    const auto l = cols->lo[ci], hgh = cols->hi[ci];
                    const T gv = g[r * out_w + c];
                    a[l] += gv * (T(1) - fy) * (T(1) - fx);
                    a[hgh] += gv * (T(1) - fy) * fx;
                    b[l] += gv * fy * (T(1) - fx);
                    b[hgh] += gv * fy * fx;
                }
            }
        });
        parent(self, 0).accumulate(dx);
    });
}

#define GSNET_INSTANTIATE_OPS(T)                                                                        \
    template Var<T> add(const Var<T>&, const Var<T>&);                                                  \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                                  \
    template Var<T> scale(const Var<T>&, T);                                                            \
    template Var<T> sum(const Var<T>&);                                                                 \
    template Var<T> relu(const Var<T>&);                                                                \
    template Var<T> sigmoid(const Var<T>&);                                                             \
    template Var<T> gelu(const Var<T>&);                                                                \
    template Var<T> clamp(const Var<T>&, T, T);                                                         \
    template Var<T> l2_normalize(const Var<T>&, double);                                                \
    template Var<T> softmax_lastdim(const Var<T>&);                                                     \
    template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                    \
    template Var<T> reshape(const Var<T>&, Shape);                                                      \
    template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                            \
    template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                    \
    template Var<T> slice(const Var<T>&, std::size_t, std::int64_t, std::int64_t);                      \
    template Var<T> repeat_batch(const Var<T>&, std::int64_t);                                          \
    template Var<T> matmul(const Var<T>&, const Var<T>&);                                               \
    template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                      \
    template Var<T> deconv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                    \
    template Var<T> group_norm(const Var<T>&, int, const Var<T>&, const Var<T>&, double);               \
    template Var<T> bilinear_resize(const Var<T>&, std::int64_t, std::int64_t);

GSNET_INSTANTIATE_OPS(float)
GSNET_INSTANTIATE_OPS(double)

}  // namespace gsnet::ops
