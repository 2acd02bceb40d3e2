#include "gavs/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gavs {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t normalize_axis(int axis, std::size_t rank, const Shape& shape) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
    }
    return static_cast<std::size_t>(a);
}

// outer x len x inner decomposition around one axis.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// Flat-offset maps for numpy-style broadcasting. Empty map = identity.
struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> a_map;
    std::vector<std::size_t> b_map;
};

std::vector<std::size_t> offsets_for(const Shape& out, const Shape& in) {
    const std::size_t rank = out.size();
    const std::size_t pad = rank - in.size();
    std::vector<std::size_t> in_strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = rank; i-- > pad;) {
        const std::size_t extent = in[i - pad];
        in_strides[i] = extent == 1 ? 0 : stride;
        stride *= extent;
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        map[flat] = offset;
        for (std::size_t d = rank; d-- > 0;) {
            ++counter[d];
            offset += in_strides[d];
            if (counter[d] < out[d]) break;
            offset -= in_strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    return map;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(ea, eb);
    }
    return out;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    plan.out = broadcast_shape(a, b);
    if (a != plan.out) plan.a_map = offsets_for(plan.out, a);
    if (b != plan.out) plan.b_map = offsets_for(plan.out, b);
    return plan;
}

inline std::size_t mapped(const std::vector<std::size_t>& map, std::size_t i) {
    return map.empty() ? i : map[i];
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
    const std::size_t n = shape_numel(plan->out);
    std::vector<double> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = fwd(ad[mapped(plan->a_map, i)], bd[mapped(plan->b_map, i)]);
    }
    return Tensor::make_result(
        plan->out, std::move(out), {a, b}, [plan, da, db, n](TensorNode& self) {
            TensorNode& pa = *self.parents[0];
            TensorNode& pb = *self.parents[1];
            const auto& av = pa.data;
            const auto& bv = pb.data;
            if (pa.requires_grad) {
                auto& g = pa.grad_buffer();
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t ia = mapped(plan->a_map, i);
                    g[ia] += self.grad[i] * da(av[ia], bv[mapped(plan->b_map, i)]);
                }
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t ib = mapped(plan->b_map, i);
                    g[ib] += self.grad[i] * db(av[mapped(plan->a_map, i)], bv[ib]);
                }
            }
        });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [deriv](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        auto& g = px.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * deriv(px.data[i], self.data[i]);
        }
    });
}

}  // namespace

// ----------------------------------------------------------------------------
// elementwise
// ----------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary_op(
        x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary_op(
        x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary_op(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [inv_sqrt_2pi](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; },  // NaN passes through
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

// ----------------------------------------------------------------------------
// matmul
// ----------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() < 2 || b.dim() < 2) {
        throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.size(-2);
    const std::size_t k = a.size(-1);
    const std::size_t n = b.size(-1);
    if (b.size(-2) != k) {
        throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }

    // Plain 2-D weight: fold all batch dims of `a` into rows, one GEMM.
    if (b.dim() == 2) {
        const std::size_t rows = a.numel() / k;
        Shape out_shape = a.shape();
        out_shape.back() = n;
        std::vector<double> out(rows * n, 0.0);
        MutMap(out.data(), rows, n).noalias() =
            ConstMap(a.data().data(), rows, k) * ConstMap(b.data().data(), k, n);
        return Tensor::make_result(out_shape, std::move(out), {a, b},
                                   [rows, k, n](TensorNode& self) {
                                       TensorNode& pa = *self.parents[0];
                                       TensorNode& pb = *self.parents[1];
                                       ConstMap dc(self.grad.data(), rows, n);
                                       if (pa.requires_grad) {
                                           MutMap(pa.grad_buffer().data(), rows, k).noalias() +=
                                               dc * ConstMap(pb.data.data(), k, n).transpose();
                                       }
                                       if (pb.requires_grad) {
                                           MutMap(pb.grad_buffer().data(), k, n).noalias() +=
                                               ConstMap(pa.data.data(), rows, k).transpose() * dc;
                                       }
                                   });
    }

    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shape(a_batch, b_batch);
    const std::size_t nb = shape_numel(batch);
    auto a_off = std::make_shared<std::vector<std::size_t>>(
        a_batch == batch ? std::vector<std::size_t>{} : offsets_for(batch, a_batch));
    auto b_off = std::make_shared<std::vector<std::size_t>>(
        b_batch == batch ? std::vector<std::size_t>{} : offsets_for(batch, b_batch));

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(nb * m * n, 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t i = 0; i < nb; ++i) {
        MutMap(out.data() + i * m * n, m, n).noalias() =
            ConstMap(ad + mapped(*a_off, i) * m * k, m, k) *
            ConstMap(bd + mapped(*b_off, i) * k * n, k, n);
    }
    return Tensor::make_result(
        out_shape, std::move(out), {a, b}, [=](TensorNode& self) {
            TensorNode& pa = *self.parents[0];
            TensorNode& pb = *self.parents[1];
            for (std::size_t i = 0; i < nb; ++i) {
                ConstMap dc(self.grad.data() + i * m * n, m, n);
                const std::size_t ia = mapped(*a_off, i) * m * k;
                const std::size_t ib = mapped(*b_off, i) * k * n;
                if (pa.requires_grad) {
                    MutMap(pa.grad_buffer().data() + ia, m, k).noalias() +=
                        dc * ConstMap(pb.data.data() + ib, k, n).transpose();
                }
                if (pb.requires_grad) {
                    MutMap(pb.grad_buffer().data() + ib, k, n).noalias() +=
                        ConstMap(pa.data.data() + ia, m, k).transpose() * dc;
                }
            }
        });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.dim() == 1) {
        Tensor y = linear(reshape(x, {1, x.numel()}), weight, bias);
        return reshape(y, {y.numel()});
    }
    Tensor y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

// ----------------------------------------------------------------------------
// layout
// ----------------------------------------------------------------------------

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const std::size_t rank = x.dim();
    if (axes.size() != rank) throw ShapeError("permute rank mismatch for " + shape_str(x.shape()));
    std::vector<bool> seen(rank, false);
    for (std::size_t a : axes) {
        if (a >= rank || seen[a]) throw ShapeError("permute axes invalid for " + shape_str(x.shape()));
        seen[a] = true;
    }
    std::vector<std::size_t> in_strides(rank);
    std::size_t stride = 1;
    for (std::size_t i = rank; i-- > 0;) {
        in_strides[i] = stride;
        stride *= x.shape()[i];
    }
    Shape out_shape(rank);
    std::vector<std::size_t> perm_strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = x.shape()[axes[i]];
        perm_strides[i] = in_strides[axes[i]];
    }
    // map[out_flat] = in_flat
    auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
    std::vector<std::size_t> counter(rank, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < map->size(); ++flat) {
        (*map)[flat] = offset;
        for (std::size_t d = rank; d-- > 0;) {
            ++counter[d];
            offset += perm_strides[d];
            if (counter[d] < out_shape[d]) break;
            offset -= perm_strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    const auto xd = x.data();
    std::vector<double> out(map->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[(*map)[i]];
    return Tensor::make_result(out_shape, std::move(out), {x}, [map](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < map->size(); ++i) g[(*map)[i]] += self.grad[i];
    });
}

Tensor transpose(const Tensor& x) {
    if (x.dim() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(x.shape()));
    std::vector<std::size_t> axes(x.dim());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(x, axes);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Shape& ref = parts.front().shape();
    const std::size_t ax = normalize_axis(axis, ref.size(), ref);
    Shape out_shape = ref;
    out_shape[ax] = 0;
    for (const Tensor& p : parts) {
        if (p.dim() != ref.size()) {
            throw ShapeError("concat rank mismatch: " + shape_str(ref) + " vs " + shape_str(p.shape()));
        }
        for (std::size_t d = 0; d < ref.size(); ++d) {
            if (d != ax && p.shape()[d] != ref[d]) {
                throw ShapeError("concat extent mismatch: " + shape_str(ref) + " vs " +
                                 shape_str(p.shape()));
            }
        }
        out_shape[ax] += p.shape()[ax];
    }
    const AxisSplit s = split_at(out_shape, ax);
    std::vector<double> out(shape_numel(out_shape));
    auto starts = std::make_shared<std::vector<std::size_t>>();
    std::size_t start = 0;
    for (const Tensor& p : parts) {
        starts->push_back(start);
        const std::size_t len = p.shape()[ax];
        const auto pd = p.data();
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::copy_n(pd.data() + o * len * s.inner, len * s.inner,
                        out.data() + (o * s.len + start) * s.inner);
        }
        start += len;
    }
    return Tensor::make_result(out_shape, std::move(out), parts, [s, starts](TensorNode& self) {
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
            TensorNode& p = *self.parents[pi];
            if (!p.requires_grad) continue;
            auto& g = p.grad_buffer();
            const std::size_t len = g.size() / (s.outer * s.inner);
            for (std::size_t o = 0; o < s.outer; ++o) {
                const double* src = self.grad.data() + (o * s.len + (*starts)[pi]) * s.inner;
                double* dst = g.data() + o * len * s.inner;
                for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = normalize_axis(axis, x.dim(), x.shape());
    if (length == 0 || start + length > x.shape()[ax]) {
        throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") out of range for " + shape_str(x.shape()));
    }
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape[ax] = length;
    std::vector<double> out(shape_numel(out_shape));
    const auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(xd.data() + (o * s.len + start) * s.inner, length * s.inner,
                    out.data() + o * length * s.inner);
    }
    return Tensor::make_result(out_shape, std::move(out), {x},
                               [s, start, length](TensorNode& self) {
                                   auto& g = self.parents[0]->grad_buffer();
                                   for (std::size_t o = 0; o < s.outer; ++o) {
                                       const double* src = self.grad.data() + o * length * s.inner;
                                       double* dst = g.data() + (o * s.len + start) * s.inner;
                                       for (std::size_t i = 0; i < length * s.inner; ++i) {
                                           dst[i] += src[i];
                                       }
                                   }
                               });
}

Tensor diagonal(const Tensor& x) {
    if (x.dim() != 2 || x.size(0) != x.size(1)) {
        throw ShapeError("diagonal needs a square matrix, got " + shape_str(x.shape()));
    }
    const std::size_t n = x.size(0);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[i * n + i];
    return Tensor::make_result({n}, std::move(out), {x}, [n](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i * n + i] += self.grad[i];
    });
}

// ----------------------------------------------------------------------------
// reductions
// ----------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return Tensor::make_result({1}, {total}, {x}, [](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_over(const Tensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.dim(), x.shape());
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> out(s.outer * s.inner, 0.0);
    const auto xd = x.data();
    const double inv = 1.0 / static_cast<double>(s.len);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t l = 0; l < s.len; ++l) {
            const double* src = xd.data() + (o * s.len + l) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    }
    for (double& v : out) v *= inv;
    return Tensor::make_result(out_shape, std::move(out), {x}, [s, inv](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t l = 0; l < s.len; ++l) {
                double* dst = g.data() + (o * s.len + l) * s.inner;
                const double* src = self.grad.data() + o * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * inv;
            }
        }
    });
}

Tensor max_over(const Tensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.dim(), x.shape());
    const AxisSplit s = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> out(s.outer * s.inner);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t best = (o * s.len) * s.inner + i;
            for (std::size_t l = 1; l < s.len; ++l) {
                const std::size_t idx = (o * s.len + l) * s.inner + i;
                if (xd[idx] > xd[best]) best = idx;
            }
            out[o * s.inner + i] = xd[best];
            (*argmax)[o * s.inner + i] = best;
        }
    }
    return Tensor::make_result(out_shape, std::move(out), {x}, [argmax](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += self.grad[i];
    });
}

// ----------------------------------------------------------------------------
// normalization
// ----------------------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.dim(), x.shape());
    const AxisSplit s = split_at(x.shape(), ax);
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double peak = xd[base];
            for (std::size_t l = 1; l < s.len; ++l) peak = std::max(peak, xd[base + l * s.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
                const double e = std::exp(xd[base + l * s.inner] - peak);
                out[base + l * s.inner] = e;
                total += e;
            }
            const double inv = 1.0 / total;
            for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] *= inv;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [s](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        const auto& y = self.data;
        const auto& dy = self.grad;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.len * s.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < s.len; ++l) {
                    dot += dy[base + l * s.inner] * y[base + l * s.inner];
                }
                for (std::size_t l = 0; l < s.len; ++l) {
                    const std::size_t idx = base + l * s.inner;
                    g[idx] += y[idx] * (dy[idx] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = x.size(-1);
    if (gain.numel() != d || bias.numel() != d) {
        throw ShapeError("layer_norm affine size mismatch: input " + shape_str(x.shape()) +
                         ", gain " + shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()));
    }
    const std::size_t rows = x.numel() / d;
    const auto xd = x.data();
    const auto gd = gain.data();
    const auto bd = bias.data();
    std::vector<double> out(xd.size());
    // Normalized values and inverse std are needed by backward.
    auto xhat = std::make_shared<std::vector<double>>(xd.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * is;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = h * gd[j] + bd[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias}, [=](TensorNode& self) {
            TensorNode& px = *self.parents[0];
            TensorNode& pg = *self.parents[1];
            TensorNode& pb = *self.parents[2];
            const auto& dy = self.grad;
            if (pg.requires_grad) {
                auto& gg = pg.grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * (*xhat)[r * d + j];
                }
            }
            if (pb.requires_grad) {
                auto& gb = pb.grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) gb[j] += dy[r * d + j];
                }
            }
            if (px.requires_grad) {
                auto& gx = px.grad_buffer();
                const auto& gd2 = pg.data;
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double sum_dh = 0.0;
                    double sum_dh_h = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = dy[r * d + j] * gd2[j];
                        sum_dh += dh;
                        sum_dh_h += dh * (*xhat)[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = dy[r * d + j] * gd2[j];
                        gx[r * d + j] += (*inv_std)[r] *
                                         (dh - inv_d * sum_dh - (*xhat)[r * d + j] * inv_d * sum_dh_h);
                    }
                }
            }
        });
}

Tensor l2_normalize(const Tensor& x, double eps) {
    const std::size_t d = x.size(-1);
    const std::size_t rows = x.numel() / d;
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    auto inv_norm = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += xd[r * d + j] * xd[r * d + j];
        const double inv = 1.0 / std::sqrt(sq + eps);
        (*inv_norm)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xd[r * d + j] * inv;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [=](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        const auto& y = self.data;
        const auto& dy = self.grad;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += dy[r * d + j] * y[r * d + j];
            for (std::size_t j = 0; j < d; ++j) {
                g[r * d + j] += (*inv_norm)[r] * (dy[r * d + j] - y[r * d + j] * dot);
            }
        }
    });
}

// ----------------------------------------------------------------------------
// convolution
// ----------------------------------------------------------------------------

Tensor conv_transpose2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        std::size_t stride) {
    if (x.dim() != 3 && x.dim() != 4) {
        throw ShapeError("conv_transpose2d input must be [c,h,w] or [B,c,h,w], got " +
                         shape_str(x.shape()));
    }
    if (kernel.dim() != 4 || kernel.size(2) != 2 || kernel.size(3) != 2 || stride != 2) {
        throw ShapeError("conv_transpose2d supports 2x2 kernels with stride 2 only, got kernel " +
                         shape_str(kernel.shape()) + " stride " + std::to_string(stride));
    }
    const bool batched = x.dim() == 4;
    const std::size_t batch = batched ? x.size(0) : 1;
    const std::size_t c_in = x.size(-3);
    const std::size_t h = x.size(-2);
    const std::size_t w = x.size(-1);
    if (kernel.size(0) != c_in) {
        throw ShapeError("conv_transpose2d channel mismatch: input " + shape_str(x.shape()) +
                         ", kernel " + shape_str(kernel.shape()));
    }
    const std::size_t c_out = kernel.size(1);
    if (bias.defined() && bias.numel() != c_out) {
        throw ShapeError("conv_transpose2d bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(c_out) + " output channels");
    }
    const std::size_t hw = h * w;
    const std::size_t cols = c_out * 4;
    const std::size_t oh = 2 * h;
    const std::size_t ow = 2 * w;

    Shape out_shape = batched ? Shape{batch, c_out, oh, ow} : Shape{c_out, oh, ow};
    std::vector<double> out(batch * c_out * oh * ow, 0.0);
    std::vector<double> patch(hw * cols);
    const ConstMap k_mat(kernel.data().data(), c_in, cols);
    for (std::size_t b = 0; b < batch; ++b) {
        // patch[p, co*4 + ky*2 + kx] = sum_ci x[ci, p] * K[ci, co, ky, kx]
        MutMap(patch.data(), hw, cols).noalias() =
            ConstMap(x.data().data() + b * c_in * hw, c_in, hw).transpose() * k_mat;
        double* dst = out.data() + b * c_out * oh * ow;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xi = 0; xi < w; ++xi) {
                const double* row = patch.data() + (y * w + xi) * cols;
                for (std::size_t co = 0; co < c_out; ++co) {
                    double* plane = dst + co * oh * ow;
                    plane[(2 * y) * ow + 2 * xi] = row[co * 4 + 0];
                    plane[(2 * y) * ow + 2 * xi + 1] = row[co * 4 + 1];
                    plane[(2 * y + 1) * ow + 2 * xi] = row[co * 4 + 2];
                    plane[(2 * y + 1) * ow + 2 * xi + 1] = row[co * 4 + 3];
                }
            }
        }
        if (bias.defined()) {
            for (std::size_t co = 0; co < c_out; ++co) {
                const double bv = bias.data()[co];
                double* plane = dst + co * oh * ow;
                for (std::size_t i = 0; i < oh * ow; ++i) plane[i] += bv;
            }
        }
    }

    std::vector<Tensor> parents{x, kernel};
    if (bias.defined()) parents.push_back(bias);
    return Tensor::make_result(
        out_shape, std::move(out), parents, [=](TensorNode& self) {
            TensorNode& px = *self.parents[0];
            TensorNode& pk = *self.parents[1];
            TensorNode* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
            std::vector<double> dpatch(hw * cols);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* src = self.grad.data() + b * c_out * oh * ow;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t xi = 0; xi < w; ++xi) {
                        double* row = dpatch.data() + (y * w + xi) * cols;
                        for (std::size_t co = 0; co < c_out; ++co) {
                            const double* plane = src + co * oh * ow;
                            row[co * 4 + 0] = plane[(2 * y) * ow + 2 * xi];
                            row[co * 4 + 1] = plane[(2 * y) * ow + 2 * xi + 1];
                            row[co * 4 + 2] = plane[(2 * y + 1) * ow + 2 * xi];
                            row[co * 4 + 3] = plane[(2 * y + 1) * ow + 2 * xi + 1];
                        }
                    }
                }
                const ConstMap dp(dpatch.data(), hw, cols);
                if (px.requires_grad) {
                    MutMap(px.grad_buffer().data() + b * c_in * hw, c_in, hw).noalias() +=
                        ConstMap(pk.data.data(), c_in, cols) * dp.transpose();
                }
                if (pk.requires_grad) {
                    MutMap(pk.grad_buffer().data(), c_in, cols).noalias() +=
                        ConstMap(px.data.data() + b * c_in * hw, c_in, hw) * dp;
                }
                if (pb && pb->requires_grad) {
                    auto& gb = pb->grad_buffer();
                    for (std::size_t co = 0; co < c_out; ++co) {
                        const double* plane = src + co * oh * ow;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < oh * ow; ++i) acc += plane[i];
                        gb[co] += acc;
                    }
                }
            }
        });
}

// ----------------------------------------------------------------------------
// losses
// ----------------------------------------------------------------------------

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
    if (logits.shape() != target.shape()) {
        throw ShapeError("bce_with_logits shape mismatch: " + shape_str(logits.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    const auto z = logits.data();
    const auto y = target.data();
    const double inv_n = 1.0 / static_cast<double>(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    Tensor target_const = target.detach();
    return Tensor::make_result({1}, {total * inv_n}, {logits, target_const},
                               [inv_n](TensorNode& self) {
                                   TensorNode& pz = *self.parents[0];
                                   const auto& yv = self.parents[1]->data;
                                   auto& g = pz.grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       const double zi = pz.data[i];
                                       const double p = zi >= 0.0
                                                            ? 1.0 / (1.0 + std::exp(-zi))
                                                            : std::exp(zi) / (1.0 + std::exp(zi));
                                       g[i] += self.grad[0] * (p - yv[i]) * inv_n;
                                   }
                               });
}

Tensor bce_with_logits_terms(const Tensor& logits, const Tensor& target) {
    if (logits.shape() != target.shape()) {
        throw ShapeError("bce_with_logits_terms shape mismatch: " + shape_str(logits.shape()) +
                         " vs " + shape_str(target.shape()));
    }
    const auto z = logits.data();
    const auto y = target.data();
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    Tensor target_const = target.detach();
    return Tensor::make_result(logits.shape(), std::move(out), {logits, target_const},
                               [](TensorNode& self) {
                                   TensorNode& pz = *self.parents[0];
                                   const auto& yv = self.parents[1]->data;
                                   auto& g = pz.grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       const double zi = pz.data[i];
                                       const double p = zi >= 0.0
                                                            ? 1.0 / (1.0 + std::exp(-zi))
                                                            : std::exp(zi) / (1.0 + std::exp(zi));
                                       g[i] += self.grad[i] * (p - yv[i]);
                                   }
                               });
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& targets) {
    const std::size_t k = logits.size(-1);
    const std::size_t rows = logits.numel() / k;
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
    }
    const auto z = logits.data();
    auto probs = std::make_shared<std::vector<double>>(z.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = z.data() + r * k;
        const auto t = static_cast<std::size_t>(targets[r]);
        if (targets[r] < 0 || t >= k) throw ShapeError("cross_entropy target out of range");
        double peak = row[0];
        for (std::size_t j = 1; j < k; ++j) peak = std::max(peak, row[j]);
        double norm = 0.0;
        for (std::size_t j = 0; j < k; ++j) norm += std::exp(row[j] - peak);
        const double log_norm = std::log(norm) + peak;
        for (std::size_t j = 0; j < k; ++j) (*probs)[r * k + j] = std::exp(row[j] - log_norm);
        total += log_norm - row[t];
    }
    const double inv_rows = 1.0 / static_cast<double>(rows);
    auto tgt = std::make_shared<std::vector<int>>(targets);
    return Tensor::make_result({1}, {total * inv_rows}, {logits}, [=](TensorNode& self) {
        auto& g = self.parents[0]->grad_buffer();
        const double scale_factor = self.grad[0] * inv_rows;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < k; ++j) {
                const double onehot = static_cast<std::size_t>((*tgt)[r]) == j ? 1.0 : 0.0;
                g[r * k + j] += scale_factor * ((*probs)[r * k + j] - onehot);
            }
        }
    });
}

}  // namespace gavs
