#include "ican/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ican {

namespace {

using detail::NodePtr;
using detail::TensorNode;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!active_tape()) return false;
    for (const auto* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

bool tracking(const std::vector<Tensor>& inputs) {
    if (!active_tape()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

Tensor emit(Shape shape, std::vector<double> values, bool track, Tape::Adjoint adjoint) {
    round_to_precision(values, active_precision());
    Tensor out(std::move(shape), std::move(values), track);
    if (track) active_tape()->record(out.node(), std::move(adjoint));
    return out;
}

// Gradient buffer of an input, or nullptr when it does not take gradients.
double* grad_of(const NodePtr& n) { return n->requires_grad ? n->ensure_grad().data() : nullptr; }

struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

void check_axis(const Tensor& a, std::size_t axis, const char* op) {
    if (axis >= a.dim()) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                                    shape_str(a.shape()));
    }
}

// Broadcast layout of a binary op: which operand (if any) is the repeated
// trailing vector.
enum class Bcast { none, a_vec, b_vec };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::none;
    if (b.dim() == 1 && a.dim() >= 1 && a.shape().back() == b.numel()) return Bcast::b_vec;
    if (a.dim() == 1 && b.dim() >= 1 && b.shape().back() == a.numel()) return Bcast::a_vec;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
}

enum class Binary { add, sub, mul };

Tensor binary(Binary kind, const Tensor& a, const Tensor& b) {
    const char* name = kind == Binary::add ? "add" : kind == Binary::sub ? "sub" : "mul";
    const Bcast bc = broadcast_kind(a, b, name);
    const Shape out_shape = bc == Bcast::a_vec ? b.shape() : a.shape();
    const std::size_t total = shape_numel(out_shape);
    const std::size_t na = a.numel(), nb = b.numel();
    const auto av = a.values();
    const auto bv = b.values();

    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double x = av[bc == Bcast::a_vec ? i % na : i];
        const double y = bv[bc == Bcast::b_vec ? i % nb : i];
        out[i] = kind == Binary::add ? x + y : kind == Binary::sub ? x - y : x * y;
    }

    const bool track = tracking({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return emit(out_shape, std::move(out), track, [an, bn, bc, kind, na, nb](const TensorNode& o) {
        double* ga = grad_of(an);
        double* gb = grad_of(bn);
        const auto& g = o.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t ia = bc == Bcast::a_vec ? i % na : i;
            const std::size_t ib = bc == Bcast::b_vec ? i % nb : i;
            switch (kind) {
                case Binary::add:
                    if (ga) ga[ia] += g[i];
                    if (gb) gb[ib] += g[i];
                    break;
                case Binary::sub:
                    if (ga) ga[ia] += g[i];
                    if (gb) gb[ib] -= g[i];
                    break;
                case Binary::mul:
                    if (ga) ga[ia] += g[i] * bn->value[ib];
                    if (gb) gb[ib] += g[i] * an->value[ia];
                    break;
            }
        }
    });
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b, double factor) {
    switch (op) {
        case ElementwiseOp::add:
        case ElementwiseOp::sub:
        case ElementwiseOp::mul:
            if (!b) throw std::invalid_argument("binary element-wise op needs a second operand");
            return binary(op == ElementwiseOp::add ? Binary::add : op == ElementwiseOp::sub ? Binary::sub : Binary::mul,
                          a, *b);
        case ElementwiseOp::relu:
            return relu(a);
        case ElementwiseOp::scale:
            return scale(a, factor);
    }
    throw std::invalid_argument("unknown element-wise op");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::mul, a, b); }

Tensor relu(const Tensor& a) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    NodePtr an = a.node();
    return emit(a.shape(), std::move(out), tracking({&a}), [an](const TensorNode& o) {
        double* ga = grad_of(an);
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            if (an->value[i] > 0.0) ga[i] += o.grad[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
    NodePtr an = a.node();
    return emit(a.shape(), std::move(out), tracking({&a}), [an, factor](const TensorNode& o) {
        double* ga = grad_of(an);
        for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * factor;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2 || a.extent(1) != b.extent(0)) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.extent(0));
    const auto k = static_cast<Eigen::Index>(a.extent(1));
    const auto n = static_cast<Eigen::Index>(b.extent(1));
    std::vector<double> out(static_cast<std::size_t>(m * n));
    MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);

    NodePtr an = a.node(), bn = b.node();
    return emit({a.extent(0), b.extent(1)}, std::move(out), tracking({&a, &b}), [an, bn, m, k, n](const TensorNode& o) {
        ConstMap g(o.grad.data(), m, n);
        if (double* ga = grad_of(an)) {
            MutMap(ga, m, k).noalias() += g * ConstMap(bn->value.data(), k, n).transpose();
        }
        if (double* gb = grad_of(bn)) {
            MutMap(gb, k, n).noalias() += ConstMap(an->value.data(), m, k).transpose() * g;
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.dim() != 2) throw std::invalid_argument("transpose needs a matrix, got " + shape_str(a.shape()));
    const std::size_t r = a.extent(0), c = a.extent(1);
    const auto av = a.values();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    NodePtr an = a.node();
    return emit({c, r}, std::move(out), tracking({&a}), [an, r, c](const TensorNode& o) {
        double* ga = grad_of(an);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    const auto av = a.values();
    NodePtr an = a.node();
    return emit(std::move(shape), std::vector<double>(av.begin(), av.end()), tracking({&a}),
                [an](const TensorNode& o) {
                    double* ga = grad_of(an);
                    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
                });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    check_axis(a, axis, "softmax");
    const auto s = split_axis(a.shape(), axis);
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
            const std::size_t base = o * s.n * s.inner + j;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, av[base + i * s.inner]);
            double total = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                const double e = std::exp(av[base + i * s.inner] - mx);
                out[base + i * s.inner] = e;
                total += e;
            }
            for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] /= total;
        }
    }
    NodePtr an = a.node();
    return emit(a.shape(), std::move(out), tracking({&a}), [an, s](const TensorNode& o) {
        double* ga = grad_of(an);
        const auto& y = o.value;
        const auto& g = o.grad;
        for (std::size_t oo = 0; oo < s.outer; ++oo) {
            for (std::size_t j = 0; j < s.inner; ++j) {
                const std::size_t base = oo * s.n * s.inner + j;
                double dot = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) dot += y[base + i * s.inner] * g[base + i * s.inner];
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t idx = base + i * s.inner;
                    ga[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
    check_axis(a, axis, "log_softmax");
    const auto s = split_axis(a.shape(), axis);
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
            const std::size_t base = o * s.n * s.inner + j;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, av[base + i * s.inner]);
            double total = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) total += std::exp(av[base + i * s.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] = av[base + i * s.inner] - lse;
        }
    }
    NodePtr an = a.node();
    return emit(a.shape(), std::move(out), tracking({&a}), [an, s](const TensorNode& o) {
        double* ga = grad_of(an);
        const auto& y = o.value;
        const auto& g = o.grad;
        for (std::size_t oo = 0; oo < s.outer; ++oo) {
            for (std::size_t j = 0; j < s.inner; ++j) {
                const std::size_t base = oo * s.n * s.inner + j;
                double gsum = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) gsum += g[base + i * s.inner];
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t idx = base + i * s.inner;
                    ga[idx] += g[idx] - std::exp(y[idx]) * gsum;
                }
            }
        }
    });
}

Tensor sum_pool(const Tensor& a, std::size_t window) {
    if (a.dim() == 0) throw std::invalid_argument("sum_pool needs at least one axis");
    const std::size_t len = a.shape().back();
    if (window == 0 || len % window != 0) {
        throw std::invalid_argument("sum_pool: trailing extent " + std::to_string(len) +
                                    " is not divisible by window " + std::to_string(window));
    }
    Shape shape = a.shape();
    shape.back() = len / window;
    const std::size_t n_out = a.numel() / window;
    const auto av = a.values();
    std::vector<double> out(n_out, 0.0);
    for (std::size_t i = 0; i < n_out; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < window; ++j) acc += av[i * window + j];
        out[i] = acc;
    }
    NodePtr an = a.node();
    return emit(std::move(shape), std::move(out), tracking({&a}), [an, window](const TensorNode& o) {
        double* ga = grad_of(an);
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            for (std::size_t j = 0; j < window; ++j) ga[i * window + j] += o.grad[i];
    });
}

Tensor reduce_sum(const Tensor& a, std::size_t axis) {
    check_axis(a, axis, "reduce_sum");
    const auto s = split_axis(a.shape(), axis);
    Shape shape = a.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    const auto av = a.values();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t j = 0; j < s.inner; ++j) out[o * s.inner + j] += av[(o * s.n + i) * s.inner + j];
    NodePtr an = a.node();
    return emit(std::move(shape), std::move(out), tracking({&a}), [an, s](const TensorNode& o) {
        double* ga = grad_of(an);
        for (std::size_t oo = 0; oo < s.outer; ++oo)
            for (std::size_t i = 0; i < s.n; ++i)
                for (std::size_t j = 0; j < s.inner; ++j) ga[(oo * s.n + i) * s.inner + j] += o.grad[oo * s.inner + j];
    });
}

Tensor sum(const Tensor& a) {
    const auto av = a.values();
    double acc = 0.0;
    for (double v : av) acc += v;
    NodePtr an = a.node();
    return emit({}, {acc}, tracking({&a}), [an](const TensorNode& o) {
        double* ga = grad_of(an);
        const double g = o.grad[0];
        for (std::size_t i = 0; i < an->value.size(); ++i) ga[i] += g;
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat needs at least one tensor");
    const Shape& first = parts.front().shape();
    check_axis(parts.front(), axis, "concat");
    std::size_t total_axis = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
            if (i != axis && s[i] != first[i]) ok = false;
        }
        if (!ok) {
            throw std::invalid_argument("concat: " + shape_str(s) + " incompatible with " + shape_str(first) +
                                        " along axis " + std::to_string(axis));
        }
        total_axis += s[axis];
    }
    Shape shape = first;
    shape[axis] = total_axis;
    const auto split = split_axis(shape, axis);

    std::vector<double> out(shape_numel(shape));
    std::vector<std::size_t> offsets;  // offset of each part along the axis
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t len = p.extent(axis);
        const auto pv = p.values();
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len * split.inner), len * split.inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total_axis + off) * split.inner));
        }
        off += len;
    }

    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return emit(std::move(shape), std::move(out), tracking(parts),
                [nodes, offsets, split, axis, total_axis](const TensorNode& o) {
                    for (std::size_t k = 0; k < nodes.size(); ++k) {
                        double* gp = grad_of(nodes[k]);
                        if (!gp) continue;
                        const std::size_t len = nodes[k]->shape[axis];
                        for (std::size_t oo = 0; oo < split.outer; ++oo) {
                            const double* src = o.grad.data() + (oo * total_axis + offsets[k]) * split.inner;
                            double* dst = gp + oo * len * split.inner;
                            for (std::size_t i = 0; i < len * split.inner; ++i) dst[i] += src[i];
                        }
                    }
                });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    check_axis(a, axis, "slice");
    if (begin >= end || end > a.extent(axis)) {
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") invalid for extent " + std::to_string(a.extent(axis)));
    }
    const auto s = split_axis(a.shape(), axis);
    const std::size_t len = end - begin;
    Shape shape = a.shape();
    shape[axis] = len;
    const auto av = a.values();
    std::vector<double> out(s.outer * len * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * s.n + begin) * s.inner), len * s.inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
    }
    NodePtr an = a.node();
    return emit(std::move(shape), std::move(out), tracking({&a}), [an, s, begin, len](const TensorNode& o) {
        double* ga = grad_of(an);
        for (std::size_t oo = 0; oo < s.outer; ++oo) {
            const double* src = o.grad.data() + oo * len * s.inner;
            double* dst = ga + (oo * s.n + begin) * s.inner;
            for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack needs at least one tensor");
    const Shape& first = parts.front().shape();
    for (const auto& p : parts) {
        if (p.shape() != first) {
            throw std::invalid_argument("stack: " + shape_str(p.shape()) + " differs from " + shape_str(first));
        }
    }
    const std::size_t each = shape_numel(first);
    Shape shape{parts.size()};
    shape.insert(shape.end(), first.begin(), first.end());
    std::vector<double> out;
    out.reserve(each * parts.size());
    for (const auto& p : parts) {
        const auto pv = p.values();
        out.insert(out.end(), pv.begin(), pv.end());
    }
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return emit(std::move(shape), std::move(out), tracking(parts), [nodes, each](const TensorNode& o) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            double* gp = grad_of(nodes[k]);
            if (!gp) continue;
            for (std::size_t i = 0; i < each; ++i) gp[i] += o.grad[k * each + i];
        }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
    if (x.dim() != 3 || weight.dim() != 4 || bias.dim() != 1) {
        throw std::invalid_argument("conv2d: expected x [c,H,W], weight [o,c,k,k], bias [o]");
    }
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::size_t co = weight.extent(0), k = weight.extent(2);
    if (weight.extent(1) != c || weight.extent(3) != k || bias.extent(0) != co) {
        throw std::invalid_argument("conv2d: weight " + shape_str(weight.shape()) + " / bias " +
                                    shape_str(bias.shape()) + " do not match input " + shape_str(x.shape()));
    }
    if (stride == 0 || h % stride != 0 || w % stride != 0) {
        throw std::invalid_argument("conv2d: extents " + shape_str(x.shape()) + " not divisible by stride " +
                                    std::to_string(stride));
    }
    const std::size_t pad = (k - 1) / 2;
    const std::size_t ho = h / stride, wo = w / stride;
    const auto xv = x.values();
    const auto wv = weight.values();
    const auto bv = bias.values();

    // Visits every (output, input, kernel) triple that lands inside the image.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox)
                    for (std::size_t ic = 0; ic < c; ++ic)
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                                fn((oc * ho + oy) * wo + ox, (ic * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix),
                                   ((oc * c + ic) * k + ky) * k + kx);
                            }
                        }
    };

    std::vector<double> out(co * ho * wo);
    for (std::size_t oc = 0; oc < co; ++oc)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(oc * ho * wo), ho * wo, bv[oc]);
    for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += wv[wi] * xv[ii]; });

    NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
    return emit({co, ho, wo}, std::move(out), tracking({&x, &weight, &bias}),
                [xn, wn, bn, for_each_tap, co, ho, wo](const TensorNode& o) {
                    double* gx = grad_of(xn);
                    double* gw = grad_of(wn);
                    double* gb = grad_of(bn);
                    if (gb) {
                        for (std::size_t oc = 0; oc < co; ++oc)
                            for (std::size_t i = 0; i < ho * wo; ++i) gb[oc] += o.grad[oc * ho * wo + i];
                    }
                    for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) {
                        if (gx) gx[ii] += o.grad[oi] * wn->value[wi];
                        if (gw) gw[wi] += o.grad[oi] * xn->value[ii];
                    });
                });
}

}  // namespace ican
