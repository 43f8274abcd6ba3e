#include "ufmri/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ufmri::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

Tensor& Node::ensure_grad() {
    if (grad.v.empty()) grad = Tensor::zeros(val.shape);
    return grad;
}

Var Var::leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->needs_grad = true;
    return Var(n);
}

Var Var::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return Var(n);
}

const Tensor& Var::grad() const {
    UFMRI_CHECK(!n_->grad.v.empty(), "gradient not populated; run backward() first");
    return n_->grad;
}

double Var::item() const {
    UFMRI_CHECK(n_->val.numel() == 1, "item() on non-scalar var");
    return n_->val[0];
}

namespace {

NodePtr make_op(Tensor val, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    for (const auto& p : parents)
        if (p->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->parents = std::move(parents);
    return n;
}

} // namespace

void backward(const Var& root) {
    UFMRI_CHECK(root.defined() && root.val().numel() == 1, "backward() expects a scalar root");
    Node* r = root.node().get();
    if (!r->needs_grad) return;
    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{r, 0}};
    seen.insert(r);
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    r->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->back && !n->grad.v.empty()) n->back();
    }
}

// ---------------------------------------------------------------------------
// elementwise / reductions

Var add(Var a, Var b) {
    UFMRI_CHECK(a.val().same_shape(b.val()), "add: shape mismatch");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
    auto n = make_op(std::move(out), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb] {
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
            }
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
            }
        };
    }
    return Var(n);
}

Var sub(Var a, Var b) {
    UFMRI_CHECK(a.val().same_shape(b.val()), "sub: shape mismatch");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
    auto n = make_op(std::move(out), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb] {
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
            }
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= raw->grad[i];
            }
        };
    }
    return Var(n);
}

Var mul(Var a, Var b) {
    UFMRI_CHECK(a.val().same_shape(b.val()), "mul: shape mismatch");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
    auto n = make_op(std::move(out), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb] {
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i] * pb->val[i];
            }
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i] * pa->val[i];
            }
        };
    }
    return Var(n);
}

Var div(Var a, Var b) {
    UFMRI_CHECK(a.val().same_shape(b.val()), "div: shape mismatch");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= b.val()[i];
    auto n = make_op(std::move(out), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb] {
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i] / pb->val[i];
            }
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i)
                    g[i] -= raw->grad[i] * raw->val[i] / pb->val[i];
            }
        };
    }
    return Var(n);
}

Var neg(Var a) { return scale(std::move(a), -1.0); }

Var scale(Var a, double s) {
    Tensor out = a.val();
    for (double& x : out.v) x *= s;
    auto n = make_op(std::move(out), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        n->back = [raw, pa, s] {
            Tensor& g = pa->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += s * raw->grad[i];
        };
    }
    return Var(n);
}

Var add_scalar(Var a, double s) {
    Tensor out = a.val();
    for (double& x : out.v) x += s;
    auto n = make_op(std::move(out), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        n->back = [raw, pa] {
            Tensor& g = pa->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
        };
    }
    return Var(n);
}

Var mul_const(Var a, Tensor c) {
    UFMRI_CHECK(a.val().same_shape(c), "mul_const: shape mismatch");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= c[i];
    auto n = make_op(std::move(out), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        auto cc = std::make_shared<Tensor>(std::move(c));
        n->back = [raw, pa, cc] {
            Tensor& g = pa->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i] * (*cc)[i];
        };
    }
    return Var(n);
}

Var relu(Var a) {
    Tensor out = a.val();
    for (double& x : out.v)
        if (x < 0) x = 0;
    auto n = make_op(std::move(out), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        n->back = [raw, pa] {
            Tensor& g = pa->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i)
                if (pa->val[i] > 0) g[i] += raw->grad[i];
        };
    }
    return Var(n);
}

Var softplus(Var a) {
    Tensor out = a.val();
    for (double& x : out.v) x = x > 30.0 ? x : std::log1p(std::exp(x));
    auto n = make_op(std::move(out), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        n->back = [raw, pa] {
            Tensor& g = pa->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i)
                g[i] += raw->grad[i] / (1.0 + std::exp(-pa->val[i]));
        };
    }
    return Var(n);
}

Var sum(Var a) {
    double s = 0;
    for (double x : a.val().v) s += x;
    auto n = make_op(Tensor::scalar(s), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        n->back = [raw, pa] {
            Tensor& g = pa->ensure_grad();
            const double gs = raw->grad[0];
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gs;
        };
    }
    return Var(n);
}

Var mean(Var a) {
    const double inv = 1.0 / static_cast<double>(a.val().numel());
    return scale(sum(std::move(a)), inv);
}

Var dot(Var a, Var b) {
    UFMRI_CHECK(a.val().numel() == b.val().numel(), "dot: size mismatch");
    double s = 0;
    for (std::int64_t i = 0; i < a.val().numel(); ++i) s += a.val()[i] * b.val()[i];
    auto n = make_op(Tensor::scalar(s), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb] {
            const double gs = raw->grad[0];
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gs * pb->val[i];
            }
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gs * pa->val[i];
            }
        };
    }
    return Var(n);
}

Var sum_sq_diff(Var a, Tensor ref) {
    UFMRI_CHECK(a.val().same_shape(ref), "sum_sq_diff: shape mismatch");
    double s = 0;
    for (std::int64_t i = 0; i < a.val().numel(); ++i) {
        const double d = a.val()[i] - ref[i];
        s += d * d;
    }
    auto n = make_op(Tensor::scalar(s), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        auto rr = std::make_shared<Tensor>(std::move(ref));
        n->back = [raw, pa, rr] {
            Tensor& g = pa->ensure_grad();
            const double gs = raw->grad[0];
            for (std::int64_t i = 0; i < g.numel(); ++i)
                g[i] += gs * 2.0 * (pa->val[i] - (*rr)[i]);
        };
    }
    return Var(n);
}

Var reshape(Var a, std::vector<int> shape) {
    UFMRI_CHECK(shape_numel(shape) == a.val().numel(), "reshape: size mismatch");
    Tensor out(std::move(shape), a.val().v);
    auto n = make_op(std::move(out), {a.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        n->back = [raw, pa] {
            Tensor& g = pa->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
        };
    }
    return Var(n);
}

Var scale_by(Var a, Var s) {
    UFMRI_CHECK(s.val().numel() == 1, "scale_by: scalar required");
    const double sv = s.val()[0];
    Tensor out = a.val();
    for (double& x : out.v) x *= sv;
    auto n = make_op(std::move(out), {a.node(), s.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* ps = s.node().get();
        n->back = [raw, pa, ps, sv] {
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += sv * raw->grad[i];
            }
            if (ps->needs_grad) {
                Tensor& g = ps->ensure_grad();
                double acc = 0;
                for (std::int64_t i = 0; i < raw->grad.numel(); ++i) acc += raw->grad[i] * pa->val[i];
                g[0] += acc;
            }
        };
    }
    return Var(n);
}

Var scale_add(Var a, Var b, Var s) {
    UFMRI_CHECK(a.val().same_shape(b.val()), "scale_add: shape mismatch");
    UFMRI_CHECK(s.val().numel() == 1, "scale_add: scalar required");
    const double sv = s.val()[0];
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += sv * b.val()[i];
    auto n = make_op(std::move(out), {a.node(), b.node(), s.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        Node* ps = s.node().get();
        n->back = [raw, pa, pb, ps, sv] {
            if (pa->needs_grad) {
                Tensor& g = pa->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
            }
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += sv * raw->grad[i];
            }
            if (ps->needs_grad) {
                Tensor& g = ps->ensure_grad();
                double acc = 0;
                for (std::int64_t i = 0; i < raw->grad.numel(); ++i) acc += raw->grad[i] * pb->val[i];
                g[0] += acc;
            }
        };
    }
    return Var(n);
}

// ---------------------------------------------------------------------------
// dense / conv ops

Var matmul(Var a, Var b) {
    UFMRI_CHECK(a.val().ndim() == 2 && b.val().ndim() == 2 && a.val().dim(1) == b.val().dim(0),
                "matmul: bad shapes");
    const int m = a.val().dim(0), k = a.val().dim(1), nn = b.val().dim(1);
    Tensor out = Tensor::zeros({m, nn});
    EMap(out.v.data(), m, nn).noalias() =
        ECMap(a.val().v.data(), m, k) * ECMap(b.val().v.data(), k, nn);
    auto n = make_op(std::move(out), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb, m, k, nn] {
            ECMap gy(raw->grad.v.data(), m, nn);
            if (pa->needs_grad)
                EMap(pa->ensure_grad().v.data(), m, k).noalias() +=
                    gy * ECMap(pb->val.v.data(), k, nn).transpose();
            if (pb->needs_grad)
                EMap(pb->ensure_grad().v.data(), k, nn).noalias() +=
                    ECMap(pa->val.v.data(), m, k).transpose() * gy;
        };
    }
    return Var(n);
}

Var linear(Var x, Var w, Var b) {
    UFMRI_CHECK(x.val().ndim() == 2 && w.val().ndim() == 2 && x.val().dim(1) == w.val().dim(1),
                "linear: bad shapes");
    const int B = x.val().dim(0), F = x.val().dim(1), O = w.val().dim(0);
    UFMRI_CHECK(b.val().numel() == O, "linear: bias size mismatch");
    Tensor out = Tensor::zeros({B, O});
    EMap(out.v.data(), B, O).noalias() =
        ECMap(x.val().v.data(), B, F) * ECMap(w.val().v.data(), O, F).transpose();
    for (int i = 0; i < B; ++i)
        for (int o = 0; o < O; ++o) out[static_cast<std::int64_t>(i) * O + o] += b.val()[o];
    auto n = make_op(std::move(out), {x.node(), w.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        Node* pw = w.node().get();
        Node* pb = b.node().get();
        n->back = [raw, px, pw, pb, B, F, O] {
            ECMap gy(raw->grad.v.data(), B, O);
            if (px->needs_grad)
                EMap(px->ensure_grad().v.data(), B, F).noalias() +=
                    gy * ECMap(pw->val.v.data(), O, F);
            if (pw->needs_grad)
                EMap(pw->ensure_grad().v.data(), O, F).noalias() +=
                    gy.transpose() * ECMap(px->val.v.data(), B, F);
            if (pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (int i = 0; i < B; ++i)
                    for (int o = 0; o < O; ++o) g[o] += raw->grad[static_cast<std::int64_t>(i) * O + o];
            }
        };
    }
    return Var(n);
}

namespace {

struct ConvDims {
    int B, C, H, W, O, kh, kw, stride, pad, Ho, Wo;
};

// cols rows are written at row_stride so the per-image blocks of the big
// [CKK, B*hw] matrix can be filled without staging buffers
void im2col_one(const double* x, const ConvDims& d, double* cols, std::int64_t row_stride) {
    const int ckk = d.C * d.kh * d.kw;
    const std::int64_t hw = static_cast<std::int64_t>(d.Ho) * d.Wo;
    for (int row = 0; row < ckk; ++row) {
        const int c = row / (d.kh * d.kw);
        const int ki = (row / d.kw) % d.kh;
        const int kj = row % d.kw;
        double* out_row = cols + static_cast<std::int64_t>(row) * row_stride;
        const double* xc = x + static_cast<std::int64_t>(c) * d.H * d.W;
        std::int64_t idx = 0;
        for (int oh = 0; oh < d.Ho; ++oh) {
            const int ih = oh * d.stride + ki - d.pad;
            if (ih < 0 || ih >= d.H) {
                for (int ow = 0; ow < d.Wo; ++ow) out_row[idx++] = 0.0;
                continue;
            }
            const double* xr = xc + static_cast<std::int64_t>(ih) * d.W;
            const int lo = std::max(0, (d.pad - kj + d.stride - 1) / d.stride);
            const int hi = std::min(d.Wo, (d.W - 1 - kj + d.pad) / d.stride + 1);
            for (int ow = 0; ow < lo; ++ow) out_row[idx++] = 0.0;
            for (int ow = lo; ow < hi; ++ow) out_row[idx++] = xr[ow * d.stride + kj - d.pad];
            for (int ow = hi; ow < d.Wo; ++ow) out_row[idx++] = 0.0;
        }
    }
}

void col2im_one(const double* cols, const ConvDims& d, double* gx, std::int64_t row_stride) {
    const int ckk = d.C * d.kh * d.kw;
    for (int row = 0; row < ckk; ++row) {
        const int c = row / (d.kh * d.kw);
        const int ki = (row / d.kw) % d.kh;
        const int kj = row % d.kw;
        const double* in_row = cols + static_cast<std::int64_t>(row) * row_stride;
        double* xc = gx + static_cast<std::int64_t>(c) * d.H * d.W;
        std::int64_t idx = 0;
        for (int oh = 0; oh < d.Ho; ++oh) {
            const int ih = oh * d.stride + ki - d.pad;
            if (ih < 0 || ih >= d.H) {
                idx += d.Wo;
                continue;
            }
            double* xr = xc + static_cast<std::int64_t>(ih) * d.W;
            for (int ow = 0; ow < d.Wo; ++ow, ++idx) {
                const int iw = ow * d.stride + kj - d.pad;
                if (iw >= 0 && iw < d.W) xr[iw] += in_row[idx];
            }
        }
    }
}

} // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    UFMRI_CHECK(x.val().ndim() == 4 && w.val().ndim() == 4, "conv2d: expects [B,C,H,W] and [O,C,kh,kw]");
    ConvDims d;
    d.B = x.val().dim(0);
    d.C = x.val().dim(1);
    d.H = x.val().dim(2);
    d.W = x.val().dim(3);
    d.O = w.val().dim(0);
    d.kh = w.val().dim(2);
    d.kw = w.val().dim(3);
    d.stride = stride;
    d.pad = pad;
    UFMRI_CHECK(w.val().dim(1) == d.C, "conv2d: channel mismatch");
    d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
    UFMRI_CHECK(d.Ho >= 1 && d.Wo >= 1, "conv2d: output would be empty");
    const bool has_bias = b.defined();
    if (has_bias) UFMRI_CHECK(b.val().numel() == d.O, "conv2d: bias size mismatch");

    const int ckk = d.C * d.kh * d.kw;
    const std::int64_t hw = static_cast<std::int64_t>(d.Ho) * d.Wo;
    const std::int64_t bhw = static_cast<std::int64_t>(d.B) * hw;
    auto cols = std::make_shared<Tensor>(Tensor::zeros({ckk, static_cast<int>(bhw)}));
    for (int bi = 0; bi < d.B; ++bi)
        im2col_one(x.val().v.data() + static_cast<std::int64_t>(bi) * d.C * d.H * d.W, d,
                   cols->v.data() + bi * hw, bhw);

    // with B == 1 the [O, hw] product already has the output layout
    Tensor out = Tensor::zeros({d.B, d.O, d.Ho, d.Wo});
    if (d.B == 1) {
        EMap(out.v.data(), d.O, static_cast<int>(hw)).noalias() =
            ECMap(w.val().v.data(), d.O, ckk) * ECMap(cols->v.data(), ckk, static_cast<int>(hw));
        if (has_bias)
            for (int o = 0; o < d.O; ++o) {
                double* dst = out.v.data() + static_cast<std::int64_t>(o) * hw;
                const double bias = b.val()[o];
                for (std::int64_t i = 0; i < hw; ++i) dst[i] += bias;
            }
    } else {
        Tensor big = Tensor::zeros({d.O, static_cast<int>(bhw)});
        EMap(big.v.data(), d.O, static_cast<int>(bhw)).noalias() =
            ECMap(w.val().v.data(), d.O, ckk) * ECMap(cols->v.data(), ckk, static_cast<int>(bhw));
        for (int bi = 0; bi < d.B; ++bi)
            for (int o = 0; o < d.O; ++o) {
                const double* src = big.v.data() + static_cast<std::int64_t>(o) * bhw + bi * hw;
                double* dst = out.v.data() + (static_cast<std::int64_t>(bi) * d.O + o) * hw;
                const double bias = has_bias ? b.val()[o] : 0.0;
                for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
            }
    }

    std::vector<NodePtr> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(b.node());
    auto n = make_op(std::move(out), std::move(parents));
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        Node* pw = w.node().get();
        Node* pb = has_bias ? b.node().get() : nullptr;
        n->back = [raw, px, pw, pb, d, cols, ckk, hw, bhw] {
            Tensor gy_hold;
            const double* gy_data = raw->grad.v.data();
            if (d.B > 1) {
                // regroup grad into [O, B*hw]
                gy_hold = Tensor::zeros({d.O, static_cast<int>(bhw)});
                for (int bi = 0; bi < d.B; ++bi)
                    for (int o = 0; o < d.O; ++o)
                        std::copy(raw->grad.v.begin() + (static_cast<std::ptrdiff_t>(bi) * d.O + o) * hw,
                                  raw->grad.v.begin() + (static_cast<std::ptrdiff_t>(bi) * d.O + o + 1) * hw,
                                  gy_hold.v.begin() + static_cast<std::ptrdiff_t>(o) * bhw + bi * hw);
                gy_data = gy_hold.v.data();
            }
            ECMap gy(gy_data, d.O, static_cast<int>(bhw));
            if (pw->needs_grad)
                EMap(pw->ensure_grad().v.data(), d.O, ckk).noalias() +=
                    gy * ECMap(cols->v.data(), ckk, static_cast<int>(bhw)).transpose();
            if (pb && pb->needs_grad) {
                Tensor& g = pb->ensure_grad();
                for (int o = 0; o < d.O; ++o) {
                    const double* src = gy_data + static_cast<std::int64_t>(o) * bhw;
                    double acc = 0;
                    for (std::int64_t i = 0; i < bhw; ++i) acc += src[i];
                    g[o] += acc;
                }
            }
            if (px->needs_grad) {
                Tensor gcols = Tensor::zeros({ckk, static_cast<int>(bhw)});
                EMap(gcols.v.data(), ckk, static_cast<int>(bhw)).noalias() =
                    ECMap(pw->val.v.data(), d.O, ckk).transpose() * gy;
                Tensor& gx = px->ensure_grad();
                for (int bi = 0; bi < d.B; ++bi)
                    col2im_one(gcols.v.data() + bi * hw, d,
                               gx.v.data() + static_cast<std::int64_t>(bi) * d.C * d.H * d.W, bhw);
            }
        };
    }
    return Var(n);
}

Var avgpool2(Var x) {
    UFMRI_CHECK(x.val().ndim() == 4, "avgpool2: expects [B,C,H,W]");
    const int B = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    UFMRI_CHECK(H % 2 == 0 && W % 2 == 0, "avgpool2: H and W must be even");
    const int Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::zeros({B, C, Ho, Wo});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x.val().v.data() + static_cast<std::int64_t>(bc) * H * W;
        double* dst = out.v.data() + static_cast<std::int64_t>(bc) * Ho * Wo;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j)
                dst[static_cast<std::int64_t>(i) * Wo + j] =
                    0.25 * (src[(2 * i) * static_cast<std::int64_t>(W) + 2 * j] +
                            src[(2 * i) * static_cast<std::int64_t>(W) + 2 * j + 1] +
                            src[(2 * i + 1) * static_cast<std::int64_t>(W) + 2 * j] +
                            src[(2 * i + 1) * static_cast<std::int64_t>(W) + 2 * j + 1]);
    }
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, B, C, H, W, Ho, Wo] {
            Tensor& g = px->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                const double* gs = raw->grad.v.data() + static_cast<std::int64_t>(bc) * Ho * Wo;
                double* gd = g.v.data() + static_cast<std::int64_t>(bc) * H * W;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const double v = 0.25 * gs[static_cast<std::int64_t>(i) * Wo + j];
                        gd[(2 * i) * static_cast<std::int64_t>(W) + 2 * j] += v;
                        gd[(2 * i) * static_cast<std::int64_t>(W) + 2 * j + 1] += v;
                        gd[(2 * i + 1) * static_cast<std::int64_t>(W) + 2 * j] += v;
                        gd[(2 * i + 1) * static_cast<std::int64_t>(W) + 2 * j + 1] += v;
                    }
            }
        };
    }
    return Var(n);
}

Var maxpool2(Var x) {
    UFMRI_CHECK(x.val().ndim() == 4, "maxpool2: expects [B,C,H,W]");
    const int B = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    UFMRI_CHECK(H % 2 == 0 && W % 2 == 0, "maxpool2: H and W must be even");
    const int Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::zeros({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.v.size());
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x.val().v.data() + static_cast<std::int64_t>(bc) * H * W;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
                std::int64_t best = (2 * i) * static_cast<std::int64_t>(W) + 2 * j;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        const std::int64_t k = (2 * i + di) * static_cast<std::int64_t>(W) + 2 * j + dj;
                        if (src[k] > src[best]) best = k;
                    }
                const std::int64_t oi = static_cast<std::int64_t>(bc) * Ho * Wo + static_cast<std::int64_t>(i) * Wo + j;
                out.v[static_cast<std::size_t>(oi)] = src[best];
                (*argmax)[static_cast<std::size_t>(oi)] = static_cast<std::int64_t>(bc) * H * W + best;
            }
    }
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, argmax] {
            Tensor& g = px->ensure_grad();
            for (std::size_t i = 0; i < argmax->size(); ++i)
                g.v[static_cast<std::size_t>((*argmax)[i])] += raw->grad.v[i];
        };
    }
    return Var(n);
}

Var upsample_nearest2(Var x) {
    UFMRI_CHECK(x.val().ndim() == 4, "upsample_nearest2: expects [B,C,H,W]");
    const int B = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    const int Ho = H * 2, Wo = W * 2;
    Tensor out = Tensor::zeros({B, C, Ho, Wo});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x.val().v.data() + static_cast<std::int64_t>(bc) * H * W;
        double* dst = out.v.data() + static_cast<std::int64_t>(bc) * Ho * Wo;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const double v = src[static_cast<std::int64_t>(i) * W + j];
                dst[(2 * i) * static_cast<std::int64_t>(Wo) + 2 * j] = v;
                dst[(2 * i) * static_cast<std::int64_t>(Wo) + 2 * j + 1] = v;
                dst[(2 * i + 1) * static_cast<std::int64_t>(Wo) + 2 * j] = v;
                dst[(2 * i + 1) * static_cast<std::int64_t>(Wo) + 2 * j + 1] = v;
            }
    }
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, B, C, H, W, Wo] {
            Tensor& g = px->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                const double* gs = raw->grad.v.data() + static_cast<std::int64_t>(bc) * 4 * H * W;
                double* gd = g.v.data() + static_cast<std::int64_t>(bc) * H * W;
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j)
                        gd[static_cast<std::int64_t>(i) * W + j] +=
                            gs[(2 * i) * static_cast<std::int64_t>(Wo) + 2 * j] +
                            gs[(2 * i) * static_cast<std::int64_t>(Wo) + 2 * j + 1] +
                            gs[(2 * i + 1) * static_cast<std::int64_t>(Wo) + 2 * j] +
                            gs[(2 * i + 1) * static_cast<std::int64_t>(Wo) + 2 * j + 1];
            }
        };
    }
    return Var(n);
}

Var concat_ch(Var a, Var b) {
    UFMRI_CHECK(a.val().ndim() == 4 && b.val().ndim() == 4, "concat_ch: expects [B,C,H,W]");
    const int B = a.val().dim(0), Ca = a.val().dim(1), H = a.val().dim(2), W = a.val().dim(3);
    const int Cb = b.val().dim(1);
    UFMRI_CHECK(b.val().dim(0) == B && b.val().dim(2) == H && b.val().dim(3) == W,
                "concat_ch: shape mismatch");
    Tensor out = Tensor::zeros({B, Ca + Cb, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int bi = 0; bi < B; ++bi) {
        std::copy(a.val().v.begin() + static_cast<std::ptrdiff_t>(bi) * Ca * hw,
                  a.val().v.begin() + static_cast<std::ptrdiff_t>(bi + 1) * Ca * hw,
                  out.v.begin() + static_cast<std::ptrdiff_t>(bi) * (Ca + Cb) * hw);
        std::copy(b.val().v.begin() + static_cast<std::ptrdiff_t>(bi) * Cb * hw,
                  b.val().v.begin() + static_cast<std::ptrdiff_t>(bi + 1) * Cb * hw,
                  out.v.begin() + static_cast<std::ptrdiff_t>(bi) * (Ca + Cb) * hw + Ca * hw);
    }
    auto n = make_op(std::move(out), {a.node(), b.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->back = [raw, pa, pb, B, Ca, Cb, hw] {
            for (int bi = 0; bi < B; ++bi) {
                const double* g = raw->grad.v.data() + static_cast<std::int64_t>(bi) * (Ca + Cb) * hw;
                if (pa->needs_grad) {
                    double* ga = pa->ensure_grad().v.data() + static_cast<std::int64_t>(bi) * Ca * hw;
                    for (std::int64_t i = 0; i < Ca * hw; ++i) ga[i] += g[i];
                }
                if (pb->needs_grad) {
                    double* gb = pb->ensure_grad().v.data() + static_cast<std::int64_t>(bi) * Cb * hw;
                    for (std::int64_t i = 0; i < Cb * hw; ++i) gb[i] += g[Ca * hw + i];
                }
            }
        };
    }
    return Var(n);
}

Var global_avg_pool(Var x) {
    UFMRI_CHECK(x.val().ndim() == 4, "global_avg_pool: expects [B,C,H,W]");
    const int B = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out = Tensor::zeros({B, C});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x.val().v.data() + static_cast<std::int64_t>(bc) * hw;
        double acc = 0;
        for (std::int64_t i = 0; i < hw; ++i) acc += src[i];
        out[bc] = acc / static_cast<double>(hw);
    }
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, B, C, hw] {
            Tensor& g = px->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                const double gv = raw->grad[bc] / static_cast<double>(hw);
                double* gd = g.v.data() + static_cast<std::int64_t>(bc) * hw;
                for (std::int64_t i = 0; i < hw; ++i) gd[i] += gv;
            }
        };
    }
    return Var(n);
}

Var l2_normalize_rows(Var x) {
    UFMRI_CHECK(x.val().ndim() == 2, "l2_normalize_rows: expects [B,D]");
    const int B = x.val().dim(0), D = x.val().dim(1);
    Tensor out = x.val();
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
        double s = 0;
        for (int j = 0; j < D; ++j) {
            const double v = out[static_cast<std::int64_t>(i) * D + j];
            s += v * v;
        }
        const double nrm = std::sqrt(s);
        UFMRI_CHECK(std::isfinite(nrm) && nrm > 0.0, "l2_normalize_rows: zero or non-finite row norm");
        (*norms)[static_cast<std::size_t>(i)] = nrm;
        for (int j = 0; j < D; ++j) out[static_cast<std::int64_t>(i) * D + j] /= nrm;
    }
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, norms, B, D] {
            Tensor& g = px->ensure_grad();
            for (int i = 0; i < B; ++i) {
                const double* y = raw->val.v.data() + static_cast<std::int64_t>(i) * D;
                const double* gy = raw->grad.v.data() + static_cast<std::int64_t>(i) * D;
                double yg = 0;
                for (int j = 0; j < D; ++j) yg += y[j] * gy[j];
                const double inv = 1.0 / (*norms)[static_cast<std::size_t>(i)];
                double* gx = g.v.data() + static_cast<std::int64_t>(i) * D;
                for (int j = 0; j < D; ++j) gx[j] += (gy[j] - y[j] * yg) * inv;
            }
        };
    }
    return Var(n);
}

Var cross_entropy_bank(Var features, const Tensor& bank, const std::vector<int>& indices,
                       double tau) {
    UFMRI_CHECK(tau > 0.0, "cross_entropy_bank: tau must be > 0");
    UFMRI_CHECK(features.val().ndim() == 2 && bank.ndim() == 2, "cross_entropy_bank: bad shapes");
    const int B = features.val().dim(0), D = features.val().dim(1), N = bank.dim(0);
    UFMRI_CHECK(bank.dim(1) == D, "cross_entropy_bank: feature dim mismatch");
    UFMRI_CHECK(static_cast<int>(indices.size()) == B, "cross_entropy_bank: index count mismatch");
    for (int idx : indices) UFMRI_CHECK(idx >= 0 && idx < N, "cross_entropy_bank: index out of bank");

    // logits[b, j] = <bank_j, f_b> / tau
    auto probs = std::make_shared<Tensor>(Tensor::zeros({B, N}));
    EMap(probs->v.data(), B, N).noalias() =
        ECMap(features.val().v.data(), B, D) * ECMap(bank.v.data(), N, D).transpose();
    double loss = 0;
    for (int b = 0; b < B; ++b) {
        double* row = probs->v.data() + static_cast<std::int64_t>(b) * N;
        double mx = -1e300;
        for (int j = 0; j < N; ++j) {
            row[j] /= tau;
            mx = std::max(mx, row[j]);
        }
        double se = 0;
        for (int j = 0; j < N; ++j) se += std::exp(row[j] - mx);
        const double lse = mx + std::log(se);
        loss += lse - row[indices[static_cast<std::size_t>(b)]];
        for (int j = 0; j < N; ++j) row[j] = std::exp(row[j] - lse);  // now probabilities
    }
    loss /= B;
    auto n = make_op(Tensor::scalar(loss), {features.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* pf = features.node().get();
        auto bank_copy = std::make_shared<Tensor>(bank);
        auto idx = std::make_shared<std::vector<int>>(indices);
        n->back = [raw, pf, probs, bank_copy, idx, B, D, N, tau] {
            // d/df_b = (sum_j P_j bank_j - bank_idx) * g / (tau * B)
            Tensor& g = pf->ensure_grad();
            Tensor mixed = Tensor::zeros({B, D});
            EMap(mixed.v.data(), B, D).noalias() =
                ECMap(probs->v.data(), B, N) * ECMap(bank_copy->v.data(), N, D);
            const double c = raw->grad[0] / (tau * B);
            for (int b = 0; b < B; ++b) {
                const double* bi = bank_copy->v.data() + static_cast<std::int64_t>((*idx)[static_cast<std::size_t>(b)]) * D;
                for (int j = 0; j < D; ++j)
                    g[static_cast<std::int64_t>(b) * D + j] +=
                        c * (mixed[static_cast<std::int64_t>(b) * D + j] - bi[j]);
            }
        };
    }
    return Var(n);
}

Var extract_patches(Var x, int size, int stride, int dr, int dc) {
    UFMRI_CHECK(x.val().ndim() == 3, "extract_patches: expects [C,H,W]");
    const int C = x.val().dim(0), H = x.val().dim(1), W = x.val().dim(2);
    UFMRI_CHECK(stride >= 1 && dr >= 0 && dr < stride && dc >= 0 && dc < stride,
                "extract_patches: shift must lie in [0, stride)");
    const int ni = grid_count_1d(H, size, stride, dr);
    const int nj = grid_count_1d(W, size, stride, dc);
    UFMRI_CHECK(ni >= 1 && nj >= 1, "extract_patches: image smaller than patch");
    const int M = ni * nj;
    Tensor out = Tensor::zeros({M, C, size, size});
    for (int m = 0; m < M; ++m) {
        const int oi = dr + (m / nj) * stride;
        const int oj = dc + (m % nj) * stride;
        for (int c = 0; c < C; ++c)
            for (int r = 0; r < size; ++r)
                std::copy(x.val().v.begin() + (static_cast<std::ptrdiff_t>(c) * H + oi + r) * W + oj,
                          x.val().v.begin() + (static_cast<std::ptrdiff_t>(c) * H + oi + r) * W + oj + size,
                          out.v.begin() + ((static_cast<std::ptrdiff_t>(m) * C + c) * size + r) * size);
    }
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, C, H, W, size, stride, dr, dc, ni, nj] {
            (void)ni;
            Tensor& g = px->ensure_grad();
            const int M = raw->val.dim(0);
            for (int m = 0; m < M; ++m) {
                const int oi = dr + (m / nj) * stride;
                const int oj = dc + (m % nj) * stride;
                for (int c = 0; c < C; ++c)
                    for (int r = 0; r < size; ++r) {
                        const double* gs =
                            raw->grad.v.data() + ((static_cast<std::int64_t>(m) * C + c) * size + r) * size;
                        double* gd = g.v.data() + (static_cast<std::int64_t>(c) * H + oi + r) * W + oj;
                        for (int k = 0; k < size; ++k) gd[k] += gs[k];
                    }
            }
        };
    }
    return Var(n);
}

// ---------------------------------------------------------------------------
// encoding ops

Var e_forward_op(Var x, MapsPtr maps, MaskPtr mask) {
    CTensor xc = from_planes(x.val());
    Tensor out = to_planes(e_forward(xc, *maps, *mask));
    auto n = make_op(std::move(out), {x.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* px = x.node().get();
        n->back = [raw, px, maps, mask] {
            const Tensor gx = to_planes(e_adjoint(from_planes(raw->grad), *maps, *mask));
            Tensor& g = px->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gx[i];
        };
    }
    return Var(n);
}

Var e_adjoint_op(Var y, MapsPtr maps, MaskPtr mask) {
    CTensor yc = from_planes(y.val());
    Tensor out = to_planes(e_adjoint(yc, *maps, *mask));
    auto n = make_op(std::move(out), {y.node()});
    if (n->needs_grad) {
        Node* raw = n.get();
        Node* py = y.node().get();
        n->back = [raw, py, maps, mask] {
            const Tensor gy = to_planes(e_forward(from_planes(raw->grad), *maps, *mask));
            Tensor& g = py->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
        };
    }
    return Var(n);
}

Var cg_solve_op(Var rhs, MapsPtr maps, MaskPtr mask, Var lam, int niter, Var x0) {
    auto apply_a = [&](Var v) {
        Var av = e_adjoint_op(e_forward_op(v, maps, mask), maps, mask);
        return scale_add(std::move(av), std::move(v), lam);
    };
    Var x = x0;
    Var r = sub(rhs, apply_a(x));
    Var p = r;
    Var rr = dot(r, r);
    for (int it = 0; it < niter; ++it) {
        if (rr.item() <= 1e-300) break;  // exactly solved; remaining steps are no-ops
        Var ap = apply_a(p);
        Var pap = dot(p, ap);
        UFMRI_CHECK(std::isfinite(pap.item()), "cg_solve_op: non-finite intermediate");
        if (pap.item() <= 0.0) break;
        Var alpha = div(rr, pap);
        x = scale_add(x, p, alpha);
        r = scale_add(r, ap, neg(alpha));
        Var rr_new = dot(r, r);
        Var beta = div(rr_new, rr);
        p = scale_add(r, p, beta);
        rr = rr_new;
    }
    return x;
}

} // namespace ufmri::ad
