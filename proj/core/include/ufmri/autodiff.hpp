#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ufmri/encode.hpp"
#include "ufmri/tensor.hpp"

namespace ufmri::ad {

/// Reverse-mode autodiff over Tensor. Graphs are built dynamically per
/// evaluation; backward() releases nothing, graphs die with their Vars.
/// Complex images travel as [2, ...] plane tensors (see to_planes).
struct Node {
    Tensor val;
    Tensor grad;  // allocated on first accumulation
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> back;  // reads this->grad, accumulates into parents

    Tensor& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var leaf(Tensor t);      // trainable input, receives gradient
    static Var constant(Tensor t);  // no gradient flows

    bool defined() const { return n_ != nullptr; }
    const Tensor& val() const { return n_->val; }
    const Tensor& grad() const;
    bool needs_grad() const { return n_->needs_grad; }
    NodePtr node() const { return n_; }

    /// Value of a one-element var.
    double item() const;

private:
    NodePtr n_;
};

/// Backpropagates from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Var& root);

// ---- elementwise / reductions ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var mul_const(Var a, Tensor c);
Var relu(Var a);
Var softplus(Var a);
Var sum(Var a);                       // -> [1]
Var mean(Var a);                      // -> [1]
Var dot(Var a, Var b);                // flattened, -> [1]
Var sum_sq_diff(Var a, Tensor ref);   // sum((a - ref)^2) -> [1]
Var reshape(Var a, std::vector<int> shape);

// scalar-var broadcast helpers (s has shape [1])
Var scale_by(Var a, Var s);           // a * s
Var scale_add(Var a, Var b, Var s);   // a + s * b

// ---- neural-net ops ----
Var matmul(Var a, Var b);  // [m,k] x [k,n]
Var linear(Var x, Var w, Var b);  // x [B,F], w [O,F], b [O] -> [B,O]
Var conv2d(Var x, Var w, Var b, int stride, int pad);  // x [B,C,H,W], w [O,C,kh,kw]
Var avgpool2(Var x);
Var maxpool2(Var x);
Var upsample_nearest2(Var x);
Var concat_ch(Var a, Var b);          // along dim 1 of [B,C,H,W]
Var global_avg_pool(Var x);           // [B,C,H,W] -> [B,C]
Var l2_normalize_rows(Var x);         // [B,D], rows to unit norm

/// Mean over the batch of -log P(idx_b | row b) against a fixed bank, with
/// logits bank . f / tau (max-subtracted softmax).
Var cross_entropy_bank(Var features, const Tensor& bank, const std::vector<int>& indices,
                       double tau);

/// Grid patches of a plane image [C,H,W] -> [M,C,P,P]; backward scatter-adds.
Var extract_patches(Var x, int size, int stride, int dr, int dc);

// ---- encoding ops on [2,H,W] / [2,C,H,W] plane tensors ----
// maps/mask are shared because the graph may outlive the calling frame.
using MapsPtr = std::shared_ptr<const CoilMaps>;
using MaskPtr = std::shared_ptr<const SamplingMask>;

Var e_forward_op(Var x, MapsPtr maps, MaskPtr mask);
Var e_adjoint_op(Var y, MapsPtr maps, MaskPtr mask);

/// Re(<a, b>) of two plane tensors = plain dot of the stacked planes.
inline Var cdot_re(Var a, Var b) { return dot(std::move(a), std::move(b)); }

/// Differentiable fixed-iteration CG on (E^H E + lam I) x = rhs. lam is a
/// scalar var so the gradient reaches a trainable regularization weight.
Var cg_solve_op(Var rhs, MapsPtr maps, MaskPtr mask, Var lam, int niter, Var x0);

} // namespace ufmri::ad
