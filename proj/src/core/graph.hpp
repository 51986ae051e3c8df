#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace adrrec::ag {

struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool grad_init = false;
    std::function<void()> backward;
    std::vector<std::shared_ptr<Node>> inputs;

    Tensor& grad_ref() {
        if (!grad_init) {
            grad.reset(val.shape());
            grad_init = true;
        }
        return grad;
    }
};

using ValuePtr = std::shared_ptr<Node>;

// Tape of nodes in creation order (which is a topological order). One graph
// per forward pass; backward() runs the tape in reverse.
class Graph {
public:
    ValuePtr leaf(Tensor v, bool requires_grad);
    ValuePtr constant(Tensor v) { return leaf(std::move(v), false); }

    ValuePtr make(Tensor v, std::vector<ValuePtr> inputs);

    // Seeds root->grad with 1 and propagates. Root must be a scalar.
    void backward(const ValuePtr& root);

    size_t size() const { return tape_.size(); }

private:
    std::vector<ValuePtr> tape_;
};

// --- elementwise / broadcast ---
ValuePtr add(Graph& g, ValuePtr a, ValuePtr b);
ValuePtr sub(Graph& g, ValuePtr a, ValuePtr b);
ValuePtr mul(Graph& g, ValuePtr a, ValuePtr b);
ValuePtr scale(Graph& g, ValuePtr a, double c);
ValuePtr add_scaled(Graph& g, ValuePtr a, ValuePtr b, double c);  // a + c*b
ValuePtr add_rowvec(Graph& g, ValuePtr x, ValuePtr v);            // [...,d] + [d]
ValuePtr mul_rowvec(Graph& g, ValuePtr x, ValuePtr v);
ValuePtr add_bcast0(Graph& g, ValuePtr x, ValuePtr y);            // [B,rest] + [rest]
ValuePtr relu(Graph& g, ValuePtr x);
ValuePtr mul_mask(Graph& g, ValuePtr x, const Tensor& mask);      // dropout etc.

// --- linear algebra ---
ValuePtr matmul_lastdim(Graph& g, ValuePtr x, ValuePtr w);        // [...,k]@[k,n]
ValuePtr matmul_lastdim_bt(Graph& g, ValuePtr x, ValuePtr t);     // [...,k]@[n,k]^T

// --- neural net blocks ---
ValuePtr layer_norm(Graph& g, ValuePtr x, ValuePtr gain, ValuePtr bias, double eps = 1e-8);
ValuePtr embedding(Graph& g, ValuePtr table, const ITensor& ids);
ValuePtr concat_lastdim(Graph& g, const std::vector<ValuePtr>& parts);

// --- attention ---
ValuePtr attn_scores(Graph& g, ValuePtr q, ValuePtr k, double scale);      // [B,N,d]->[B,N,N]
ValuePtr rel_scores(Graph& g, ValuePtr q, ValuePtr kr, double scale);      // q:[B,N,d] kr:[B,N,N,d]
ValuePtr mul_bcast_batch(Graph& g, ValuePtr s, ValuePtr w);                // [B,N,N]*[N,N]
ValuePtr masked_softmax(Graph& g, ValuePtr s, const BTensor& allowed);     // over last dim
ValuePtr attn_apply(Graph& g, ValuePtr w, ValuePtr v);                     // [B,N,N]@[B,N,d]

// --- embedding kernels with learnable parameters ---
ValuePtr bochner(Graph& g, const Tensor& tprime, ValuePtr w, ValuePtr b);          // ->[...,2h]
ValuePtr sinusoid_kernel(Graph& g, const Tensor& d, ValuePtr w, ValuePtr b);       // ->[...,2h]
ValuePtr gaussian_weights(Graph& g, ValuePtr mu, ValuePtr sigma_raw, int64_t n);   // ->[N,N]
ValuePtr abs_perturb(Graph& g, ValuePtr mu, ValuePtr sigma, const Tensor& eps);    // mu+|sigma|*eps

// --- losses ---
ValuePtr cross_entropy_masked(Graph& g, ValuePtr logits, const ITensor& targets,
                              const BTensor& mask);
ValuePtr masked_sq_mean(Graph& g, ValuePtr x, const BTensor& mask, double inv_count);
ValuePtr weighted_sum(Graph& g, ValuePtr x, const Tensor& w);  // scalar sum(w o x)

double softplus(double x);

}  // namespace adrrec::ag
