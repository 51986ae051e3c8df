#include "core/graph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "core/errors.hpp"
#include "core/parallel.hpp"

namespace adrrec::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

namespace {

bool any_grad(const std::vector<ValuePtr>& inputs) {
    for (const auto& p : inputs)
        if (p->requires_grad) return true;
    return false;
}

void check_same_shape(const ValuePtr& a, const ValuePtr& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw InvariantError(std::string(op) + ": shape mismatch " + a->val.shape_str() + " vs " +
                             b->val.shape_str());
}

int64_t last_dim(const Tensor& t) {
    if (t.rank() == 0) throw InvariantError("scalar has no last dim");
    return t.dim(t.rank() - 1);
}

std::vector<int64_t> replace_last(const std::vector<int64_t>& shape, int64_t n) {
    auto s = shape;
    s.back() = n;
    return s;
}

}  // namespace

ValuePtr Graph::leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    tape_.push_back(n);
    return n;
}

ValuePtr Graph::make(Tensor v, std::vector<ValuePtr> inputs) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = any_grad(inputs);
    n->inputs = std::move(inputs);
    tape_.push_back(n);
    return n;
}

void Graph::backward(const ValuePtr& root) {
    if (root->val.numel() != 1) throw InvariantError("backward root must be scalar");
    root->grad_ref().fill(1.0);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node& n = **it;
        if (n.grad_init && n.requires_grad && n.backward) n.backward();
    }
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// ---------------------------------------------------------------- elementwise

ValuePtr add(Graph& g, ValuePtr a, ValuePtr b) {
    check_same_shape(a, b, "add");
    Tensor out(a->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] + b->val[i];
    auto node = g.make(std::move(out), {a, b});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.get();
        Node* pb = b.get();
        node->backward = [self, pa, pb, n] {
            if (pa->requires_grad) {
                Tensor& ga = pa->grad_ref();
                for (int64_t i = 0; i < n; ++i) ga[i] += self->grad[i];
            }
            if (pb->requires_grad) {
                Tensor& gb = pb->grad_ref();
                for (int64_t i = 0; i < n; ++i) gb[i] += self->grad[i];
            }
        };
    }
    return node;
}

ValuePtr sub(Graph& g, ValuePtr a, ValuePtr b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] - b->val[i];
    auto node = g.make(std::move(out), {a, b});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.get();
        Node* pb = b.get();
        node->backward = [self, pa, pb, n] {
            if (pa->requires_grad) {
                Tensor& ga = pa->grad_ref();
                for (int64_t i = 0; i < n; ++i) ga[i] += self->grad[i];
            }
            if (pb->requires_grad) {
                Tensor& gb = pb->grad_ref();
                for (int64_t i = 0; i < n; ++i) gb[i] -= self->grad[i];
            }
        };
    }
    return node;
}

ValuePtr mul(Graph& g, ValuePtr a, ValuePtr b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] * b->val[i];
    auto node = g.make(std::move(out), {a, b});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.get();
        Node* pb = b.get();
        node->backward = [self, pa, pb, n] {
            if (pa->requires_grad) {
                Tensor& ga = pa->grad_ref();
                for (int64_t i = 0; i < n; ++i) ga[i] += self->grad[i] * pb->val[i];
            }
            if (pb->requires_grad) {
                Tensor& gb = pb->grad_ref();
                for (int64_t i = 0; i < n; ++i) gb[i] += self->grad[i] * pa->val[i];
            }
        };
    }
    return node;
}

ValuePtr scale(Graph& g, ValuePtr a, double c) {
    Tensor out(a->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = c * a->val[i];
    auto node = g.make(std::move(out), {a});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.get();
        node->backward = [self, pa, c, n] {
            Tensor& ga = pa->grad_ref();
            for (int64_t i = 0; i < n; ++i) ga[i] += c * self->grad[i];
        };
    }
    return node;
}

ValuePtr add_scaled(Graph& g, ValuePtr a, ValuePtr b, double c) {
    check_same_shape(a, b, "add_scaled");
    Tensor out(a->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] + c * b->val[i];
    auto node = g.make(std::move(out), {a, b});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.get();
        Node* pb = b.get();
        node->backward = [self, pa, pb, c, n] {
            if (pa->requires_grad) {
                Tensor& ga = pa->grad_ref();
                for (int64_t i = 0; i < n; ++i) ga[i] += self->grad[i];
            }
            if (pb->requires_grad) {
                Tensor& gb = pb->grad_ref();
                for (int64_t i = 0; i < n; ++i) gb[i] += c * self->grad[i];
            }
        };
    }
    return node;
}

ValuePtr add_rowvec(Graph& g, ValuePtr x, ValuePtr v) {
    const int64_t d = last_dim(x->val);
    if (v->val.numel() != d) throw InvariantError("add_rowvec: width mismatch");
    const int64_t rows = x->val.numel() / d;
    Tensor out(x->val.shape());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) out[r * d + j] = x->val[r * d + j] + v->val[j];
    auto node = g.make(std::move(out), {x, v});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Node* pv = v.get();
        node->backward = [self, px, pv, rows, d] {
            if (px->requires_grad) {
                Tensor& gx = px->grad_ref();
                const int64_t n = rows * d;
                for (int64_t i = 0; i < n; ++i) gx[i] += self->grad[i];
            }
            if (pv->requires_grad) {
                Tensor& gv = pv->grad_ref();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j) gv[j] += self->grad[r * d + j];
            }
        };
    }
    return node;
}

ValuePtr mul_rowvec(Graph& g, ValuePtr x, ValuePtr v) {
    const int64_t d = last_dim(x->val);
    if (v->val.numel() != d) throw InvariantError("mul_rowvec: width mismatch");
    const int64_t rows = x->val.numel() / d;
    Tensor out(x->val.shape());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) out[r * d + j] = x->val[r * d + j] * v->val[j];
    auto node = g.make(std::move(out), {x, v});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Node* pv = v.get();
        node->backward = [self, px, pv, rows, d] {
            if (px->requires_grad) {
                Tensor& gx = px->grad_ref();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j)
                        gx[r * d + j] += self->grad[r * d + j] * pv->val[j];
            }
            if (pv->requires_grad) {
                Tensor& gv = pv->grad_ref();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j)
                        gv[j] += self->grad[r * d + j] * px->val[r * d + j];
            }
        };
    }
    return node;
}

ValuePtr add_bcast0(Graph& g, ValuePtr x, ValuePtr y) {
    const int64_t m = y->val.numel();
    if (x->val.rank() < 1 || x->val.numel() % m != 0)
        throw InvariantError("add_bcast0: incompatible shapes");
    const int64_t b = x->val.numel() / m;
    Tensor out(x->val.shape());
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < m; ++j) out[i * m + j] = x->val[i * m + j] + y->val[j];
    auto node = g.make(std::move(out), {x, y});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Node* py = y.get();
        node->backward = [self, px, py, b, m] {
            if (px->requires_grad) {
                Tensor& gx = px->grad_ref();
                const int64_t n = b * m;
                for (int64_t i = 0; i < n; ++i) gx[i] += self->grad[i];
            }
            if (py->requires_grad) {
                Tensor& gy = py->grad_ref();
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t j = 0; j < m; ++j) gy[j] += self->grad[i * m + j];
            }
        };
    }
    return node;
}

ValuePtr relu(Graph& g, ValuePtr x) {
    Tensor out(x->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = x->val[i] > 0.0 ? x->val[i] : 0.0;
    auto node = g.make(std::move(out), {x});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        node->backward = [self, px, n] {
            Tensor& gx = px->grad_ref();
            for (int64_t i = 0; i < n; ++i)
                if (px->val[i] > 0.0) gx[i] += self->grad[i];
        };
    }
    return node;
}

ValuePtr mul_mask(Graph& g, ValuePtr x, const Tensor& mask) {
    if (!x->val.same_shape(mask)) throw InvariantError("mul_mask: shape mismatch");
    Tensor out(x->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = x->val[i] * mask[i];
    auto node = g.make(std::move(out), {x});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Tensor m = mask;
        node->backward = [self, px, m = std::move(m), n] {
            Tensor& gx = px->grad_ref();
            for (int64_t i = 0; i < n; ++i) gx[i] += self->grad[i] * m[i];
        };
    }
    return node;
}

// ------------------------------------------------------------- linear algebra

ValuePtr matmul_lastdim(Graph& g, ValuePtr x, ValuePtr w) {
    const int64_t k = last_dim(x->val);
    if (w->val.rank() != 2 || w->val.dim(0) != k)
        throw InvariantError("matmul_lastdim: inner dim mismatch");
    const int64_t n = w->val.dim(1);
    const int64_t rows = x->val.numel() / k;
    Tensor out(replace_last(x->val.shape(), n));
    Map(out.data(), rows, n).noalias() =
        CMap(x->val.data(), rows, k) * CMap(w->val.data(), k, n);
    auto node = g.make(std::move(out), {x, w});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Node* pw = w.get();
        node->backward = [self, px, pw, rows, k, n] {
            CMap gout(self->grad.data(), rows, n);
            if (px->requires_grad)
                Map(px->grad_ref().data(), rows, k).noalias() +=
                    gout * CMap(pw->val.data(), k, n).transpose();
            if (pw->requires_grad)
                Map(pw->grad_ref().data(), k, n).noalias() +=
                    CMap(px->val.data(), rows, k).transpose() * gout;
        };
    }
    return node;
}

ValuePtr matmul_lastdim_bt(Graph& g, ValuePtr x, ValuePtr t) {
    const int64_t k = last_dim(x->val);
    if (t->val.rank() != 2 || t->val.dim(1) != k)
        throw InvariantError("matmul_lastdim_bt: inner dim mismatch");
    const int64_t n = t->val.dim(0);
    const int64_t rows = x->val.numel() / k;
    Tensor out(replace_last(x->val.shape(), n));
    Map(out.data(), rows, n).noalias() =
        CMap(x->val.data(), rows, k) * CMap(t->val.data(), n, k).transpose();
    auto node = g.make(std::move(out), {x, t});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Node* pt = t.get();
        node->backward = [self, px, pt, rows, k, n] {
            CMap gout(self->grad.data(), rows, n);
            if (px->requires_grad)
                Map(px->grad_ref().data(), rows, k).noalias() +=
                    gout * CMap(pt->val.data(), n, k);
            if (pt->requires_grad)
                Map(pt->grad_ref().data(), n, k).noalias() +=
                    gout.transpose() * CMap(px->val.data(), rows, k);
        };
    }
    return node;
}

// ------------------------------------------------------------------ nn blocks

ValuePtr layer_norm(Graph& g, ValuePtr x, ValuePtr gain, ValuePtr bias, double eps) {
    const int64_t d = last_dim(x->val);
    if (gain->val.numel() != d || bias->val.numel() != d)
        throw InvariantError("layer_norm: param width mismatch");
    const int64_t rows = x->val.numel() / d;
    Tensor out(x->val.shape());
    auto xhat = std::make_shared<Tensor>(x->val.shape());
    auto inv_std = std::make_shared<Tensor>(std::vector<int64_t>{rows});
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x->val.data() + r * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        for (int64_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mean) * istd;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gain->val[j] * h + bias->val[j];
        }
    }
    auto node = g.make(std::move(out), {x, gain, bias});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        Node* pg = gain.get();
        Node* pb = bias.get();
        node->backward = [self, px, pg, pb, xhat, inv_std, rows, d] {
            for (int64_t r = 0; r < rows; ++r) {
                const double* go = self->grad.data() + r * d;
                const double* xh = xhat->data() + r * d;
                if (pg->requires_grad) {
                    Tensor& gg = pg->grad_ref();
                    for (int64_t j = 0; j < d; ++j) gg[j] += go[j] * xh[j];
                }
                if (pb->requires_grad) {
                    Tensor& gb = pb->grad_ref();
                    for (int64_t j = 0; j < d; ++j) gb[j] += go[j];
                }
                if (px->requires_grad) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        const double gy = go[j] * pg->val[j];
                        s1 += gy;
                        s2 += gy * xh[j];
                    }
                    s1 /= static_cast<double>(d);
                    s2 /= static_cast<double>(d);
                    Tensor& gx = px->grad_ref();
                    const double istd = (*inv_std)[r];
                    for (int64_t j = 0; j < d; ++j) {
                        const double gy = go[j] * pg->val[j];
                        gx[r * d + j] += (gy - s1 - xh[j] * s2) * istd;
                    }
                }
            }
        };
    }
    return node;
}

ValuePtr embedding(Graph& g, ValuePtr table, const ITensor& ids) {
    if (table->val.rank() != 2) throw InvariantError("embedding: table must be 2D");
    const int64_t v = table->val.dim(0);
    const int64_t d = table->val.dim(1);
    std::vector<int64_t> shape = ids.shape;
    shape.push_back(d);
    Tensor out(shape);
    const int64_t n = ids.numel();
    for (int64_t i = 0; i < n; ++i) {
        const int64_t id = ids.data[static_cast<size_t>(i)];
        if (id < 0 || id >= v)
            throw DataError("embedding index " + std::to_string(id) + " out of range [0," +
                            std::to_string(v) + ")");
        const double* src = table->val.data() + id * d;
        double* dst = out.data() + i * d;
        for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    auto node = g.make(std::move(out), {table});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pt = table.get();
        auto idx = std::make_shared<std::vector<int64_t>>(ids.data);
        node->backward = [self, pt, idx, d, n] {
            Tensor& gt = pt->grad_ref();
            for (int64_t i = 0; i < n; ++i) {
                const int64_t id = (*idx)[static_cast<size_t>(i)];
                const double* src = self->grad.data() + i * d;
                double* dst = gt.data() + id * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        };
    }
    return node;
}

ValuePtr concat_lastdim(Graph& g, const std::vector<ValuePtr>& parts) {
    if (parts.empty()) throw InvariantError("concat_lastdim: no parts");
    int64_t total = 0;
    const int64_t lead = parts[0]->val.numel() / last_dim(parts[0]->val);
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        const int64_t w = last_dim(p->val);
        if (p->val.numel() / w != lead) throw InvariantError("concat_lastdim: leading dims differ");
        widths.push_back(w);
        total += w;
    }
    Tensor out(replace_last(parts[0]->val.shape(), total));
    int64_t off = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        const int64_t w = widths[p];
        const double* src = parts[p]->val.data();
        for (int64_t r = 0; r < lead; ++r)
            for (int64_t j = 0; j < w; ++j) out[r * total + off + j] = src[r * w + j];
        off += w;
    }
    auto node = g.make(std::move(out), {parts});
    if (node->requires_grad) {
        Node* self = node.get();
        std::vector<Node*> raw;
        for (const auto& p : parts) raw.push_back(p.get());
        node->backward = [self, raw, widths, lead, total] {
            int64_t off = 0;
            for (size_t p = 0; p < raw.size(); ++p) {
                const int64_t w = widths[p];
                if (raw[p]->requires_grad) {
                    Tensor& gp = raw[p]->grad_ref();
                    for (int64_t r = 0; r < lead; ++r)
                        for (int64_t j = 0; j < w; ++j)
                            gp[r * w + j] += self->grad[r * total + off + j];
                }
                off += w;
            }
        };
    }
    return node;
}

// ------------------------------------------------------------------ attention

ValuePtr attn_scores(Graph& g, ValuePtr q, ValuePtr k, double scale) {
    if (q->val.rank() != 3 || !q->val.same_shape(k->val))
        throw InvariantError("attn_scores: want matching [B,N,d]");
    const int64_t b = q->val.dim(0), n = q->val.dim(1), d = q->val.dim(2);
    Tensor out({b, n, n});
    parallel_for(b, [&](int64_t i) {
        CMap qm(q->val.data() + i * n * d, n, d);
        CMap km(k->val.data() + i * n * d, n, d);
        Map(out.data() + i * n * n, n, n).noalias() = scale * (qm * km.transpose());
    });
    auto node = g.make(std::move(out), {q, k});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pq = q.get();
        Node* pk = k.get();
        node->backward = [self, pq, pk, b, n, d, scale] {
            if (pq->requires_grad) pq->grad_ref();
            if (pk->requires_grad) pk->grad_ref();
            parallel_for(b, [&](int64_t i) {
                CMap gs(self->grad.data() + i * n * n, n, n);
                if (pq->requires_grad)
                    Map(pq->grad.data() + i * n * d, n, d).noalias() +=
                        scale * (gs * CMap(pk->val.data() + i * n * d, n, d));
                if (pk->requires_grad)
                    Map(pk->grad.data() + i * n * d, n, d).noalias() +=
                        scale * (gs.transpose() * CMap(pq->val.data() + i * n * d, n, d));
            });
        };
    }
    return node;
}

ValuePtr rel_scores(Graph& g, ValuePtr q, ValuePtr kr, double scale) {
    if (q->val.rank() != 3 || kr->val.rank() != 4)
        throw InvariantError("rel_scores: want q [B,N,d], kr [B,N,N,d]");
    const int64_t b = q->val.dim(0), n = q->val.dim(1), d = q->val.dim(2);
    if (kr->val.dim(0) != b || kr->val.dim(1) != n || kr->val.dim(2) != n || kr->val.dim(3) != d)
        throw InvariantError("rel_scores: kr shape mismatch");
    Tensor out({b, n, n});
    parallel_for(b, [&](int64_t bi) {
        for (int64_t i = 0; i < n; ++i) {
            const double* qv = q->val.data() + (bi * n + i) * d;
            for (int64_t j = 0; j < n; ++j) {
                const double* kv = kr->val.data() + ((bi * n + i) * n + j) * d;
                double s = 0.0;
                for (int64_t c = 0; c < d; ++c) s += qv[c] * kv[c];
                out.at(bi, i, j) = scale * s;
            }
        }
    });
    auto node = g.make(std::move(out), {q, kr});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pq = q.get();
        Node* pk = kr.get();
        node->backward = [self, pq, pk, b, n, d, scale] {
            if (pq->requires_grad) pq->grad_ref();
            if (pk->requires_grad) pk->grad_ref();
            parallel_for(b, [&](int64_t bi) {
                for (int64_t i = 0; i < n; ++i) {
                    const double* qv = pq->val.data() + (bi * n + i) * d;
                    double* gq =
                        pq->requires_grad ? pq->grad.data() + (bi * n + i) * d : nullptr;
                    for (int64_t j = 0; j < n; ++j) {
                        const double gs = scale * self->grad.at(bi, i, j);
                        if (gs == 0.0) continue;
                        const int64_t base = ((bi * n + i) * n + j) * d;
                        const double* kv = pk->val.data() + base;
                        if (gq)
                            for (int64_t c = 0; c < d; ++c) gq[c] += gs * kv[c];
                        if (pk->requires_grad) {
                            double* gk = pk->grad.data() + base;
                            for (int64_t c = 0; c < d; ++c) gk[c] += gs * qv[c];
                        }
                    }
                }
            });
        };
    }
    return node;
}

ValuePtr mul_bcast_batch(Graph& g, ValuePtr s, ValuePtr w) {
    if (s->val.rank() != 3 || w->val.rank() != 2)
        throw InvariantError("mul_bcast_batch: want [B,N,N] and [N,N]");
    const int64_t b = s->val.dim(0), n = s->val.dim(1);
    if (s->val.dim(2) != n || w->val.dim(0) != n || w->val.dim(1) != n)
        throw InvariantError("mul_bcast_batch: shape mismatch");
    Tensor out({b, n, n});
    const int64_t m = n * n;
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < m; ++j) out[i * m + j] = s->val[i * m + j] * w->val[j];
    auto node = g.make(std::move(out), {s, w});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* ps = s.get();
        Node* pw = w.get();
        node->backward = [self, ps, pw, b, m] {
            if (ps->requires_grad) {
                Tensor& gs = ps->grad_ref();
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t j = 0; j < m; ++j)
                        gs[i * m + j] += self->grad[i * m + j] * pw->val[j];
            }
            if (pw->requires_grad) {
                Tensor& gw = pw->grad_ref();
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t j = 0; j < m; ++j)
                        gw[j] += self->grad[i * m + j] * ps->val[i * m + j];
            }
        };
    }
    return node;
}

ValuePtr masked_softmax(Graph& g, ValuePtr s, const BTensor& allowed) {
    if (s->val.rank() != 3) throw InvariantError("masked_softmax: want [B,N,N]");
    const int64_t b = s->val.dim(0), n = s->val.dim(1);
    if (allowed.shape != s->val.shape()) throw InvariantError("masked_softmax: mask mismatch");
    for (int64_t r = 0; r < b * n; ++r) {
        const uint8_t* al = allowed.data.data() + r * n;
        bool any = false;
        for (int64_t j = 0; j < n && !any; ++j) any = al[j] != 0;
        if (!any) throw InvariantError("masked_softmax: query row with no allowed keys");
    }
    Tensor out({b, n, n});
    parallel_for(b, [&](int64_t bi) {
        for (int64_t i = 0; i < n; ++i) {
            const double* row = s->val.data() + (bi * n + i) * n;
            const uint8_t* al = allowed.data.data() + (bi * n + i) * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < n; ++j)
                if (al[j] && row[j] > mx) mx = row[j];
            double z = 0.0;
            double* o = out.data() + (bi * n + i) * n;
            for (int64_t j = 0; j < n; ++j) {
                o[j] = al[j] ? std::exp(row[j] - mx) : 0.0;
                z += o[j];
            }
            const double inv = 1.0 / z;
            for (int64_t j = 0; j < n; ++j) o[j] *= inv;
        }
    });
    auto node = g.make(std::move(out), {s});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* ps = s.get();
        node->backward = [self, ps, b, n] {
            ps->grad_ref();
            parallel_for(b, [&](int64_t bi) {
                for (int64_t i = 0; i < n; ++i) {
                    const double* w = self->val.data() + (bi * n + i) * n;
                    const double* go = self->grad.data() + (bi * n + i) * n;
                    double dot = 0.0;
                    for (int64_t j = 0; j < n; ++j) dot += go[j] * w[j];
                    double* gs = ps->grad.data() + (bi * n + i) * n;
                    for (int64_t j = 0; j < n; ++j) gs[j] += w[j] * (go[j] - dot);
                }
            });
        };
    }
    return node;
}

ValuePtr attn_apply(Graph& g, ValuePtr w, ValuePtr v) {
    if (w->val.rank() != 3 || v->val.rank() != 3)
        throw InvariantError("attn_apply: want [B,N,N] and [B,N,d]");
    const int64_t b = w->val.dim(0), n = w->val.dim(1), d = v->val.dim(2);
    if (w->val.dim(2) != n || v->val.dim(0) != b || v->val.dim(1) != n)
        throw InvariantError("attn_apply: shape mismatch");
    Tensor out({b, n, d});
    parallel_for(b, [&](int64_t i) {
        Map(out.data() + i * n * d, n, d).noalias() =
            CMap(w->val.data() + i * n * n, n, n) * CMap(v->val.data() + i * n * d, n, d);
    });
    auto node = g.make(std::move(out), {w, v});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pw = w.get();
        Node* pv = v.get();
        node->backward = [self, pw, pv, b, n, d] {
            if (pw->requires_grad) pw->grad_ref();
            if (pv->requires_grad) pv->grad_ref();
            parallel_for(b, [&](int64_t i) {
                CMap go(self->grad.data() + i * n * d, n, d);
                if (pw->requires_grad)
                    Map(pw->grad.data() + i * n * n, n, n).noalias() +=
                        go * CMap(pv->val.data() + i * n * d, n, d).transpose();
                if (pv->requires_grad)
                    Map(pv->grad.data() + i * n * d, n, d).noalias() +=
                        CMap(pw->val.data() + i * n * n, n, n).transpose() * go;
            });
        };
    }
    return node;
}

// ------------------------------------------------------------ kernel builders

// out[..., 2i] = cos(w_i * t + b_i), out[..., 2i+1] = sin(w_i * t + b_i)
static ValuePtr paired_sinusoid(Graph& g, const Tensor& arg, ValuePtr w, ValuePtr b) {
    if (!w->val.same_shape(b->val)) throw InvariantError("sinusoid: w/b shape mismatch");
    const int64_t h = w->val.numel();
    const int64_t rows = arg.numel();
    std::vector<int64_t> shape = arg.shape();
    shape.push_back(2 * h);
    Tensor out(shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double t = arg[r];
        double* o = out.data() + r * 2 * h;
        for (int64_t i = 0; i < h; ++i) {
            const double a = w->val[i] * t + b->val[i];
            o[2 * i] = std::cos(a);
            o[2 * i + 1] = std::sin(a);
        }
    }
    auto node = g.make(std::move(out), {w, b});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pw = w.get();
        Node* pb = b.get();
        auto targ = std::make_shared<Tensor>(arg);
        node->backward = [self, pw, pb, targ, rows, h] {
            Tensor& gw = pw->requires_grad ? pw->grad_ref() : pw->grad;
            Tensor& gb = pb->requires_grad ? pb->grad_ref() : pb->grad;
            for (int64_t r = 0; r < rows; ++r) {
                const double t = (*targ)[r];
                const double* o = self->val.data() + r * 2 * h;
                const double* go = self->grad.data() + r * 2 * h;
                for (int64_t i = 0; i < h; ++i) {
                    // d cos(a)/da = -sin(a) = -o[2i+1]; d sin(a)/da = cos(a) = o[2i]
                    const double darg = -o[2 * i + 1] * go[2 * i] + o[2 * i] * go[2 * i + 1];
                    if (pw->requires_grad) gw[i] += darg * t;
                    if (pb->requires_grad) gb[i] += darg;
                }
            }
        };
    }
    return node;
}

ValuePtr bochner(Graph& g, const Tensor& tprime, ValuePtr w, ValuePtr b) {
    return paired_sinusoid(g, tprime, w, b);
}

ValuePtr sinusoid_kernel(Graph& g, const Tensor& d, ValuePtr w, ValuePtr b) {
    return paired_sinusoid(g, d, w, b);
}

ValuePtr gaussian_weights(Graph& g, ValuePtr mu, ValuePtr sigma_raw, int64_t n) {
    if (mu->val.numel() != 1 || sigma_raw->val.numel() != 1)
        throw InvariantError("gaussian_weights: mu/sigma must be scalars");
    const double m = mu->val[0];
    const double sig = softplus(sigma_raw->val[0]);
    Tensor out({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double c = static_cast<double>(i - j) - m;
            out.at(i, j) = std::exp(-c * c / (2.0 * sig * sig));
        }
    auto node = g.make(std::move(out), {mu, sigma_raw});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pm = mu.get();
        Node* ps = sigma_raw.get();
        node->backward = [self, pm, ps, n, m, sig] {
            double dmu = 0.0, dsig = 0.0;
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    const double c = static_cast<double>(i - j) - m;
                    const double gv = self->grad.at(i, j) * self->val.at(i, j);
                    dmu += gv * c / (sig * sig);
                    dsig += gv * c * c / (sig * sig * sig);
                }
            if (pm->requires_grad) pm->grad_ref()[0] += dmu;
            if (ps->requires_grad) {
                const double dsoft = 1.0 / (1.0 + std::exp(-ps->val[0]));
                ps->grad_ref()[0] += dsig * dsoft;
            }
        };
    }
    return node;
}

ValuePtr abs_perturb(Graph& g, ValuePtr mu, ValuePtr sigma, const Tensor& eps) {
    check_same_shape(mu, sigma, "abs_perturb");
    if (!mu->val.same_shape(eps)) throw InvariantError("abs_perturb: eps shape mismatch");
    Tensor out(mu->val.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = mu->val[i] + std::abs(sigma->val[i]) * eps[i];
    auto node = g.make(std::move(out), {mu, sigma});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pm = mu.get();
        Node* ps = sigma.get();
        auto e = std::make_shared<Tensor>(eps);
        node->backward = [self, pm, ps, e, n] {
            if (pm->requires_grad) {
                Tensor& gm = pm->grad_ref();
                for (int64_t i = 0; i < n; ++i) gm[i] += self->grad[i];
            }
            if (ps->requires_grad) {
                Tensor& gs = ps->grad_ref();
                for (int64_t i = 0; i < n; ++i) {
                    const double sv = ps->val[i];
                    const double sgn = sv > 0.0 ? 1.0 : (sv < 0.0 ? -1.0 : 0.0);
                    gs[i] += self->grad[i] * (*e)[i] * sgn;
                }
            }
        };
    }
    return node;
}

// --------------------------------------------------------------------- losses

ValuePtr cross_entropy_masked(Graph& g, ValuePtr logits, const ITensor& targets,
                              const BTensor& mask) {
    if (logits->val.rank() != 3) throw InvariantError("cross_entropy: want [B,N,C]");
    const int64_t b = logits->val.dim(0), n = logits->val.dim(1), c = logits->val.dim(2);
    if (targets.shape != std::vector<int64_t>{b, n} || mask.shape != targets.shape)
        throw InvariantError("cross_entropy: targets/mask shape mismatch");
    int64_t n_real = 0;
    for (uint8_t m : mask.data) n_real += m ? 1 : 0;
    if (n_real == 0) throw InvariantError("cross_entropy: batch has no real targets");
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i) {
            if (!mask.at(bi, i)) continue;
            const int64_t t = targets.at(bi, i);
            if (t < 1 || t >= c) throw InvariantError("cross_entropy: target outside vocabulary");
        }

    auto lse = std::make_shared<Tensor>(std::vector<int64_t>{b, n});
    std::vector<double> partial(static_cast<size_t>(b), 0.0);
    parallel_for(b, [&](int64_t bi) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            if (!mask.at(bi, i)) continue;
            const int64_t t = targets.at(bi, i);
            const double* row = logits->val.data() + (bi * n + i) * c;
            double mx = row[1];
            for (int64_t v = 2; v < c; ++v)
                if (row[v] > mx) mx = row[v];
            double z = 0.0;
            for (int64_t v = 1; v < c; ++v) z += std::exp(row[v] - mx);
            const double l = mx + std::log(z);
            lse->at(bi, i) = l;
            acc += l - row[t];
        }
        partial[static_cast<size_t>(bi)] = acc;
    });
    double loss = 0.0;
    for (double p : partial) loss += p;
    loss /= static_cast<double>(n_real);
    if (!std::isfinite(loss)) throw NumericalError("cross_entropy: non-finite loss");

    auto node = g.make(Tensor::scalar(loss), {logits});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pl = logits.get();
        auto tgt = std::make_shared<ITensor>(targets);
        auto msk = std::make_shared<BTensor>(mask);
        node->backward = [self, pl, tgt, msk, lse, b, n, c, n_real] {
            const double go = self->grad[0] / static_cast<double>(n_real);
            pl->grad_ref();
            parallel_for(b, [&](int64_t bi) {
                for (int64_t i = 0; i < n; ++i) {
                    if (!msk->at(bi, i)) continue;
                    const double* row = pl->val.data() + (bi * n + i) * c;
                    double* gr = pl->grad.data() + (bi * n + i) * c;
                    const double l = lse->at(bi, i);
                    for (int64_t v = 1; v < c; ++v) gr[v] += go * std::exp(row[v] - l);
                    gr[tgt->at(bi, i)] -= go;
                }
            });
        };
    }
    return node;
}

ValuePtr masked_sq_mean(Graph& g, ValuePtr x, const BTensor& mask, double inv_count) {
    if (x->val.rank() != 3) throw InvariantError("masked_sq_mean: want [B,N,d]");
    const int64_t b = x->val.dim(0), n = x->val.dim(1), d = x->val.dim(2);
    if (mask.shape != std::vector<int64_t>{b, n})
        throw InvariantError("masked_sq_mean: mask shape mismatch");
    double acc = 0.0;
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i) {
            if (!mask.at(bi, i)) continue;
            const double* row = x->val.data() + (bi * n + i) * d;
            for (int64_t j = 0; j < d; ++j) acc += row[j] * row[j];
        }
    auto node = g.make(Tensor::scalar(acc * inv_count), {x});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        auto msk = std::make_shared<BTensor>(mask);
        node->backward = [self, px, msk, b, n, d, inv_count] {
            const double go = 2.0 * inv_count * self->grad[0];
            Tensor& gx = px->grad_ref();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t i = 0; i < n; ++i) {
                    if (!msk->at(bi, i)) continue;
                    const double* row = px->val.data() + (bi * n + i) * d;
                    double* gr = gx.data() + (bi * n + i) * d;
                    for (int64_t j = 0; j < d; ++j) gr[j] += go * row[j];
                }
        };
    }
    return node;
}

ValuePtr weighted_sum(Graph& g, ValuePtr x, const Tensor& w) {
    if (!x->val.same_shape(w)) throw InvariantError("weighted_sum: shape mismatch");
    double acc = 0.0;
    const int64_t n = w.numel();
    for (int64_t i = 0; i < n; ++i) acc += x->val[i] * w[i];
    auto node = g.make(Tensor::scalar(acc), {x});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.get();
        auto wt = std::make_shared<Tensor>(w);
        node->backward = [self, px, wt, n] {
            Tensor& gx = px->grad_ref();
            for (int64_t i = 0; i < n; ++i) gx[i] += self->grad[0] * (*wt)[i];
        };
    }
    return node;
}

}  // namespace adrrec::ag
