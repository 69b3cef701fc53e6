#include "lw/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_set>

namespace lw::ag {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

void Node::ensure_grad() {
    if (!grad_alloc) {
        grad = Tensor(val.shape);
        grad_alloc = true;
    }
}

void Node::accumulate(const Tensor& g) {
    ensure_grad();
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
}

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor v) { return leaf(std::move(v), false); }

namespace {

Var make(Tensor v, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) n->back = std::move(back);
    return n;
}

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
    // Iterative post-order so deep tapes cannot overflow the stack.
    std::vector<std::pair<Node*, std::size_t>> stack{{n, 0}};
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx == 0 && seen.count(cur)) {
            stack.pop_back();
            continue;
        }
        if (idx < cur->parents.size()) {
            Node* p = cur->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) stack.emplace_back(p, 0);
        } else {
            seen.insert(cur);
            order.push_back(cur);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Var& root) {
    check_arg(root != nullptr, "backward: null root");
    check_arg(root->val.numel() == 1, "backward: root must be a scalar");
    if (!root->requires_grad) return;
    std::unordered_set<Node*> seen;
    std::vector<Node*> order;
    topo_visit(root.get(), seen, order);
    root->ensure_grad();
    root->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->back && n->grad_alloc) n->back(*n);
    }
}

// --- elementwise ---

Var add(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "add");
    Tensor out(a->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->val.data[i] + b->val.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "sub");
    Tensor out(a->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->val.data[i] - b->val.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) {
            Node& p = *n.parents[1];
            p.ensure_grad();
            for (std::size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "mul");
    Tensor out(a->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->val.data[i] * b->val.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < pa.grad.data.size(); ++i)
                pa.grad.data[i] += n.grad.data[i] * pb.val.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.grad.data.size(); ++i)
                pb.grad.data[i] += n.grad.data[i] * pa.val.data[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "div");
    Tensor out(a->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->val.data[i] / b->val.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < pa.grad.data.size(); ++i)
                pa.grad.data[i] += n.grad.data[i] / pb.val.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.grad.data.size(); ++i) {
                const Real bi = pb.val.data[i];
                pb.grad.data[i] -= n.grad.data[i] * pa.val.data[i] / (bi * bi);
            }
        }
    });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var scale(const Var& x, Real c) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->val.data[i] * c;
    return make(std::move(out), {x}, [c](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i] * c;
    });
}

Var add_scalar(const Var& x, Real c) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->val.data[i] + c;
    return make(std::move(out), {x},
                [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Var sub_const(const Var& x, const Tensor& c) {
    check_same_shape(x->val, c, "sub_const");
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->val.data[i] - c.data[i];
    return make(std::move(out), {x},
                [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Var square(const Var& x) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->val.data[i] * x->val.data[i];
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i)
            p.grad.data[i] += 2.0 * n.grad.data[i] * p.val.data[i];
    });
}

Var exp_(const Var& x) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::exp(x->val.data[i]);
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i)
            p.grad.data[i] += n.grad.data[i] * n.val.data[i];
    });
}

Var log_(const Var& x) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::log(x->val.data[i]);
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i)
            p.grad.data[i] += n.grad.data[i] / p.val.data[i];
    });
}

Var tanh_(const Var& x) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::tanh(x->val.data[i]);
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i) {
            const Real t = n.val.data[i];
            p.grad.data[i] += n.grad.data[i] * (1.0 - t * t);
        }
    });
}

Var sigmoid_(const Var& x) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = 1.0 / (1.0 + std::exp(-x->val.data[i]));
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i) {
            const Real s = n.val.data[i];
            p.grad.data[i] += n.grad.data[i] * s * (1.0 - s);
        }
    });
}

Var silu_(const Var& x) {
    Tensor out(x->val.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const Real v = x->val.data[i];
        out.data[i] = v / (1.0 + std::exp(-v));
    }
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i) {
            const Real v = p.val.data[i];
            const Real s = 1.0 / (1.0 + std::exp(-v));
            p.grad.data[i] += n.grad.data[i] * s * (1.0 + v * (1.0 - s));
        }
    });
}

// --- shape ---

Var reshape(const Var& x, std::vector<int> shape) {
    check_arg(Tensor::numel_of(shape) == x->val.numel(), "reshape: element count mismatch");
    Tensor out(std::move(shape), x->val.data);
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    check_arg(!xs.empty(), "concat_channels: empty input");
    const int N = xs[0]->val.dim(0);
    const int H = xs[0]->val.dim(2);
    const int W = xs[0]->val.dim(3);
    int C = 0;
    for (const auto& x : xs) {
        check_arg(x->val.ndim() == 4, "concat_channels: inputs must be 4-d");
        check_arg(x->val.dim(0) == N && x->val.dim(2) == H && x->val.dim(3) == W,
                  "concat_channels: incompatible shapes");
        C += x->val.dim(1);
    }
    Tensor out({N, C, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::size_t dst = (static_cast<std::size_t>(n) * C) * plane;
        for (const auto& x : xs) {
            const int xc = x->val.dim(1);
            const std::size_t src = (static_cast<std::size_t>(n) * xc) * plane;
            std::copy_n(x->val.data.begin() + src, xc * plane, out.data.begin() + dst);
            dst += xc * plane;
        }
    }
    return make(std::move(out), xs, [N, plane](Node& n) {
        const int C = n.val.dim(1);
        int coff = 0;
        for (auto& pv : n.parents) {
            Node& p = *pv;
            const int xc = p.val.dim(1);
            if (p.requires_grad) {
                p.ensure_grad();
                for (int b = 0; b < N; ++b) {
                    const std::size_t src = (static_cast<std::size_t>(b) * C + coff) * plane;
                    const std::size_t dst = (static_cast<std::size_t>(b) * xc) * plane;
                    for (std::size_t i = 0; i < xc * plane; ++i)
                        p.grad.data[dst + i] += n.grad.data[src + i];
                }
            }
            coff += xc;
        }
    });
}

Var slice_channels(const Var& x, int c0, int c1) {
    check_arg(x->val.ndim() == 4, "slice_channels: input must be 4-d");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_arg(0 <= c0 && c0 < c1 && c1 <= C, "slice_channels: bad channel range");
    const int SC = c1 - c0;
    Tensor out({N, SC, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        const std::size_t src = (static_cast<std::size_t>(n) * C + c0) * plane;
        const std::size_t dst = (static_cast<std::size_t>(n) * SC) * plane;
        std::copy_n(x->val.data.begin() + src, SC * plane, out.data.begin() + dst);
    }
    return make(std::move(out), {x}, [c0, plane](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const int N = n.val.dim(0), SC = n.val.dim(1), C = p.val.dim(1);
        for (int b = 0; b < N; ++b) {
            const std::size_t dst = (static_cast<std::size_t>(b) * C + c0) * plane;
            const std::size_t src = (static_cast<std::size_t>(b) * SC) * plane;
            for (std::size_t i = 0; i < SC * plane; ++i)
                p.grad.data[dst + i] += n.grad.data[src + i];
        }
    });
}

// --- linear algebra ---

Var matmul(const Var& a, const Var& b) {
    check_arg(a->val.ndim() == 2 && b->val.ndim() == 2, "matmul: inputs must be 2-d");
    const int M = a->val.dim(0), K = a->val.dim(1), N = b->val.dim(1);
    check_arg(b->val.dim(0) == K, "matmul: inner dimensions differ");
    Tensor out({M, N});
    CMatMap A(a->val.data.data(), M, K), B(b->val.data.data(), K, N);
    MatMap(out.data.data(), M, N).noalias() = A * B;
    return make(std::move(out), {a, b}, [M, K, N](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        CMatMap G(n.grad.data.data(), M, N);
        if (pa.requires_grad) {
            pa.ensure_grad();
            CMatMap B(pb.val.data.data(), K, N);
            MatMap(pa.grad.data.data(), M, K).noalias() += G * B.transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            CMatMap A(pa.val.data.data(), M, K);
            MatMap(pb.grad.data.data(), K, N).noalias() += A.transpose() * G;
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    check_arg(x->val.ndim() == 2 && w->val.ndim() == 2 && b->val.ndim() == 1,
              "linear: expected x{N,F}, w{G,F}, b{G}");
    const int N = x->val.dim(0), F = x->val.dim(1), G = w->val.dim(0);
    check_arg(w->val.dim(1) == F && b->val.dim(0) == G, "linear: dimension mismatch");
    Tensor out({N, G});
    CMatMap X(x->val.data.data(), N, F), W(w->val.data.data(), G, F);
    MatMap O(out.data.data(), N, G);
    O.noalias() = X * W.transpose();
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < G; ++g) out.data[static_cast<std::size_t>(n) * G + g] += b->val.data[g];
    return make(std::move(out), {x, w, b}, [N, F, G](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        CMatMap Gr(n.grad.data.data(), N, G);
        if (px.requires_grad) {
            px.ensure_grad();
            CMatMap W(pw.val.data.data(), G, F);
            MatMap(px.grad.data.data(), N, F).noalias() += Gr * W;
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            CMatMap X(px.val.data.data(), N, F);
            MatMap(pw.grad.data.data(), G, F).noalias() += Gr.transpose() * X;
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int g = 0; g < G; ++g)
                    pb.grad.data[g] += n.grad.data[static_cast<std::size_t>(i) * G + g];
        }
    });
}

// --- conv helpers ---

namespace {

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// img {C,H,W} -> cols {C*kh*kw, Ho*Wo}
void im2col(const Real* img, int C, int H, int W, int k, int s, int p, Real* cols) {
    const int Ho = conv_out(H, k, s, p), Wo = conv_out(W, k, s, p);
    const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                Real* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ncols;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * s - p + ki;
                    if (ii < 0 || ii >= H) {
                        std::fill_n(row + static_cast<std::size_t>(oi) * Wo, Wo, 0.0);
                        continue;
                    }
                    const Real* src = img + (static_cast<std::size_t>(c) * H + ii) * W;
                    Real* dst = row + static_cast<std::size_t>(oi) * Wo;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * s - p + kj;
                        dst[oj] = (jj >= 0 && jj < W) ? src[jj] : 0.0;
                    }
                }
            }
        }
    }
}

// cols {C*kh*kw, Ho*Wo} -> accumulate into img {C,H,W}
void col2im(const Real* cols, int C, int H, int W, int k, int s, int p, Real* img) {
    const int Ho = conv_out(H, k, s, p), Wo = conv_out(W, k, s, p);
    const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const Real* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ncols;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * s - p + ki;
                    if (ii < 0 || ii >= H) continue;
                    Real* dst = img + (static_cast<std::size_t>(c) * H + ii) * W;
                    const Real* src = row + static_cast<std::size_t>(oi) * Wo;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * s - p + kj;
                        if (jj >= 0 && jj < W) dst[jj] += src[oj];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check_arg(x->val.ndim() == 4 && w->val.ndim() == 4, "conv2d: x and w must be 4-d");
    const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    const int Cout = w->val.dim(0), k = w->val.dim(2);
    check_arg(w->val.dim(1) == Cin && w->val.dim(3) == k, "conv2d: weight shape mismatch");
    check_arg(b->val.ndim() == 1 && b->val.dim(0) == Cout, "conv2d: bias shape mismatch");
    const int Ho = conv_out(H, k, stride, pad), Wo = conv_out(W, k, stride, pad);
    check_arg(Ho > 0 && Wo > 0, "conv2d: output would be empty");

    const int CKK = Cin * k * k;
    const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
    Tensor out({N, Cout, Ho, Wo});
    std::vector<Real> cols(static_cast<std::size_t>(CKK) * ncols);
    CMatMap Wm(w->val.data.data(), Cout, CKK);
    for (int n = 0; n < N; ++n) {
        im2col(x->val.data.data() + static_cast<std::size_t>(n) * Cin * H * W, Cin, H, W, k,
               stride, pad, cols.data());
        CMatMap Cm(cols.data(), CKK, static_cast<int>(ncols));
        MatMap Om(out.data.data() + static_cast<std::size_t>(n) * Cout * ncols, Cout,
                  static_cast<int>(ncols));
        Om.noalias() = Wm * Cm;
        for (int c = 0; c < Cout; ++c) Om.row(c).array() += b->val.data[c];
    }
    return make(std::move(out), {x, w, b}, [stride, pad](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        const int N = px.val.dim(0), Cin = px.val.dim(1), H = px.val.dim(2), W = px.val.dim(3);
        const int Cout = pw.val.dim(0), k = pw.val.dim(2);
        const int Ho = n.val.dim(2), Wo = n.val.dim(3);
        const int CKK = Cin * k * k;
        const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
        std::vector<Real> cols(static_cast<std::size_t>(CKK) * ncols);
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        CMatMap Wm(pw.val.data.data(), Cout, CKK);
        for (int b = 0; b < N; ++b) {
            CMatMap Gm(n.grad.data.data() + static_cast<std::size_t>(b) * Cout * ncols, Cout,
                       static_cast<int>(ncols));
            if (pw.requires_grad) {
                im2col(px.val.data.data() + static_cast<std::size_t>(b) * Cin * H * W, Cin, H, W,
                       k, stride, pad, cols.data());
                CMatMap Cm(cols.data(), CKK, static_cast<int>(ncols));
                MatMap(pw.grad.data.data(), Cout, CKK).noalias() += Gm * Cm.transpose();
            }
            if (px.requires_grad) {
                MatMap Cm(cols.data(), CKK, static_cast<int>(ncols));
                Cm.noalias() = Wm.transpose() * Gm;
                col2im(cols.data(), Cin, H, W, k, stride, pad,
                       px.grad.data.data() + static_cast<std::size_t>(b) * Cin * H * W);
            }
            if (pb.requires_grad) {
                const Real* g = n.grad.data.data() + static_cast<std::size_t>(b) * Cout * ncols;
                for (int c = 0; c < Cout; ++c) {
                    Real acc = 0.0;
                    const Real* row = g + static_cast<std::size_t>(c) * ncols;
                    for (std::size_t i = 0; i < ncols; ++i) acc += row[i];
                    pb.grad.data[c] += acc;
                }
            }
        }
    });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check_arg(x->val.ndim() == 4 && w->val.ndim() == 4, "conv_transpose2d: x and w must be 4-d");
    const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_arg(w->val.dim(0) == Cin, "conv_transpose2d: weight shape mismatch");
    const int Cout = w->val.dim(1), k = w->val.dim(2);
    check_arg(w->val.dim(3) == k, "conv_transpose2d: weight must be square");
    check_arg(b->val.ndim() == 1 && b->val.dim(0) == Cout, "conv_transpose2d: bias shape mismatch");
    const int Ho = (H - 1) * stride - 2 * pad + k;
    const int Wo = (W - 1) * stride - 2 * pad + k;
    check_arg(Ho > 0 && Wo > 0, "conv_transpose2d: output would be empty");

    const int CKK = Cout * k * k;
    const std::size_t nin = static_cast<std::size_t>(H) * W;
    Tensor out({N, Cout, Ho, Wo});
    std::vector<Real> cols(static_cast<std::size_t>(CKK) * nin);
    CMatMap Wm(w->val.data.data(), Cin, CKK);
    for (int n = 0; n < N; ++n) {
        CMatMap Xm(x->val.data.data() + static_cast<std::size_t>(n) * Cin * nin, Cin,
                   static_cast<int>(nin));
        MatMap Cm(cols.data(), CKK, static_cast<int>(nin));
        Cm.noalias() = Wm.transpose() * Xm;
        Real* o = out.data.data() + static_cast<std::size_t>(n) * Cout * Ho * Wo;
        col2im(cols.data(), Cout, Ho, Wo, k, stride, pad, o);
        for (int c = 0; c < Cout; ++c) {
            Real* plane = o + static_cast<std::size_t>(c) * Ho * Wo;
            for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i)
                plane[i] += b->val.data[c];
        }
    }
    return make(std::move(out), {x, w, b}, [stride, pad](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        const int N = px.val.dim(0), Cin = px.val.dim(1), H = px.val.dim(2), W = px.val.dim(3);
        const int Cout = pw.val.dim(1), k = pw.val.dim(2);
        const int Ho = n.val.dim(2), Wo = n.val.dim(3);
        const int CKK = Cout * k * k;
        const std::size_t nin = static_cast<std::size_t>(H) * W;
        std::vector<Real> cols(static_cast<std::size_t>(CKK) * nin);
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        CMatMap Wm(pw.val.data.data(), Cin, CKK);
        for (int b = 0; b < N; ++b) {
            const Real* g = n.grad.data.data() + static_cast<std::size_t>(b) * Cout * Ho * Wo;
            im2col(g, Cout, Ho, Wo, k, stride, pad, cols.data());
            CMatMap Cm(cols.data(), CKK, static_cast<int>(nin));
            if (px.requires_grad) {
                MatMap(px.grad.data.data() + static_cast<std::size_t>(b) * Cin * nin, Cin,
                       static_cast<int>(nin))
                    .noalias() += Wm * Cm;
            }
            if (pw.requires_grad) {
                CMatMap Xm(px.val.data.data() + static_cast<std::size_t>(b) * Cin * nin, Cin,
                           static_cast<int>(nin));
                MatMap(pw.grad.data.data(), Cin, CKK).noalias() += Xm * Cm.transpose();
            }
            if (pb.requires_grad) {
                for (int c = 0; c < Cout; ++c) {
                    const Real* plane = g + static_cast<std::size_t>(c) * Ho * Wo;
                    Real s = 0.0;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i)
                        s += plane[i];
                    pb.grad.data[c] += s;
                }
            }
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Real eps) {
    check_arg(x->val.ndim() == 4, "group_norm: input must be 4-d");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_arg(groups > 0 && C % groups == 0, "group_norm: channels not divisible by groups");
    check_arg(gamma->val.ndim() == 1 && gamma->val.dim(0) == C, "group_norm: gamma shape mismatch");
    check_arg(beta->val.ndim() == 1 && beta->val.dim(0) == C, "group_norm: beta shape mismatch");
    const int cg = C / groups;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t gsize = static_cast<std::size_t>(cg) * plane;

    Tensor out(x->val.shape);
    // Saved statistics per (sample, group) for the backward pass.
    auto mu = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(N) * groups);
    auto istd = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(N) * groups);
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + g * cg) * plane;
            Real m = 0.0;
            for (std::size_t i = 0; i < gsize; ++i) m += x->val.data[base + i];
            m /= static_cast<Real>(gsize);
            Real v = 0.0;
            for (std::size_t i = 0; i < gsize; ++i) {
                const Real d = x->val.data[base + i] - m;
                v += d * d;
            }
            v /= static_cast<Real>(gsize);
            const Real is = 1.0 / std::sqrt(v + eps);
            (*mu)[static_cast<std::size_t>(n) * groups + g] = m;
            (*istd)[static_cast<std::size_t>(n) * groups + g] = is;
            for (int c = 0; c < cg; ++c) {
                const int ch = g * cg + c;
                const std::size_t cb = base + static_cast<std::size_t>(c) * plane;
                const Real ga = gamma->val.data[ch], be = beta->val.data[ch];
                for (std::size_t i = 0; i < plane; ++i)
                    out.data[cb + i] = (x->val.data[cb + i] - m) * is * ga + be;
            }
        }
    }
    return make(std::move(out), {x, gamma, beta}, [groups, mu, istd](Node& n) {
        Node& px = *n.parents[0];
        Node& pg = *n.parents[1];
        Node& pbt = *n.parents[2];
        const int N = px.val.dim(0), C = px.val.dim(1), H = px.val.dim(2), W = px.val.dim(3);
        const int cg = C / groups;
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const std::size_t gsize = static_cast<std::size_t>(cg) * plane;
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pbt.requires_grad) pbt.ensure_grad();
        for (int b = 0; b < N; ++b) {
            for (int g = 0; g < groups; ++g) {
                const std::size_t base = (static_cast<std::size_t>(b) * C + g * cg) * plane;
                const Real m = (*mu)[static_cast<std::size_t>(b) * groups + g];
                const Real is = (*istd)[static_cast<std::size_t>(b) * groups + g];
                // dxhat = dy * gamma; accumulate the two reduction terms first.
                Real sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int c = 0; c < cg; ++c) {
                    const int ch = g * cg + c;
                    const std::size_t cb = base + static_cast<std::size_t>(c) * plane;
                    const Real ga = pg.val.data[ch];
                    for (std::size_t i = 0; i < plane; ++i) {
                        const Real xhat = (px.val.data[cb + i] - m) * is;
                        const Real dy = n.grad.data[cb + i];
                        const Real dxh = dy * ga;
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat;
                        if (pg.requires_grad) pg.grad.data[ch] += dy * xhat;
                        if (pbt.requires_grad) pbt.grad.data[ch] += dy;
                    }
                }
                if (px.requires_grad) {
                    const Real inv_m = 1.0 / static_cast<Real>(gsize);
                    for (int c = 0; c < cg; ++c) {
                        const int ch = g * cg + c;
                        const std::size_t cb = base + static_cast<std::size_t>(c) * plane;
                        const Real ga = pg.val.data[ch];
                        for (std::size_t i = 0; i < plane; ++i) {
                            const Real xhat = (px.val.data[cb + i] - m) * is;
                            const Real dxh = n.grad.data[cb + i] * ga;
                            px.grad.data[cb + i] +=
                                is * (dxh - inv_m * sum_dxhat - inv_m * xhat * sum_dxhat_xhat);
                        }
                    }
                }
            }
        }
    });
}

Var avg_pool2d(const Var& x) {
    check_arg(x->val.ndim() == 4, "avg_pool2d: input must be 4-d");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_arg(H % 2 == 0 && W % 2 == 0, "avg_pool2d: spatial dims must be even");
    const int Ho = H / 2, Wo = W / 2;
    Tensor out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j)
                    out.at4(n, c, i, j) = 0.25 * (x->val.at4(n, c, 2 * i, 2 * j) +
                                                  x->val.at4(n, c, 2 * i, 2 * j + 1) +
                                                  x->val.at4(n, c, 2 * i + 1, 2 * j) +
                                                  x->val.at4(n, c, 2 * i + 1, 2 * j + 1));
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const int N = n.val.dim(0), C = n.val.dim(1), Ho = n.val.dim(2), Wo = n.val.dim(3);
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const Real g = 0.25 * n.grad.at4(b, c, i, j);
                        p.grad.at4(b, c, 2 * i, 2 * j) += g;
                        p.grad.at4(b, c, 2 * i, 2 * j + 1) += g;
                        p.grad.at4(b, c, 2 * i + 1, 2 * j) += g;
                        p.grad.at4(b, c, 2 * i + 1, 2 * j + 1) += g;
                    }
    });
}

namespace {

// One separable pass along the last axis; rows = all leading dims collapsed.
void filter_last_axis(const Real* in, int rows, int len, const std::vector<Real>& k, Real* out) {
    const int L = static_cast<int>(k.size());
    const int olen = len - L + 1;
    for (int r = 0; r < rows; ++r) {
        const Real* src = in + static_cast<std::size_t>(r) * len;
        Real* dst = out + static_cast<std::size_t>(r) * olen;
        for (int i = 0; i < olen; ++i) {
            Real s = 0.0;
            for (int t = 0; t < L; ++t) s += k[t] * src[i + t];
            dst[i] = s;
        }
    }
}

// Adjoint of filter_last_axis: scatter output grads back over the window.
void filter_last_axis_adj(const Real* gout, int rows, int len, const std::vector<Real>& k,
                          Real* gin) {
    const int L = static_cast<int>(k.size());
    const int olen = len - L + 1;
    for (int r = 0; r < rows; ++r) {
        const Real* src = gout + static_cast<std::size_t>(r) * olen;
        Real* dst = gin + static_cast<std::size_t>(r) * len;
        for (int i = 0; i < olen; ++i) {
            const Real g = src[i];
            for (int t = 0; t < L; ++t) dst[i + t] += k[t] * g;
        }
    }
}

void transpose_hw(const Real* in, int planes, int H, int W, Real* out) {
    for (int p = 0; p < planes; ++p) {
        const Real* src = in + static_cast<std::size_t>(p) * H * W;
        Real* dst = out + static_cast<std::size_t>(p) * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) dst[static_cast<std::size_t>(j) * H + i] = src[static_cast<std::size_t>(i) * W + j];
    }
}

}  // namespace

Var sep_filter2d_valid(const Var& x, const std::vector<Real>& kernel) {
    check_arg(x->val.ndim() == 4, "sep_filter2d_valid: input must be 4-d");
    const int L = static_cast<int>(kernel.size());
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_arg(L >= 1 && H >= L && W >= L, "sep_filter2d_valid: kernel larger than input");
    const int Ho = H - L + 1, Wo = W - L + 1;
    const int planes = N * C;

    // rows pass: {*, H, W} -> {*, H, Wo}; then transpose, filter, transpose back.
    std::vector<Real> tmp(static_cast<std::size_t>(planes) * H * Wo);
    filter_last_axis(x->val.data.data(), planes * H, W, kernel, tmp.data());
    std::vector<Real> tmpT(static_cast<std::size_t>(planes) * Wo * H);
    transpose_hw(tmp.data(), planes, H, Wo, tmpT.data());
    std::vector<Real> outT(static_cast<std::size_t>(planes) * Wo * Ho);
    filter_last_axis(tmpT.data(), planes * Wo, H, kernel, outT.data());
    Tensor out({N, C, Ho, Wo});
    transpose_hw(outT.data(), planes, Wo, Ho, out.data.data());

    return make(std::move(out), {x}, [kernel](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const int N = p.val.dim(0), C = p.val.dim(1), H = p.val.dim(2), W = p.val.dim(3);
        const int Ho = n.val.dim(2), Wo = n.val.dim(3);
        const int planes = N * C;
        std::vector<Real> gT(static_cast<std::size_t>(planes) * Wo * Ho);
        transpose_hw(n.grad.data.data(), planes, Ho, Wo, gT.data());
        std::vector<Real> tT(static_cast<std::size_t>(planes) * Wo * H, 0.0);
        filter_last_axis_adj(gT.data(), planes * Wo, H, kernel, tT.data());
        std::vector<Real> t(static_cast<std::size_t>(planes) * H * Wo);
        transpose_hw(tT.data(), planes, Wo, H, t.data());
        std::vector<Real> gx(static_cast<std::size_t>(planes) * H * W, 0.0);
        filter_last_axis_adj(t.data(), planes * H, W, kernel, gx.data());
        for (std::size_t i = 0; i < gx.size(); ++i) p.grad.data[i] += gx[i];
    });
}

// --- reductions ---

Var sum_all(const Var& x) {
    Real s = 0.0;
    for (Real v : x->val.data) s += v;
    return make(Tensor({1}, {s}), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        const Real g = n.grad.data[0];
        for (Real& v : p.grad.data) v += g;
    });
}

Var mean_all(const Var& x) {
    check_arg(x->val.numel() > 0, "mean_all: empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<Real>(x->val.numel()));
}

Var row_sum(const Var& x) {
    check_arg(x->val.ndim() == 2, "row_sum: input must be 2-d");
    const int N = x->val.dim(0), F = x->val.dim(1);
    Tensor out({N, 1});
    for (int n = 0; n < N; ++n) {
        Real s = 0.0;
        for (int f = 0; f < F; ++f) s += x->val.data[static_cast<std::size_t>(n) * F + f];
        out.data[n] = s;
    }
    return make(std::move(out), {x}, [N = N, F = F](Node& n) {
        Node& p = *n.parents[0];
        p.ensure_grad();
        for (int b = 0; b < N; ++b) {
            const Real g = n.grad.data[b];
            for (int f = 0; f < F; ++f) p.grad.data[static_cast<std::size_t>(b) * F + f] += g;
        }
    });
}

Var mse_loss(const Var& a, const Var& b) { return mean_all(square(sub(a, b))); }

}  // namespace lw::ag
