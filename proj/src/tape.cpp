#include "ablate/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ablate {

const Tensor& Var::val() const { return tape->value(*this); }

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + a.shape_str() + ") vs (" +
                                b.shape_str() + ")");
}

void check_finite(const char* op, const Tensor& t) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
}

}  // namespace

Var Tape::push(Tensor value, const char* op, std::function<void(Tape&, const Tensor&)> back) {
    check_finite(op, value);
    nodes_.push_back(Node{std::move(value), std::move(back)});
    return Var{this, nodes_.size() - 1};
}

void Tape::check_same_tape(const Var& v) const {
    if (v.tape != this) throw std::invalid_argument("op inputs live on different tapes");
}

Var Tape::leaf(Tensor value) {
    return push(std::move(value), "leaf", nullptr);
}

void Tape::accumulate(size_t id, const Tensor& g) {
    if (!grad_set_[id]) {
        grads_[id] = g;
        grad_set_[id] = 1;
        return;
    }
    Tensor& dst = grads_[id];
    for (size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
}

void Tape::backward(const Var& loss) {
    check_same_tape(loss);
    if (!value(loss).is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got shape (" +
                                    value(loss).shape_str() + ")");
    grads_.assign(nodes_.size(), Tensor{});
    grad_set_.assign(nodes_.size(), 0);
    grads_[loss.id] = Tensor::scalar(1.0);
    grad_set_[loss.id] = 1;
    for (size_t i = loss.id + 1; i-- > 0;) {
        if (!grad_set_[i] || !nodes_[i].back) continue;
        nodes_[i].back(*this, grads_[i]);
    }
}

Tensor Tape::grad(const Var& v) const {
    check_same_tape(v);
    if (v.id < grad_set_.size() && grad_set_[v.id]) return grads_[v.id];
    return Tensor::zeros(value(v).shape);
}

// --- ops ---------------------------------------------------------------

Var Tape::add(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_error("add", x, y);
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];
    size_t ia = a.id, ib = b.id;
    return push(std::move(out), "add", [ia, ib](Tape& t, const Tensor& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_error("sub", x, y);
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= y.data[i];
    size_t ia = a.id, ib = b.id;
    return push(std::move(out), "sub", [ia, ib](Tape& t, const Tensor& g) {
        t.accumulate(ia, g);
        Tensor ng = g;
        for (double& v : ng.data) v = -v;
        t.accumulate(ib, ng);
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_error("mul", x, y);
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= y.data[i];
    size_t ia = a.id, ib = b.id;
    return push(std::move(out), "mul", [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& xv = t.nodes_[ia].value;
        const Tensor& yv = t.nodes_[ib].value;
        Tensor ga = g, gb = g;
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] = g.data[i] * yv.data[i];
            gb.data[i] = g.data[i] * xv.data[i];
        }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

Var Tape::scale(Var a, double s) {
    check_same_tape(a);
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    size_t ia = a.id;
    return push(std::move(out), "scale", [ia, s](Tape& t, const Tensor& g) {
        Tensor ga = g;
        for (double& v : ga.data) v *= s;
        t.accumulate(ia, ga);
    });
}

Var Tape::add_const(Var a, double c) {
    check_same_tape(a);
    Tensor out = value(a);
    for (double& v : out.data) v += c;
    size_t ia = a.id;
    return push(std::move(out), "add_const",
                [ia](Tape& t, const Tensor& g) { t.accumulate(ia, g); });
}

Var Tape::matmul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.shape.size() != 2 || y.shape.size() != 2 || x.shape[1] != y.shape[0])
        shape_error("matmul", x, y);
    size_t n = x.shape[0], k = x.shape[1], m = y.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (size_t i = 0; i < n; ++i)
        for (size_t p = 0; p < k; ++p) {
            double xv = x.data[i * k + p];
            if (xv == 0.0) continue;
            const double* yr = &y.data[p * m];
            double* orow = &out.data[i * m];
            for (size_t j = 0; j < m; ++j) orow[j] += xv * yr[j];
        }
    size_t ia = a.id, ib = b.id;
    return push(std::move(out), "matmul", [ia, ib, n, k, m](Tape& t, const Tensor& g) {
        const Tensor& xv = t.nodes_[ia].value;
        const Tensor& yv = t.nodes_[ib].value;
        Tensor ga = Tensor::zeros({n, k});
        Tensor gb = Tensor::zeros({k, m});
        // dX = G Y^T, dY = X^T G
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < m; ++j) {
                double gij = g.data[i * m + j];
                if (gij == 0.0) continue;
                for (size_t p = 0; p < k; ++p) {
                    ga.data[i * k + p] += gij * yv.data[p * m + j];
                    gb.data[p * m + j] += gij * xv.data[i * k + p];
                }
            }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

Var Tape::add_bias(Var xv, Var bv) {
    check_same_tape(xv);
    check_same_tape(bv);
    const Tensor& x = value(xv);
    const Tensor& b = value(bv);
    if (x.shape.size() != 2 || b.shape.size() != 1 || x.shape[1] != b.shape[0])
        shape_error("add_bias", x, b);
    size_t n = x.shape[0], m = x.shape[1];
    Tensor out = x;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) out.data[i * m + j] += b.data[j];
    size_t ix = xv.id, ib = bv.id;
    return push(std::move(out), "add_bias", [ix, ib, n, m](Tape& t, const Tensor& g) {
        t.accumulate(ix, g);
        Tensor gb = Tensor::zeros({m});
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < m; ++j) gb.data[j] += g.data[i * m + j];
        t.accumulate(ib, gb);
    });
}

Var Tape::tanh_op(Var a) {
    check_same_tape(a);
    Tensor out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    size_t ia = a.id;
    size_t self = nodes_.size();  // the node we are about to push
    return push(std::move(out), "tanh", [ia, self](Tape& t, const Tensor& g) {
        const Tensor& y = t.nodes_[self].value;
        Tensor ga = g;
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] = g.data[i] * (1.0 - y.data[i] * y.data[i]);
        t.accumulate(ia, ga);
    });
}

Var Tape::relu(Var a) {
    check_same_tape(a);
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    size_t ia = a.id;
    return push(std::move(out), "relu", [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.nodes_[ia].value;
        Tensor ga = g;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] <= 0.0) ga.data[i] = 0.0;
        t.accumulate(ia, ga);
    });
}

Var Tape::sum(Var a) {
    check_same_tape(a);
    double s = 0.0;
    for (double v : value(a).data) s += v;
    size_t ia = a.id;
    return push(Tensor::scalar(s), "sum", [ia](Tape& t, const Tensor& g) {
        Tensor ga = Tensor::full(t.nodes_[ia].value.shape, g.data[0]);
        t.accumulate(ia, ga);
    });
}

Var Tape::mean_all(Var a) {
    check_same_tape(a);
    size_t n = value(a).size();
    if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
    double s = 0.0;
    for (double v : value(a).data) s += v;
    size_t ia = a.id;
    double inv = 1.0 / static_cast<double>(n);
    return push(Tensor::scalar(s * inv), "mean", [ia, inv](Tape& t, const Tensor& g) {
        Tensor ga = Tensor::full(t.nodes_[ia].value.shape, g.data[0] * inv);
        t.accumulate(ia, ga);
    });
}

Var Tape::sum_sq(Var a) {
    check_same_tape(a);
    double s = 0.0;
    for (double v : value(a).data) s += v * v;
    size_t ia = a.id;
    return push(Tensor::scalar(s), "sum_sq", [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.nodes_[ia].value;
        Tensor ga = x;
        for (double& v : ga.data) v *= 2.0 * g.data[0];
        t.accumulate(ia, ga);
    });
}

Var Tape::softmax_rows(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    if (x.shape.size() != 2) throw std::invalid_argument("softmax_rows: expected matrix");
    size_t n = x.shape[0], m = x.shape[1];
    Tensor out = x;
    for (size_t i = 0; i < n; ++i) {
        double* row = &out.data[i * m];
        double mx = row[0];
        for (size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (size_t j = 0; j < m; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (size_t j = 0; j < m; ++j) row[j] /= z;
    }
    size_t ia = a.id;
    size_t self = nodes_.size();
    return push(std::move(out), "softmax_rows", [ia, self, n, m](Tape& t, const Tensor& g) {
        const Tensor& y = t.nodes_[self].value;
        Tensor ga = Tensor::zeros({n, m});
        for (size_t i = 0; i < n; ++i) {
            const double* yr = &y.data[i * m];
            const double* gr = &g.data[i * m];
            double dot = 0.0;
            for (size_t j = 0; j < m; ++j) dot += yr[j] * gr[j];
            for (size_t j = 0; j < m; ++j) ga.data[i * m + j] = yr[j] * (gr[j] - dot);
        }
        t.accumulate(ia, ga);
    });
}

Var Tape::gather_rows(Var table, std::vector<size_t> idx) {
    check_same_tape(table);
    const Tensor& tb = value(table);
    if (tb.shape.size() != 2) throw std::invalid_argument("gather_rows: expected matrix table");
    size_t m = tb.shape[1];
    Tensor out = Tensor::zeros({idx.size(), m});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= tb.shape[0]) throw std::out_of_range("gather_rows: index out of range");
        for (size_t j = 0; j < m; ++j) out.data[i * m + j] = tb.data[idx[i] * m + j];
    }
    size_t it = table.id;
    return push(std::move(out), "gather_rows",
                [it, idx = std::move(idx), m](Tape& t, const Tensor& g) {
                    Tensor gt = Tensor::zeros(t.nodes_[it].value.shape);
                    for (size_t i = 0; i < idx.size(); ++i)
                        for (size_t j = 0; j < m; ++j) gt.data[idx[i] * m + j] += g.data[i * m + j];
                    t.accumulate(it, gt);
                });
}

Var Tape::concat_cols(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.shape.size() != 2 || y.shape.size() != 2 || x.shape[0] != y.shape[0])
        shape_error("concat_cols", x, y);
    size_t n = x.shape[0], p = x.shape[1], q = y.shape[1];
    Tensor out = Tensor::zeros({n, p + q});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < p; ++j) out.data[i * (p + q) + j] = x.data[i * p + j];
        for (size_t j = 0; j < q; ++j) out.data[i * (p + q) + p + j] = y.data[i * q + j];
    }
    size_t ia = a.id, ib = b.id;
    return push(std::move(out), "concat_cols", [ia, ib, n, p, q](Tape& t, const Tensor& g) {
        Tensor ga = Tensor::zeros({n, p}), gb = Tensor::zeros({n, q});
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < p; ++j) ga.data[i * p + j] = g.data[i * (p + q) + j];
            for (size_t j = 0; j < q; ++j) gb.data[i * q + j] = g.data[i * (p + q) + p + j];
        }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

Var Tape::row_block_dot(Var q, Var k, size_t block) {
    check_same_tape(q);
    check_same_tape(k);
    const Tensor& Q = value(q);
    const Tensor& K = value(k);
    if (Q.shape.size() != 2 || K.shape.size() != 2 || Q.shape[1] != K.shape[1] ||
        K.shape[0] != Q.shape[0] * block)
        shape_error("row_block_dot", Q, K);
    size_t n = Q.shape[0], d = Q.shape[1];
    Tensor out = Tensor::zeros({n, block});
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < block; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < d; ++c) s += Q.data[i * d + c] * K.data[(i * block + j) * d + c];
            out.data[i * block + j] = s;
        }
    size_t iq = q.id, ik = k.id;
    return push(std::move(out), "row_block_dot", [iq, ik, n, d, block](Tape& t, const Tensor& g) {
        const Tensor& Q = t.nodes_[iq].value;
        const Tensor& K = t.nodes_[ik].value;
        Tensor gq = Tensor::zeros({n, d}), gk = Tensor::zeros({n * block, d});
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < block; ++j) {
                double gij = g.data[i * block + j];
                if (gij == 0.0) continue;
                for (size_t c = 0; c < d; ++c) {
                    gq.data[i * d + c] += gij * K.data[(i * block + j) * d + c];
                    gk.data[(i * block + j) * d + c] += gij * Q.data[i * d + c];
                }
            }
        t.accumulate(iq, gq);
        t.accumulate(ik, gk);
    });
}

Var Tape::row_block_mix(Var w, Var v, size_t block) {
    check_same_tape(w);
    check_same_tape(v);
    const Tensor& W = value(w);
    const Tensor& V = value(v);
    if (W.shape.size() != 2 || V.shape.size() != 2 || W.shape[1] != block ||
        V.shape[0] != W.shape[0] * block)
        shape_error("row_block_mix", W, V);
    size_t n = W.shape[0], d = V.shape[1];
    Tensor out = Tensor::zeros({n, d});
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < block; ++j) {
            double wij = W.data[i * block + j];
            for (size_t c = 0; c < d; ++c) out.data[i * d + c] += wij * V.data[(i * block + j) * d + c];
        }
    size_t iw = w.id, iv = v.id;
    return push(std::move(out), "row_block_mix", [iw, iv, n, d, block](Tape& t, const Tensor& g) {
        const Tensor& W = t.nodes_[iw].value;
        const Tensor& V = t.nodes_[iv].value;
        Tensor gw = Tensor::zeros({n, block}), gv = Tensor::zeros({n * block, d});
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < block; ++j) {
                double wij = W.data[i * block + j];
                double s = 0.0;
                for (size_t c = 0; c < d; ++c) {
                    s += g.data[i * d + c] * V.data[(i * block + j) * d + c];
                    gv.data[(i * block + j) * d + c] += wij * g.data[i * d + c];
                }
                gw.data[i * block + j] = s;
            }
        t.accumulate(iw, gw);
        t.accumulate(iv, gv);
    });
}

Var Tape::stop_grad(Var a) {
    check_same_tape(a);
    return push(value(a), "stop_grad", nullptr);
}

}  // namespace ablate
