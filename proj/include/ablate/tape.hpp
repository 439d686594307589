#pragma once

#include <functional>
#include <vector>

#include "ablate/tensor.hpp"

namespace ablate {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    size_t id = 0;

    const Tensor& val() const;
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
// the vector order is already topological; backward walks it once in reverse.
// Single-owner, not thread-safe.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);

    const Tensor& value(const Var& v) const { return nodes_[v.id].value; }

    // Accumulates gradients for every node reachable from `loss`, which must
    // be scalar. Gradients from a previous backward call are discarded.
    void backward(const Var& loss);

    // Gradient of the last backward() loss w.r.t. v (zeros if unreached).
    Tensor grad(const Var& v) const;

    size_t num_nodes() const { return nodes_.size(); }

    // --- primitive ops -------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);            // elementwise
    Var scale(Var a, double s);
    Var add_const(Var a, double c);
    Var matmul(Var a, Var b);         // (n x k) * (k x m)
    Var add_bias(Var x, Var b);       // (n x m) + broadcast row (m)
    Var tanh_op(Var a);
    Var relu(Var a);
    Var sum(Var a);                   // -> scalar
    Var mean_all(Var a);              // -> scalar
    Var sum_sq(Var a);                // -> scalar, sum of squares
    Var softmax_rows(Var a);          // row-wise softmax on (n x m)
    Var gather_rows(Var table, std::vector<size_t> idx);   // -> (|idx| x m)
    Var concat_cols(Var a, Var b);    // (n x p), (n x q) -> (n x p+q)
    // scores[i][j] = q.row(i) . k.row(i*block + j), j in [0, block)
    Var row_block_dot(Var q, Var k, size_t block);
    // out.row(i) = sum_j w[i][j] * v.row(i*block + j)
    Var row_block_mix(Var w, Var v, size_t block);
    // Identity value; propagates exactly zero gradient upstream.
    Var stop_grad(Var a);

private:
    struct Node {
        Tensor value;
        // Accumulates into grads_ of this tape given the node's own gradient.
        std::function<void(Tape&, const Tensor&)> back;
    };

    Var push(Tensor value, const char* op, std::function<void(Tape&, const Tensor&)> back);
    void accumulate(size_t id, const Tensor& g);
    void check_same_tape(const Var& v) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> grad_set_;
};

}  // namespace ablate
