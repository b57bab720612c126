#pragma once

#include <cstdint>
#include <vector>

#include "modbind/matrix.hpp"

namespace modbind {

class Tape;

// Lightweight handle to a node on a tape. Valid as long as the tape lives.
struct Var {
    int index = -1;
};

enum class OpTag : uint8_t {
    constant,       // no gradient tracked
    leaf,           // parameter: gradient lands in its adjoint
    matmul,         // a * b
    transpose,      // a^T
    add,            // a + b
    sub,            // a - b
    hadamard,       // a .* b
    scale_const,    // a * scalar literal
    scale_node,     // a * s, s a 1x1 node broadcast over a
    add_row,        // a (kxd) + row (1xd) broadcast
    relu,
    tanh_act,
    l2norm_rows,    // each row scaled to unit norm
    row_logsumexp,  // kxn -> kx1, max-subtracted
    take_diag,      // kxk -> kx1
    mean_all,       // any -> 1x1
    exp_all,        // elementwise exp
};

// One node of the reverse-mode computation graph: the operation, its input
// node indices, the cached forward value, and the adjoint accumulated by
// backward(). The graph is acyclic by construction (inputs always precede
// their consumers in creation order).
struct TapeNode {
    OpTag op = OpTag::constant;
    int a = -1;
    int b = -1;
    double scale = 0.0; // scale_const only
    Matrix value;
    Matrix adjoint;     // same shape as value; zeros until backward runs
};

// Arena for one forward/backward pass. Build the graph through the factory
// ops, call backward(root) on a 1x1 node, then read leaf adjoints.
class Tape {
public:
    Var constant(Matrix value);
    Var leaf(Matrix value);

    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double factor);
    Var scale_by(Var a, Var scalar_node);
    Var add_row(Var a, Var row);
    Var relu(Var a);
    Var tanh(Var a);
    Var l2_normalize_rows(Var a);
    Var row_logsumexp(Var a);
    Var take_diag(Var a);
    Var mean_all(Var a);
    Var exp(Var a);

    // Reverse sweep from a scalar root. Every leaf's adjoint ends up equal
    // to d(root)/d(leaf); leaves not reachable from the root keep zeros.
    void backward(Var root);

    const Matrix& value(Var v) const;
    const Matrix& adjoint(Var v) const;

    size_t size() const noexcept { return nodes_.size(); }
    const TapeNode& node(size_t i) const { return nodes_[i]; }

private:
    Var push(TapeNode node);
    const TapeNode& in(Var v) const;
    void check_var(Var v, const char* op) const;

    std::vector<TapeNode> nodes_;
};

} // namespace modbind
