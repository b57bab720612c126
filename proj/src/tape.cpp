#include "modbind/tape.hpp"

#include <cmath>
#include <string>

#include "modbind/errors.hpp"

namespace modbind {

Var Tape::push(TapeNode node) {
    node.adjoint = Matrix(node.value.rows(), node.value.cols());
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_var(Var v, const char* op) const {
    if (v.index < 0 || static_cast<size_t>(v.index) >= nodes_.size()) {
        throw ContractError(std::string(op) + ": dangling tape handle");
    }
}

const TapeNode& Tape::in(Var v) const { return nodes_[static_cast<size_t>(v.index)]; }

const Matrix& Tape::value(Var v) const {
    check_var(v, "value");
    return in(v).value;
}

const Matrix& Tape::adjoint(Var v) const {
    check_var(v, "adjoint");
    return in(v).adjoint;
}

Var Tape::constant(Matrix value) {
    value.ensure_finite("tape constant");
    return push(TapeNode{OpTag::constant, -1, -1, 0.0, std::move(value), {}});
}

Var Tape::leaf(Matrix value) {
    value.ensure_finite("tape leaf");
    return push(TapeNode{OpTag::leaf, -1, -1, 0.0, std::move(value), {}});
}

Var Tape::matmul(Var a, Var b) {
    check_var(a, "matmul");
    check_var(b, "matmul");
    Matrix v = Matrix::matmul(in(a).value, in(b).value);
    return push(TapeNode{OpTag::matmul, a.index, b.index, 0.0, std::move(v), {}});
}

Var Tape::transpose(Var a) {
    check_var(a, "transpose");
    return push(TapeNode{OpTag::transpose, a.index, -1, 0.0, in(a).value.transposed(), {}});
}

Var Tape::add(Var a, Var b) {
    check_var(a, "add");
    check_var(b, "add");
    Matrix v = Matrix::add(in(a).value, in(b).value);
    return push(TapeNode{OpTag::add, a.index, b.index, 0.0, std::move(v), {}});
}

Var Tape::sub(Var a, Var b) {
    check_var(a, "sub");
    check_var(b, "sub");
    Matrix v = Matrix::sub(in(a).value, in(b).value);
    return push(TapeNode{OpTag::sub, a.index, b.index, 0.0, std::move(v), {}});
}

Var Tape::hadamard(Var a, Var b) {
    check_var(a, "hadamard");
    check_var(b, "hadamard");
    Matrix v = Matrix::hadamard(in(a).value, in(b).value);
    return push(TapeNode{OpTag::hadamard, a.index, b.index, 0.0, std::move(v), {}});
}

Var Tape::scale(Var a, double factor) {
    check_var(a, "scale");
    Matrix v = in(a).value.scaled(factor);
    return push(TapeNode{OpTag::scale_const, a.index, -1, factor, std::move(v), {}});
}

Var Tape::scale_by(Var a, Var scalar_node) {
    check_var(a, "scale_by");
    check_var(scalar_node, "scale_by");
    const Matrix& s = in(scalar_node).value;
    if (s.rows() != 1 || s.cols() != 1) {
        throw DimensionError("scale_by: scalar operand has shape " + shape_string(s));
    }
    Matrix v = in(a).value.scaled(s.at(0, 0));
    return push(TapeNode{OpTag::scale_node, a.index, scalar_node.index, 0.0, std::move(v), {}});
}

Var Tape::add_row(Var a, Var row) {
    check_var(a, "add_row");
    check_var(row, "add_row");
    Matrix v = Matrix::add_row_vector(in(a).value, in(row).value);
    return push(TapeNode{OpTag::add_row, a.index, row.index, 0.0, std::move(v), {}});
}

Var Tape::relu(Var a) {
    check_var(a, "relu");
    return push(TapeNode{OpTag::relu, a.index, -1, 0.0, Matrix::relu(in(a).value), {}});
}

Var Tape::tanh(Var a) {
    check_var(a, "tanh");
    return push(TapeNode{OpTag::tanh_act, a.index, -1, 0.0, Matrix::tanh(in(a).value), {}});
}

Var Tape::l2_normalize_rows(Var a) {
    check_var(a, "l2_normalize_rows");
    Matrix v = in(a).value.l2_normalized_rows();
    return push(TapeNode{OpTag::l2norm_rows, a.index, -1, 0.0, std::move(v), {}});
}

Var Tape::row_logsumexp(Var a) {
    check_var(a, "row_logsumexp");
    const Matrix& x = in(a).value;
    Matrix v(x.rows(), 1);
    for (size_t i = 0; i < x.rows(); ++i) {
        double mx = x.at(i, 0);
        for (size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (size_t j = 0; j < x.cols(); ++j) sum += std::exp(x.at(i, j) - mx);
        v.at(i, 0) = mx + std::log(sum);
    }
    v.ensure_finite("row_logsumexp");
    return push(TapeNode{OpTag::row_logsumexp, a.index, -1, 0.0, std::move(v), {}});
}

Var Tape::take_diag(Var a) {
    check_var(a, "take_diag");
    const Matrix& x = in(a).value;
    if (x.rows() != x.cols()) {
        throw DimensionError("take_diag: matrix is not square: " + shape_string(x));
    }
    Matrix v(x.rows(), 1);
    for (size_t i = 0; i < x.rows(); ++i) v.at(i, 0) = x.at(i, i);
    return push(TapeNode{OpTag::take_diag, a.index, -1, 0.0, std::move(v), {}});
}

Var Tape::mean_all(Var a) {
    check_var(a, "mean_all");
    Matrix v = Matrix::scalar(in(a).value.mean_all());
    return push(TapeNode{OpTag::mean_all, a.index, -1, 0.0, std::move(v), {}});
}

Var Tape::exp(Var a) {
    check_var(a, "exp");
    Matrix v = in(a).value;
    for (double& x : v.data()) x = std::exp(x);
    v.ensure_finite("exp");
    return push(TapeNode{OpTag::exp_all, a.index, -1, 0.0, std::move(v), {}});
}

void Tape::backward(Var root) {
    check_var(root, "backward");
    TapeNode& r = nodes_[static_cast<size_t>(root.index)];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
        throw ContractError("backward: root must be 1x1, got " + shape_string(r.value));
    }
    for (auto& n : nodes_) {
        n.adjoint = Matrix(n.value.rows(), n.value.cols());
    }
    r.adjoint.at(0, 0) = 1.0;

    // Constants track no gradient: contributions into them are skipped
    // entirely, so a frozen target entering as a constant costs nothing in
    // the reverse sweep and its adjoint stays zero.
    const auto wants = [this](int i) {
        return nodes_[static_cast<size_t>(i)].op != OpTag::constant;
    };

    for (int idx = root.index; idx >= 0; --idx) {
        const TapeNode& n = nodes_[static_cast<size_t>(idx)];
        const Matrix& g = n.adjoint;
        switch (n.op) {
        case OpTag::constant:
        case OpTag::leaf:
            break;
        case OpTag::matmul: {
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            TapeNode& nb = nodes_[static_cast<size_t>(n.b)];
            if (wants(n.a)) {
                na.adjoint = Matrix::add(na.adjoint, Matrix::matmul(g, nb.value.transposed()));
            }
            if (wants(n.b)) {
                nb.adjoint = Matrix::add(nb.adjoint, Matrix::matmul(na.value.transposed(), g));
            }
            break;
        }
        case OpTag::transpose: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            na.adjoint = Matrix::add(na.adjoint, g.transposed());
            break;
        }
        case OpTag::add: {
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            TapeNode& nb = nodes_[static_cast<size_t>(n.b)];
            if (wants(n.a)) na.adjoint = Matrix::add(na.adjoint, g);
            if (wants(n.b)) nb.adjoint = Matrix::add(nb.adjoint, g);
            break;
        }
        case OpTag::sub: {
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            TapeNode& nb = nodes_[static_cast<size_t>(n.b)];
            if (wants(n.a)) na.adjoint = Matrix::add(na.adjoint, g);
            if (wants(n.b)) nb.adjoint = Matrix::sub(nb.adjoint, g);
            break;
        }
        case OpTag::hadamard: {
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            TapeNode& nb = nodes_[static_cast<size_t>(n.b)];
            if (wants(n.a)) na.adjoint = Matrix::add(na.adjoint, Matrix::hadamard(g, nb.value));
            if (wants(n.b)) nb.adjoint = Matrix::add(nb.adjoint, Matrix::hadamard(g, na.value));
            break;
        }
        case OpTag::scale_const: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            na.adjoint = Matrix::add(na.adjoint, g.scaled(n.scale));
            break;
        }
        case OpTag::scale_node: {
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            TapeNode& nb = nodes_[static_cast<size_t>(n.b)];
            const double s = nb.value.at(0, 0);
            if (wants(n.a)) na.adjoint = Matrix::add(na.adjoint, g.scaled(s));
            if (wants(n.b)) {
                double acc = 0.0;
                const auto& gd = g.data();
                const auto& ad = na.value.data();
                for (size_t i = 0; i < gd.size(); ++i) acc += gd[i] * ad[i];
                nb.adjoint.at(0, 0) += acc;
            }
            break;
        }
        case OpTag::add_row: {
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            TapeNode& nb = nodes_[static_cast<size_t>(n.b)];
            if (wants(n.a)) na.adjoint = Matrix::add(na.adjoint, g);
            if (wants(n.b)) nb.adjoint = Matrix::add(nb.adjoint, Matrix::colsum(g));
            break;
        }
        case OpTag::relu: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            Matrix dg = g;
            for (size_t i = 0; i < dg.data().size(); ++i) {
                if (na.value.data()[i] <= 0.0) dg.data()[i] = 0.0;
            }
            na.adjoint = Matrix::add(na.adjoint, dg);
            break;
        }
        case OpTag::tanh_act: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            Matrix dg = g;
            for (size_t i = 0; i < dg.data().size(); ++i) {
                const double y = n.value.data()[i];
                dg.data()[i] *= 1.0 - y * y;
            }
            na.adjoint = Matrix::add(na.adjoint, dg);
            break;
        }
        case OpTag::l2norm_rows: {
            if (!wants(n.a)) break;
            // y = x / |x|; dx = (g - (g.y) y) / |x| per row.
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            const Matrix& y = n.value;
            std::vector<double> norms = na.value.row_norms();
            Matrix dx(y.rows(), y.cols());
            for (size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
                const double inv = 1.0 / norms[i];
                for (size_t j = 0; j < y.cols(); ++j) {
                    dx.at(i, j) = (g.at(i, j) - dot * y.at(i, j)) * inv;
                }
            }
            na.adjoint = Matrix::add(na.adjoint, dx);
            break;
        }
        case OpTag::row_logsumexp: {
            if (!wants(n.a)) break;
            // d lse_i / d x_ij = softmax(x_i)_j = exp(x_ij - lse_i).
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            const Matrix& x = na.value;
            Matrix dx(x.rows(), x.cols());
            for (size_t i = 0; i < x.rows(); ++i) {
                const double gi = g.at(i, 0);
                const double li = n.value.at(i, 0);
                for (size_t j = 0; j < x.cols(); ++j) {
                    dx.at(i, j) = gi * std::exp(x.at(i, j) - li);
                }
            }
            na.adjoint = Matrix::add(na.adjoint, dx);
            break;
        }
        case OpTag::take_diag: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            Matrix dx(na.value.rows(), na.value.cols());
            for (size_t i = 0; i < dx.rows(); ++i) dx.at(i, i) = g.at(i, 0);
            na.adjoint = Matrix::add(na.adjoint, dx);
            break;
        }
        case OpTag::mean_all: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            const double w = g.at(0, 0) / static_cast<double>(na.value.size());
            Matrix dx(na.value.rows(), na.value.cols());
            for (double& x : dx.data()) x = w;
            na.adjoint = Matrix::add(na.adjoint, dx);
            break;
        }
        case OpTag::exp_all: {
            if (!wants(n.a)) break;
            TapeNode& na = nodes_[static_cast<size_t>(n.a)];
            na.adjoint = Matrix::add(na.adjoint, Matrix::hadamard(g, n.value));
            break;
        }
        }
    }
}

} // namespace modbind
