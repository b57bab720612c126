#include "modbind/loss.hpp"

#include "modbind/errors.hpp"

namespace modbind {

namespace {

Var scaled_logits(Tape& tape, Var queries, Var targets, Var log_inv_tau) {
    const Matrix& q = tape.value(queries);
    const Matrix& t = tape.value(targets);
    if (!q.same_shape(t)) {
        throw DimensionError("infonce: operand shapes disagree: " + shape_string(q) +
                             " vs " + shape_string(t));
    }
    if (q.rows() < 1) throw DimensionError("infonce: empty batch");
    Var qn = tape.l2_normalize_rows(queries);
    Var tn = tape.l2_normalize_rows(targets);
    Var sims = tape.matmul(qn, tape.transpose(tn));
    Var inv_tau = tape.exp(log_inv_tau);
    return tape.scale_by(sims, inv_tau);
}

// Mean over rows of (logsumexp(row) - diagonal), i.e. the mean softmax
// cross-entropy with the matched pair as the positive class.
Var diagonal_nce(Tape& tape, Var logits) {
    Var lse = tape.row_logsumexp(logits);
    Var diag = tape.take_diag(logits);
    return tape.mean_all(tape.sub(lse, diag));
}

} // namespace

LossOutput infonce_directional(Tape& tape, Var queries, Var targets, Var log_inv_tau) {
    Var logits = scaled_logits(tape, queries, targets, log_inv_tau);
    LossOutput out;
    out.loss = diagonal_nce(tape, logits);
    out.logits = tape.value(logits);
    return out;
}

LossOutput infonce_symmetric(Tape& tape, Var lhs, Var rhs, Var log_inv_tau) {
    Var logits = scaled_logits(tape, lhs, rhs, log_inv_tau);
    Var forward = diagonal_nce(tape, logits);
    Var backward = diagonal_nce(tape, tape.transpose(logits));
    LossOutput out;
    out.loss = tape.scale(tape.add(forward, backward), 0.5);
    out.logits = tape.value(logits);
    return out;
}

double infonce_directional_value(const Matrix& queries, const Matrix& targets,
                                 const Temperature& temp) {
    Tape tape;
    Var q = tape.constant(queries);
    Var t = tape.constant(targets);
    Var s = tape.constant(Matrix::scalar(temp.log_inv_tau));
    return tape.value(infonce_directional(tape, q, t, s).loss).at(0, 0);
}

double infonce_symmetric_value(const Matrix& lhs, const Matrix& rhs, const Temperature& temp) {
    Tape tape;
    Var a = tape.constant(lhs);
    Var b = tape.constant(rhs);
    Var s = tape.constant(Matrix::scalar(temp.log_inv_tau));
    return tape.value(infonce_symmetric(tape, a, b, s).loss).at(0, 0);
}

} // namespace modbind
