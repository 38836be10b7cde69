#include "mqa/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mqa {

Vector embed(const EmbeddingTable& table, int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= table.vocab_size())
    throw std::out_of_range("embed: token id " + std::to_string(id) +
                            " out of range, table has " + std::to_string(table.vocab_size()) +
                            " rows");
  Vector out(table.dim());
  const double* row = table.weights.row(static_cast<std::size_t>(id));
  std::copy(row, row + table.dim(), out.begin());
  return out;
}

void LSTMCellParams::set_zero() {
  for (auto& m : w) m.fill(0.0);
  for (auto& m : u) m.fill(0.0);
  for (auto& v : b) v.fill(0.0);
}

LSTMCellParams make_lstm_cell(std::size_t d_hidden, std::size_t d_in) {
  LSTMCellParams p;
  for (std::size_t g = 0; g < 4; ++g) {
    p.w[g] = Matrix(d_hidden, d_in);
    p.u[g] = Matrix(d_hidden, d_hidden);
    p.b[g] = Vector(d_hidden);
  }
  return p;
}

LSTMState zero_state(std::size_t d_hidden) { return {Vector(d_hidden), Vector(d_hidden)}; }

LSTMState lstm_step(const LSTMCellParams& p, const LSTMState& s, const Vector& x,
                    LstmStepTrace* trace) {
  const std::size_t d_hidden = p.hidden_dim();
  if (x.size() != p.input_dim())
    throw std::invalid_argument("lstm_step: input has length " + std::to_string(x.size()) +
                                ", cell expects " + std::to_string(p.input_dim()));
  if (s.h.size() != d_hidden || s.c.size() != d_hidden)
    throw std::invalid_argument("lstm_step: state size does not match hidden dimension " +
                                std::to_string(d_hidden));

  std::array<Vector, 4> act;
  Vector cand_preact;
  for (std::size_t g = 0; g < 4; ++g) {
    Vector pre = p.b[g];
    matvec_add(p.w[g], x, pre);
    matvec_add(p.u[g], s.h, pre);
    if (g == kCandidate) {
      cand_preact = pre;
      act[g] = Vector(d_hidden);
      for (std::size_t i = 0; i < d_hidden; ++i) act[g][i] = relu(pre[i]);
    } else {
      act[g] = Vector(d_hidden);
      for (std::size_t i = 0; i < d_hidden; ++i) act[g][i] = sigmoid(pre[i]);
    }
  }

  LSTMState next{Vector(d_hidden), Vector(d_hidden)};
  for (std::size_t i = 0; i < d_hidden; ++i) {
    next.c[i] = act[kForgetGate][i] * s.c[i] + act[kInputGate][i] * act[kCandidate][i];
    next.h[i] = act[kOutputGate][i] * next.c[i];
  }
  if (!all_finite(next.c) || !all_finite(next.h))
    throw std::runtime_error("lstm_step: non-finite state produced");

  if (trace) {
    trace->x = x;
    trace->h_prev = s.h;
    trace->c_prev = s.c;
    trace->act = std::move(act);
    trace->cand_preact = std::move(cand_preact);
    trace->c_out = next.c;
    trace->h_out = next.h;
  }
  return next;
}

void lstm_step_backward(const LSTMCellParams& p, const LstmStepTrace& t, const Vector& dh,
                        const Vector& dc, LSTMCellParams& grad, Vector& dx, Vector& dh_prev,
                        Vector& dc_prev) {
  const std::size_t d = p.hidden_dim();
  const Vector& gi = t.act[kInputGate];
  const Vector& gf = t.act[kForgetGate];
  const Vector& go = t.act[kOutputGate];
  const Vector& cand = t.act[kCandidate];

  // h' = o * c'  and  c' = f*c + i*cand
  std::array<Vector, 4> dpre;  // gradients at the gate pre-activations
  for (auto& v : dpre) v = Vector(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double dci = dc[i] + dh[i] * go[i];
    const double do_ = dh[i] * t.c_out[i];
    dpre[kOutputGate][i] = do_ * go[i] * (1.0 - go[i]);
    dpre[kInputGate][i] = dci * cand[i] * gi[i] * (1.0 - gi[i]);
    dpre[kForgetGate][i] = dci * t.c_prev[i] * gf[i] * (1.0 - gf[i]);
    dpre[kCandidate][i] = dci * gi[i] * relu_deriv(t.cand_preact[i]);
    dc_prev[i] += dci * gf[i];
  }
  for (std::size_t g = 0; g < 4; ++g) {
    add_outer(grad.w[g], dpre[g], t.x);
    add_outer(grad.u[g], dpre[g], t.h_prev);
    axpy(1.0, dpre[g], grad.b[g]);
    matvec_transpose_add(p.w[g], dpre[g], dx);
    matvec_transpose_add(p.u[g], dpre[g], dh_prev);
  }
}

void FusingParams::set_zero() {
  v_rq.fill(0.0);
  v_i.fill(0.0);
  v_ra.fill(0.0);
  v_w.fill(0.0);
  b.fill(0.0);
}

Vector fuse(const FusingParams& p, const Vector& r_q, const Vector* image, const Vector& r_a,
            const Vector& w, Vector* preact) {
  Vector pre = p.b;
  matvec_add(p.v_rq, r_q, pre);
  if (image) matvec_add(p.v_i, *image, pre);
  matvec_add(p.v_ra, r_a, pre);
  matvec_add(p.v_w, w, pre);
  Vector out(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = scaled_tanh(pre[i]);
  if (preact) *preact = std::move(pre);
  return out;
}

void IntermediateParams::set_zero() {
  v_m.fill(0.0);
  b.fill(0.0);
}

void DecoderHead::set_zero() {
  free_weights.fill(0.0);
  bias.fill(0.0);
}

Vector decode_distribution(const DecoderHead& head, const EmbeddingTable& table, const Vector& m,
                           Vector* logits_out) {
  const Matrix& weights =
      head.mode == HeadMode::TransposedShared ? table.weights : head.free_weights;
  Vector logits = head.bias;
  matvec_add(weights, m, logits);
  Vector probs = softmax(logits);
  if (logits_out) *logits_out = std::move(logits);
  return probs;
}

}  // namespace mqa
