#pragma once

#include <array>
#include <cstddef>
#include <memory>

#include "mqa/numerics.hpp"

namespace mqa {

// Word embedding table, one row per dictionary entry. A model holds a single
// instance shared by the question encoder, the answer decoder input, and
// (in transposed-sharing mode) the softmax decoder.
struct EmbeddingTable {
  Matrix weights;  // N x d_embed

  std::size_t vocab_size() const { return weights.rows; }
  std::size_t dim() const { return weights.cols; }
};

// Returns row `id` of the table. Throws std::out_of_range for id >= N.
Vector embed(const EmbeddingTable& table, int id);

// Gate order is fixed: input, forget, output, candidate.
enum GateIndex : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

struct LSTMCellParams {
  std::array<Matrix, 4> w;  // d_hidden x d_in
  std::array<Matrix, 4> u;  // d_hidden x d_hidden
  std::array<Vector, 4> b;  // d_hidden

  std::size_t hidden_dim() const { return w[0].rows; }
  std::size_t input_dim() const { return w[0].cols; }

  void set_zero();
};

LSTMCellParams make_lstm_cell(std::size_t d_hidden, std::size_t d_in);

struct LSTMState {
  Vector h;  // gated output
  Vector c;  // memory cell contents
};

LSTMState zero_state(std::size_t d_hidden);

// Per-step activations cached for the backward pass.
struct LstmStepTrace {
  Vector x;
  Vector h_prev, c_prev;
  std::array<Vector, 4> act;  // gate activations; act[kCandidate] is post-ReLU
  Vector cand_preact;         // candidate pre-activation (ReLU kink diagnostics)
  Vector c_out, h_out;
};

// i = sig(W_i x + U_i h + b_i), f, o likewise; cand = relu(W_c x + U_c h + b_c);
// c' = f*c + i*cand; h' = o*c'. Throws on non-finite intermediates.
LSTMState lstm_step(const LSTMCellParams& p, const LSTMState& s, const Vector& x,
                    LstmStepTrace* trace = nullptr);

// Reverse-mode step: dh/dc are the gradients flowing into h_out/c_out.
// Parameter gradients accumulate into `grad`; dh_prev/dc_prev accumulate the
// recurrent gradient; dx accumulates the input gradient.
void lstm_step_backward(const LSTMCellParams& p, const LstmStepTrace& t, const Vector& dh,
                        const Vector& dc, LSTMCellParams& grad, Vector& dx, Vector& dh_prev,
                        Vector& dc_prev);

// Fusing layer: f(t) = g(V_rq r_Q + V_i I + V_ra r_A(t) + V_w w(t) + b).
// v_i is empty in the blind configuration (the image term is never formed).
struct FusingParams {
  Matrix v_rq;  // d_fuse x question_dim
  Matrix v_i;   // d_fuse x d_img, empty when blind
  Matrix v_ra;  // d_fuse x d_hidden
  Matrix v_w;   // d_fuse x d_embed
  Vector b;     // d_fuse

  std::size_t fuse_dim() const { return v_ra.rows; }
  void set_zero();
};

// image == nullptr skips the V_i term (blind path). When preact is non-null
// the pre-activation sum is stored there for the backward pass.
Vector fuse(const FusingParams& p, const Vector& r_q, const Vector* image, const Vector& r_a,
            const Vector& w, Vector* preact = nullptr);

// Maps the fused multimodal code back to the word-embedding space:
// m = g(V_m f + b).
struct IntermediateParams {
  Matrix v_m;  // d_embed x d_fuse
  Vector b;    // d_embed

  void set_zero();
};

enum class HeadMode { TransposedShared, Free };

// Softmax decoder. In TransposedShared mode the logit matrix is the
// embedding table itself (used transposed); no separate matrix exists.
struct DecoderHead {
  HeadMode mode = HeadMode::TransposedShared;
  Matrix free_weights;  // N x d_embed, only in Free mode
  Vector bias;          // N

  void set_zero();
};

// logits = (shared: table.weights * m | free: free_weights * m) + bias,
// then softmax. Optionally exposes the raw logits.
Vector decode_distribution(const DecoderHead& head, const EmbeddingTable& table, const Vector& m,
                           Vector* logits_out = nullptr);

}  // namespace mqa
