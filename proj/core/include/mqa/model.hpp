#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mqa/data.hpp"
#include "mqa/nn.hpp"
#include "mqa/numerics.hpp"
#include "mqa/vocab.hpp"

namespace mqa {

enum class Variant { Complete, AvgQuestion, SameLSTMs, NoTWS, Blind };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Which part of the LSTM state represents a sequence: the gated output h or
// the raw memory cell contents c.
enum class StateSource { Hidden, Cell };

const char* state_source_name(StateSource s);
StateSource state_source_from_name(const std::string& name);

struct MQAConfig {
  std::size_t d_embed = 512;
  std::size_t d_hidden = 400;
  std::size_t d_fuse = 512;
  std::size_t d_img = 1024;
  std::size_t vocab_size = 0;  // N
  Variant variant = Variant::Complete;
  StateSource state_source = StateSource::Hidden;
  std::uint64_t seed = 0;

  // Question representation dimension: LSTM hidden size, or the embedding
  // size when the question is the average of its word embeddings.
  std::size_t question_dim() const {
    return variant == Variant::AvgQuestion ? d_embed : d_hidden;
  }
};

struct MQAModel {
  MQAConfig config;
  EmbeddingTable embedding;
  std::shared_ptr<LSTMCellParams> lstm_q;  // null for AvgQuestion; == lstm_a for SameLSTMs
  std::shared_ptr<LSTMCellParams> lstm_a;
  FusingParams fusing;  // fusing.v_i is empty for Blind
  IntermediateParams intermediate;
  DecoderHead head;
};

// Seeded initialization: weights uniform in [-0.08, 0.08] from a per-tensor
// stream, biases zero. Identical seed+config gives a bit-identical model.
MQAModel init_model(const MQAConfig& config);

// Gradient buffers, one per distinct learnable tensor. Shared parameters
// (tied embedding, shared LSTMs) own a single accumulating buffer.
struct GradientSet {
  Matrix embedding;
  std::shared_ptr<LSTMCellParams> lstm_q;  // aliasing mirrors the model
  std::shared_ptr<LSTMCellParams> lstm_a;
  FusingParams fusing;
  IntermediateParams intermediate;
  Matrix head_free;
  Vector head_bias;

  void set_zero();
};

GradientSet make_gradient_set(const MQAModel& model);

// Flat view over the distinct tensors of a model or gradient set, in a fixed
// declaration order. Model and gradient listings pair up index-by-index.
struct TensorRef {
  std::string name;
  double* data;
  std::size_t size;
};

std::vector<TensorRef> parameter_tensors(MQAModel& model);
std::vector<TensorRef> gradient_tensors(GradientSet& grads);

// Exact number of learnable scalars (image features are inputs, not weights).
std::size_t parameter_count(const MQAModel& model);

// Deep copy; parameter aliasing (shared LSTM cell) is reproduced in the copy.
MQAModel clone_model(const MQAModel& model);

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct EncodedExample {
  std::string image_id;
  std::vector<int> question;
  std::vector<int> answer;
};

EncodedExample encode_example(const Vocabulary& vocab, const QAExample& ex);

// Question representation r_Q: final LSTM(Q) state (per state_source) for the
// LSTM variants, or the mean of the word embeddings for AvgQuestion.
// Throws on an empty question.
Vector encode_question(const MQAModel& model, std::span<const int> question_ids);

// One decoder step: embeds word_id, advances LSTM(A), fuses, maps through the
// intermediate layer, and returns the next-word distribution with the new
// state. The blind variant ignores `image` entirely.
std::pair<Vector, LSTMState> answer_step(const MQAModel& model, const Vector& r_q,
                                         const Vector& image, const LSTMState& prev, int word_id);

struct AnswerStepTrace {
  int input_id = 0;
  int target_id = 0;
  LstmStepTrace lstm;
  Vector fuse_preact, fuse_out;
  Vector inter_preact, inter_out;
  Vector probs;
};

struct ForwardTrace {
  std::vector<int> question_ids;
  std::vector<LstmStepTrace> question_steps;  // empty for AvgQuestion
  Vector r_q;
  Vector image;  // empty for Blind
  std::vector<AnswerStepTrace> steps;
  double nll = 0.0;

  std::size_t target_count() const { return steps.size(); }
};

// Teacher-forced pass over one example: inputs BOA, a_1..a_T; targets
// a_1..a_T, EOA. Records everything the backward pass needs.
ForwardTrace forward_traced(const MQAModel& model, const EncodedExample& ex,
                            const ImageFeatureStore& features);

struct NllResult {
  double total = 0.0;
  std::size_t n_targets = 0;

  double per_token() const { return n_targets ? total / static_cast<double>(n_targets) : 0.0; }
};

// Total negative log-likelihood of the answer under teacher forcing.
NllResult sequence_nll(const MQAModel& model, const EncodedExample& ex,
                       const ImageFeatureStore& features);
NllResult sequence_nll(const MQAModel& model, const Vocabulary& vocab, const QAExample& ex,
                       const ImageFeatureStore& features);

// Exact reverse-mode gradients of loss_grad * nll for every learnable tensor.
// Shared tensors accumulate contributions from all their use sites.
GradientSet backward(const MQAModel& model, const ForwardTrace& trace, double loss_grad = 1.0);
void accumulate_backward(const MQAModel& model, const ForwardTrace& trace, double loss_grad,
                         GradientSet& grads);

}  // namespace mqa
