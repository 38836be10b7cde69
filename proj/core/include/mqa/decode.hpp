#pragma once

#include <span>
#include <string>
#include <vector>

#include "mqa/data.hpp"
#include "mqa/model.hpp"
#include "mqa/vocab.hpp"

namespace mqa {

struct BeamConfig {
  std::size_t k = 5;
  std::size_t max_len = 30;  // cap on generated tokens before ⟨EOA⟩
  bool length_normalize = false;
};

// A generated answer candidate. ids holds the tokens emitted after ⟨BOA⟩ and
// includes the terminal ⟨EOA⟩ when one was emitted; logprob includes its
// factor. state is the decoder state used to expand the hypothesis, i.e.
// everything before the last id has been consumed.
struct Hypothesis {
  std::vector<int> ids;
  double logprob = 0.0;
  LSTMState state;
  bool finished = false;
};

// Breadth-limited best-first decoding: every live hypothesis expands over all
// N tokens, the best K by score survive, and hypotheses that emit ⟨EOA⟩ or
// reach max_len content tokens are frozen into the result pool. Score is
// logprob, or logprob/|ids| with length_normalize. Ties break toward the
// lexicographically smaller id sequence. Returns at most K hypotheses, best
// first. The blind variant ignores `image`.
std::vector<Hypothesis> beam_search(const MQAModel& model, const Vector& image,
                                    std::span<const int> question_ids, const BeamConfig& cfg);

// End-to-end convenience: encode the question, beam-search, return the best
// hypothesis' tokens with delimiters stripped.
TokenSequence answer(const MQAModel& model, const ImageFeatureStore& features,
                     const Vocabulary& vocab, const std::string& image_id,
                     const TokenSequence& question_tokens, const BeamConfig& cfg);

}  // namespace mqa
