#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mqa/data.hpp"
#include "mqa/decode.hpp"
#include "mqa/model.hpp"
#include "mqa/train.hpp"
#include "mqa/vocab.hpp"

namespace mqa {

struct EvalReport {
  double word_error_rate = 0.0;
  double mean_loss_per_token = 0.0;
  double exact_match_accuracy = 0.0;
  std::size_t n_examples = 0;
};

// Teacher-forced next-token argmax error over all target positions (answer
// tokens plus ⟨EOA⟩); argmax ties break toward the lowest id.
double word_error_rate(const MQAModel& model, const std::vector<QAExample>& dataset,
                       const Vocabulary& vocab, const ImageFeatureStore& features,
                       std::size_t threads = 1);

// Sum of sequence negative log-likelihoods over the sum of target counts, in
// nats. Equals the training objective evaluated without updates.
double mean_loss(const MQAModel& model, const std::vector<QAExample>& dataset,
                 const Vocabulary& vocab, const ImageFeatureStore& features,
                 std::size_t threads = 1);

// Fraction of examples whose best beam-search answer equals the reference
// token sequence exactly.
double exact_match_accuracy(const MQAModel& model, const std::vector<QAExample>& dataset,
                            const Vocabulary& vocab, const ImageFeatureStore& features,
                            const BeamConfig& beam_cfg, std::size_t threads = 1);

// All three metrics; results are bit-identical to the individual calls.
EvalReport evaluate(const MQAModel& model, const std::vector<QAExample>& dataset,
                    const Vocabulary& vocab, const ImageFeatureStore& features,
                    const BeamConfig& beam_cfg, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

struct AblationRow {
  Variant variant = Variant::Complete;
  EvalReport metrics;  // on the test set
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
};

// Published full-scale numbers from the source experiment, carried along for
// context only; they came from a different dataset at a different scale and
// are never compared against this artifact's metrics.
struct PaperReferenceRow {
  std::string name;
  double word_error = 0.0;
  double loss = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // five variants, fixed order

  static const std::vector<PaperReferenceRow>& paper_reference();

  void save_csv(const std::filesystem::path& path) const;
  std::string to_text() const;
};

struct AblationOptions {
  std::filesystem::path work_dir;  // per-variant checkpoints + history when nonempty
  bool resume = false;             // reuse existing per-variant best checkpoints
  std::size_t threads = 1;         // evaluation fan-out
  std::function<void(const std::string&)> log;
};

// Trains all five variants from the same seed and data order, then evaluates
// each on the test set.
AblationReport ablation_report(const std::vector<QAExample>& train_set,
                               const std::vector<QAExample>& valid_set,
                               const std::vector<QAExample>& test_set,
                               const ImageFeatureStore& features, const Vocabulary& vocab,
                               const MQAConfig& base_cfg, const TrainConfig& train_cfg,
                               const BeamConfig& beam_cfg, const AblationOptions& opts = {});

}  // namespace mqa
