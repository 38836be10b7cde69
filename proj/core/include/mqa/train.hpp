#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mqa/data.hpp"
#include "mqa/model.hpp"
#include "mqa/vocab.hpp"

namespace mqa {

struct TrainConfig {
  double initial_lr = 1.0;
  double decay_factor = 10.0;
  std::size_t patience_epochs = 3;
  std::size_t max_epochs = 10;
  std::size_t batch_size = 1;
  double clip_norm = 5.0;  // +inf disables clipping
  std::uint64_t seed = 0;
  // All code paths are deterministic today; the flag is kept so callers can
  // demand it explicitly if parallel batch evaluation is ever added.
  bool deterministic = true;
};

// initial_lr / decay_factor^epoch, epoch counted from 0.
double lr_schedule(const TrainConfig& cfg, std::size_t epoch);

// Global-norm clip then one SGD step over every distinct parameter tensor.
// Shared tensors (tied embedding, shared LSTM cell) are updated exactly once.
// Throws on non-finite gradients.
void sgd_update(MQAModel& model, GradientSet& grads, double lr, double clip_norm);

// Stops after `patience` consecutive epochs without strict improvement of the
// best validation loss seen so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Feed one epoch's validation loss; returns true when training should stop.
  bool update(double valid_loss);

  bool should_stop() const { return bad_streak_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t seen_ = 0;
  std::size_t bad_streak_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;       // mean per-token loss over the epoch's updates
  double valid_loss = 0.0;       // NaN when no validation set is given
  double word_error_rate = 0.0;  // NaN when no validation set is given
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // Header: epoch,lr,train_loss,valid_loss,word_error_rate. Reals printed
  // with %.17g so identical runs produce identical bytes.
  void save_csv(const std::filesystem::path& path) const;
  static TrainHistory load_csv(const std::filesystem::path& path);
};

struct TrainResult {
  MQAModel model;  // state with the best validation loss (final state if no valid set)
  TrainHistory history;
  std::size_t best_epoch = 0;
  double best_valid_loss = std::numeric_limits<double>::quiet_NaN();
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// SGD with per-epoch learning-rate decay and early stopping. Examples are
// visited in a seeded shuffled order, re-shuffled every epoch. When
// checkpoint_dir is nonempty, writes epoch_<e>.ckpt per epoch plus a
// best.ckpt copy of the best epoch. A non-finite loss or gradient aborts
// with an exception; checkpoints already on disk stay valid.
TrainResult train(MQAModel model, const std::vector<QAExample>& train_set,
                  const std::vector<QAExample>& valid_set, const ImageFeatureStore& features,
                  const Vocabulary& vocab, const TrainConfig& cfg,
                  const std::filesystem::path& checkpoint_dir = {},
                  const EpochCallback& on_epoch = nullptr);

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double tolerance = 1e-4;
  double fd_step = 1e-5;
  // Tensors larger than this get a seeded random subsample of this many
  // distinct scalars; smaller tensors are checked exhaustively.
  std::size_t max_scalars_per_tensor = 500;
  std::uint64_t sample_seed = 0;
  // Test hook, applied to the analytic gradients before comparison; proves
  // the checker notices a corrupted backward pass.
  std::function<void(GradientSet&)> corrupt_gradients;
};

struct TensorCheckResult {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<TensorCheckResult> tensors;
  double max_rel_error = 0.0;
  bool pass = true;
};

// Compares analytic gradients against central finite differences on a seeded
// probe example. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport gradient_check(const MQAConfig& config, const GradCheckOptions& opts = {});

}  // namespace mqa
