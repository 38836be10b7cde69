#include "mqa/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mqa/checkpoint.hpp"

namespace mqa {

namespace {

// Dynamic work distribution with results stored per index, so reductions run
// in index order and the outcome is independent of thread scheduling.
template <typename Fn>
void for_each_index(std::size_t n, std::size_t threads, const Fn& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  const std::size_t n_workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(n_workers - 1);
  for (std::size_t t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void require_nonempty(const std::vector<QAExample>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluation dataset is empty");
}

struct PositionCount {
  std::size_t errors = 0;
  std::size_t positions = 0;
};

PositionCount count_argmax_errors(const MQAModel& model, const EncodedExample& ex,
                                  const ImageFeatureStore& features) {
  const Vector r_q = encode_question(model, ex.question);
  Vector image;
  if (model.config.variant != Variant::Blind) image = features.get(ex.image_id);

  PositionCount out;
  LSTMState state = zero_state(model.config.d_hidden);
  int input = Vocabulary::kBoaId;
  for (std::size_t t = 0; t <= ex.answer.size(); ++t) {
    auto [probs, next] = answer_step(model, r_q, image, state, input);
    const int target = t < ex.answer.size() ? ex.answer[t] : Vocabulary::kEoaId;
    // max_element returns the first maximum: ties break toward the lowest id
    const auto best = std::max_element(probs.begin(), probs.end());
    const int argmax = static_cast<int>(best - probs.begin());
    out.positions += 1;
    if (argmax != target) out.errors += 1;
    state = std::move(next);
    input = target;
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double word_error_rate(const MQAModel& model, const std::vector<QAExample>& dataset,
                       const Vocabulary& vocab, const ImageFeatureStore& features,
                       std::size_t threads) {
  require_nonempty(dataset);
  std::vector<PositionCount> per_example(dataset.size());
  for_each_index(dataset.size(), threads, [&](std::size_t i) {
    per_example[i] = count_argmax_errors(model, encode_example(vocab, dataset[i]), features);
  });
  std::size_t errors = 0;
  std::size_t positions = 0;
  for (const PositionCount& c : per_example) {
    errors += c.errors;
    positions += c.positions;
  }
  return static_cast<double>(errors) / static_cast<double>(positions);
}

double mean_loss(const MQAModel& model, const std::vector<QAExample>& dataset,
                 const Vocabulary& vocab, const ImageFeatureStore& features,
                 std::size_t threads) {
  require_nonempty(dataset);
  std::vector<NllResult> per_example(dataset.size());
  for_each_index(dataset.size(), threads, [&](std::size_t i) {
    per_example[i] = sequence_nll(model, encode_example(vocab, dataset[i]), features);
  });
  double total = 0.0;
  std::size_t targets = 0;
  for (const NllResult& r : per_example) {
    total += r.total;
    targets += r.n_targets;
  }
  return total / static_cast<double>(targets);
}

double exact_match_accuracy(const MQAModel& model, const std::vector<QAExample>& dataset,
                            const Vocabulary& vocab, const ImageFeatureStore& features,
                            const BeamConfig& beam_cfg, std::size_t threads) {
  require_nonempty(dataset);
  std::vector<char> match(dataset.size(), 0);
  for_each_index(dataset.size(), threads, [&](std::size_t i) {
    const TokenSequence decoded =
        answer(model, features, vocab, dataset[i].image_id, dataset[i].question, beam_cfg);
    match[i] = decoded == dataset[i].answer ? 1 : 0;
  });
  std::size_t hits = 0;
  for (char m : match) hits += static_cast<std::size_t>(m);
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

EvalReport evaluate(const MQAModel& model, const std::vector<QAExample>& dataset,
                    const Vocabulary& vocab, const ImageFeatureStore& features,
                    const BeamConfig& beam_cfg, std::size_t threads) {
  EvalReport report;
  report.word_error_rate = word_error_rate(model, dataset, vocab, features, threads);
  report.mean_loss_per_token = mean_loss(model, dataset, vocab, features, threads);
  report.exact_match_accuracy =
      exact_match_accuracy(model, dataset, vocab, features, beam_cfg, threads);
  report.n_examples = dataset.size();
  return report;
}

const std::vector<PaperReferenceRow>& AblationReport::paper_reference() {
  static const std::vector<PaperReferenceRow> rows = {
      {"mQA-complete", 0.393, 1.91},
      {"mQA-avg-question", 0.442, 2.17},
      {"mQA-same-LSTMs", 0.439, 2.09},
      {"mQA-noTWS", 0.438, 2.14},
  };
  return rows;
}

void AblationReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open report for writing: " + path.string());
  os << "source,variant,word_error_rate,mean_loss,exact_match_accuracy,best_epoch,"
        "best_valid_loss\n";
  for (const AblationRow& r : rows) {
    os << "run," << variant_name(r.variant) << ',' << format_real(r.metrics.word_error_rate)
       << ',' << format_real(r.metrics.mean_loss_per_token) << ','
       << format_real(r.metrics.exact_match_accuracy) << ',' << r.best_epoch << ','
       << format_real(r.best_valid_loss) << "\n";
  }
  for (const PaperReferenceRow& r : paper_reference()) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "paper,%s,%g,%g,,,\n", r.name.c_str(), r.word_error, r.loss);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failure on report: " + path.string());
}

std::string AblationReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %12s %12s\n", "variant", "word_error",
                "mean_loss", "exact_match", "best_epoch");
  os << buf;
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %12.4f %12.4f %12.4f %12zu\n",
                  variant_name(r.variant), r.metrics.word_error_rate,
                  r.metrics.mean_loss_per_token, r.metrics.exact_match_accuracy, r.best_epoch);
    os << buf;
  }
  os << "\npublished full-scale reference (different data; context only):\n";
  for (const PaperReferenceRow& r : paper_reference()) {
    std::snprintf(buf, sizeof buf, "%-16s %12.3f %12.2f\n", r.name.c_str(), r.word_error,
                  r.loss);
    os << buf;
  }
  return os.str();
}

AblationReport ablation_report(const std::vector<QAExample>& train_set,
                               const std::vector<QAExample>& valid_set,
                               const std::vector<QAExample>& test_set,
                               const ImageFeatureStore& features, const Vocabulary& vocab,
                               const MQAConfig& base_cfg, const TrainConfig& train_cfg,
                               const BeamConfig& beam_cfg, const AblationOptions& opts) {
  require_nonempty(train_set);
  require_nonempty(test_set);

  constexpr Variant kOrder[] = {Variant::Complete, Variant::AvgQuestion, Variant::SameLSTMs,
                                Variant::NoTWS, Variant::Blind};
  auto log = [&](const std::string& line) {
    if (opts.log) opts.log(line);
  };

  AblationReport report;
  for (Variant variant : kOrder) {
    MQAConfig cfg = base_cfg;
    cfg.variant = variant;
    const std::string name = variant_name(variant);
    const std::filesystem::path vdir =
        opts.work_dir.empty() ? std::filesystem::path{} : opts.work_dir / name;

    AblationRow row;
    row.variant = variant;

    const bool can_resume = opts.resume && !vdir.empty() &&
                            std::filesystem::exists(vdir / "best.ckpt") &&
                            std::filesystem::exists(vdir / "history.csv");
    if (can_resume) {
      log("resuming " + name + " from " + (vdir / "best.ckpt").string());
      const MQAModel model = load_checkpoint(vdir / "best.ckpt");
      const TrainHistory history = TrainHistory::load_csv(vdir / "history.csv");
      row.best_valid_loss = std::numeric_limits<double>::infinity();
      bool found = false;
      for (const EpochRecord& rec : history.epochs) {
        if (std::isfinite(rec.valid_loss) && rec.valid_loss < row.best_valid_loss) {
          row.best_valid_loss = rec.valid_loss;
          row.best_epoch = rec.epoch;
          found = true;
        }
      }
      if (!found && !history.epochs.empty()) {
        // no validation signal was recorded; training kept the final state
        row.best_epoch = history.epochs.back().epoch;
        row.best_valid_loss = std::numeric_limits<double>::quiet_NaN();
      }
      row.metrics = evaluate(model, test_set, vocab, features, beam_cfg, opts.threads);
    } else {
      log("training " + name);
      TrainResult result = train(init_model(cfg), train_set, valid_set, features, vocab,
                                 train_cfg, vdir, nullptr);
      if (!vdir.empty()) result.history.save_csv(vdir / "history.csv");
      row.best_epoch = result.best_epoch;
      row.best_valid_loss = result.best_valid_loss;
      row.metrics = evaluate(result.model, test_set, vocab, features, beam_cfg, opts.threads);
    }
    log(name + ": word_error=" + format_real(row.metrics.word_error_rate) +
        " mean_loss=" + format_real(row.metrics.mean_loss_per_token) +
        " exact_match=" + format_real(row.metrics.exact_match_accuracy));
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace mqa
