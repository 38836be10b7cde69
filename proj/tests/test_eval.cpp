#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqa/eval.hpp"
#include "mqa/train.hpp"
#include "support/test_util.hpp"

using namespace mqa;

namespace {

// Chain-model fixture: the model emits token 3 then the end token with
// probability exactly 1.0, so metrics on matching data are exact.
struct ChainFixture {
  MQAModel model = testutil::make_chain_model();
  Vocabulary vocab = testutil::tiny_vocab();
  ImageFeatureStore store{4};

  QAExample right() const { return {"img-a", {"alpha"}, {"alpha"}}; }
  QAExample wrong() const { return {"img-b", {"alpha"}, {"beta"}}; }
};

MQAModel random_model(Variant variant, std::uint64_t seed, std::size_t vocab_size,
                      std::size_t d_img) {
  MQAConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_embed = 4;
  cfg.d_hidden = 3;
  cfg.d_fuse = 5;
  cfg.d_img = d_img;
  cfg.variant = variant;
  cfg.seed = seed;
  MQAModel model = init_model(cfg);
  testutil::randomize_parameters(model, seed, 0.4);
  return model;
}

ImageFeatureStore store_with(const std::vector<std::string>& ids, std::size_t d_img,
                             std::uint64_t seed) {
  ImageFeatureStore store(d_img);
  SplitMix64 rng(seed);
  for (const std::string& id : ids) {
    Vector v(d_img);
    fill_uniform(v.begin(), v.size(), rng.next(), -1.0, 1.0);
    store.put(id, std::move(v));
  }
  return store;
}

std::vector<QAExample> mixed_dataset() {
  return {
      {"i0", {"alpha", "beta"}, {"alpha"}},
      {"i1", {"beta"}, {"beta", "alpha"}},
      {"i2", {"alpha"}, {"beta"}},
      {"i0", {"beta", "beta"}, {"alpha", "alpha"}},
  };
}

}  // namespace

TEST_CASE("a model that reproduces its targets scores perfectly") {
  const ChainFixture fx;
  const std::vector<QAExample> dataset = {fx.right()};
  const EvalReport r = evaluate(fx.model, dataset, fx.vocab, fx.store, BeamConfig{});
  CHECK(r.word_error_rate == 0.0);
  CHECK(r.mean_loss_per_token == 0.0);
  CHECK(r.exact_match_accuracy == 1.0);
  CHECK(r.n_examples == 1);
}

TEST_CASE("uniform model predicts id 0 everywhere, so errors count non-zero targets") {
  MQAModel model = testutil::make_chain_model();
  testutil::zero_parameters(model);
  const Vocabulary vocab = testutil::tiny_vocab();
  const ImageFeatureStore store(4);
  // targets: [3, eoa] and [boa, eoa] -> 3 of 4 positions differ from id 0
  const std::vector<QAExample> dataset = {
      {"x", {"alpha"}, {"alpha"}},
      {"y", {"alpha"}, {std::string(kBoaToken)}},
  };
  const EvalReport r = evaluate(model, dataset, vocab, store, BeamConfig{});
  CHECK(r.word_error_rate == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.mean_loss_per_token == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(r.exact_match_accuracy == 0.0);
}

TEST_CASE("hand-enumerated two-example word error rate") {
  const ChainFixture fx;
  // right(): both positions correct. wrong(): position 1 predicts 3 but the
  // target is 4, position 2 runs from input 4 where the distribution is
  // uniform and argmax id 0 misses the end token. 2 errors in 4 positions.
  const std::vector<QAExample> dataset = {fx.right(), fx.wrong()};
  CHECK(word_error_rate(fx.model, dataset, fx.vocab, fx.store) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(exact_match_accuracy(fx.model, dataset, fx.vocab, fx.store, BeamConfig{}) ==
        doctest::Approx(0.5).epsilon(1e-15));
  // the wrong answer's first target has probability exactly 0.0 under the
  // saturated chain model, so its log-loss is infinite
  const double loss = mean_loss(fx.model, dataset, fx.vocab, fx.store);
  CHECK(std::isinf(loss));
  CHECK(loss > 0.0);
}

TEST_CASE("mean loss equals the training objective recomputed per example") {
  const Vocabulary vocab = testutil::tiny_vocab();
  const std::vector<QAExample> dataset = mixed_dataset();
  const ImageFeatureStore store = store_with({"i0", "i1", "i2"}, 6, 11);
  const MQAModel model = random_model(Variant::Complete, 21, vocab.size(), 6);

  double total = 0.0;
  std::size_t targets = 0;
  for (const QAExample& ex : dataset) {
    const NllResult nll = sequence_nll(model, vocab, ex, store);
    total += nll.total;
    targets += nll.n_targets;
  }
  const double direct = total / static_cast<double>(targets);
  CHECK(mean_loss(model, dataset, vocab, store) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("metrics are invariant to dataset order") {
  const Vocabulary vocab = testutil::tiny_vocab();
  std::vector<QAExample> dataset = mixed_dataset();
  const ImageFeatureStore store = store_with({"i0", "i1", "i2"}, 6, 12);
  const MQAModel model = random_model(Variant::Complete, 22, vocab.size(), 6);

  const EvalReport a = evaluate(model, dataset, vocab, store, BeamConfig{});
  std::reverse(dataset.begin(), dataset.end());
  const EvalReport b = evaluate(model, dataset, vocab, store, BeamConfig{});
  CHECK(a.word_error_rate == b.word_error_rate);
  CHECK(a.exact_match_accuracy == b.exact_match_accuracy);
  CHECK(a.mean_loss_per_token == doctest::Approx(b.mean_loss_per_token).epsilon(1e-12));
}

TEST_CASE("parallel evaluation reproduces the sequential result bit for bit") {
  const Vocabulary vocab = testutil::tiny_vocab();
  const std::vector<QAExample> dataset = mixed_dataset();
  const ImageFeatureStore store = store_with({"i0", "i1", "i2"}, 6, 13);
  const MQAModel model = random_model(Variant::SameLSTMs, 23, vocab.size(), 6);

  const EvalReport seq = evaluate(model, dataset, vocab, store, BeamConfig{}, 1);
  const EvalReport par = evaluate(model, dataset, vocab, store, BeamConfig{}, 4);
  CHECK(seq.word_error_rate == par.word_error_rate);
  CHECK(seq.mean_loss_per_token == par.mean_loss_per_token);
  CHECK(seq.exact_match_accuracy == par.exact_match_accuracy);
}

TEST_CASE("duplicating the dataset leaves every rate unchanged") {
  const Vocabulary vocab = testutil::tiny_vocab();
  std::vector<QAExample> dataset = mixed_dataset();
  const ImageFeatureStore store = store_with({"i0", "i1", "i2"}, 6, 14);
  const MQAModel model = random_model(Variant::AvgQuestion, 24, vocab.size(), 6);

  const EvalReport once = evaluate(model, dataset, vocab, store, BeamConfig{});
  std::vector<QAExample> twice = dataset;
  twice.insert(twice.end(), dataset.begin(), dataset.end());
  const EvalReport doubled = evaluate(model, twice, vocab, store, BeamConfig{});
  CHECK(once.word_error_rate == doubled.word_error_rate);
  CHECK(once.exact_match_accuracy == doubled.exact_match_accuracy);
  CHECK(once.mean_loss_per_token ==
        doctest::Approx(doubled.mean_loss_per_token).epsilon(1e-12));
  CHECK(doubled.n_examples == 2 * once.n_examples);
}

TEST_CASE("empty datasets are rejected") {
  const ChainFixture fx;
  const std::vector<QAExample> empty;
  CHECK_THROWS_AS(evaluate(fx.model, empty, fx.vocab, fx.store, BeamConfig{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(word_error_rate(fx.model, empty, fx.vocab, fx.store), std::invalid_argument);
  CHECK_THROWS_AS(mean_loss(fx.model, empty, fx.vocab, fx.store), std::invalid_argument);
}

TEST_CASE("blind models are indifferent to shuffling features among image ids") {
  const Vocabulary vocab = testutil::tiny_vocab();
  const std::vector<QAExample> dataset = mixed_dataset();
  const MQAModel model = random_model(Variant::Blind, 25, vocab.size(), 6);

  const ImageFeatureStore store_a = store_with({"i0", "i1", "i2"}, 6, 15);
  ImageFeatureStore store_b(6);
  store_b.put("i0", store_a.get("i1"));
  store_b.put("i1", store_a.get("i2"));
  store_b.put("i2", store_a.get("i0"));

  const EvalReport a = evaluate(model, dataset, vocab, store_a, BeamConfig{});
  const EvalReport b = evaluate(model, dataset, vocab, store_b, BeamConfig{});
  CHECK(a.word_error_rate == b.word_error_rate);
  CHECK(a.mean_loss_per_token == b.mean_loss_per_token);
  CHECK(a.exact_match_accuracy == b.exact_match_accuracy);
}

TEST_CASE("published reference rows carry the full-scale table") {
  const auto& rows = AblationReport::paper_reference();
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "mQA-complete");
  CHECK(rows[0].word_error == 0.393);
  CHECK(rows[0].loss == 1.91);
  CHECK(rows[1].name == "mQA-avg-question");
  CHECK(rows[1].word_error == 0.442);
  CHECK(rows[1].loss == 2.17);
  CHECK(rows[2].name == "mQA-same-LSTMs");
  CHECK(rows[2].word_error == 0.439);
  CHECK(rows[2].loss == 2.09);
  CHECK(rows[3].name == "mQA-noTWS");
  CHECK(rows[3].word_error == 0.438);
  CHECK(rows[3].loss == 2.14);
}

TEST_CASE("ablation harness trains five variants and can resume from disk") {
  const SyntheticData data = generate_synthetic(10, 1, 404);
  const DatasetSplits splits = split_by_image(data);
  REQUIRE(!splits.valid.empty());
  std::vector<TokenSequence> corpus;
  for (const QAExample& ex : data.examples) {
    corpus.push_back(ex.question);
    corpus.push_back(ex.answer);
  }
  const Vocabulary vocab = Vocabulary::build(corpus, 1);

  MQAConfig base;
  base.vocab_size = vocab.size();
  base.d_embed = 3;
  base.d_hidden = 4;
  base.d_fuse = 5;
  base.d_img = kSyntheticFeatureDim;
  base.seed = 5;

  TrainConfig tc;
  tc.initial_lr = 0.05;
  tc.decay_factor = 1.5;
  tc.patience_epochs = 1;
  tc.max_epochs = 2;
  tc.batch_size = 1;
  tc.seed = 5;

  testutil::TempDir dir;
  AblationOptions opts;
  opts.work_dir = dir.path();

  const AblationReport fresh = ablation_report(splits.train, splits.valid, splits.test,
                                               data.features, vocab, base, tc, BeamConfig{}, opts);
  REQUIRE(fresh.rows.size() == 5);
  CHECK(fresh.rows[0].variant == Variant::Complete);
  CHECK(fresh.rows[1].variant == Variant::AvgQuestion);
  CHECK(fresh.rows[2].variant == Variant::SameLSTMs);
  CHECK(fresh.rows[3].variant == Variant::NoTWS);
  CHECK(fresh.rows[4].variant == Variant::Blind);

  const std::string text = fresh.to_text();
  for (const char* name : {"complete", "avg-question", "same-LSTMs", "noTWS", "blind"}) {
    CHECK(text.find(name) != std::string::npos);
  }
  CHECK(text.find("0.393") != std::string::npos);

  fresh.save_csv(dir / "report.csv");
  const std::string csv = testutil::read_file_bytes(dir / "report.csv");
  CHECK(csv.rfind("source,variant,word_error_rate,mean_loss,exact_match_accuracy,"
                  "best_epoch,best_valid_loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 5 runs + 4 reference

  // a resumed run reloads each best checkpoint instead of retraining and
  // reproduces the metrics exactly
  AblationOptions resume = opts;
  resume.resume = true;
  const AblationReport again = ablation_report(splits.train, splits.valid, splits.test,
                                               data.features, vocab, base, tc, BeamConfig{},
                                               resume);
  REQUIRE(again.rows.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(again.rows[i].metrics.word_error_rate == fresh.rows[i].metrics.word_error_rate);
    CHECK(again.rows[i].metrics.mean_loss_per_token ==
          fresh.rows[i].metrics.mean_loss_per_token);
    CHECK(again.rows[i].metrics.exact_match_accuracy ==
          fresh.rows[i].metrics.exact_match_accuracy);
    CHECK(again.rows[i].best_epoch == fresh.rows[i].best_epoch);
  }
}

TEST_CASE("resume agrees with training when no validation split exists") {
  const SyntheticData data = generate_synthetic(8, 1, 405);
  const DatasetSplits splits = split_by_image(data);
  REQUIRE(splits.valid.empty());
  std::vector<TokenSequence> corpus;
  for (const QAExample& ex : data.examples) {
    corpus.push_back(ex.question);
    corpus.push_back(ex.answer);
  }
  const Vocabulary vocab = Vocabulary::build(corpus, 1);

  MQAConfig base;
  base.vocab_size = vocab.size();
  base.d_embed = 3;
  base.d_hidden = 4;
  base.d_fuse = 5;
  base.d_img = kSyntheticFeatureDim;
  base.seed = 6;

  TrainConfig tc;
  tc.initial_lr = 0.05;
  tc.decay_factor = 1.5;
  tc.patience_epochs = 1;
  tc.max_epochs = 2;
  tc.seed = 6;

  testutil::TempDir dir;
  AblationOptions opts;
  opts.work_dir = dir.path();
  const AblationReport fresh = ablation_report(splits.train, splits.valid, splits.test,
                                               data.features, vocab, base, tc, BeamConfig{}, opts);
  opts.resume = true;
  const AblationReport again = ablation_report(splits.train, splits.valid, splits.test,
                                               data.features, vocab, base, tc, BeamConfig{}, opts);
  REQUIRE(again.rows.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    // without validation the final epoch is the kept state on both paths
    CHECK(fresh.rows[i].best_epoch == tc.max_epochs - 1);
    CHECK(again.rows[i].best_epoch == fresh.rows[i].best_epoch);
    CHECK(again.rows[i].metrics.word_error_rate == fresh.rows[i].metrics.word_error_rate);
    CHECK(again.rows[i].metrics.mean_loss_per_token ==
          fresh.rows[i].metrics.mean_loss_per_token);
  }
}
