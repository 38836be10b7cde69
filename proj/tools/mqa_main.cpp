// Command-line front end: data generation, training, answering, evaluation,
// ablation, and gradient checking over the mqa core library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mqa/checkpoint.hpp"
#include "mqa/data.hpp"
#include "mqa/decode.hpp"
#include "mqa/eval.hpp"
#include "mqa/model.hpp"
#include "mqa/train.hpp"
#include "mqa/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

mqa::TokenSequence split_whitespace(const std::string& text) {
  mqa::TokenSequence tokens;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// CLI11 only processes config files on the top-level app, so a subcommand's
// `--config` is applied by hand: one `key = value` per line, `#` starts a
// comment, and keys matching flags already given on the command line are
// skipped so explicit flags win.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto at = path + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(at + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::runtime_error(at + ": expected key = value");
    }
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || opt->get_name() == "--config") {
      throw std::runtime_error(at + ": unknown config key '" + key + "'");
    }
    if (opt->count() == 0) {
      opt->add_result(value);
      opt->run_callback();
    }
  }
}

void log_resolved_config(const CLI::App& sub) {
  std::cerr << "# resolved config [" << sub.get_name() << "]\n";
  std::istringstream is(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) std::cerr << "#   " << line << "\n";
  }
}

fs::path features_file(const fs::path& data_dir) {
  if (fs::exists(data_dir / "features.bin")) return data_dir / "features.bin";
  if (fs::exists(data_dir / "features.txt")) return data_dir / "features.txt";
  throw std::runtime_error("no features.bin or features.txt under " + data_dir.string());
}

double nan_to_json_safe(double v) { return v; }  // json.hpp renders NaN as null

json epoch_json(const mqa::EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"lr", r.lr},
              {"train_loss", r.train_loss},
              {"valid_loss", nan_to_json_safe(r.valid_loss)},
              {"word_error_rate", nan_to_json_safe(r.word_error_rate)}};
}

struct DimArgs {
  std::size_t d_embed = 512;
  std::size_t d_hidden = 400;
  std::size_t d_fuse = 512;
};

void add_dim_flags(CLI::App* sub, DimArgs& dims) {
  sub->add_option("--d-embed", dims.d_embed, "word embedding dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--d-hidden", dims.d_hidden, "LSTM hidden dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--d-fuse", dims.d_fuse, "fusing layer dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

struct TrainFlagArgs {
  double lr = 1.0;
  double decay = 10.0;
  std::size_t patience = 3;
  std::size_t max_epochs = 10;
  std::size_t batch_size = 1;
  double clip_norm = 5.0;
};

void add_train_flags(CLI::App* sub, TrainFlagArgs& args) {
  sub->add_option("--lr", args.lr, "initial learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--decay", args.decay, "per-epoch learning-rate decay factor")
      ->capture_default_str();
  sub->add_option("--patience", args.patience, "early-stopping patience in epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--max-epochs", args.max_epochs, "epoch cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--batch-size", args.batch_size, "examples per update")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--clip-norm", args.clip_norm, "global gradient-norm clip (inf disables)")
      ->capture_default_str();
}

mqa::TrainConfig to_train_config(const TrainFlagArgs& args, std::uint64_t seed) {
  mqa::TrainConfig cfg;
  cfg.initial_lr = args.lr;
  cfg.decay_factor = args.decay;
  cfg.patience_epochs = args.patience;
  cfg.max_epochs = args.max_epochs;
  cfg.batch_size = args.batch_size;
  cfg.clip_norm = args.clip_norm;
  cfg.seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::size_t n_images = 100;
  std::size_t qpi = 3;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_gen_data(const GenDataArgs& a) {
  const mqa::SyntheticData data = mqa::generate_synthetic(a.n_images, a.qpi, a.seed);
  const mqa::DatasetSplits splits = mqa::split_by_image(data);

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  mqa::save_dataset(splits.train, out / "train.tsv");
  mqa::save_dataset(splits.valid, out / "valid.tsv");
  mqa::save_dataset(splits.test, out / "test.tsv");
  data.features.save_binary(out / "features.bin");

  std::vector<mqa::TokenSequence> corpus;
  corpus.reserve(2 * splits.train.size());
  for (const mqa::QAExample& ex : splits.train) {
    corpus.push_back(ex.question);
    corpus.push_back(ex.answer);
  }
  const mqa::Vocabulary vocab = mqa::Vocabulary::build(corpus, 1);
  vocab.save(out / "vocab.txt");

  std::cout << "wrote " << splits.train.size() << " train, " << splits.valid.size()
            << " valid, " << splits.test.size() << " test examples; " << data.features.size()
            << " feature vectors; vocab of " << vocab.size() << " tokens to " << a.out_dir
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string out_dir;
  std::string variant = "complete";
  std::string state_source = "hidden";
  DimArgs dims;
  TrainFlagArgs flags;
  std::uint64_t seed = 0;
  bool json_lines = false;
};

int run_train(const TrainArgs& a) {
  const fs::path dir(a.data_dir);
  const auto train_set = mqa::load_dataset(dir / "train.tsv");
  std::vector<mqa::QAExample> valid_set;
  if (fs::exists(dir / "valid.tsv")) valid_set = mqa::load_dataset(dir / "valid.tsv");
  // A blind model never reads image features, so the feature file is not
  // required (or opened) for it.
  const bool blind = mqa::variant_from_name(a.variant) == mqa::Variant::Blind;
  const auto features =
      blind ? mqa::ImageFeatureStore(1) : mqa::ImageFeatureStore::load(features_file(dir));
  const auto vocab = mqa::Vocabulary::load(dir / "vocab.txt");

  mqa::MQAConfig mc;
  mc.d_embed = a.dims.d_embed;
  mc.d_hidden = a.dims.d_hidden;
  mc.d_fuse = a.dims.d_fuse;
  mc.d_img = features.d_img();
  mc.vocab_size = vocab.size();
  mc.variant = mqa::variant_from_name(a.variant);
  mc.state_source = mqa::state_source_from_name(a.state_source);
  mc.seed = a.seed;

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  mqa::save_config_text(mc, out / "config.txt");

  const mqa::EpochCallback on_epoch = [&](const mqa::EpochRecord& r) {
    if (a.json_lines) {
      std::cout << epoch_json(r).dump() << "\n";
    } else {
      std::printf("epoch %zu  lr %-8.4g train_loss %-10.6f valid_loss %-10.6f wer %.4f\n",
                  r.epoch, r.lr, r.train_loss, r.valid_loss, r.word_error_rate);
    }
    std::fflush(stdout);
  };

  mqa::TrainResult result =
      mqa::train(mqa::init_model(mc), train_set, valid_set, features, vocab,
                 to_train_config(a.flags, a.seed), out, on_epoch);
  result.history.save_csv(out / "history.csv");

  if (a.json_lines) {
    std::cout << json{{"best_epoch", result.best_epoch},
                      {"best_valid_loss", nan_to_json_safe(result.best_valid_loss)}}
                     .dump()
              << "\n";
  } else {
    std::cout << "best epoch " << result.best_epoch << "; checkpoints and history in "
              << a.out_dir << "\n";
  }
  return 0;
}

struct AnswerArgs {
  std::string config;
  std::string checkpoint;
  std::string features;
  std::string vocab;
  std::string image_id;
  std::string question;
  std::size_t beam_k = 5;
  std::size_t max_len = 30;
  bool length_normalize = false;
  bool all = false;
};

int run_answer(const AnswerArgs& a) {
  const mqa::MQAModel model = mqa::load_checkpoint(a.checkpoint);
  const mqa::Vocabulary vocab = mqa::Vocabulary::load(a.vocab);
  const bool blind = model.config.variant == mqa::Variant::Blind;

  mqa::ImageFeatureStore features(model.config.d_img);
  if (!blind) {
    if (a.features.empty()) {
      throw std::runtime_error("this checkpoint reads image features; pass --features");
    }
    features = mqa::ImageFeatureStore::load(a.features);
  }

  const mqa::TokenSequence question = split_whitespace(a.question);
  const std::vector<int> question_ids = vocab.encode(question);
  mqa::Vector image;
  if (!blind) image = features.get(a.image_id);

  mqa::BeamConfig cfg;
  cfg.k = a.beam_k;
  cfg.max_len = a.max_len;
  cfg.length_normalize = a.length_normalize;
  const std::vector<mqa::Hypothesis> hyps = mqa::beam_search(model, image, question_ids, cfg);
  if (hyps.empty()) throw std::runtime_error("beam search produced no hypotheses");

  auto strip = [](std::vector<int> ids) {
    if (!ids.empty() && ids.back() == mqa::Vocabulary::kEoaId) ids.pop_back();
    return ids;
  };
  auto join = [&](const std::vector<int>& ids) {
    const mqa::TokenSequence toks = vocab.decode(ids);
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) s += ' ';
      s += toks[i];
    }
    return s;
  };

  if (a.all) {
    for (const mqa::Hypothesis& h : hyps) {
      std::printf("%.17g\t%s\n", h.logprob, join(strip(h.ids)).c_str());
    }
  } else {
    std::printf("answer: %s\n", join(strip(hyps.front().ids)).c_str());
    std::printf("logprob: %.17g\n", hyps.front().logprob);
  }
  return 0;
}

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string data;
  std::string features;
  std::string vocab;
  std::size_t beam_k = 5;
  std::size_t max_len = 30;
  std::size_t threads = 1;
  bool csv = false;
  bool json_lines = false;
};

int run_eval(const EvalArgs& a) {
  const mqa::MQAModel model = mqa::load_checkpoint(a.checkpoint);
  const auto dataset = mqa::load_dataset(a.data);
  const auto vocab = mqa::Vocabulary::load(a.vocab);
  mqa::ImageFeatureStore features(model.config.d_img);
  if (model.config.variant != mqa::Variant::Blind) {
    if (a.features.empty()) {
      throw std::runtime_error("this checkpoint reads image features; pass --features");
    }
    features = mqa::ImageFeatureStore::load(a.features);
  }

  mqa::BeamConfig beam;
  beam.k = a.beam_k;
  beam.max_len = a.max_len;
  const mqa::EvalReport r = mqa::evaluate(model, dataset, vocab, features, beam, a.threads);

  if (a.csv) {
    std::printf("word_error_rate,mean_loss,exact_match_accuracy,n_examples\n");
    std::printf("%.17g,%.17g,%.17g,%zu\n", r.word_error_rate, r.mean_loss_per_token,
                r.exact_match_accuracy, r.n_examples);
  } else if (a.json_lines) {
    std::cout << json{{"word_error_rate", r.word_error_rate},
                      {"mean_loss", r.mean_loss_per_token},
                      {"exact_match_accuracy", r.exact_match_accuracy},
                      {"n_examples", r.n_examples}}
                     .dump()
              << "\n";
  } else {
    std::printf("word error rate:      %.6f\n", r.word_error_rate);
    std::printf("mean loss per token:  %.6f\n", r.mean_loss_per_token);
    std::printf("exact match accuracy: %.6f\n", r.exact_match_accuracy);
    std::printf("examples:             %zu\n", r.n_examples);
  }
  return 0;
}

struct AblateArgs {
  std::string config;
  std::string data_dir;
  std::string out_dir;
  std::string state_source = "hidden";
  DimArgs dims{64, 64, 64};  // benchmark-scale defaults
  TrainFlagArgs flags;
  std::uint64_t seed = 0;
  std::size_t beam_k = 5;
  std::size_t max_len = 30;
  std::size_t threads = 1;
  bool resume = false;
  bool csv = false;
  bool json_lines = false;
};

int run_ablate(const AblateArgs& a) {
  const fs::path dir(a.data_dir);
  const auto train_set = mqa::load_dataset(dir / "train.tsv");
  const auto valid_set = mqa::load_dataset(dir / "valid.tsv");
  const auto test_set = mqa::load_dataset(dir / "test.tsv");
  const auto features = mqa::ImageFeatureStore::load(features_file(dir));
  const auto vocab = mqa::Vocabulary::load(dir / "vocab.txt");

  mqa::MQAConfig base;
  base.d_embed = a.dims.d_embed;
  base.d_hidden = a.dims.d_hidden;
  base.d_fuse = a.dims.d_fuse;
  base.d_img = features.d_img();
  base.vocab_size = vocab.size();
  base.state_source = mqa::state_source_from_name(a.state_source);
  base.seed = a.seed;

  mqa::BeamConfig beam;
  beam.k = a.beam_k;
  beam.max_len = a.max_len;

  const fs::path out(a.out_dir);
  fs::create_directories(out);

  mqa::AblationOptions opts;
  opts.work_dir = out / "variants";
  opts.resume = a.resume;
  opts.threads = a.threads;
  opts.log = [](const std::string& line) { std::cerr << line << "\n"; };

  const mqa::AblationReport report =
      mqa::ablation_report(train_set, valid_set, test_set, features, vocab, base,
                           to_train_config(a.flags, a.seed), beam, opts);
  report.save_csv(out / "report.csv");
  {
    std::ofstream os(out / "report.txt");
    os << report.to_text();
  }

  if (a.json_lines) {
    for (const mqa::AblationRow& row : report.rows) {
      std::cout << json{{"variant", mqa::variant_name(row.variant)},
                        {"word_error_rate", row.metrics.word_error_rate},
                        {"mean_loss", row.metrics.mean_loss_per_token},
                        {"exact_match_accuracy", row.metrics.exact_match_accuracy},
                        {"best_epoch", row.best_epoch},
                        {"best_valid_loss", nan_to_json_safe(row.best_valid_loss)}}
                       .dump()
                << "\n";
    }
  } else if (a.csv) {
    std::ifstream is(out / "report.csv");
    std::cout << is.rdbuf();
  } else {
    std::cout << report.to_text();
  }
  return 0;
}

struct GradcheckArgs {
  std::string config;
  std::string variant;  // empty: all five
  std::string state_source = "hidden";
  std::size_t vocab_size = 7;
  DimArgs dims{3, 4, 5};
  std::size_t d_img = 6;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<mqa::Variant> variants;
  if (a.variant.empty()) {
    variants = {mqa::Variant::Complete, mqa::Variant::AvgQuestion, mqa::Variant::SameLSTMs,
                mqa::Variant::NoTWS, mqa::Variant::Blind};
  } else {
    variants = {mqa::variant_from_name(a.variant)};
  }

  mqa::GradCheckOptions opts;
  opts.tolerance = a.tolerance;

  bool all_pass = true;
  for (mqa::Variant v : variants) {
    mqa::MQAConfig cfg;
    cfg.d_embed = a.dims.d_embed;
    cfg.d_hidden = a.dims.d_hidden;
    cfg.d_fuse = a.dims.d_fuse;
    cfg.d_img = a.d_img;
    cfg.vocab_size = a.vocab_size;
    cfg.variant = v;
    cfg.state_source = mqa::state_source_from_name(a.state_source);
    cfg.seed = a.seed;

    const mqa::GradCheckReport report = mqa::gradient_check(cfg, opts);
    for (const mqa::TensorCheckResult& t : report.tensors) {
      std::printf("[%s] %-24s max_rel_err %.3e  (%zu checked)  %s\n", mqa::variant_name(v),
                  t.name.c_str(), t.max_rel_error, t.checked, t.pass ? "PASS" : "FAIL");
    }
    std::printf("%s: %s (max_rel_err %.3e, tolerance %g)\n", mqa::variant_name(v),
                report.pass ? "PASS" : "FAIL", report.max_rel_error, a.tolerance);
    all_pass = all_pass && report.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mQA visual question answering: training, decoding, and evaluation"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic scene benchmark");
  gen->add_option("--config", gen_args.config, "key = value config file; flags override");
  gen->add_option("--n-images", gen_args.n_images, "number of scenes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--qpi", gen_args.qpi, "questions per image")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--seed", gen_args.seed, "generation seed")->capture_default_str();
  gen->add_option("--out-dir", gen_args.out_dir, "output directory")->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train one variant");
  train_cmd->add_option("--config", train_args.config, "key = value config file; flags override");
  train_cmd->add_option("--data-dir", train_args.data_dir,
                        "directory with train.tsv/valid.tsv/features/vocab.txt")
      ->required();
  train_cmd->add_option("--out", train_args.out_dir, "checkpoint output directory")->required();
  train_cmd->add_option("--variant", train_args.variant,
                        "complete|avg-question|same-LSTMs|noTWS|blind")
      ->capture_default_str();
  train_cmd->add_option("--state-source", train_args.state_source, "hidden|cell")
      ->capture_default_str();
  add_dim_flags(train_cmd, train_args.dims);
  add_train_flags(train_cmd, train_args.flags);
  train_cmd->add_option("--seed", train_args.seed, "init and shuffle seed")
      ->capture_default_str();
  train_cmd->add_flag("--json-lines", train_args.json_lines, "epoch records as JSON lines");

  AnswerArgs answer_args;
  CLI::App* answer_cmd = app.add_subcommand("answer", "answer one question with beam search");
  answer_cmd->add_option("--config", answer_args.config, "key = value config file; flags override");
  answer_cmd->add_option("--checkpoint", answer_args.checkpoint, "model checkpoint")
      ->required();
  answer_cmd->add_option("--features", answer_args.features,
                         "feature store (optional for blind checkpoints)");
  answer_cmd->add_option("--vocab", answer_args.vocab, "vocabulary file")->required();
  answer_cmd->add_option("--image-id", answer_args.image_id, "image id")->required();
  answer_cmd->add_option("--question", answer_args.question, "question text, space-tokenized")
      ->required();
  answer_cmd->add_option("--beam-k", answer_args.beam_k, "beam width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  answer_cmd->add_option("--max-len", answer_args.max_len, "answer length cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  answer_cmd->add_flag("--length-normalize", answer_args.length_normalize,
                       "rank hypotheses by logprob/length");
  answer_cmd->add_flag("--all", answer_args.all, "print every kept hypothesis");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--config", eval_args.config, "key = value config file; flags override");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_args.data, "dataset tsv")->required();
  eval_cmd->add_option("--features", eval_args.features,
                       "feature store (optional for blind checkpoints)");
  eval_cmd->add_option("--vocab", eval_args.vocab, "vocabulary file")->required();
  eval_cmd->add_option("--beam-k", eval_args.beam_k, "beam width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--max-len", eval_args.max_len, "answer length cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--threads", eval_args.threads, "evaluation worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_flag("--csv", eval_args.csv, "machine-readable CSV output");
  eval_cmd->add_flag("--json-lines", eval_args.json_lines, "machine-readable JSON output");

  AblateArgs ablate_args;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "train and compare all five variants");
  ablate_cmd->add_option("--config", ablate_args.config, "key = value config file; flags override");
  ablate_cmd->add_option("--data-dir", ablate_args.data_dir,
                         "directory with train/valid/test tsv, features, vocab")
      ->required();
  ablate_cmd->add_option("--out", ablate_args.out_dir, "report output directory")->required();
  ablate_cmd->add_option("--state-source", ablate_args.state_source, "hidden|cell")
      ->capture_default_str();
  add_dim_flags(ablate_cmd, ablate_args.dims);
  add_train_flags(ablate_cmd, ablate_args.flags);
  ablate_cmd->add_option("--seed", ablate_args.seed, "shared seed for every variant")
      ->capture_default_str();
  ablate_cmd->add_option("--beam-k", ablate_args.beam_k, "beam width for exact match")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ablate_cmd->add_option("--max-len", ablate_args.max_len, "answer length cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ablate_cmd->add_option("--threads", ablate_args.threads, "evaluation worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ablate_cmd->add_flag("--resume", ablate_args.resume,
                       "reuse finished per-variant checkpoints");
  ablate_cmd->add_flag("--csv", ablate_args.csv, "print the CSV report to stdout");
  ablate_cmd->add_flag("--json-lines", ablate_args.json_lines, "rows as JSON lines");

  GradcheckArgs gc_args;
  CLI::App* gc_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc_cmd->add_option("--config", gc_args.config, "key = value config file; flags override");
  gc_cmd->add_option("--variant", gc_args.variant, "single variant (default: all five)");
  gc_cmd->add_option("--state-source", gc_args.state_source, "hidden|cell")
      ->capture_default_str();
  gc_cmd->add_option("--vocab-size", gc_args.vocab_size, "dictionary size")
      ->check(CLI::Range(std::size_t{3}, std::size_t{100000}))
      ->capture_default_str();
  add_dim_flags(gc_cmd, gc_args.dims);
  gc_cmd->add_option("--d-img", gc_args.d_img, "image feature dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_args.tolerance, "max relative error accepted")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--seed", gc_args.seed, "probe seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    const std::pair<CLI::App*, const std::string*> configured[] = {
        {gen, &gen_args.config},           {train_cmd, &train_args.config},
        {answer_cmd, &answer_args.config}, {eval_cmd, &eval_args.config},
        {ablate_cmd, &ablate_args.config}, {gc_cmd, &gc_args.config},
    };
    for (const auto& [sub, config] : configured) {
      if (sub->parsed() && !config->empty()) apply_config_file(*sub, *config);
    }
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      log_resolved_config(*gen);
      return run_gen_data(gen_args);
    }
    if (train_cmd->parsed()) {
      log_resolved_config(*train_cmd);
      return run_train(train_args);
    }
    if (answer_cmd->parsed()) {
      log_resolved_config(*answer_cmd);
      return run_answer(answer_args);
    }
    if (eval_cmd->parsed()) {
      log_resolved_config(*eval_cmd);
      return run_eval(eval_args);
    }
    if (ablate_cmd->parsed()) {
      log_resolved_config(*ablate_cmd);
      return run_ablate(ablate_args);
    }
    if (gc_cmd->parsed()) {
      log_resolved_config(*gc_cmd);
      return run_gradcheck(gc_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
