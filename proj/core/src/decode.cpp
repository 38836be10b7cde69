#include "mqa/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace mqa {

namespace {

double hyp_score(const Hypothesis& h, const BeamConfig& cfg) {
  if (!cfg.length_normalize) return h.logprob;
  return h.logprob / static_cast<double>(h.ids.size());
}

// score descending, then ids lexicographically ascending
bool hyp_better(const Hypothesis& a, const Hypothesis& b, const BeamConfig& cfg) {
  const double sa = hyp_score(a, cfg);
  const double sb = hyp_score(b, cfg);
  if (sa != sb) return sa > sb;
  return a.ids < b.ids;
}

}  // namespace

std::vector<Hypothesis> beam_search(const MQAModel& model, const Vector& image,
                                    std::span<const int> question_ids, const BeamConfig& cfg) {
  if (cfg.k == 0) throw std::invalid_argument("beam width must be >= 1");
  if (cfg.max_len == 0) throw std::invalid_argument("max_len must be >= 1");

  const Vector r_q = encode_question(model, question_ids);
  const std::size_t n_vocab = model.config.vocab_size;

  std::vector<Hypothesis> live;
  live.push_back({{}, 0.0, zero_state(model.config.d_hidden), false});
  std::vector<Hypothesis> finished;

  while (!live.empty() && finished.size() < cfg.k) {
    std::vector<Hypothesis> pool;
    pool.reserve(live.size() * n_vocab);
    for (const Hypothesis& hyp : live) {
      const int input = hyp.ids.empty() ? Vocabulary::kBoaId : hyp.ids.back();
      auto [probs, next_state] = answer_step(model, r_q, image, hyp.state, input);
      const std::size_t first_child = pool.size();
      for (std::size_t id = 0; id < n_vocab; ++id) {
        const double p = probs[id];
        if (p == 0.0) continue;  // underflowed mass; log would be -inf
        Hypothesis cand;
        cand.ids = hyp.ids;
        cand.ids.push_back(static_cast<int>(id));
        cand.logprob = hyp.logprob + std::log(p);
        cand.finished =
            static_cast<int>(id) == Vocabulary::kEoaId || cand.ids.size() >= cfg.max_len;
        pool.push_back(std::move(cand));
      }
      // all children expand from the parent's advanced state
      for (std::size_t i = first_child; i < pool.size(); ++i) pool[i].state = next_state;
    }

    const std::size_t keep = std::min(cfg.k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                      [&cfg](const Hypothesis& a, const Hypothesis& b) {
                        return hyp_better(a, b, cfg);
                      });
    pool.resize(keep);

    live.clear();
    for (Hypothesis& cand : pool) {
      if (cand.finished) {
        finished.push_back(std::move(cand));
      } else {
        live.push_back(std::move(cand));
      }
    }
  }

  std::sort(finished.begin(), finished.end(),
            [&cfg](const Hypothesis& a, const Hypothesis& b) { return hyp_better(a, b, cfg); });
  if (finished.size() > cfg.k) finished.resize(cfg.k);
  return finished;
}

TokenSequence answer(const MQAModel& model, const ImageFeatureStore& features,
                     const Vocabulary& vocab, const std::string& image_id,
                     const TokenSequence& question_tokens, const BeamConfig& cfg) {
  const std::vector<int> question_ids = vocab.encode(question_tokens);
  Vector image;
  if (model.config.variant != Variant::Blind) {
    image = features.get(image_id);
  }
  const std::vector<Hypothesis> hyps = beam_search(model, image, question_ids, cfg);
  if (hyps.empty()) throw std::runtime_error("beam search produced no hypotheses");
  std::vector<int> ids = hyps.front().ids;
  if (!ids.empty() && ids.back() == Vocabulary::kEoaId) ids.pop_back();
  return vocab.decode(ids);
}

}  // namespace mqa
