#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "mqa/model.hpp"
#include "mqa/nn.hpp"
#include "mqa/numerics.hpp"

namespace {

mqa::Vector random_vector(std::size_t n, std::uint64_t seed) {
  mqa::Vector v(n);
  mqa::fill_uniform(v.begin(), n, seed, -1.0, 1.0);
  return v;
}

// Paper-preset layer sizes: 512-dim embeddings feeding 400 memory cells.
void BM_lstm_step(benchmark::State& state) {
  const std::size_t d_hidden = 400, d_in = 512;
  auto cell = mqa::make_lstm_cell(d_hidden, d_in);
  for (auto& m : cell.w) mqa::fill_uniform(m.data.data(), m.size(), 1, -0.08, 0.08);
  for (auto& m : cell.u) mqa::fill_uniform(m.data.data(), m.size(), 2, -0.08, 0.08);
  mqa::LSTMState s = mqa::zero_state(d_hidden);
  const mqa::Vector x = random_vector(d_in, 3);
  for (auto _ : state) {
    s = mqa::lstm_step(cell, s, x);
    benchmark::DoNotOptimize(s.h.data.data());
  }
}
BENCHMARK(BM_lstm_step);

void BM_softmax(benchmark::State& state) {
  const mqa::Vector logits = random_vector(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) {
    mqa::Vector p = mqa::softmax(logits);
    benchmark::DoNotOptimize(p.data.data());
  }
}
BENCHMARK(BM_softmax)->Arg(100)->Arg(2000);

mqa::MQAConfig bench_config() {
  mqa::MQAConfig cfg;
  cfg.d_embed = 64;
  cfg.d_hidden = 64;
  cfg.d_fuse = 64;
  cfg.d_img = 33;
  cfg.vocab_size = 32;
  cfg.seed = 7;
  return cfg;
}

void BM_answer_step(benchmark::State& state) {
  const mqa::MQAModel model = mqa::init_model(bench_config());
  const mqa::Vector r_q = random_vector(model.config.question_dim(), 5);
  const mqa::Vector image = random_vector(model.config.d_img, 6);
  const mqa::LSTMState s = mqa::zero_state(model.config.d_hidden);
  for (auto _ : state) {
    auto [probs, next] = mqa::answer_step(model, r_q, image, s, 3);
    benchmark::DoNotOptimize(probs.data.data());
    benchmark::DoNotOptimize(next.h.data.data());
  }
}
BENCHMARK(BM_answer_step);

void BM_forward_backward(benchmark::State& state) {
  const mqa::MQAModel model = mqa::init_model(bench_config());
  mqa::ImageFeatureStore store(model.config.d_img);
  store.put("img", random_vector(model.config.d_img, 8));
  mqa::EncodedExample ex;
  ex.image_id = "img";
  ex.question = {3, 4, 5, 6, 7};
  ex.answer = {8, 9};
  mqa::GradientSet grads = mqa::make_gradient_set(model);
  for (auto _ : state) {
    grads.set_zero();
    const mqa::ForwardTrace trace = mqa::forward_traced(model, ex, store);
    mqa::accumulate_backward(model, trace, 1.0, grads);
    benchmark::DoNotOptimize(grads.embedding.data.data());
  }
}
BENCHMARK(BM_forward_backward);

}  // namespace

BENCHMARK_MAIN();
