#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mqa/nn.hpp"
#include "mqa/numerics.hpp"

using namespace mqa;

namespace {

// Scalar cell used by the hand-arithmetic oracles: all dims 1, gate
// parameters (W, U, b) = input (0.5, -0.25, 0.1), forget (0.3, 0.2, -0.2),
// output (-0.4, 0.35, 0.05), candidate (0.6, -0.5, 0.15).
LSTMCellParams scalar_cell() {
  LSTMCellParams p = make_lstm_cell(1, 1);
  const double w[4] = {0.5, 0.3, -0.4, 0.6};
  const double u[4] = {-0.25, 0.2, 0.35, -0.5};
  const double b[4] = {0.1, -0.2, 0.05, 0.15};
  for (std::size_t gate = 0; gate < 4; ++gate) {
    p.w[gate].at(0, 0) = w[gate];
    p.u[gate].at(0, 0) = u[gate];
    p.b[gate][0] = b[gate];
  }
  return p;
}

}  // namespace

TEST_CASE("embed returns table rows and rejects bad ids") {
  EmbeddingTable table{Matrix(3, 2)};
  CHECK(embed(table, 1) == Vector{0.0, 0.0});
  table.weights.at(2, 0) = 1.0;
  CHECK(embed(table, 2) == Vector{1.0, 0.0});
  CHECK(table.vocab_size() == 3);
  CHECK(table.dim() == 2);
  CHECK_THROWS_AS(embed(table, 3), std::out_of_range);
  CHECK_THROWS_AS(embed(table, -1), std::out_of_range);
}

TEST_CASE("lstm_step with zero parameters and zero state") {
  const LSTMCellParams p = make_lstm_cell(3, 2);
  LstmStepTrace trace;
  const LSTMState out = lstm_step(p, zero_state(3), Vector{0.7, -0.4}, &trace);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(trace.act[kInputGate][i] == 0.5);
    CHECK(trace.act[kForgetGate][i] == 0.5);
    CHECK(trace.act[kOutputGate][i] == 0.5);
    CHECK(trace.act[kCandidate][i] == 0.0);
    CHECK(out.c[i] == 0.0);
    CHECK(out.h[i] == 0.0);
  }
}

TEST_CASE("scalar lstm_step matches hand arithmetic") {
  const LSTMCellParams p = scalar_cell();
  LSTMState s;
  s.h = Vector{0.3};
  s.c = Vector{-0.2};
  LstmStepTrace trace;
  const LSTMState out = lstm_step(p, s, Vector{1.2}, &trace);
  CHECK(trace.act[kInputGate][0] == doctest::Approx(0.6513548646660542).epsilon(1e-15));
  CHECK(trace.act[kForgetGate][0] == doctest::Approx(0.5547792351072148).epsilon(1e-15));
  CHECK(trace.act[kOutputGate][0] == doctest::Approx(0.41945769517934034).epsilon(1e-15));
  CHECK(trace.act[kCandidate][0] == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(trace.cand_preact[0] == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(out.c[0] == doctest::Approx(0.35801965553811604).epsilon(1e-15));
  // h' = o * c' directly, no second nonlinearity
  CHECK(out.h[0] == doctest::Approx(0.1501740995409195).epsilon(1e-15));
  CHECK(out.h[0] == doctest::Approx(trace.act[kOutputGate][0] * out.c[0]).epsilon(1e-15));
}

TEST_CASE("saturated gates isolate or preserve the memory cell") {
  // forget approximately 0 and input approximately 0 erase the cell
  LSTMCellParams p = make_lstm_cell(1, 1);
  p.b[kForgetGate][0] = -800.0;
  p.b[kInputGate][0] = -800.0;
  p.b[kCandidate][0] = 5.0;
  LSTMState s;
  s.h = Vector{0.0};
  s.c = Vector{123.0};
  const LSTMState erased = lstm_step(p, s, Vector{0.0});
  CHECK(erased.c[0] == 0.0);

  // forget exactly 1 and input exactly 0 copy the cell through unchanged
  p.b[kForgetGate][0] = 800.0;
  p.b[kCandidate][0] = 0.0;
  const LSTMState copied = lstm_step(p, s, Vector{0.0});
  CHECK(copied.c[0] == 123.0);
}

TEST_CASE("lstm_step validates shapes and rejects non-finite states") {
  const LSTMCellParams p = make_lstm_cell(2, 3);
  CHECK_THROWS_AS(lstm_step(p, zero_state(2), Vector{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(lstm_step(p, zero_state(5), Vector{1.0, 2.0, 3.0}), std::invalid_argument);
  const Vector bad{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  CHECK_THROWS_AS(lstm_step(p, zero_state(2), bad), std::runtime_error);
}

TEST_CASE("lstm_step_backward matches central finite differences") {
  const std::size_t d_hidden = 3, d_in = 2;
  LSTMCellParams p = make_lstm_cell(d_hidden, d_in);
  SplitMix64 rng(5150);
  for (std::size_t gate = 0; gate < 4; ++gate) {
    fill_uniform(p.w[gate].data.data(), p.w[gate].size(), rng.next(), -0.8, 0.8);
    fill_uniform(p.u[gate].data.data(), p.u[gate].size(), rng.next(), -0.8, 0.8);
    fill_uniform(p.b[gate].begin(), d_hidden, rng.next(), -0.8, 0.8);
  }
  LSTMState s;
  s.h = Vector(d_hidden);
  s.c = Vector(d_hidden);
  Vector x(d_in), wh(d_hidden), wc(d_hidden);
  fill_uniform(s.h.begin(), d_hidden, rng.next(), -0.9, 0.9);
  fill_uniform(s.c.begin(), d_hidden, rng.next(), -0.9, 0.9);
  fill_uniform(x.begin(), d_in, rng.next(), -0.9, 0.9);
  fill_uniform(wh.begin(), d_hidden, rng.next(), -1.0, 1.0);
  fill_uniform(wc.begin(), d_hidden, rng.next(), -1.0, 1.0);

  // loss = wh . h_out + wc . c_out
  const auto loss = [&](const LSTMCellParams& q, const LSTMState& st, const Vector& in) {
    const LSTMState out = lstm_step(q, st, in);
    return dot(wh, out.h) + dot(wc, out.c);
  };

  LstmStepTrace trace;
  lstm_step(p, s, x, &trace);
  LSTMCellParams grad = make_lstm_cell(d_hidden, d_in);
  grad.set_zero();
  Vector dx(d_in), dh_prev(d_hidden), dc_prev(d_hidden);
  lstm_step_backward(p, trace, wh, wc, grad, dx, dh_prev, dc_prev);

  const double h = 1e-6;
  const auto check_scalar = [&](double analytic, double* slot) {
    const double keep = *slot;
    *slot = keep + h;
    const double up = loss(p, s, x);
    *slot = keep - h;
    const double dn = loss(p, s, x);
    *slot = keep;
    const double num = (up - dn) / (2.0 * h);
    const double rel = std::abs(analytic - num) / std::max({std::abs(analytic), std::abs(num), 1e-8});
    CHECK(rel <= 1e-6);
  };

  for (std::size_t gate = 0; gate < 4; ++gate) {
    for (std::size_t k = 0; k < p.w[gate].size(); ++k)
      check_scalar(grad.w[gate].data[k], &p.w[gate].data[k]);
    for (std::size_t k = 0; k < p.u[gate].size(); ++k)
      check_scalar(grad.u[gate].data[k], &p.u[gate].data[k]);
    for (std::size_t k = 0; k < d_hidden; ++k) check_scalar(grad.b[gate][k], &p.b[gate].data[k]);
  }
  for (std::size_t k = 0; k < d_in; ++k) check_scalar(dx[k], &x.data[k]);
  for (std::size_t k = 0; k < d_hidden; ++k) check_scalar(dh_prev[k], &s.h.data[k]);
  for (std::size_t k = 0; k < d_hidden; ++k) check_scalar(dc_prev[k], &s.c.data[k]);
}

TEST_CASE("fuse is zero on zero inputs and skips the image term when blind") {
  FusingParams p;
  p.v_rq = Matrix(2, 3);
  p.v_i = Matrix(2, 4);
  p.v_ra = Matrix(2, 2);
  p.v_w = Matrix(2, 5);
  p.b = Vector(2);
  const Vector r_q(3), r_a(2), w(5);
  const Vector image{1.0, -2.0, 3.0, -4.0};
  CHECK(fuse(p, r_q, &image, r_a, w) == Vector{0.0, 0.0});

  // zero V_i with an image equals the blind path with no image at all
  fill_uniform(p.v_rq.data.data(), p.v_rq.size(), 1, -0.5, 0.5);
  fill_uniform(p.v_ra.data.data(), p.v_ra.size(), 2, -0.5, 0.5);
  fill_uniform(p.v_w.data.data(), p.v_w.size(), 3, -0.5, 0.5);
  fill_uniform(p.b.begin(), 2, 4, -0.5, 0.5);
  Vector rq2(3), ra2(2), w2(5);
  fill_uniform(rq2.begin(), 3, 5, -1.0, 1.0);
  fill_uniform(ra2.begin(), 2, 6, -1.0, 1.0);
  fill_uniform(w2.begin(), 5, 7, -1.0, 1.0);
  const Vector with_zero_vi = fuse(p, rq2, &image, ra2, w2);
  FusingParams blind = p;
  blind.v_i = Matrix();
  const Vector without_image = fuse(blind, rq2, nullptr, ra2, w2);
  CHECK(with_zero_vi == without_image);
}

TEST_CASE("scalar fuse matches hand arithmetic through scaled_tanh") {
  FusingParams p;
  p.v_rq = Matrix(1, 1);
  p.v_i = Matrix(1, 1);
  p.v_ra = Matrix(1, 1);
  p.v_w = Matrix(1, 1);
  p.b = Vector(1);
  p.v_rq.at(0, 0) = 0.8;
  p.v_i.at(0, 0) = -0.3;
  p.v_ra.at(0, 0) = 0.45;
  p.v_w.at(0, 0) = 0.25;
  p.b[0] = 0.05;
  const Vector r_q{0.6}, image{-1.5}, r_a{0.15410624361146813}, w{0.7};
  Vector preact(1);
  const Vector out = fuse(p, r_q, &image, r_a, w, &preact);
  CHECK(preact[0] == doctest::Approx(1.2243478096251605).epsilon(1e-15));
  CHECK(out[0] == doctest::Approx(1.1548242689979076).epsilon(1e-15));
}

TEST_CASE("decode_distribution is uniform for a zero model") {
  EmbeddingTable table{Matrix(4, 3)};
  DecoderHead head;
  head.bias = Vector(4);
  const Vector p = decode_distribution(head, table, Vector{0.5, -0.5, 0.25});
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("decode_distribution matches direct softmax arithmetic") {
  // logits [0, ln 3, 0] -> [0.2, 0.6, 0.2]
  EmbeddingTable table{Matrix(3, 1)};
  table.weights.at(1, 0) = std::log(3.0);
  DecoderHead head;
  head.bias = Vector(3);
  Vector logits(3);
  const Vector p = decode_distribution(head, table, Vector{1.0}, &logits);
  CHECK(logits[1] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.2).epsilon(1e-14));
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) sum += p[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("transposed sharing gives the aligned row the top logit") {
  EmbeddingTable table{Matrix(5, 4)};
  fill_uniform(table.weights.data.data(), table.weights.size(), 77, -0.3, 0.3);
  Vector m(4);
  fill_uniform(m.begin(), 4, 78, -1.0, 1.0);
  // row 2 strongly aligned with m dominates every other inner product
  for (std::size_t cix = 0; cix < 4; ++cix) table.weights.at(2, cix) = 10.0 * m[cix];
  DecoderHead head;
  head.bias = Vector(5);
  const Vector p = decode_distribution(head, table, m);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i != 2) CHECK(p[2] > p[i]);
  }
}

TEST_CASE("free head uses its own matrix, not the table") {
  EmbeddingTable table{Matrix(3, 2)};
  fill_uniform(table.weights.data.data(), table.weights.size(), 79, -1.0, 1.0);
  DecoderHead head;
  head.mode = HeadMode::Free;
  head.free_weights = Matrix(3, 2);
  head.bias = Vector(3);
  head.free_weights.at(0, 0) = 100.0;
  const Vector p = decode_distribution(head, table, Vector{1.0, 0.0});
  CHECK(p[0] > 0.99);
}

TEST_CASE("full scalar chain reproduces the frozen distribution") {
  // one decode step of an all-dims-1, N=3 model under transposed sharing
  const LSTMCellParams cell = scalar_cell();
  EmbeddingTable table{Matrix(3, 1)};
  table.weights.at(0, 0) = 0.2;
  table.weights.at(1, 0) = -0.4;
  table.weights.at(2, 0) = 0.7;

  const Vector w = embed(table, 2);
  LstmStepTrace trace;
  const LSTMState s1 = lstm_step(cell, zero_state(1), w, &trace);
  CHECK(s1.h[0] == doctest::Approx(0.15410624361146813).epsilon(1e-15));
  CHECK(s1.c[0] == doctest::Approx(0.3480643633510565).epsilon(1e-15));

  FusingParams fp;
  fp.v_rq = Matrix(1, 1);
  fp.v_i = Matrix(1, 1);
  fp.v_ra = Matrix(1, 1);
  fp.v_w = Matrix(1, 1);
  fp.b = Vector(1);
  fp.v_rq.at(0, 0) = 0.8;
  fp.v_i.at(0, 0) = -0.3;
  fp.v_ra.at(0, 0) = 0.45;
  fp.v_w.at(0, 0) = 0.25;
  fp.b[0] = 0.05;
  const Vector r_q{0.6}, image{-1.5};
  const Vector fused = fuse(fp, r_q, &image, s1.h, w);
  CHECK(fused[0] == doctest::Approx(1.1548242689979076).epsilon(1e-15));

  IntermediateParams ip;
  ip.v_m = Matrix(1, 1);
  ip.b = Vector(1);
  ip.v_m.at(0, 0) = 1.1;
  ip.b[0] = -0.1;
  Vector m = ip.b;
  matvec_add(ip.v_m, fused, m);
  CHECK(m[0] == doctest::Approx(1.1703066958976984).epsilon(1e-15));
  m[0] = scaled_tanh(m[0]);
  CHECK(m[0] == doctest::Approx(1.1201807827146508).epsilon(1e-15));

  DecoderHead head;
  head.bias = Vector{0.02, -0.01, 0.0};
  Vector logits(3);
  const Vector probs = decode_distribution(head, table, m, &logits);
  CHECK(logits[0] == doctest::Approx(0.24403615654293018).epsilon(1e-14));
  CHECK(logits[1] == doctest::Approx(-0.4580723130858604).epsilon(1e-14));
  CHECK(logits[2] == doctest::Approx(0.7841265479002555).epsilon(1e-14));
  CHECK(probs[0] == doctest::Approx(0.3113614530213325).epsilon(1e-14));
  CHECK(probs[1] == doctest::Approx(0.154291858834689).epsilon(1e-14));
  CHECK(probs[2] == doctest::Approx(0.5343466881439785).epsilon(1e-14));
  CHECK(probs[0] + probs[1] + probs[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("make_lstm_cell shapes and set_zero") {
  LSTMCellParams p = make_lstm_cell(4, 6);
  CHECK(p.hidden_dim() == 4);
  CHECK(p.input_dim() == 6);
  for (std::size_t gate = 0; gate < 4; ++gate) {
    CHECK(p.w[gate].rows == 4);
    CHECK(p.w[gate].cols == 6);
    CHECK(p.u[gate].rows == 4);
    CHECK(p.u[gate].cols == 4);
    CHECK(p.b[gate].size() == 4);
  }
  p.w[0].fill(3.0);
  p.set_zero();
  CHECK(p.w[0].at(0, 0) == 0.0);
}
