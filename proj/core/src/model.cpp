#include "mqa/model.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace mqa {

namespace {

constexpr double kInitRange = 0.08;

const char* const kGateNames[4] = {"input", "forget", "output", "candidate"};

std::string lower_key(const std::string& name) {
  std::string key;
  key.reserve(name.size());
  for (char ch : name) {
    if (ch == '_') ch = '-';
    key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return key;
}

// Every weight tensor draws from its own stream keyed by name, so variants
// that share a tensor layout also share its initial values at equal seeds.
void seed_matrix(Matrix& m, std::uint64_t model_seed, const std::string& name) {
  fill_uniform(m.data.data(), m.size(), mix_seed(model_seed, name), -kInitRange, kInitRange);
}

void seed_lstm(LSTMCellParams& cell, std::uint64_t model_seed, const std::string& prefix) {
  for (std::size_t g = 0; g < 4; ++g) {
    seed_matrix(cell.w[g], model_seed, prefix + ".w_" + kGateNames[g]);
    seed_matrix(cell.u[g], model_seed, prefix + ".u_" + kGateNames[g]);
  }
}

struct TensorListBuilder {
  std::vector<TensorRef> out;

  void add(std::string name, Matrix& m) {
    if (!m.empty()) out.push_back({std::move(name), m.data.data(), m.size()});
  }
  void add(std::string name, Vector& v) {
    if (!v.empty()) out.push_back({std::move(name), v.data.data(), v.size()});
  }
  void lstm(const std::string& prefix, LSTMCellParams& cell) {
    for (std::size_t g = 0; g < 4; ++g) {
      add(prefix + ".w_" + kGateNames[g], cell.w[g]);
      add(prefix + ".u_" + kGateNames[g], cell.u[g]);
      add(prefix + ".b_" + kGateNames[g], cell.b[g]);
    }
  }
  void fusing(FusingParams& p) {
    add("fusing.v_rq", p.v_rq);
    add("fusing.v_i", p.v_i);
    add("fusing.v_ra", p.v_ra);
    add("fusing.v_w", p.v_w);
    add("fusing.b", p.b);
  }
  void intermediate(IntermediateParams& p) {
    add("intermediate.v_m", p.v_m);
    add("intermediate.b", p.b);
  }
};

Vector elemwise_scaled_tanh_backward(const Vector& upstream, const Vector& preact) {
  Vector out(upstream.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = upstream[i] * scaled_tanh_deriv(preact[i]);
  }
  return out;
}

void add_to_row(Matrix& m, std::size_t r, const Vector& v) {
  double* row = m.row(r);
  for (std::size_t j = 0; j < v.size(); ++j) row[j] += v[j];
}

Vector fetch_image(const MQAModel& model, const std::string& image_id,
                   const ImageFeatureStore& features) {
  Vector image = features.get(image_id);
  if (image.size() != model.config.d_img) {
    throw std::invalid_argument("feature vector for '" + image_id + "' has dimension " +
                                std::to_string(image.size()) + ", model expects " +
                                std::to_string(model.config.d_img));
  }
  return image;
}

Vector mean_embedding(const MQAModel& model, std::span<const int> ids) {
  Vector mean(model.config.d_embed);
  for (int id : ids) axpy(1.0, embed(model.embedding, id), mean);
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (double& v : mean) v *= inv;
  return mean;
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Complete:
      return "complete";
    case Variant::AvgQuestion:
      return "avg-question";
    case Variant::SameLSTMs:
      return "same-LSTMs";
    case Variant::NoTWS:
      return "noTWS";
    case Variant::Blind:
      return "blind";
  }
  throw std::logic_error("unreachable variant value");
}

Variant variant_from_name(const std::string& name) {
  const std::string key = lower_key(name);
  if (key == "complete") return Variant::Complete;
  if (key == "avg-question" || key == "avgquestion") return Variant::AvgQuestion;
  if (key == "same-lstms" || key == "samelstms") return Variant::SameLSTMs;
  if (key == "notws" || key == "no-tws") return Variant::NoTWS;
  if (key == "blind") return Variant::Blind;
  throw std::invalid_argument("unknown variant name: " + name);
}

const char* state_source_name(StateSource s) {
  return s == StateSource::Hidden ? "hidden" : "cell";
}

StateSource state_source_from_name(const std::string& name) {
  const std::string key = lower_key(name);
  if (key == "hidden" || key == "h") return StateSource::Hidden;
  if (key == "cell" || key == "c") return StateSource::Cell;
  throw std::invalid_argument("unknown state source: " + name);
}

MQAModel init_model(const MQAConfig& config) {
  if (config.d_embed == 0 || config.d_hidden == 0 || config.d_fuse == 0) {
    throw std::invalid_argument("model dimensions must all be >= 1");
  }
  if (config.vocab_size < 3) {
    throw std::invalid_argument("vocab size must cover the three special tokens");
  }
  if (config.variant != Variant::Blind && config.d_img == 0) {
    throw std::invalid_argument("d_img must be >= 1 for image-reading variants");
  }

  MQAModel m;
  m.config = config;

  m.embedding.weights = Matrix(config.vocab_size, config.d_embed);
  seed_matrix(m.embedding.weights, config.seed, "embedding");

  if (config.variant == Variant::SameLSTMs) {
    auto shared =
        std::make_shared<LSTMCellParams>(make_lstm_cell(config.d_hidden, config.d_embed));
    seed_lstm(*shared, config.seed, "lstm_shared");
    m.lstm_q = shared;
    m.lstm_a = shared;
  } else {
    if (config.variant != Variant::AvgQuestion) {
      m.lstm_q =
          std::make_shared<LSTMCellParams>(make_lstm_cell(config.d_hidden, config.d_embed));
      seed_lstm(*m.lstm_q, config.seed, "lstm_q");
    }
    m.lstm_a = std::make_shared<LSTMCellParams>(make_lstm_cell(config.d_hidden, config.d_embed));
    seed_lstm(*m.lstm_a, config.seed, "lstm_a");
  }

  m.fusing.v_rq = Matrix(config.d_fuse, config.question_dim());
  seed_matrix(m.fusing.v_rq, config.seed, "fusing.v_rq");
  if (config.variant != Variant::Blind) {
    m.fusing.v_i = Matrix(config.d_fuse, config.d_img);
    seed_matrix(m.fusing.v_i, config.seed, "fusing.v_i");
  }
  m.fusing.v_ra = Matrix(config.d_fuse, config.d_hidden);
  seed_matrix(m.fusing.v_ra, config.seed, "fusing.v_ra");
  m.fusing.v_w = Matrix(config.d_fuse, config.d_embed);
  seed_matrix(m.fusing.v_w, config.seed, "fusing.v_w");
  m.fusing.b = Vector(config.d_fuse);

  m.intermediate.v_m = Matrix(config.d_embed, config.d_fuse);
  seed_matrix(m.intermediate.v_m, config.seed, "intermediate.v_m");
  m.intermediate.b = Vector(config.d_embed);

  m.head.mode =
      config.variant == Variant::NoTWS ? HeadMode::Free : HeadMode::TransposedShared;
  if (m.head.mode == HeadMode::Free) {
    m.head.free_weights = Matrix(config.vocab_size, config.d_embed);
    seed_matrix(m.head.free_weights, config.seed, "head.weights");
  }
  m.head.bias = Vector(config.vocab_size);

  return m;
}

void GradientSet::set_zero() {
  embedding.fill(0.0);
  if (lstm_q) lstm_q->set_zero();
  if (lstm_a) lstm_a->set_zero();
  fusing.set_zero();
  intermediate.set_zero();
  head_free.fill(0.0);
  head_bias.fill(0.0);
}

GradientSet make_gradient_set(const MQAModel& model) {
  GradientSet g;
  g.embedding = Matrix(model.embedding.weights.rows, model.embedding.weights.cols);
  if (model.lstm_a) {
    g.lstm_a = std::make_shared<LSTMCellParams>(
        make_lstm_cell(model.lstm_a->hidden_dim(), model.lstm_a->input_dim()));
  }
  if (model.lstm_q) {
    // a shared model cell gets a single shared gradient buffer
    g.lstm_q = model.lstm_q == model.lstm_a
                   ? g.lstm_a
                   : std::make_shared<LSTMCellParams>(
                         make_lstm_cell(model.lstm_q->hidden_dim(), model.lstm_q->input_dim()));
  }
  g.fusing.v_rq = Matrix(model.fusing.v_rq.rows, model.fusing.v_rq.cols);
  if (!model.fusing.v_i.empty()) {
    g.fusing.v_i = Matrix(model.fusing.v_i.rows, model.fusing.v_i.cols);
  }
  g.fusing.v_ra = Matrix(model.fusing.v_ra.rows, model.fusing.v_ra.cols);
  g.fusing.v_w = Matrix(model.fusing.v_w.rows, model.fusing.v_w.cols);
  g.fusing.b = Vector(model.fusing.b.size());
  g.intermediate.v_m = Matrix(model.intermediate.v_m.rows, model.intermediate.v_m.cols);
  g.intermediate.b = Vector(model.intermediate.b.size());
  if (model.head.mode == HeadMode::Free) {
    g.head_free = Matrix(model.head.free_weights.rows, model.head.free_weights.cols);
  }
  g.head_bias = Vector(model.head.bias.size());
  return g;
}

std::vector<TensorRef> parameter_tensors(MQAModel& model) {
  TensorListBuilder b;
  b.add("embedding", model.embedding.weights);
  const bool shared = model.lstm_q && model.lstm_q == model.lstm_a;
  if (model.lstm_q && !shared) b.lstm("lstm_q", *model.lstm_q);
  if (model.lstm_a) b.lstm(shared ? "lstm_shared" : "lstm_a", *model.lstm_a);
  b.fusing(model.fusing);
  b.intermediate(model.intermediate);
  if (model.head.mode == HeadMode::Free) b.add("head.weights", model.head.free_weights);
  b.add("head.bias", model.head.bias);
  return std::move(b.out);
}

std::vector<TensorRef> gradient_tensors(GradientSet& grads) {
  TensorListBuilder b;
  b.add("embedding", grads.embedding);
  const bool shared = grads.lstm_q && grads.lstm_q == grads.lstm_a;
  if (grads.lstm_q && !shared) b.lstm("lstm_q", *grads.lstm_q);
  if (grads.lstm_a) b.lstm(shared ? "lstm_shared" : "lstm_a", *grads.lstm_a);
  b.fusing(grads.fusing);
  b.intermediate(grads.intermediate);
  b.add("head.weights", grads.head_free);
  b.add("head.bias", grads.head_bias);
  return std::move(b.out);
}

std::size_t parameter_count(const MQAModel& model) {
  // enumeration only reads shapes; the const_cast never writes
  auto& mutable_model = const_cast<MQAModel&>(model);
  std::size_t n = 0;
  for (const TensorRef& t : parameter_tensors(mutable_model)) n += t.size;
  return n;
}

MQAModel clone_model(const MQAModel& model) {
  MQAModel copy = model;  // shared_ptr members still alias the source here
  if (model.lstm_a) {
    copy.lstm_a = std::make_shared<LSTMCellParams>(*model.lstm_a);
    copy.lstm_q = model.lstm_q == model.lstm_a ? copy.lstm_a
                  : model.lstm_q ? std::make_shared<LSTMCellParams>(*model.lstm_q)
                                 : nullptr;
  }
  return copy;
}

EncodedExample encode_example(const Vocabulary& vocab, const QAExample& ex) {
  return {ex.image_id, vocab.encode(ex.question), vocab.encode(ex.answer)};
}

Vector encode_question(const MQAModel& model, std::span<const int> question_ids) {
  if (question_ids.empty()) {
    throw std::invalid_argument("cannot encode an empty question");
  }
  if (model.config.variant == Variant::AvgQuestion) {
    return mean_embedding(model, question_ids);
  }
  LSTMState s = zero_state(model.config.d_hidden);
  for (int id : question_ids) {
    s = lstm_step(*model.lstm_q, s, embed(model.embedding, id));
  }
  return model.config.state_source == StateSource::Hidden ? s.h : s.c;
}

std::pair<Vector, LSTMState> answer_step(const MQAModel& model, const Vector& r_q,
                                         const Vector& image, const LSTMState& prev,
                                         int word_id) {
  const Vector x = embed(model.embedding, word_id);
  LSTMState next = lstm_step(*model.lstm_a, prev, x);
  const Vector& r_a = model.config.state_source == StateSource::Hidden ? next.h : next.c;
  const bool blind = model.config.variant == Variant::Blind;
  const Vector f = fuse(model.fusing, r_q, blind ? nullptr : &image, r_a, x);
  Vector pre = matvec(model.intermediate.v_m, f);
  axpy(1.0, model.intermediate.b, pre);
  Vector m(pre.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = scaled_tanh(pre[i]);
  Vector probs = decode_distribution(model.head, model.embedding, m);
  return {std::move(probs), std::move(next)};
}

ForwardTrace forward_traced(const MQAModel& model, const EncodedExample& ex,
                            const ImageFeatureStore& features) {
  if (ex.question.empty()) {
    throw std::invalid_argument("cannot encode an empty question");
  }
  const MQAConfig& cfg = model.config;
  const bool blind = cfg.variant == Variant::Blind;

  ForwardTrace tr;
  tr.question_ids = ex.question;

  if (cfg.variant == Variant::AvgQuestion) {
    tr.r_q = mean_embedding(model, ex.question);
  } else {
    LSTMState s = zero_state(cfg.d_hidden);
    tr.question_steps.resize(ex.question.size());
    for (std::size_t i = 0; i < ex.question.size(); ++i) {
      s = lstm_step(*model.lstm_q, s, embed(model.embedding, ex.question[i]),
                    &tr.question_steps[i]);
    }
    tr.r_q = cfg.state_source == StateSource::Hidden ? s.h : s.c;
  }

  if (!blind) tr.image = fetch_image(model, ex.image_id, features);

  std::vector<int> inputs;
  inputs.reserve(ex.answer.size() + 1);
  inputs.push_back(Vocabulary::kBoaId);
  inputs.insert(inputs.end(), ex.answer.begin(), ex.answer.end());
  std::vector<int> targets = ex.answer;
  targets.push_back(Vocabulary::kEoaId);

  LSTMState state = zero_state(cfg.d_hidden);
  tr.steps.resize(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    AnswerStepTrace& st = tr.steps[t];
    st.input_id = inputs[t];
    st.target_id = targets[t];
    const Vector x = embed(model.embedding, inputs[t]);
    LSTMState next = lstm_step(*model.lstm_a, state, x, &st.lstm);
    const Vector& r_a = cfg.state_source == StateSource::Hidden ? next.h : next.c;
    st.fuse_out = fuse(model.fusing, tr.r_q, blind ? nullptr : &tr.image, r_a, x,
                       &st.fuse_preact);
    st.inter_preact = matvec(model.intermediate.v_m, st.fuse_out);
    axpy(1.0, model.intermediate.b, st.inter_preact);
    st.inter_out = Vector(st.inter_preact.size());
    for (std::size_t i = 0; i < st.inter_out.size(); ++i) {
      st.inter_out[i] = scaled_tanh(st.inter_preact[i]);
    }
    st.probs = decode_distribution(model.head, model.embedding, st.inter_out);
    tr.nll -= std::log(st.probs[static_cast<std::size_t>(st.target_id)]);
    state = std::move(next);
  }
  return tr;
}

NllResult sequence_nll(const MQAModel& model, const EncodedExample& ex,
                       const ImageFeatureStore& features) {
  const Vector r_q = encode_question(model, ex.question);
  Vector image;
  if (model.config.variant != Variant::Blind) {
    image = fetch_image(model, ex.image_id, features);
  }

  NllResult res;
  LSTMState state = zero_state(model.config.d_hidden);
  int input = Vocabulary::kBoaId;
  for (std::size_t t = 0; t <= ex.answer.size(); ++t) {
    auto [probs, next] = answer_step(model, r_q, image, state, input);
    const int target = t < ex.answer.size() ? ex.answer[t] : Vocabulary::kEoaId;
    res.total -= std::log(probs[static_cast<std::size_t>(target)]);
    res.n_targets += 1;
    state = std::move(next);
    input = target;
  }
  return res;
}

NllResult sequence_nll(const MQAModel& model, const Vocabulary& vocab, const QAExample& ex,
                       const ImageFeatureStore& features) {
  return sequence_nll(model, encode_example(vocab, ex), features);
}

void accumulate_backward(const MQAModel& model, const ForwardTrace& trace, double loss_grad,
                         GradientSet& grads) {
  if (trace.steps.empty()) {
    throw std::invalid_argument("forward trace has no decoder steps");
  }
  const MQAConfig& cfg = model.config;
  const bool tws = model.head.mode == HeadMode::TransposedShared;
  const std::size_t d_hidden = cfg.d_hidden;

  Vector dr_q(trace.r_q.size());
  Vector dh_next(d_hidden), dc_next(d_hidden);

  for (std::size_t ti = trace.steps.size(); ti-- > 0;) {
    const AnswerStepTrace& st = trace.steps[ti];

    // cross-entropy through softmax: dlogits = p - onehot(target)
    Vector dlogits = st.probs;
    dlogits[static_cast<std::size_t>(st.target_id)] -= 1.0;
    if (loss_grad != 1.0) {
      for (double& v : dlogits) v *= loss_grad;
    }

    const Matrix& w_head = tws ? model.embedding.weights : model.head.free_weights;
    Matrix& gw_head = tws ? grads.embedding : grads.head_free;
    add_outer(gw_head, dlogits, st.inter_out);
    axpy(1.0, dlogits, grads.head_bias);
    Vector dm(st.inter_out.size());
    matvec_transpose_add(w_head, dlogits, dm);

    Vector dpre_m = elemwise_scaled_tanh_backward(dm, st.inter_preact);
    add_outer(grads.intermediate.v_m, dpre_m, st.fuse_out);
    axpy(1.0, dpre_m, grads.intermediate.b);
    Vector df(st.fuse_out.size());
    matvec_transpose_add(model.intermediate.v_m, dpre_m, df);

    Vector dpre_f = elemwise_scaled_tanh_backward(df, st.fuse_preact);
    add_outer(grads.fusing.v_rq, dpre_f, trace.r_q);
    matvec_transpose_add(model.fusing.v_rq, dpre_f, dr_q);
    if (!trace.image.empty()) {
      // image features are inputs, not parameters: no gradient flows to them
      add_outer(grads.fusing.v_i, dpre_f, trace.image);
    }
    const Vector& r_a = cfg.state_source == StateSource::Hidden ? st.lstm.h_out : st.lstm.c_out;
    add_outer(grads.fusing.v_ra, dpre_f, r_a);
    Vector dr_a(d_hidden);
    matvec_transpose_add(model.fusing.v_ra, dpre_f, dr_a);
    add_outer(grads.fusing.v_w, dpre_f, st.lstm.x);
    Vector dx(st.lstm.x.size());
    matvec_transpose_add(model.fusing.v_w, dpre_f, dx);
    axpy(1.0, dpre_f, grads.fusing.b);

    // the answer word embedding feeds both the LSTM input and the V_w term,
    // so dx carries the fusing contribution into the step backward
    Vector dh = dh_next;
    Vector dc = dc_next;
    if (cfg.state_source == StateSource::Hidden) {
      axpy(1.0, dr_a, dh);
    } else {
      axpy(1.0, dr_a, dc);
    }
    Vector dh_prev(d_hidden), dc_prev(d_hidden);
    lstm_step_backward(*model.lstm_a, st.lstm, dh, dc, *grads.lstm_a, dx, dh_prev, dc_prev);
    add_to_row(grads.embedding, static_cast<std::size_t>(st.input_id), dx);
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }
  // gradient into the decoder's initial zero state is discarded

  if (cfg.variant == Variant::AvgQuestion) {
    const double inv = 1.0 / static_cast<double>(trace.question_ids.size());
    Vector per_token(dr_q.size());
    for (std::size_t i = 0; i < per_token.size(); ++i) per_token[i] = dr_q[i] * inv;
    for (int id : trace.question_ids) {
      add_to_row(grads.embedding, static_cast<std::size_t>(id), per_token);
    }
  } else {
    Vector dh(d_hidden), dc(d_hidden);
    if (cfg.state_source == StateSource::Hidden) {
      dh = dr_q;
    } else {
      dc = dr_q;
    }
    for (std::size_t qi = trace.question_steps.size(); qi-- > 0;) {
      const LstmStepTrace& qt = trace.question_steps[qi];
      Vector dx(qt.x.size());
      Vector dh_prev(d_hidden), dc_prev(d_hidden);
      lstm_step_backward(*model.lstm_q, qt, dh, dc, *grads.lstm_q, dx, dh_prev, dc_prev);
      add_to_row(grads.embedding, static_cast<std::size_t>(trace.question_ids[qi]), dx);
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    }
  }
}

GradientSet backward(const MQAModel& model, const ForwardTrace& trace, double loss_grad) {
  GradientSet grads = make_gradient_set(model);
  accumulate_backward(model, trace, loss_grad, grads);
  return grads;
}

}  // namespace mqa
