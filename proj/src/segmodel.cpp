#include "latentseq/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace latentseq::segmodel {

using namespace ndgrad;
using util::kNegInf;

// ---------------------------------------------------------------------------
// vocab

int Vocab::lookup(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? kUnk : it->second;
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& texts) {
  Vocab v;
  v.tokens = {"<unk>", "<bos>", "<eos>", "<seg>"};
  std::set<std::string> seen;
  for (const auto& text : texts)
    for (const auto& tok : text)
      if (!tok.empty()) seen.insert(tok);
  for (const auto& tok : seen) {
    if (std::find(v.tokens.begin(), v.tokens.end(), tok) == v.tokens.end())
      v.tokens.push_back(tok);
  }
  for (int i = 0; i < v.size(); ++i) v.index[v.tokens[i]] = i;
  return v;
}

// ---------------------------------------------------------------------------
// model

SegModel::SegModel(const SegModelConfig& config, std::uint64_t seed)
    : cfg_(config) {
  if (cfg_.vocab < 5) throw std::invalid_argument("SegModel: vocab too small");
  if (cfg_.max_seg_len < 1) throw std::invalid_argument("SegModel: L < 1");
  auto rng = util::rng_stream(seed, 0xf00d);
  int e = cfg_.embed, h = cfg_.hidden, v = cfg_.vocab;
  emb_ = params_.add("emb", {v, e}, rng);
  enc_gru_ = nn::make_gru(params_, "enc", e, h, rng);
  dec_gru_ = nn::make_gru(params_, "dec", e, h, rng);
  w_init_ = params_.add("init.w", {h, h}, rng);
  b_init_ = params_.add_zeros("init.b", {h});
  w_mask_init_ = params_.add("mask_init.w", {h, h}, rng);
  b_mask_init_ = params_.add_zeros("mask_init.b", {h});
  w_att_ = params_.add("att.w", {h, h}, rng);
  w1_ = params_.add("out.w1", {v, h}, rng);
  w2_ = params_.add("out.w2", {v, h}, rng);
  b_out_ = params_.add_zeros("out.b", {v});
  wgd_ = params_.add("pgen.wd", {h, h}, rng);
  wgc_ = params_.add("pgen.wc", {h, h}, rng);
  bg1_ = params_.add_zeros("pgen.b1", {h});
  wg2_ = params_.add("pgen.w2", {1, h}, rng);
  bg2_ = params_.add_zeros("pgen.b2", {1});
  m_proj_ = params_.add("trans.m", {e, h}, rng);
  n_proj_ = params_.add("trans.n", {e, h}, rng);
  null_repr_ = params_.add("trans.null_repr", {e}, rng);
}

EncoderOut SegModel::encode(const RecordSet& records) const {
  int K = records.K();
  if (K < 1 || K > 8)
    throw std::invalid_argument("encode: record count out of [1,8]");
  EncoderOut out;
  out.positions.resize(K + 1);
  for (int r = 0; r < K; ++r) {
    const auto& rec = records.records[r];
    out.positions[r + 1].push_back(static_cast<int>(out.flat_tokens.size()));
    out.flat_tokens.push_back(rec.slot);
    out.record_of_pos.push_back(r + 1);
    for (int tok : rec.value) {
      out.positions[r + 1].push_back(static_cast<int>(out.flat_tokens.size()));
      out.flat_tokens.push_back(tok);
      out.record_of_pos.push_back(r + 1);
    }
  }

  int n = static_cast<int>(out.flat_tokens.size());
  Value state = Value::vector(std::vector<double>(cfg_.hidden, 0.0));
  out.h.reserve(n);
  std::vector<Value> embeds(n);
  for (int i = 0; i < n; ++i) {
    if (out.flat_tokens[i] < 0 || out.flat_tokens[i] >= cfg_.vocab)
      throw std::invalid_argument("encode: token id out of range");
    embeds[i] = row(emb_, out.flat_tokens[i]);
    state = nn::gru_step(enc_gru_, state, embeds[i]);
    out.h.push_back(state);
  }
  out.init_state = vtanh(add(matvec(w_init_, state), b_init_));

  // record representations: elementwise max over contained token embeddings;
  // the null record's representation is a learned vector
  out.rec_repr.resize(K + 1);
  out.rec_repr[0] = null_repr_;
  for (int r = 1; r <= K; ++r) {
    std::vector<Value> embs;
    for (int pos : out.positions[r]) embs.push_back(embeds[pos]);
    out.rec_repr[r] = embs.size() == 1 ? embs[0] : emax(embs);
  }
  return out;
}

SegModel::StateShared SegModel::state_shared(const Value& state) const {
  StateShared s;
  s.w1d_b = add(matvec(w1_, state), b_out_);
  s.gd = add(matvec(wgd_, state), bg1_);
  return s;
}

SegModel::OutputDist SegModel::output_dist(const EncoderOut& enc,
                                           const Value& state, int record,
                                           const StateShared& shared) const {
  OutputDist out;
  const auto& pos = enc.positions[record];
  if (pos.empty()) {
    // null record: zero context vector, generation-only output
    out.context = Value::vector(std::vector<double>(cfg_.hidden, 0.0));
    out.p_gen = Value::scalar(1.0);
    out.p_vocab = softmax(shared.w1d_b);
    return out;
  }
  Value query = matvec(w_att_, state);
  std::vector<Value> scores;
  scores.reserve(pos.size());
  for (int p : pos) scores.push_back(dot(enc.h[p], query));
  out.attention = softmax(concat_n(scores));
  Value ctx;
  for (std::size_t k = 0; k < pos.size(); ++k) {
    Value term = mul(enc.h[pos[k]], pick(out.attention, static_cast<int>(k)));
    ctx = k == 0 ? term : add(ctx, term);
  }
  out.context = ctx;
  out.p_gen = vsigmoid(add(
      matvec(wg2_, vtanh(add(shared.gd, matvec(wgc_, ctx)))), bg2_));
  out.p_vocab = softmax(add(shared.w1d_b, matvec(w2_, ctx)));
  return out;
}

Value SegModel::transition_row(const EncoderOut& enc, const Value& context,
                               const Value& state, int prev_record) const {
  Value key = add(matvec(m_proj_, context), matvec(n_proj_, state));
  int K = static_cast<int>(enc.rec_repr.size()) - 1;
  std::vector<Value> logits;
  logits.reserve(K + 1);
  for (int j = 0; j <= K; ++j) {
    if (j == prev_record && j != 0)
      logits.push_back(Value::scalar(kNegInf));  // no self-transition
    else
      logits.push_back(dot(enc.rec_repr[j], key));
  }
  return log_softmax(concat_n(logits));
}

lattice::SegmentalExpr SegModel::score_tables_value(const RecordSet& records,
                                                    const Utterance& y) const {
  int m = y.size();
  if (m < 1) throw std::invalid_argument("score_tables: empty utterance");
  EncoderOut enc = encode(records);
  int K = records.K();
  int L = cfg_.max_seg_len;

  // teacher-forced decoder states; the end-of-segment symbol never updates
  // the state, so these are segmentation-independent and cacheable
  std::vector<Value> dstate(m + 1);
  dstate[0] = enc.init_state;
  for (int t = 1; t <= m; ++t) {
    int tok = y.tokens[t - 1];
    if (tok < 0 || tok >= cfg_.vocab)
      throw std::invalid_argument("score_tables: token id out of range");
    dstate[t] = nn::gru_step(dec_gru_, dstate[t - 1], row(emb_, tok));
  }

  // one output distribution per (state t, record j), reused for the emission
  // of y_{t+1} and for the end-of-segment symbol after y_t
  std::vector<std::vector<OutputDist>> dist(
      m + 1, std::vector<OutputDist>(K + 1));
  for (int t = 0; t <= m; ++t) {
    StateShared shared = state_shared(dstate[t]);
    for (int j = 0; j <= K; ++j)
      dist[t][j] = output_dist(enc, dstate[t], j, shared);
  }

  auto emission_log = [&](int t, int j, int tok) {
    const OutputDist& d = dist[t][j];
    if (enc.positions[j].empty()) return vlog(pick(d.p_vocab, tok));
    std::vector<int> src;
    for (int p : enc.positions[j]) src.push_back(enc.flat_tokens[p]);
    return vlog(pointer::mixture_value(d.p_gen, d.attention, d.p_vocab, src, tok));
  };

  std::vector<std::vector<Value>> emit(m + 1), eos(m + 1);
  for (int t = 1; t <= m; ++t) {
    emit[t].resize(K + 1);
    eos[t].resize(K + 1);
    for (int j = 0; j <= K; ++j) {
      emit[t][j] = emission_log(t - 1, j, y.tokens[t - 1]);
      eos[t][j] = emission_log(t, j, Vocab::kSeg);
    }
  }

  lattice::SegmentalExpr expr;
  expr.m = m;
  expr.K = K;
  expr.L = L;
  expr.init_trans = transition_row(enc, dist[0][0].context, dstate[0], -1);

  Value ninf_row = Value::vector(std::vector<double>(K + 1, kNegInf));
  for (int p = 0; p < m; ++p) {
    // gen[p][l][j] by prefix accumulation over the cached emissions
    std::vector<Value> rows;
    std::vector<Value> acc(K + 1);
    for (int l = 0; l < L; ++l) {
      int end = p + l + 1;
      if (end > m) {
        rows.push_back(ninf_row);
        continue;
      }
      std::vector<Value> entries(K + 1);
      for (int j = 0; j <= K; ++j) {
        acc[j] = l == 0 ? emit[end][j] : add(acc[j], emit[end][j]);
        entries[j] = add(acc[j], eos[end][j]);
      }
      rows.push_back(concat_n(entries));
    }
    expr.gen.push_back(stack_rows(rows));

    // trans[p][j][q]; p = 0 is kept for shape/invariant uniformity only
    std::vector<Value> cols(K + 1);
    for (int q = 0; q <= K; ++q) {
      const Value& ctx =
          p == 0 ? dist[0][q].context : dist[p - 1][q].context;
      cols[q] = transition_row(enc, ctx, dstate[p], q);
    }
    std::vector<Value> trows(K + 1);
    for (int j = 0; j <= K; ++j) {
      std::vector<Value> entries(K + 1);
      for (int q = 0; q <= K; ++q) entries[q] = pick(cols[q], j);
      trows[j] = concat_n(entries);
    }
    expr.trans.push_back(stack_rows(trows));
  }
  return expr;
}

lattice::SegmentalPotentials SegModel::score_tables(const RecordSet& records,
                                                    const Utterance& y) const {
  auto expr = score_tables_value(records, y);
  lattice::SegmentalPotentials pots;
  pots.m = expr.m;
  pots.K = expr.K;
  pots.L = expr.L;
  pots.init_trans = expr.init_trans.data();
  int n = expr.K + 1;
  pots.trans.assign(expr.m, std::vector<std::vector<double>>(
                                n, std::vector<double>(n)));
  pots.gen.assign(expr.m, std::vector<std::vector<double>>(
                              expr.L, std::vector<double>(n)));
  for (int p = 0; p < expr.m; ++p) {
    for (int j = 0; j < n; ++j)
      for (int q = 0; q < n; ++q)
        pots.trans[p][j][q] = expr.trans[p].data()[j * n + q];
    for (int l = 0; l < expr.L; ++l)
      for (int j = 0; j < n; ++j)
        pots.gen[p][l][j] = expr.gen[p].data()[l * n + j];
  }
  return pots;
}

Value SegModel::train_loss_value(const RecordSet& records, const Utterance& y,
                                 double eta, double gamma) const {
  if (eta < 1.0 || gamma < 0.0)
    throw std::invalid_argument("train_loss: eta >= 1 and gamma >= 0 required");
  auto tables = score_tables_value(records, y);
  Value nll = neg(lattice::semimarkov_forward(tables));
  Value expected = lattice::semimarkov_expected_segments(tables);
  Value margin = vmax_const(vabs(add_const(expected, -eta)), gamma);
  return add(nll, margin);
}

double SegModel::segment_logprob(const RecordSet& records, const Utterance& y,
                                 int p, int len, int j) const {
  if (p < 0 || len < 1 || p + len > y.size())
    throw std::invalid_argument("segment_logprob: bad span");
  EncoderOut enc = encode(records);
  Value state = enc.init_state;
  std::vector<Value> states{state};
  for (int t = 1; t <= p + len; ++t) {
    state = nn::gru_step(dec_gru_, state, row(emb_, y.tokens[t - 1]));
    states.push_back(state);
  }
  auto emission = [&](const Value& st, int tok) {
    auto d = output_dist(enc, st, j);
    if (enc.positions[j].empty()) return vlog(pick(d.p_vocab, tok));
    std::vector<int> src;
    for (int pos : enc.positions[j]) src.push_back(enc.flat_tokens[pos]);
    return vlog(pointer::mixture_value(d.p_gen, d.attention, d.p_vocab, src, tok));
  };
  double acc = 0.0;
  for (int t = p + 1; t <= p + len; ++t)
    acc += emission(states[t - 1], y.tokens[t - 1]).item();
  acc += emission(states[p + len], Vocab::kSeg).item();
  return acc;
}

// ---------------------------------------------------------------------------
// constrained decoding

namespace {

struct Hypothesis {
  Value state;
  Value prev_context;      // attention context at the last emitted token
  int prev_record = -1;    // record of the previous segment (-1 at start)
  int cur_record = -1;     // -1 = at a segment boundary
  std::vector<int> tokens;
  std::vector<int> cuts{0};
  std::vector<int> labels;
  std::vector<DecodeStep> steps;
  std::set<int> realized;  // non-null records already started
  int seg_len = 0;
  bool seg_all_punct = true;
  double log_prob = 0.0;
  bool finished = false;

  double normalized_score() const {
    return log_prob / std::max<std::size_t>(1, tokens.size());
  }
};

bool contains_trigram(const std::vector<int>& tokens, int a, int b, int c) {
  for (std::size_t i = 2; i < tokens.size(); ++i)
    if (tokens[i - 2] == a && tokens[i - 1] == b && tokens[i] == c) return true;
  return false;
}

}  // namespace

DecodeResult SegModel::constrained_decode(const RecordSet& records,
                                          const DecodeOptions& opts) const {
  EncoderOut enc = encode(records);
  int K = records.K();
  int beam_width = std::max(1, opts.beam);
  std::set<int> punct(opts.punct_ids.begin(), opts.punct_ids.end());

  Hypothesis root;
  root.state = enc.init_state;
  root.prev_context = Value::vector(std::vector<double>(cfg_.hidden, 0.0));
  std::vector<Hypothesis> active{std::move(root)};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < 2 * opts.max_tokens + 4 && !active.empty(); ++step) {
    std::vector<Hypothesis> expanded;
    for (auto& hyp : active) {
      if (static_cast<int>(hyp.tokens.size()) >= opts.max_tokens) continue;
      if (hyp.cur_record < 0) {
        // segment boundary: pick the next record
        Value trow = transition_row(enc, hyp.prev_context, hyp.state,
                                    hyp.prev_record);
        for (int j = 0; j <= K; ++j) {
          if (j != 0 && hyp.realized.count(j)) continue;  // no repetition
          if (j == hyp.prev_record && j != 0) continue;
          Hypothesis next = hyp;
          next.cur_record = j;
          next.seg_len = 0;
          next.seg_all_punct = true;
          next.labels.push_back(j);
          if (j != 0) next.realized.insert(j);
          next.log_prob += trow.data()[j];
          expanded.push_back(std::move(next));
        }
        continue;
      }

      // inside a segment: emit a token, <seg> or <eos>
      int j = hyp.cur_record;
      OutputDist d = output_dist(enc, hyp.state, j);
      double p_gen = d.p_gen.item();
      p_gen = std::clamp(p_gen, pointer::kPgenFloor, 1.0 - pointer::kPgenFloor);
      std::vector<double> probs(cfg_.vocab);
      for (int w = 0; w < cfg_.vocab; ++w)
        probs[w] = (enc.positions[j].empty() ? 1.0 : p_gen) * d.p_vocab.data()[w];
      if (!enc.positions[j].empty())
        for (std::size_t k = 0; k < enc.positions[j].size(); ++k)
          probs[enc.flat_tokens[enc.positions[j][k]]] +=
              (1.0 - p_gen) * d.attention.data()[k];

      bool all_realized = static_cast<int>(hyp.realized.size()) == K;
      probs[Vocab::kUnk] = 0.0;  // UNK is never produced at decode time
      probs[Vocab::kBos] = 0.0;
      if (hyp.seg_len == 0) probs[Vocab::kSeg] = 0.0;  // no empty segments
      if (!all_realized || hyp.seg_len == 0) probs[Vocab::kEos] = 0.0;
      if (opts.forbid_punct_only_segments && j != 0 && hyp.seg_all_punct &&
          hyp.seg_len > 0)
        probs[Vocab::kSeg] = 0.0;
      if (opts.block_trigrams && hyp.tokens.size() >= 2)
        for (int w = 0; w < cfg_.vocab; ++w)
          if (probs[w] > 0.0 &&
              contains_trigram(hyp.tokens, hyp.tokens[hyp.tokens.size() - 2],
                               hyp.tokens.back(), w))
            probs[w] = 0.0;

      // candidate tokens: the beam_width best survivors
      std::vector<int> order;
      for (int w = 0; w < cfg_.vocab; ++w)
        if (probs[w] > 0.0) order.push_back(w);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return probs[a] > probs[b]; });
      if (static_cast<int>(order.size()) > beam_width)
        order.resize(beam_width);

      for (int w : order) {
        Hypothesis next = hyp;
        next.log_prob += std::log(probs[w]);
        if (w == Vocab::kSeg) {
          // close the segment; the state is not updated by <seg>
          next.cuts.push_back(static_cast<int>(next.tokens.size()));
          next.cur_record = -1;
          next.prev_record = j;
          expanded.push_back(std::move(next));
          continue;
        }
        DecodeStep ds;
        ds.token = w;
        ds.record = j;
        ds.state.p_gen = enc.positions[j].empty() ? 1.0 : p_gen;
        ds.state.p_vocab = d.p_vocab.data();
        if (!enc.positions[j].empty()) {
          ds.state.attention = d.attention.data();
          for (int pos : enc.positions[j]) {
            ds.state.source_ids.push_back(enc.flat_tokens[pos]);
            ds.source_positions.push_back(pos);
          }
        }
        next.steps.push_back(std::move(ds));
        next.tokens.push_back(w);
        next.seg_len += 1;
        if (!punct.count(w)) next.seg_all_punct = false;
        if (w == Vocab::kEos) {
          next.cuts.push_back(static_cast<int>(next.tokens.size()));
          next.finished = true;
          finished.push_back(std::move(next));
          continue;
        }
        next.prev_context = d.context;
        next.state = nn::gru_step(dec_gru_, next.state, row(emb_, w));
        expanded.push_back(std::move(next));
      }
    }
    std::stable_sort(expanded.begin(), expanded.end(),
                     [](const Hypothesis& a, const Hypothesis& b) {
                       return a.log_prob > b.log_prob;
                     });
    if (static_cast<int>(expanded.size()) > beam_width)
      expanded.resize(beam_width);
    active = std::move(expanded);
  }

  if (finished.empty()) {
    std::ostringstream os;
    os << "constrained_decode: no admissible completion within "
       << opts.max_tokens << " tokens (K=" << K << ")";
    throw std::runtime_error(os.str());
  }
  auto best = std::max_element(finished.begin(), finished.end(),
                               [](const Hypothesis& a, const Hypothesis& b) {
                                 return a.normalized_score() < b.normalized_score();
                               });
  DecodeResult out;
  out.tokens = best->tokens;
  out.path.cuts = best->cuts;
  out.path.labels = best->labels;
  out.steps = best->steps;
  out.log_prob = best->log_prob;
  return out;
}

// ---------------------------------------------------------------------------
// Ch.5 masked generation path

SegModel::OutputDist SegModel::masked_output_dist(
    const EncoderOut& enc, const Value& state,
    const std::vector<double>& mask) const {
  int n = static_cast<int>(enc.flat_tokens.size());
  if (static_cast<int>(mask.size()) != n)
    throw std::invalid_argument("masked_output_dist: mask length mismatch");
  OutputDist out;
  double total_mask = 0.0;
  for (double m : mask) total_mask += m;
  StateShared shared = state_shared(state);
  if (total_mask <= 0.0) {
    out.context = Value::vector(std::vector<double>(cfg_.hidden, 0.0));
    out.p_gen = Value::scalar(1.0);
    out.p_vocab = softmax(shared.w1d_b);
    return out;
  }
  Value query = matvec(w_att_, state);
  std::vector<Value> scores;
  scores.reserve(n);
  for (int i = 0; i < n; ++i) scores.push_back(dot(enc.h[i], query));
  Value soft = softmax(concat_n(scores));
  Value masked = mul(soft, Value::vector(mask));
  Value denom = sum(masked);
  out.attention = div(masked, denom);
  Value ctx;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;  // exact zero mass on unselected positions
    Value term = mul(enc.h[i], pick(out.attention, i));
    ctx = ctx.defined() ? add(ctx, term) : term;
  }
  out.context = ctx;
  out.p_gen = vsigmoid(add(
      matvec(wg2_, vtanh(add(shared.gd, matvec(wgc_, ctx)))), bg2_));
  out.p_vocab = softmax(add(shared.w1d_b, matvec(w2_, ctx)));
  return out;
}

Value SegModel::masked_loglik(const RecordSet& records, const Utterance& y,
                              const std::vector<double>& mask) const {
  EncoderOut enc = encode(records);
  int n = static_cast<int>(enc.flat_tokens.size());
  if (static_cast<int>(mask.size()) != n)
    throw std::invalid_argument("masked_loglik: mask length mismatch");
  // decoder initialized from the mask-weighted mean pooling (1/n sum b_i h_i)
  Value pool;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    Value term = mul_const(enc.h[i], mask[i] / static_cast<double>(n));
    pool = pool.defined() ? add(pool, term) : term;
  }
  if (!pool.defined())
    pool = Value::vector(std::vector<double>(cfg_.hidden, 0.0));
  Value state = vtanh(add(matvec(w_mask_init_, pool), b_mask_init_));

  Value total;
  for (int t = 0; t < y.size(); ++t) {
    OutputDist d = masked_output_dist(enc, state, mask);
    Value prob;
    if (d.attention.defined())
      prob = pointer::mixture_value(d.p_gen, d.attention, d.p_vocab,
                                    enc.flat_tokens, y.tokens[t]);
    else
      prob = pick(d.p_vocab, y.tokens[t]);
    Value lp = vlog(prob);
    total = total.defined() ? add(total, lp) : lp;
    state = nn::gru_step(dec_gru_, state, row(emb_, y.tokens[t]));
  }
  return total;
}

DecodeResult SegModel::vrs_select_decode(const RecordSet& records,
                                         const std::vector<double>& mask,
                                         const DecodeOptions& opts) const {
  double total_mask = 0.0;
  for (double m : mask) total_mask += m;
  if (total_mask <= 0.0)
    throw std::invalid_argument("vrs_select_decode: empty mask");
  EncoderOut enc = encode(records);
  int n = static_cast<int>(enc.flat_tokens.size());
  if (static_cast<int>(mask.size()) != n)
    throw std::invalid_argument("vrs_select_decode: mask length mismatch");

  Value pool;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    pool = pool.defined()
               ? add(pool, mul_const(enc.h[i], mask[i] / static_cast<double>(n)))
               : mul_const(enc.h[i], mask[i] / static_cast<double>(n));
  }
  Value state = vtanh(add(matvec(w_mask_init_, pool), b_mask_init_));

  DecodeResult out;
  out.path.cuts = {0};
  for (int step = 0; step < opts.max_tokens; ++step) {
    OutputDist d = masked_output_dist(enc, state, mask);
    double p_gen = std::clamp(d.p_gen.item(), pointer::kPgenFloor,
                              1.0 - pointer::kPgenFloor);
    std::vector<double> probs(cfg_.vocab);
    for (int w = 0; w < cfg_.vocab; ++w) probs[w] = p_gen * d.p_vocab.data()[w];
    for (int i = 0; i < n; ++i)
      probs[enc.flat_tokens[i]] += (1.0 - p_gen) * d.attention.data()[i];
    probs[Vocab::kUnk] = 0.0;
    probs[Vocab::kBos] = 0.0;
    probs[Vocab::kSeg] = 0.0;
    if (step == 0) probs[Vocab::kEos] = 0.0;
    int best = 0;
    for (int w = 1; w < cfg_.vocab; ++w)
      if (probs[w] > probs[best]) best = w;
    out.tokens.push_back(best);
    out.log_prob += std::log(probs[best]);
    if (best == Vocab::kEos) break;
    state = nn::gru_step(dec_gru_, state, row(emb_, best));
  }
  out.path.cuts.push_back(static_cast<int>(out.tokens.size()));
  out.path.labels = {0};
  return out;
}

// ---------------------------------------------------------------------------
// config round-trip

std::string config_to_json(const SegModelConfig& cfg, const Vocab& vocab) {
  nlohmann::json j;
  j["model"] = "segmodel";
  j["vocab_size"] = cfg.vocab;
  j["embed"] = cfg.embed;
  j["hidden"] = cfg.hidden;
  j["max_seg_len"] = cfg.max_seg_len;
  j["vocab"] = vocab.tokens;
  return j.dump();
}

void config_from_json(const std::string& json, SegModelConfig* cfg,
                      Vocab* vocab) {
  auto j = nlohmann::json::parse(json);
  if (j.value("model", "") != "segmodel")
    throw std::runtime_error("checkpoint extra is not a segmodel config");
  cfg->vocab = j.at("vocab_size");
  cfg->embed = j.at("embed");
  cfg->hidden = j.at("hidden");
  cfg->max_seg_len = j.at("max_seg_len");
  vocab->tokens = j.at("vocab").get<std::vector<std::string>>();
  vocab->index.clear();
  for (int i = 0; i < vocab->size(); ++i) vocab->index[vocab->tokens[i]] = i;
}

}  // namespace latentseq::segmodel
