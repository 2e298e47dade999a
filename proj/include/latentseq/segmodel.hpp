#ifndef LATENTSEQ_SEGMODEL_HPP
#define LATENTSEQ_SEGMODEL_HPP

// Toy neural segmental data-to-text model: recurrent encoder over flattened
// records, record-masked pointer-generator decoder, transition scorer,
// granularity-regularized training loss and constrained segment-by-segment
// decoding. One decoder sweep caches every emission/transition table the
// semi-Markov lattice needs.

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "latentseq/lattice.hpp"
#include "latentseq/ndgrad.hpp"
#include "latentseq/nn.hpp"
#include "latentseq/pointer.hpp"
#include "latentseq/util.hpp"

namespace latentseq::segmodel {

using ndgrad::Value;

// ---------------------------------------------------------------------------
// data

struct Record {
  int slot = 0;                // slot-name token id
  std::vector<int> value;      // value token ids
};

// r_1..r_K at indices 0..K-1; the null record r_0 is implicit.
struct RecordSet {
  std::vector<Record> records;
  int K() const { return static_cast<int>(records.size()); }
};

struct Utterance {
  std::vector<int> tokens;
  int size() const { return static_cast<int>(tokens.size()); }
};

struct GoldSegment {
  int start = 0, end = 0;  // token span [start, end)
  int record = 0;          // 0 = null
};

struct Instance {
  RecordSet records;
  Utterance text;
  std::vector<GoldSegment> gold;
};

// id 0..3 are reserved for <unk>, <bos>, <eos>, <seg>
struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSeg = 3;

  int size() const { return static_cast<int>(tokens.size()); }
  int lookup(const std::string& tok) const;  // kUnk when absent
  static Vocab build(const std::vector<std::vector<std::string>>& texts);
};

// ---------------------------------------------------------------------------
// model

struct SegModelConfig {
  int vocab = 0;
  int embed = 32;
  int hidden = 32;
  int max_seg_len = 6;  // L
};

struct DecodeOptions {
  int beam = 1;  // 1 = greedy
  int max_tokens = 80;
  bool block_trigrams = false;
  bool forbid_punct_only_segments = false;  // non-null segments only
  std::vector<int> punct_ids;
};

// one emitted token with the pointer state that produced it
struct DecodeStep {
  int token = 0;
  int record = 0;
  pointer::PointerState state;         // attention over the record's tokens
  std::vector<int> source_positions;   // global flat positions of that record
};

struct DecodeResult {
  std::vector<int> tokens;
  lattice::SegmentationPath path;
  std::vector<DecodeStep> steps;
  double log_prob = 0.0;
};

// flattened encoding of a record set
struct EncoderOut {
  std::vector<int> flat_tokens;            // slot and value tokens, in order
  std::vector<int> record_of_pos;          // 1..K per flat position
  std::vector<std::vector<int>> positions; // per record 0..K (0 is empty)
  std::vector<Value> h;                    // encoded token vectors
  std::vector<Value> rec_repr;             // f(r_0..r_K); 0 is learned
  Value init_state;                        // decoder start state
};

class SegModel {
 public:
  SegModel(const SegModelConfig& config, std::uint64_t seed);

  const SegModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  EncoderOut encode(const RecordSet& records) const;

  // Full differentiable score tables: one decoder sweep produces every
  // gen[p][l][j], the transition tables and init_trans.
  lattice::SegmentalExpr score_tables_value(const RecordSet& records,
                                            const Utterance& y) const;
  // Detached plain-double tables for evaluation and lattice tooling.
  lattice::SegmentalPotentials score_tables(const RecordSet& records,
                                            const Utterance& y) const;

  // -log p(y|X) + max(|E[segments] - eta|, gamma)
  Value train_loss_value(const RecordSet& records, const Utterance& y,
                         double eta, double gamma) const;

  // Log-probability of one segment (tokens [p, p+len) under record j)
  // recomputed in isolation; must match the cached gen entry.
  double segment_logprob(const RecordSet& records, const Utterance& y, int p,
                         int len, int j) const;

  // Segment-by-segment generation under the three decoding constraints:
  // no empty segments, no repeated non-null record, termination (<eos>)
  // only once every non-null record is realized.
  DecodeResult constrained_decode(const RecordSet& records,
                                  const DecodeOptions& opts = {}) const;

  // Ch.5-style masked generation path: decoder initialized from the
  // mask-weighted mean pooling of token encodings, attention restricted to
  // selected positions. mask entries may be fractional (soft-select).
  Value masked_loglik(const RecordSet& records, const Utterance& y,
                      const std::vector<double>& mask) const;
  DecodeResult vrs_select_decode(const RecordSet& records,
                                 const std::vector<double>& mask,
                                 const DecodeOptions& opts = {}) const;

 private:
  struct OutputDist {
    Value attention;      // over the record's positions (empty for null)
    Value context;        // A_t
    Value p_gen;          // scalar
    Value p_vocab;        // [V]
  };

  // per-state precomputations shared across records at one decoder step
  struct StateShared {
    Value w1d_b;   // w1 * state + b_out
    Value gd;      // pgen.wd * state + pgen.b1
  };
  StateShared state_shared(const Value& state) const;
  OutputDist output_dist(const EncoderOut& enc, const Value& state,
                         int record) const {
    return output_dist(enc, state, record, state_shared(state));
  }
  OutputDist output_dist(const EncoderOut& enc, const Value& state, int record,
                         const StateShared& shared) const;
  OutputDist masked_output_dist(const EncoderOut& enc, const Value& state,
                                const std::vector<double>& mask) const;
  Value transition_row(const EncoderOut& enc, const Value& context,
                       const Value& state, int prev_record) const;

  SegModelConfig cfg_;
  nn::ParamStore params_;
  // cached handles
  Value emb_, w_att_, w1_, w2_, b_out_, w_init_, b_init_, w_mask_init_,
      b_mask_init_, wgd_, wgc_, bg1_, wg2_, bg2_, m_proj_, n_proj_, null_repr_;
  nn::GruParams enc_gru_, dec_gru_;

  friend class SegModelTestPeer;
};

// model config round-trip for checkpoints
std::string config_to_json(const SegModelConfig& cfg, const Vocab& vocab);
void config_from_json(const std::string& json, SegModelConfig* cfg,
                      Vocab* vocab);

}  // namespace latentseq::segmodel

#endif  // LATENTSEQ_SEGMODEL_HPP
