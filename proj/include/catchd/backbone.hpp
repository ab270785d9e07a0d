#pragma once

// Language-model backbone: tokenizer, transformer encoder producing the
// start-of-sentence embedding used downstream, and a teacher-forced
// transformer decoder conditioned on a reconstructed embedding supplied as a
// length-1 cross-attention memory.
//
// DeskBackbone is a small trainable transformer meant for CPU-scale runs;
// anything matching this interface (e.g. a pretrained encoder/decoder pair
// exported to the checkpoint format) can stand in at full scale.

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catchd/core/autodiff.hpp"
#include "catchd/core/params.hpp"
#include "catchd/core/rng.hpp"

namespace catchd::backbone {

using ad::Mat;
using ad::Var;

// ------------------------------------------------------------------ vocab

// Whitespace tokens with byte fallback for unseen words. IDs:
//   0 [PAD], 1 [CLS] (start-of-sentence), 2 [UNK], 3..258 bytes, 259+ words.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;
  static constexpr int kByteBase = 3;
  static constexpr int kWordBase = kByteBase + 256;

  static Vocab build(const std::vector<std::string>& texts,
                     std::size_t max_words = 20000) {
    Vocab v;
    std::unordered_map<std::string, int> counts;
    std::vector<std::string> order;
    for (const auto& t : texts) {
      for (const auto& w : split_ws(t)) {
        if (counts[w]++ == 0) order.push_back(w);
      }
    }
    // frequency order, first-seen breaking ties, for a stable vocabulary
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) {
                       return counts[a] > counts[b];
                     });
    if (order.size() > max_words) order.resize(max_words);
    for (const auto& w : order) {
      v.word_to_id_[w] = kWordBase + static_cast<int>(v.words_.size());
      v.words_.push_back(w);
    }
    return v;
  }

  int size() const { return kWordBase + static_cast<int>(words_.size()); }

  // one id if in-vocabulary, UTF-8 byte ids otherwise
  void encode_word(const std::string& w, std::vector<int>& out) const {
    auto it = word_to_id_.find(w);
    if (it != word_to_id_.end()) {
      out.push_back(it->second);
    } else {
      for (unsigned char b : w) out.push_back(kByteBase + static_cast<int>(b));
    }
  }

  static std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  nlohmann::json to_json() const { return nlohmann::json(words_); }

  static Vocab from_json(const nlohmann::json& j) {
    Vocab v;
    for (const auto& w : j) {
      v.word_to_id_[w.get<std::string>()] = kWordBase + static_cast<int>(v.words_.size());
      v.words_.push_back(w.get<std::string>());
    }
    return v;
  }

 private:
  std::unordered_map<std::string, int> word_to_id_;
  std::vector<std::string> words_;
};

// ------------------------------------------------------------------ batches

struct TokenBatch {
  Eigen::MatrixXi ids;   // B x S
  Eigen::MatrixXi mask;  // B x S, 1 = real token
  Eigen::Index batch() const { return ids.rows(); }
  Eigen::Index seq_len() const { return ids.cols(); }
};

struct EncodeResult {
  Var z_cls;               // B x h_d, row b = state of position 0
  std::vector<Var> states; // per example, S x h_d
};

// ------------------------------------------------------------------ config

struct BackboneConfig {
  int vocab_size = 0;
  int h_d = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_len = 128;
  double dropout = 0.2;

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size}, {"h_d", h_d},       {"n_layers", n_layers},
            {"n_heads", n_heads},       {"ffn_mult", ffn_mult}, {"max_len", max_len},
            {"dropout", dropout}};
  }
  static BackboneConfig from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.vocab_size = j.at("vocab_size");
    c.h_d = j.at("h_d");
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.ffn_mult = j.at("ffn_mult");
    c.max_len = j.at("max_len");
    c.dropout = j.at("dropout");
    return c;
  }
};

// ------------------------------------------------------------------ backbone

class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual TokenBatch tokenize(const std::vector<std::string>& texts, int max_len) const = 0;
  virtual EncodeResult encode(const TokenBatch& batch, bool train, rng::Stream* drop) = 0;
  // teacher-forced logits, one S x V matrix per example; z_hat is B x h_d
  virtual std::vector<Var> decode(const Var& z_hat, const TokenBatch& teacher, bool train,
                                  rng::Stream* drop) = 0;
  virtual core::ParamSet& params() = 0;
  virtual core::ParamSet& encoder_params() = 0;  // frozen by the no-finetune ablation
  virtual core::ParamSet& decoder_params() = 0;
  virtual int h_d() const = 0;
  virtual int vocab_size() const = 0;
};

namespace detail {

struct AttnBlock {
  Var ln_g, ln_b, wq, bq, wk, bk, wv, bv, wo, bo;
};
struct FfnBlock {
  Var ln_g, ln_b, w1, b1, w2, b2;
};

inline AttnBlock make_attn(core::ParamSet& ps, rng::Stream& init, const std::string& prefix,
                           int h) {
  AttnBlock a;
  a.ln_g = ps.add(prefix + ".ln.g", Mat::Ones(1, h));
  a.ln_b = ps.add(prefix + ".ln.b", Mat::Zero(1, h));
  a.wq = ps.add(prefix + ".wq", core::glorot(init, h, h));
  a.bq = ps.add(prefix + ".bq", Mat::Zero(1, h));
  a.wk = ps.add(prefix + ".wk", core::glorot(init, h, h));
  a.bk = ps.add(prefix + ".bk", Mat::Zero(1, h));
  a.wv = ps.add(prefix + ".wv", core::glorot(init, h, h));
  a.bv = ps.add(prefix + ".bv", Mat::Zero(1, h));
  a.wo = ps.add(prefix + ".wo", core::glorot(init, h, h));
  a.bo = ps.add(prefix + ".bo", Mat::Zero(1, h));
  return a;
}

inline FfnBlock make_ffn(core::ParamSet& ps, rng::Stream& init, const std::string& prefix,
                         int h, int f) {
  FfnBlock b;
  b.ln_g = ps.add(prefix + ".ln.g", Mat::Ones(1, h));
  b.ln_b = ps.add(prefix + ".ln.b", Mat::Zero(1, h));
  b.w1 = ps.add(prefix + ".w1", core::glorot(init, h, f));
  b.b1 = ps.add(prefix + ".b1", Mat::Zero(1, f));
  b.w2 = ps.add(prefix + ".w2", core::glorot(init, f, h));
  b.b2 = ps.add(prefix + ".b2", Mat::Zero(1, h));
  return b;
}

inline Var dropout(const Var& x, double rate, bool train, rng::Stream* drop) {
  if (!train || rate <= 0.0 || drop == nullptr) return x;
  Mat mask(x->val.rows(), x->val.cols());
  double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      mask(r, c) = drop->uniform() < keep ? 1.0 / keep : 0.0;
  return ad::mul(x, ad::constant(std::move(mask)));
}

// multi-head attention of queries x against keys/values kv, with an additive
// mask bias (rows = query positions, cols = key positions)
inline Var attention(const AttnBlock& a, const Var& x, const Var& kv, const Mat& bias,
                     int n_heads) {
  const int h = static_cast<int>(x->val.cols());
  const int dk = h / n_heads;
  Var q = ad::add_rowvec(ad::matmul(x, a.wq), a.bq);
  Var k = ad::add_rowvec(ad::matmul(kv, a.wk), a.bk);
  Var v = ad::add_rowvec(ad::matmul(kv, a.wv), a.bv);
  std::vector<Var> heads;
  heads.reserve(n_heads);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int hd = 0; hd < n_heads; ++hd) {
    Var qh = ad::cols(q, hd * dk, dk);
    Var kh = ad::cols(k, hd * dk, dk);
    Var vh = ad::cols(v, hd * dk, dk);
    Var scores = ad::scale(ad::matmul_bt(qh, kh), inv_sqrt_dk);
    if (bias.size() > 0) scores = ad::add(scores, ad::constant(bias));
    Var attn = ad::softmax_rows(scores);
    heads.push_back(ad::matmul(attn, vh));
  }
  return ad::add_rowvec(ad::matmul(ad::hstack(heads), a.wo), a.bo);
}

inline Var ffn(const FfnBlock& b, const Var& x) {
  Var h = ad::gelu(ad::add_rowvec(ad::matmul(x, b.w1), b.b1));
  return ad::add_rowvec(ad::matmul(h, b.w2), b.b2);
}

}  // namespace detail

// Pre-LN transformer; encoder and decoder share the token embedding table.
class DeskBackbone : public Backbone {
 public:
  DeskBackbone(BackboneConfig cfg, Vocab vocab, std::uint64_t init_seed)
      : cfg_(cfg), vocab_(std::move(vocab)) {
    if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab_.size();
    if (cfg_.vocab_size < vocab_.size())
      throw std::invalid_argument("vocab_size smaller than the built vocabulary");
    if (cfg_.h_d % cfg_.n_heads != 0)
      throw std::invalid_argument("h_d must be divisible by n_heads");
    rng::Stream init(init_seed, "backbone-init");
    const int h = cfg_.h_d, f = cfg_.h_d * cfg_.ffn_mult, V = cfg_.vocab_size;

    tok_emb_ = enc_ps_.add("emb.tok", init.normal_matrix(V, h) * 0.02);
    pos_enc_ = enc_ps_.add("emb.pos_enc", init.normal_matrix(cfg_.max_len, h) * 0.02);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      enc_attn_.push_back(detail::make_attn(enc_ps_, init, layer_name("enc", l) + ".attn", h));
      enc_ffn_.push_back(detail::make_ffn(enc_ps_, init, layer_name("enc", l) + ".ffn", h, f));
    }
    enc_ln_g_ = enc_ps_.add("enc.final_ln.g", Mat::Ones(1, h));
    enc_ln_b_ = enc_ps_.add("enc.final_ln.b", Mat::Zero(1, h));

    pos_dec_ = dec_ps_.add("emb.pos_dec", init.normal_matrix(cfg_.max_len, h) * 0.02);
    cond_w_ = dec_ps_.add("dec.cond.w", core::glorot(init, h, h));
    cond_b_ = dec_ps_.add("dec.cond.b", Mat::Zero(1, h));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      dec_self_.push_back(detail::make_attn(dec_ps_, init, layer_name("dec", l) + ".self", h));
      dec_cross_.push_back(
          detail::make_attn(dec_ps_, init, layer_name("dec", l) + ".cross", h));
      dec_ffn_.push_back(detail::make_ffn(dec_ps_, init, layer_name("dec", l) + ".ffn", h, f));
    }
    dec_ln_g_ = dec_ps_.add("dec.final_ln.g", Mat::Ones(1, h));
    dec_ln_b_ = dec_ps_.add("dec.final_ln.b", Mat::Zero(1, h));
    lm_w_ = dec_ps_.add("dec.lm_head.w", core::glorot(init, h, V));
    lm_b_ = dec_ps_.add("dec.lm_head.b", Mat::Zero(1, V));

    all_ps_.append(enc_ps_);
    all_ps_.append(dec_ps_);
  }

  TokenBatch tokenize(const std::vector<std::string>& texts, int max_len) const override {
    if (texts.empty()) throw std::invalid_argument("tokenize: empty text list");
    if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be >= 2");
    if (max_len > cfg_.max_len) throw std::invalid_argument("tokenize: max_len beyond model limit");
    TokenBatch b;
    b.ids = Eigen::MatrixXi::Constant(static_cast<Eigen::Index>(texts.size()), max_len, Vocab::kPad);
    b.mask = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(texts.size()), max_len);
    for (std::size_t r = 0; r < texts.size(); ++r) {
      std::vector<int> ids{Vocab::kCls};
      for (const auto& w : Vocab::split_ws(texts[r])) vocab_.encode_word(w, ids);
      if (static_cast<int>(ids.size()) > max_len) ids.resize(max_len);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        b.ids(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = ids[i];
        b.mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = 1;
      }
    }
    return b;
  }

  EncodeResult encode(const TokenBatch& batch, bool train, rng::Stream* drop) override {
    const auto S = batch.seq_len();
    EncodeResult out;
    std::vector<Var> cls_rows;
    for (Eigen::Index ex = 0; ex < batch.batch(); ++ex) {
      std::vector<int> ids(static_cast<std::size_t>(S));
      for (Eigen::Index i = 0; i < S; ++i) ids[static_cast<std::size_t>(i)] = batch.ids(ex, i);
      Var x = ad::add(ad::gather_rows(tok_emb_, ids), ad::rows(pos_enc_, 0, S));
      Mat bias = key_mask_bias(batch, ex, S, S, false);
      for (int l = 0; l < cfg_.n_layers; ++l) {
        Var nx = ad::layer_norm_rows(x, enc_attn_[l].ln_g, enc_attn_[l].ln_b);
        x = ad::add(x, detail::attention(enc_attn_[l], nx, nx, bias, cfg_.n_heads));
        Var nf = ad::layer_norm_rows(x, enc_ffn_[l].ln_g, enc_ffn_[l].ln_b);
        x = ad::add(x, detail::dropout(detail::ffn(enc_ffn_[l], nf), cfg_.dropout, train, drop));
      }
      x = ad::layer_norm_rows(x, enc_ln_g_, enc_ln_b_);
      out.states.push_back(x);
      cls_rows.push_back(ad::rows(x, 0, 1));
    }
    out.z_cls = ad::vstack(cls_rows);
    return out;
  }

  std::vector<Var> decode(const Var& z_hat, const TokenBatch& teacher, bool train,
                          rng::Stream* drop) override {
    if (z_hat->val.cols() != cfg_.h_d)
      throw std::invalid_argument("decode: conditioning width mismatch");
    if (z_hat->val.rows() != teacher.batch())
      throw std::invalid_argument("decode: batch size mismatch");
    const auto S = teacher.seq_len();
    Mat causal = Mat::Zero(S, S);
    for (Eigen::Index i = 0; i < S; ++i)
      for (Eigen::Index j = i + 1; j < S; ++j) causal(i, j) = kMaskBias;
    std::vector<Var> logits;
    for (Eigen::Index ex = 0; ex < teacher.batch(); ++ex) {
      // teacher forcing: position i conditions on tokens < i, so inputs are
      // the teacher tokens shifted right behind a start embedding
      std::vector<int> ids(static_cast<std::size_t>(S));
      ids[0] = Vocab::kCls;
      for (Eigen::Index i = 1; i < S; ++i) ids[static_cast<std::size_t>(i)] = teacher.ids(ex, i - 1);
      Var x = ad::add(ad::gather_rows(tok_emb_, ids), ad::rows(pos_dec_, 0, S));
      Var memory = ad::add_rowvec(ad::matmul(ad::rows(z_hat, ex, 1), cond_w_), cond_b_);
      for (int l = 0; l < cfg_.n_layers; ++l) {
        Var ns = ad::layer_norm_rows(x, dec_self_[l].ln_g, dec_self_[l].ln_b);
        x = ad::add(x, detail::attention(dec_self_[l], ns, ns, causal, cfg_.n_heads));
        Var nc = ad::layer_norm_rows(x, dec_cross_[l].ln_g, dec_cross_[l].ln_b);
        x = ad::add(x, detail::attention(dec_cross_[l], nc, memory, Mat(), cfg_.n_heads));
        Var nf = ad::layer_norm_rows(x, dec_ffn_[l].ln_g, dec_ffn_[l].ln_b);
        x = ad::add(x, detail::dropout(detail::ffn(dec_ffn_[l], nf), cfg_.dropout, train, drop));
      }
      x = ad::layer_norm_rows(x, dec_ln_g_, dec_ln_b_);
      logits.push_back(ad::add_rowvec(ad::matmul(x, lm_w_), lm_b_));
    }
    return logits;
  }

  core::ParamSet& params() override { return all_ps_; }
  core::ParamSet& encoder_params() override { return enc_ps_; }
  core::ParamSet& decoder_params() override { return dec_ps_; }
  int h_d() const override { return cfg_.h_d; }
  int vocab_size() const override { return cfg_.vocab_size; }
  const BackboneConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  static constexpr double kMaskBias = -1e30;

  static std::string layer_name(const char* side, int l) {
    return std::string(side) + "." + std::to_string(l);
  }

  // additive bias that hides padded key positions from every query
  Mat key_mask_bias(const TokenBatch& batch, Eigen::Index ex, Eigen::Index rows,
                    Eigen::Index keys, bool causal) const {
    Mat bias = Mat::Zero(rows, keys);
    for (Eigen::Index j = 0; j < keys; ++j)
      if (batch.mask(ex, j) == 0) bias.col(j).setConstant(kMaskBias);
    if (causal)
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = i + 1; j < keys; ++j) bias(i, j) = kMaskBias;
    return bias;
  }

  BackboneConfig cfg_;
  Vocab vocab_;
  core::ParamSet enc_ps_, dec_ps_, all_ps_;
  Var tok_emb_, pos_enc_, pos_dec_;
  Var enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_;
  Var cond_w_, cond_b_, lm_w_, lm_b_;
  std::vector<detail::AttnBlock> enc_attn_, dec_self_, dec_cross_;
  std::vector<detail::FfnBlock> enc_ffn_, dec_ffn_;
};

}  // namespace catchd::backbone
