// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rpt/core/graph.hpp"
#include "rpt/core/optim.hpp"
#include "rpt/core/rng.hpp"
#include "rpt/model/point_cloud.hpp"
#include "rpt/model/sequence.hpp"
#include "rpt/model/vocab.hpp"
#include "rpt/prompts/prompt_set.hpp"

namespace rpt {

struct EncoderConfig {
  std::size_t blocks = 12;
  std::size_t width = 64;
  std::size_t feature_dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  std::size_t patches = 32;
  std::size_t neighbors = 32;
  std::size_t max_text_len = 32;
  double init_std = 0.02;

  void validate() const {
    if (blocks == 0 || width == 0 || feature_dim == 0 || heads == 0 || mlp_ratio == 0)
      throw Error("encoder config has a zero size");
    if (width % heads != 0) throw Error("encoder width must be divisible by the head count");
    if (patches == 0 || neighbors == 0) throw Error("encoder needs at least one patch and one neighbor");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// ---------------------------------------------------------------------------
// Parameters

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;
using ConstParamVisitor = std::function<void(const std::string&, const Tensor&)>;

struct BlockParams {
  Tensor ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1.gain", self.ln1_g);
    f(prefix + "ln1.bias", self.ln1_b);
    f(prefix + "attn.qkv.weight", self.w_qkv);
    f(prefix + "attn.qkv.bias", self.b_qkv);
    f(prefix + "attn.out.weight", self.w_o);
    f(prefix + "attn.out.bias", self.b_o);
    f(prefix + "ln2.gain", self.ln2_g);
    f(prefix + "ln2.bias", self.ln2_b);
    f(prefix + "mlp.fc1.weight", self.w_fc1);
    f(prefix + "mlp.fc1.bias", self.b_fc1);
    f(prefix + "mlp.fc2.weight", self.w_fc2);
    f(prefix + "mlp.fc2.bias", self.b_fc2);
  }
};

struct TransformerParams {
  std::vector<BlockParams> blocks;
  Tensor lnf_g, lnf_b, proj;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < self.blocks.size(); ++i)
      BlockParams::visit(self.blocks[i], prefix + "blocks." + std::to_string(i) + ".", f);
    f(prefix + "ln_final.gain", self.lnf_g);
    f(prefix + "ln_final.bias", self.lnf_b);
    f(prefix + "proj", self.proj);
  }
};

struct PointEncoderParams {
  Tensor patch_w1, patch_b1, patch_w2, patch_b2;
  Tensor pos_w1, pos_b1, pos_w2, pos_b2;
  Tensor cls_token, cls_pos;
  TransformerParams body;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("patch.fc1.weight", self.patch_w1);
    f("patch.fc1.bias", self.patch_b1);
    f("patch.fc2.weight", self.patch_w2);
    f("patch.fc2.bias", self.patch_b2);
    f("pos.fc1.weight", self.pos_w1);
    f("pos.fc1.bias", self.pos_b1);
    f("pos.fc2.weight", self.pos_w2);
    f("pos.fc2.bias", self.pos_b2);
    f("cls.token", self.cls_token);
    f("cls.pos", self.cls_pos);
    TransformerParams::visit(self.body, "", f);
  }
};

struct TextEncoderParams {
  Tensor token_embedding, pos_embedding;
  TransformerParams body;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("token_embedding", self.token_embedding);
    f("pos_embedding", self.pos_embedding);
    TransformerParams::visit(self.body, "", f);
  }
};

/// Both branches of the dual encoder plus the vocabulary of the text branch.
struct DualEncoder {
  EncoderConfig config;
  Vocabulary vocab;
  PointEncoderParams point;
  TextEncoderParams text;

  void visit(const std::function<void(const std::string&, Tensor&)>& f) {
    PointEncoderParams::visit(point, [&](const std::string& n, Tensor& t) { f("point." + n, t); });
    TextEncoderParams::visit(text, [&](const std::string& n, Tensor& t) { f("text." + n, t); });
  }
  void visit(const std::function<void(const std::string&, const Tensor&)>& f) const {
    PointEncoderParams::visit(point, [&](const std::string& n, const Tensor& t) { f("point." + n, t); });
    TextEncoderParams::visit(text, [&](const std::string& n, const Tensor& t) { f("text." + n, t); });
  }

  /// Frozen encoders carry no gradient-bearing tensor.
  void set_trainable(bool on) {
    visit([on](const std::string&, Tensor& t) { t.set_requires_grad(on); });
  }

  bool frozen() const {
    bool any = false;
    visit([&](const std::string&, const Tensor& t) { any = any || t.requires_grad(); });
    return !any;
  }

  std::vector<NamedParam> named_params() {
    std::vector<NamedParam> out;
    visit([&](const std::string& n, Tensor& t) { out.push_back({n, &t}); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  /// Bitwise comparison of every parameter.
  friend bool operator==(const DualEncoder& a, const DualEncoder& b) {
    std::vector<const Tensor*> ta, tb;
    a.visit([&](const std::string&, const Tensor& t) { ta.push_back(&t); });
    b.visit([&](const std::string&, const Tensor& t) { tb.push_back(&t); });
    if (!(a.config == b.config) || ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (!(*ta[i] == *tb[i])) return false;
    return true;
  }
};

namespace detail {

inline TransformerParams init_transformer(const EncoderConfig& c, Rng& rng) {
  const std::size_t d = c.width, h = c.width * c.mlp_ratio;
  TransformerParams p;
  for (std::size_t i = 0; i < c.blocks; ++i) {
    BlockParams b;
    b.ln1_g = Tensor::filled({d}, 1.0);
    b.ln1_b = Tensor::zeros({d});
    b.w_qkv = Tensor::randn({d, 3 * d}, c.init_std, rng);
    b.b_qkv = Tensor::zeros({3 * d});
    b.w_o = Tensor::randn({d, d}, c.init_std, rng);
    b.b_o = Tensor::zeros({d});
    b.ln2_g = Tensor::filled({d}, 1.0);
    b.ln2_b = Tensor::zeros({d});
    b.w_fc1 = Tensor::randn({d, h}, c.init_std, rng);
    b.b_fc1 = Tensor::zeros({h});
    b.w_fc2 = Tensor::randn({h, d}, c.init_std, rng);
    b.b_fc2 = Tensor::zeros({d});
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = Tensor::filled({d}, 1.0);
  p.lnf_b = Tensor::zeros({d});
  p.proj = Tensor::randn({d, c.feature_dim}, c.init_std, rng);
  return p;
}

}  // namespace detail

/// Seeded random initialization; every tensor starts frozen.
inline DualEncoder init_dual_encoder(const EncoderConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
  cfg.validate();
  DualEncoder enc;
  enc.config = cfg;
  enc.vocab = std::move(vocab);
  const std::size_t d = cfg.width;
  Rng rng = make_rng(derive_seed(seed, 0x706f696e74ULL));
  auto& p = enc.point;
  // The tokenizer MLPs see raw coordinates; fan-in scaling keeps their
  // outputs O(1) instead of O(1e-4).
  const double in3 = 1.0 / std::sqrt(3.0), ind = 1.0 / std::sqrt(static_cast<double>(d));
  p.patch_w1 = Tensor::randn({3, d}, in3, rng);
  p.patch_b1 = Tensor::zeros({d});
  p.patch_w2 = Tensor::randn({d, d}, ind, rng);
  p.patch_b2 = Tensor::zeros({d});
  p.pos_w1 = Tensor::randn({3, d}, in3, rng);
  p.pos_b1 = Tensor::zeros({d});
  p.pos_w2 = Tensor::randn({d, d}, ind, rng);
  p.pos_b2 = Tensor::zeros({d});
  p.cls_token = Tensor::randn({1, d}, cfg.init_std, rng);
  p.cls_pos = Tensor::randn({1, d}, cfg.init_std, rng);
  p.body = detail::init_transformer(cfg, rng);

  Rng trng = make_rng(derive_seed(seed, 0x74657874ULL));
  auto& t = enc.text;
  t.token_embedding = Tensor::randn({enc.vocab.size(), d}, cfg.init_std, trng);
  t.pos_embedding = Tensor::randn({cfg.max_text_len, d}, cfg.init_std, trng);
  t.body = detail::init_transformer(cfg, trng);
  return enc;
}

// ---------------------------------------------------------------------------
// Forward passes

struct EncodeOptions {
  /// Test hook: keys at prompt slots are masked out for every non-prompt
  /// query, which removes the prompts' influence on the original tokens.
  bool mask_prompt_keys = false;
};

namespace detail {

inline constexpr double kMaskedScore = -1e300;

template <class P>
Var linear(Graph& g, Var x, P& w, P& b) {
  return add(matmul(x, bind(g, w)), bind(g, b));
}

template <class B>
Var self_attention(Graph& g, B& blk, Var h, const std::vector<SeqLayout>& layout, std::size_t heads,
                   const EncodeOptions& opt) {
  const std::size_t d = h.cols(), dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qkv = linear(g, h, blk.w_qkv, blk.b_qkv);
  std::vector<Var> seqs;
  seqs.reserve(layout.size());
  std::vector<Var> head_out(heads);
  for (const auto& s : layout) {
    const std::size_t r0 = s.offset, r1 = s.offset + s.length;
    Var mask;
    if (opt.mask_prompt_keys && s.prompt_slots > 0) {
      std::vector<double> m(s.length * s.length, 0.0);
      for (std::size_t q = 0; q < s.length; ++q) {
        const bool q_is_prompt = q >= s.prompt_at && q < s.prompt_at + s.prompt_slots;
        if (q_is_prompt) continue;
        for (std::size_t k = s.prompt_at; k < s.prompt_at + s.prompt_slots; ++k) m[q * s.length + k] = kMaskedScore;
      }
      mask = g.constant({s.length, s.length}, std::move(m));
    }
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Var q = slice(qkv, r0, r1, hd * dh, (hd + 1) * dh);
      Var k = slice(qkv, r0, r1, d + hd * dh, d + (hd + 1) * dh);
      Var v = slice(qkv, r0, r1, 2 * d + hd * dh, 2 * d + (hd + 1) * dh);
      Var scores = scale(matmul_nt(q, k), inv_sqrt);
      if (mask.valid()) scores = add(scores, mask);
      head_out[hd] = matmul(softmax(scores), v);
    }
    seqs.push_back(heads == 1 ? head_out[0] : concat(std::span<const Var>(head_out), 1));
  }
  Var att = seqs.size() == 1 ? seqs[0] : concat(std::span<const Var>(seqs), 0);
  return linear(g, att, blk.w_o, blk.b_o);
}

template <class B>
Var transformer_block(Graph& g, B& blk, Var x, const std::vector<SeqLayout>& layout, std::size_t heads,
                      const EncodeOptions& opt) {
  Var h = layer_norm(x, bind(g, blk.ln1_g), bind(g, blk.ln1_b));
  x = add(x, self_attention(g, blk, h, layout, heads, opt));
  Var h2 = layer_norm(x, bind(g, blk.ln2_g), bind(g, blk.ln2_b));
  Var m = linear(g, gelu(linear(g, h2, blk.w_fc1, blk.b_fc1)), blk.w_fc2, blk.b_fc2);
  return add(x, m);
}

}  // namespace detail

/// Runs the transformer over a row-stacked batch and returns one
/// L2-normalized feature row per sequence (read at each layout's readout).
/// `prompts` may be null (zero-shot pass).
template <class T, class Prompts>
Var run_transformer(Graph& g, T& body, Var x, std::vector<SeqLayout> layout, Prompts* prompts, Branch branch,
                    const EncodeOptions& opt, std::size_t heads) {
  const std::size_t num_blocks = body.blocks.size();
  if (prompts != nullptr) {
    if (prompts->depth > num_blocks)
      throw Error("prompt depth " + std::to_string(prompts->depth) + " exceeds " + std::to_string(num_blocks) +
                  " transformer blocks");
    if (prompts->width != x.cols())
      throw ShapeError("prompt width " + std::to_string(prompts->width) + " does not match encoder width " +
                       std::to_string(x.cols()));
  }
  for (std::size_t l = 0; l < num_blocks; ++l) {
    if (prompts != nullptr) x = inject_prompts(x, l, *prompts, branch, layout, num_blocks);
    x = detail::transformer_block(g, body.blocks[l], x, layout, heads, opt);
  }
  std::vector<std::size_t> rows;
  rows.reserve(layout.size());
  for (const auto& s : layout) rows.push_back(s.offset + s.readout);
  Var cls = gather_rows(x, rows);
  Var f = matmul(layer_norm(cls, bind(g, body.lnf_g), bind(g, body.lnf_b)), bind(g, body.proj));
  return l2_normalize(f);
}

/// Input tokens of the point branch: [cls ; u patch tokens] per cloud.
struct PatchSequence {
  Tensor cls_token;         // 1 x d (token + its positional embedding)
  Tensor patch_embeddings;  // u x d (patch token + positional embedding)
  Tensor centers;           // u x 3

  std::size_t patches() const { return patch_embeddings.rows(); }
  std::size_t input_length() const { return 1 + patches(); }
};

/// Patch tokens for a batch of grouped clouds: [S*u, d], positional
/// embedding of each patch center already added.
template <class P>
Var embed_patch_tokens(Graph& g, P& params, std::span<const PatchGeometry> batch) {
  if (batch.empty()) throw Error("embed_patch_tokens: empty batch");
  std::vector<double> offs, cents;
  const std::size_t k = batch[0].neighbors;
  for (const auto& geo : batch) {
    if (geo.neighbors != k) throw Error("embed_patch_tokens: mixed neighborhood sizes in one batch");
    offs.insert(offs.end(), geo.offsets.data().begin(), geo.offsets.data().end());
    cents.insert(cents.end(), geo.centers.data().begin(), geo.centers.data().end());
  }
  const std::size_t n_off = offs.size() / 3, n_cent = cents.size() / 3;
  Var o = g.constant({n_off, 3}, std::move(offs));
  Var c = g.constant({n_cent, 3}, std::move(cents));
  Var local = detail::linear(g, gelu(detail::linear(g, o, params.patch_w1, params.patch_b1)), params.patch_w2,
                             params.patch_b2);
  Var pooled = max_pool_rows(local, k);
  Var pos = detail::linear(g, gelu(detail::linear(g, c, params.pos_w1, params.pos_b1)), params.pos_w2,
                           params.pos_b2);
  return add(pooled, pos);
}

/// Groups a normalized cloud (FPS centers + k-NN) and embeds each patch.
inline PatchSequence embed_point_patches(const PointCloud& pc, const DualEncoder& enc) {
  const auto geo = group_patches(pc, enc.config.patches, enc.config.neighbors);
  Graph g;
  Var tokens = embed_patch_tokens(g, enc.point, std::span<const PatchGeometry>(&geo, 1));
  Var cls = add(g.view(enc.point.cls_token), g.view(enc.point.cls_pos));
  return PatchSequence{cls.to_tensor(), tokens.to_tensor(), geo.centers};
}

/// Point features for token matrices already assembled as [cls ; patches]
/// (each (1+u) x d, stacked in `tokens`).
template <class Enc, class Prompts>
Var encode_point_tokens(Graph& g, Enc& point_params, Var tokens, std::size_t batch, Prompts* prompts,
                        const EncodeOptions& opt, std::size_t heads) {
  const std::size_t len = tokens.rows() / batch;
  std::vector<SeqLayout> layout(batch);
  for (std::size_t i = 0; i < batch; ++i) layout[i] = SeqLayout{i * len, len, len, 0, 0};
  return run_transformer(g, point_params.body, tokens, std::move(layout), prompts, Branch::Point, opt, heads);
}

/// Stacks patch sequences into a graph constant.
inline Var stack_patch_sequences(Graph& g, std::span<const PatchSequence> seqs) {
  if (seqs.empty()) throw Error("no point sequences to encode");
  const std::size_t d = seqs[0].cls_token.cols();
  std::vector<double> buf;
  std::size_t rows = 0;
  for (const auto& s : seqs) {
    if (s.input_length() != seqs[0].input_length()) throw Error("point sequences differ in length");
    buf.insert(buf.end(), s.cls_token.data().begin(), s.cls_token.data().end());
    buf.insert(buf.end(), s.patch_embeddings.data().begin(), s.patch_embeddings.data().end());
    rows += s.input_length();
  }
  return g.constant({rows, d}, std::move(buf));
}

template <class Enc, class Prompts>
Var encode_points(Graph& g, Enc& enc, std::span<const PatchSequence> seqs, Prompts* prompts,
                  const EncodeOptions& opt = {}) {
  Var x = stack_patch_sequences(g, seqs);
  return encode_point_tokens(g, enc.point, x, seqs.size(), prompts, opt, enc.config.heads);
}

/// Text features read at the eos position; text prompts are inserted
/// between the class token and eos.
template <class Enc, class Prompts>
Var encode_text(Graph& g, Enc& enc, std::span<const TokenSequence> seqs, Prompts* prompts,
                const EncodeOptions& opt = {}) {
  if (seqs.empty()) throw Error("no token sequences to encode");
  std::vector<std::size_t> ids, pos;
  std::vector<SeqLayout> layout;
  std::size_t off = 0;
  for (const auto& s : seqs) {
    if (s.size() < 3) throw Error("token sequence shorter than sos, class, eos");
    if (s.ids.front() != Vocabulary::kSos || s.ids.back() != Vocabulary::kEos)
      throw Error("token sequence must start with sos and end with eos");
    if (s.size() > enc.config.max_text_len)
      throw Error("token sequence of length " + std::to_string(s.size()) + " exceeds the positional table (" +
                  std::to_string(enc.config.max_text_len) + ")");
    ids.insert(ids.end(), s.ids.begin(), s.ids.end());
    for (std::size_t i = 0; i < s.size(); ++i) pos.push_back(i);
    layout.push_back(SeqLayout{off, s.size(), s.eos_slot(), 0, s.eos_slot()});
    off += s.size();
  }
  Var x = add(gather_rows(bind(g, enc.text.token_embedding), std::move(ids)),
              gather_rows(bind(g, enc.text.pos_embedding), std::move(pos)));
  return run_transformer(g, enc.text.body, x, std::move(layout), prompts, Branch::Text, opt, enc.config.heads);
}

// Tensor-returning conveniences for evaluation code.

inline Tensor point_features(const DualEncoder& enc, std::span<const PatchSequence> seqs,
                             const PromptSet* prompts = nullptr, const EncodeOptions& opt = {}) {
  Graph g;
  return encode_points(g, enc, seqs, prompts, opt).to_tensor();
}

inline Tensor text_features(const DualEncoder& enc, std::span<const TokenSequence> seqs,
                            const PromptSet* prompts = nullptr, const EncodeOptions& opt = {}) {
  Graph g;
  return encode_text(g, enc, seqs, prompts, opt).to_tensor();
}

/// Features of one rendered template per class, e.g. "a point cloud of a {class}."
inline Tensor class_text_features(const DualEncoder& enc, const std::vector<std::string>& classes,
                                  const PromptSet* prompts = nullptr,
                                  const std::string& tmpl = std::string(kCanonicalTemplate)) {
  std::vector<TokenSequence> seqs;
  for (const auto& c : classes) seqs.push_back(enc.vocab.encode(render_description(tmpl, c), c));
  return text_features(enc, seqs, prompts);
}

// ---------------------------------------------------------------------------
// Classification

struct ClassDistribution {
  std::vector<double> probs;

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
};

/// Softmax over cosine similarities divided by tau. Rows of `class_features`
/// and `feature` are expected L2-normalized.
inline ClassDistribution classify(std::span<const double> feature, const Tensor& class_features, double tau) {
  if (!(tau > 0.0)) throw Error("temperature must be positive, got " + std::to_string(tau));
  const std::size_t c = class_features.rows(), d = class_features.cols();
  if (feature.size() != d)
    throw ShapeError("feature of length " + std::to_string(feature.size()) + " vs class features " +
                     shape_str(class_features.shape()));
  std::vector<double> logits(c);
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += feature[i] * class_features.at(j, i);
    logits[j] = s / tau;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (auto& l : logits) l /= z;
  return ClassDistribution{std::move(logits)};
}

/// Graph form: [B, C] logits sim / tau.
inline Var class_logits(Var features, Var class_features, double tau) {
  if (!(tau > 0.0)) throw Error("temperature must be positive, got " + std::to_string(tau));
  return scale(matmul_nt(features, class_features), 1.0 / tau);
}

}  // namespace rpt
