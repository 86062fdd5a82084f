// SPDX-License-Identifier: Apache-2.0
#include "hmnet/transformer.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "hmnet/errors.hpp"
#include "hmnet/ops.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

InputMode parse_input_mode(std::string_view s) {
  if (s == "single") return InputMode::single;
  if (s == "pair") return InputMode::pair;
  if (s == "qa-triple" || s == "qa_triple") return InputMode::qa_triple;
  throw ConfigError("unknown input mode '" + std::string(s) + "'");
}

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::single: return "single";
    case InputMode::pair: return "pair";
    case InputMode::qa_triple: return "qa-triple";
  }
  return "single";
}

Tokenizer::Tokenizer(const std::vector<std::string>& tokens, std::size_t max_len) : max_len_(max_len) {
  if (max_len == 0) throw ConfigError("tokenizer max_len must be positive");
  for (const char* s : kSpecials) {
    index_.emplace(s, tokens_.size());
    tokens_.emplace_back(s);
  }
  for (const auto& t : tokens) {
    if (t.empty()) throw InputError("empty vocabulary entry");
    if (!index_.emplace(t, tokens_.size()).second) throw InputError("duplicate vocabulary entry '" + t + "'");
    tokens_.push_back(t);
  }
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, std::size_t max_len) {
  std::vector<std::string> vocab;
  std::unordered_map<std::string, bool> seen;
  for (const char* s : kSpecials) seen.emplace(s, true);
  for (const auto& text : texts)
    for (auto& tok : split(text))
      if (seen.emplace(tok, true).second) vocab.push_back(tok);
  return Tokenizer(vocab, max_len);
}

Tokenizer Tokenizer::load(const std::string& path, std::size_t max_len) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 4) throw ParseError(path + ": vocabulary is missing the special tokens");
  for (std::size_t i = 0; i < 4; ++i)
    if (lines[i] != kSpecials[i])
      throw ParseError(path + ":" + std::to_string(i + 1) + ": expected " + kSpecials[i] + ", got '" + lines[i] + "'");
  return Tokenizer(std::vector<std::string>(lines.begin() + 4, lines.end()), max_len);
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing " + path);
}

std::size_t Tokenizer::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

Encoding Tokenizer::encode(std::string_view text_a, std::optional<std::string_view> text_b,
                           std::optional<std::string_view> text_c, InputMode mode) const {
  auto a = split(text_a);
  if (a.empty()) throw InputError("text_a is empty");
  std::vector<std::string> b, c;
  std::size_t structural = 1;  // [CLS]
  if (mode != InputMode::single) {
    if (!text_b) throw InputError(to_string(mode) + " input requires text_b");
    b = split(*text_b);
    structural += 2;  // [SEP] after a, and after b
  }
  if (mode == InputMode::qa_triple) {
    if (!text_c) throw InputError("qa-triple input requires text_c");
    c = split(*text_c);
  }
  if (max_len_ < structural + 1)
    throw ConfigError("max_len " + std::to_string(max_len_) + " cannot hold a " + to_string(mode) + " input");

  std::size_t budget = max_len_ - structural;
  auto over = [&] { return a.size() + b.size() + c.size() > budget; };
  while (over() && !b.empty()) b.pop_back();
  while (over() && !c.empty()) c.pop_back();
  while (over() && a.size() > 1) a.pop_back();

  Encoding enc;
  enc.ids.push_back(kCls);
  for (auto& t : a) enc.ids.push_back(id_of(t));
  if (mode != InputMode::single) {
    enc.ids.push_back(kSep);
    for (auto& t : b) enc.ids.push_back(id_of(t));
    enc.ids.push_back(kSep);
    for (auto& t : c) enc.ids.push_back(id_of(t));
  }
  enc.mask.assign(enc.ids.size(), 1);
  return enc;
}

std::string Tokenizer::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += ids[i] < tokens_.size() ? tokens_[ids[i]] : std::string(kSpecials[kUnk]);
  }
  return out;
}

Batch pad_batch(const std::vector<Encoding>& encodings) {
  if (encodings.empty()) throw InputError("cannot batch zero encodings");
  Batch b;
  b.size = encodings.size();
  for (const auto& e : encodings) {
    if (e.ids.empty() || e.ids.size() != e.mask.size()) throw InputError("malformed encoding");
    b.length = std::max(b.length, e.ids.size());
  }
  b.ids.assign(b.size * b.length, Tokenizer::kPad);
  b.mask.assign(b.size * b.length, 0);
  for (std::size_t i = 0; i < b.size; ++i) {
    std::copy(encodings[i].ids.begin(), encodings[i].ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
    std::copy(encodings[i].mask.begin(), encodings[i].mask.end(),
              b.mask.begin() + static_cast<std::ptrdiff_t>(i * b.length));
  }
  return b;
}

namespace {

Tensor trunc_normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.truncated_normal(0.02);
  t.set_requires_grad(true);
  return t;
}

Tensor filled(Shape shape, double value) {
  Tensor t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

EncoderLayerParams EncoderLayerParams::init(std::size_t d, std::size_t heads, std::uint64_t seed) {
  if (d == 0 || heads == 0 || d % heads != 0)
    throw ConfigError("model dim " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  Rng rng(seed);
  EncoderLayerParams p;
  p.d = d;
  p.heads = heads;
  p.wq = trunc_normal({d, d}, rng);
  p.bq = filled({d}, 0.0);
  p.wk = trunc_normal({d, d}, rng);
  p.bk = filled({d}, 0.0);
  p.wv = trunc_normal({d, d}, rng);
  p.bv = filled({d}, 0.0);
  p.wo = trunc_normal({d, d}, rng);
  p.bo = filled({d}, 0.0);
  p.ln1_g = filled({d}, 1.0);
  p.ln1_b = filled({d}, 0.0);
  p.w1 = trunc_normal({d, 4 * d}, rng);
  p.b1 = filled({4 * d}, 0.0);
  p.w2 = trunc_normal({4 * d, d}, rng);
  p.b2 = filled({d}, 0.0);
  p.ln2_g = filled({d}, 1.0);
  p.ln2_b = filled({d}, 0.0);
  return p;
}

std::vector<Tensor> EncoderLayerParams::tensors() const {
  return {wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b};
}

std::vector<std::string> EncoderLayerParams::tensor_names() {
  return {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b"};
}

Embeddings Embeddings::init(std::size_t vocab, std::size_t max_len, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Embeddings e;
  e.token = trunc_normal({vocab, d}, rng);
  e.position = trunc_normal({max_len, d}, rng);
  e.ln_g = filled({d}, 1.0);
  e.ln_b = filled({d}, 0.0);
  return e;
}

std::vector<Tensor> Embeddings::tensors() const { return {token, position, ln_g, ln_b}; }

std::vector<std::string> Embeddings::tensor_names() { return {"token", "position", "ln_g", "ln_b"}; }

std::size_t Embeddings::param_count() const {
  return token.numel() + position.numel() + ln_g.numel() + ln_b.numel();
}

Tensor embed(Graph& g, const Embeddings& emb, const Batch& batch) {
  const std::size_t vocab = emb.token.dim(0);
  for (auto id : batch.ids)
    if (id >= vocab) throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
  if (batch.length > emb.position.dim(0))
    throw DimensionError("sequence length " + std::to_string(batch.length) + " exceeds max_len " +
                         std::to_string(emb.position.dim(0)));
  std::vector<std::size_t> pos(batch.size * batch.length);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i % batch.length;
  Tensor tok = ops::gather_rows(g, emb.token, batch.ids);
  Tensor pe = ops::gather_rows(g, emb.position, pos);
  return ops::layer_norm(g, ops::add(g, tok, pe), emb.ln_g, emb.ln_b, kLayerNormEps);
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;
using ConstBlock = Eigen::Map<const RowMat, 0, Stride>;
using Block = Eigen::Map<RowMat, 0, Stride>;

// View of rows [r0, r0+L) and columns [c0, c0+dh) inside a row-major [*, d] buffer.
ConstBlock cblock(const double* base, std::size_t r0, std::size_t L, std::size_t c0, std::size_t dh, std::size_t d) {
  return ConstBlock(base + r0 * d + c0, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(dh), Stride(static_cast<Eigen::Index>(d)));
}
Block mblock(double* base, std::size_t r0, std::size_t L, std::size_t c0, std::size_t dh, std::size_t d) {
  return Block(base + r0 * d + c0, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(dh), Stride(static_cast<Eigen::Index>(d)));
}

}  // namespace

Tensor attention_core(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v, const Batch& batch,
                      std::size_t heads, std::vector<double>* maps) {
  const std::size_t B = batch.size, L = batch.length;
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape() || q.dim(0) != B * L)
    throw DimensionError("attention: q/k/v shapes " + shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                         shape_str(v.shape()) + " do not fit a batch of " + std::to_string(B) + "x" + std::to_string(L));
  const std::size_t d = q.dim(1);
  if (heads == 0 || d % heads != 0) throw ConfigError("attention: heads must divide the model dimension");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  for (std::size_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < L; ++j) any = any || batch.mask[b * L + j];
    if (!any) throw ContractError("attention: example " + std::to_string(b) + " has every position masked");
  }

  // probs[b][h] is an L x L row-major block.
  std::vector<double> probs(B * heads * L * L);
  Tensor out(Shape{B * L, d});
  const double* qd = q.data().data();
  const double* kd = k.data().data();
  const double* vd = v.data().data();
  double* od = out.data().data();
  RowMat scores(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* m = batch.mask.data() + b * L;
    for (std::size_t h = 0; h < heads; ++h) {
      auto qb = cblock(qd, b * L, L, h * dh, dh, d);
      auto kb = cblock(kd, b * L, L, h * dh, dh, d);
      scores.noalias() = qb * kb.transpose();
      Eigen::Map<RowMat> p(probs.data() + (b * heads + h) * L * L, static_cast<Eigen::Index>(L),
                           static_cast<Eigen::Index>(L));
      for (std::size_t i = 0; i < L; ++i) {
        double mx = neg_inf;
        for (std::size_t j = 0; j < L; ++j) {
          double s = m[j] ? scores(i, j) * scale : neg_inf;
          scores(i, j) = s;
          mx = std::max(mx, s);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          const double e = m[j] ? std::exp(scores(i, j) - mx) : 0.0;
          p(i, j) = e;
          total += e;
        }
        for (std::size_t j = 0; j < L; ++j) p(i, j) /= total;
      }
      mblock(od, b * L, L, h * dh, dh, d).noalias() = p * cblock(vd, b * L, L, h * dh, dh, d);
    }
  }
  if (maps) *maps = probs;
  if (!g.needs_record({&q, &k, &v})) return out;

  return g.record(out, {q, k, v},
                  [q, k, v, B, L, heads, d, dh, scale, probs = std::move(probs)](std::span<const double> go) mutable {
                    const double* qd = q.data().data();
                    const double* kd = k.data().data();
                    const double* vd = v.data().data();
                    double* gq = q.requires_grad() ? q.mutable_grad().data() : nullptr;
                    double* gk = k.requires_grad() ? k.mutable_grad().data() : nullptr;
                    double* gv = v.requires_grad() ? v.mutable_grad().data() : nullptr;
                    RowMat dp(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t h = 0; h < heads; ++h) {
                        Eigen::Map<const RowMat> p(probs.data() + (b * heads + h) * L * L,
                                                   static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
                        auto dout = cblock(go.data(), b * L, L, h * dh, dh, d);
                        if (gv) mblock(gv, b * L, L, h * dh, dh, d).noalias() += p.transpose() * dout;
                        if (!gq && !gk) continue;
                        dp.noalias() = dout * cblock(vd, b * L, L, h * dh, dh, d).transpose();
                        // dS = P .* (dP - rowsum(dP .* P)), then the score scale.
                        for (std::size_t i = 0; i < L; ++i) {
                          double dot = 0.0;
                          for (std::size_t j = 0; j < L; ++j) dot += dp(i, j) * p(i, j);
                          for (std::size_t j = 0; j < L; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
                        }
                        if (gq) mblock(gq, b * L, L, h * dh, dh, d).noalias() += dp * cblock(kd, b * L, L, h * dh, dh, d);
                        if (gk)
                          mblock(gk, b * L, L, h * dh, dh, d).noalias() +=
                              dp.transpose() * cblock(qd, b * L, L, h * dh, dh, d);
                      }
                    }
                  });
}

Tensor multi_head_attention(Graph& g, const Tensor& hidden, const Batch& batch, const EncoderLayerParams& p,
                            std::vector<double>* maps) {
  if (hidden.rank() != 2 || hidden.dim(1) != p.d)
    throw DimensionError("attention input " + shape_str(hidden.shape()) + " does not match model dim " +
                         std::to_string(p.d));
  Tensor q = ops::add_bias(g, ops::matmul(g, hidden, p.wq), p.bq);
  Tensor k = ops::add_bias(g, ops::matmul(g, hidden, p.wk), p.bk);
  Tensor v = ops::add_bias(g, ops::matmul(g, hidden, p.wv), p.bv);
  Tensor ctx = attention_core(g, q, k, v, batch, p.heads, maps);
  return ops::add_bias(g, ops::matmul(g, ctx, p.wo), p.bo);
}

Tensor encoder_layer_forward(Graph& g, const Tensor& hidden, const Batch& batch, const EncoderLayerParams& p,
                             std::vector<double>* maps) {
  Tensor attn = multi_head_attention(g, hidden, batch, p, maps);
  Tensor x1 = ops::layer_norm(g, ops::add(g, hidden, attn), p.ln1_g, p.ln1_b, kLayerNormEps);
  Tensor ff = ops::gelu(g, ops::add_bias(g, ops::matmul(g, x1, p.w1), p.b1));
  Tensor ff2 = ops::add_bias(g, ops::matmul(g, ff, p.w2), p.b2);
  return ops::layer_norm(g, ops::add(g, x1, ff2), p.ln2_g, p.ln2_b, kLayerNormEps);
}

}  // namespace hmnet
