// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "hmnet/errors.hpp"
#include "hmnet/ops.hpp"
#include "hmnet/transformer.hpp"
#include "support.hpp"

using namespace hmnet;
using hmnet::testing::random_tensor;

namespace {

std::vector<std::string> decode_tokens(const Tokenizer& tok, const Encoding& e) {
  std::vector<std::string> out;
  for (auto id : e.ids) out.push_back(id < tok.vocab_size() ? tok.tokens()[id] : "?");
  return out;
}

Tokenizer small_vocab(std::size_t max_len = 64) {
  return Tokenizer::build({"good movie", "a b c d e f", "bad film"}, max_len);
}

// Per-head loop over examples, queries and keys.
std::vector<double> slow_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Batch& batch,
                                   std::size_t heads, std::vector<double>& maps) {
  const std::size_t B = batch.size, L = batch.length, d = q.dim(1), dh = d / heads;
  std::vector<double> out(B * L * d, 0.0);
  maps.assign(B * heads * L * L, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < L; ++i) {
        std::vector<double> s(L);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          if (!batch.mask[b * L + j]) {
            s[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          double dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += q[(b * L + i) * d + h * dh + c] * k[(b * L + j) * d + h * dh + c];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < L; ++j) z += batch.mask[b * L + j] ? std::exp(s[j] - mx) : 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          const double p = batch.mask[b * L + j] ? std::exp(s[j] - mx) / z : 0.0;
          maps[((b * heads + h) * L + i) * L + j] = p;
          for (std::size_t c = 0; c < dh; ++c) out[(b * L + i) * d + h * dh + c] += p * v[(b * L + j) * d + h * dh + c];
        }
      }
  return out;
}

EncoderLayerParams perturbed_layer(std::size_t d, std::size_t heads, std::uint64_t seed) {
  auto p = EncoderLayerParams::init(d, heads, seed);
  Rng rng(seed + 1);
  for (auto t : p.tensors())
    for (auto& v : t.data()) v += 0.2 * (2 * rng.uniform() - 1);
  return p;
}

}  // namespace

TEST_CASE("tokenizer specials are fixed and distinct") {
  Tokenizer tok = small_vocab();
  CHECK(tok.tokens()[Tokenizer::kPad] == "[PAD]");
  CHECK(tok.tokens()[Tokenizer::kUnk] == "[UNK]");
  CHECK(tok.tokens()[Tokenizer::kCls] == "[CLS]");
  CHECK(tok.tokens()[Tokenizer::kSep] == "[SEP]");
  CHECK(tok.vocab_size() > 4);
  // First-appearance order after the specials.
  CHECK(tok.tokens()[4] == "good");
  CHECK(tok.tokens()[5] == "movie");
}

TEST_CASE("single and pair encodings") {
  Tokenizer tok = small_vocab();
  auto e = tok.encode("good movie");
  CHECK(decode_tokens(tok, e) == std::vector<std::string>{"[CLS]", "good", "movie"});
  CHECK(e.mask == std::vector<std::uint8_t>{1, 1, 1});

  auto p = tok.encode("a b", std::string_view("c"), std::nullopt, InputMode::pair);
  CHECK(decode_tokens(tok, p) == std::vector<std::string>{"[CLS]", "a", "b", "[SEP]", "c", "[SEP]"});

  auto q = tok.encode("a", std::string_view("b c"), std::string_view("d"), InputMode::qa_triple);
  CHECK(decode_tokens(tok, q) == std::vector<std::string>{"[CLS]", "a", "[SEP]", "b", "c", "[SEP]", "d"});
}

TEST_CASE("tokenizer lowercases and maps unseen tokens to [UNK]") {
  Tokenizer tok = small_vocab();
  auto e = tok.encode("GOOD zebra");
  CHECK(e.ids[1] == tok.id_of("good"));
  CHECK(e.ids[2] == Tokenizer::kUnk);
  CHECK(tok.decode(e.ids) == "[CLS] good [UNK]");
}

TEST_CASE("empty text_a is an input error") {
  Tokenizer tok = small_vocab();
  CHECK_THROWS_AS(tok.encode("   "), InputError);
  CHECK_THROWS_AS(tok.encode("", std::string_view("good"), std::nullopt, InputMode::pair), InputError);
}

TEST_CASE("truncation drops text_b first, then text_c, then text_a") {
  Tokenizer tok = Tokenizer::build({"a b c d e f"}, 7);
  // [CLS] a b [SEP] c d e f [SEP] is 9 tokens: two come off b.
  auto p = tok.encode("a b", std::string_view("c d e f"), std::nullopt, InputMode::pair);
  CHECK(decode_tokens(tok, p) == std::vector<std::string>{"[CLS]", "a", "b", "[SEP]", "c", "d", "[SEP]"});
  // b is emptied before a loses anything.
  auto p2 = tok.encode("a b c d", std::string_view("e f"), std::nullopt, InputMode::pair);
  CHECK(decode_tokens(tok, p2) == std::vector<std::string>{"[CLS]", "a", "b", "c", "d", "[SEP]", "[SEP]"});
  auto p3 = tok.encode("a b c d e f", std::string_view("a"), std::nullopt, InputMode::pair);
  CHECK(decode_tokens(tok, p3) == std::vector<std::string>{"[CLS]", "a", "b", "c", "d", "[SEP]", "[SEP]"});
  // qa: b, then c.
  auto q = tok.encode("a", std::string_view("b c"), std::string_view("d e f"), InputMode::qa_triple);
  CHECK(decode_tokens(tok, q) == std::vector<std::string>{"[CLS]", "a", "[SEP]", "[SEP]", "d", "e", "f"});
  auto q2 = tok.encode("a b", std::string_view("c"), std::string_view("d e f"), InputMode::qa_triple);
  CHECK(decode_tokens(tok, q2) == std::vector<std::string>{"[CLS]", "a", "b", "[SEP]", "[SEP]", "d", "e"});
}

TEST_CASE("encodings never exceed max_len") {
  Rng rng(7);
  const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  auto sentence = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += words[rng.below(words.size())] + " ";
    return s;
  };
  CHECK_THROWS_AS(Tokenizer::build({"a"}, 3).encode("a", std::string_view("b"), std::nullopt, InputMode::pair),
                  ConfigError);
  for (std::size_t max_len : {5, 8, 16}) {
    Tokenizer tok = Tokenizer::build({"a b c d e f"}, max_len);
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = sentence(1 + rng.below(10)), b = sentence(rng.below(10)), c = sentence(rng.below(10));
      for (auto mode : {InputMode::single, InputMode::pair, InputMode::qa_triple}) {
        auto e = tok.encode(a, b, c, mode);
        CHECK(e.ids.size() <= max_len);
        CHECK(e.ids.size() == e.mask.size());
        CHECK(e.ids[0] == Tokenizer::kCls);
      }
    }
  }
}

TEST_CASE("vocabulary files round-trip with specials first") {
  Tokenizer tok = small_vocab();
  const std::string path = hmnet::testing::temp_dir("vocab") + "/vocab.txt";
  tok.save(path);
  Tokenizer back = Tokenizer::load(path, 64);
  CHECK(back.tokens() == tok.tokens());
  std::ofstream(path) << "good\n[PAD]\n";
  CHECK_THROWS_AS(Tokenizer::load(path, 64), ParseError);
}

TEST_CASE("pad_batch pads with [PAD] and zero mask") {
  Tokenizer tok = small_vocab();
  Batch b = pad_batch({tok.encode("good movie"), tok.encode("bad")});
  CHECK(b.size == 2);
  CHECK(b.length == 3);
  CHECK(b.ids[5] == Tokenizer::kPad);
  CHECK(b.mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0});
}

TEST_CASE("single position attends to itself") {
  Graph g = Graph::inference();
  Rng rng(1);
  auto p = perturbed_layer(8, 2, 3);
  Batch batch{1, 1, {2}, {1}};
  std::vector<double> maps;
  multi_head_attention(g, random_tensor({1, 8}, rng), batch, p, &maps);
  REQUIRE(maps.size() == 2);
  CHECK(maps[0] == 1.0);
  CHECK(maps[1] == 1.0);
}

TEST_CASE("zero projection weights give uniform attention over unmasked keys") {
  Graph g = Graph::inference();
  Rng rng(2);
  auto p = EncoderLayerParams::init(8, 2, 4);
  for (auto t : {p.wq, p.wk})
    for (auto& v : t.data()) v = 0;
  Batch batch{1, 4, {2, 5, 6, 0}, {1, 1, 1, 0}};
  std::vector<double> maps;
  multi_head_attention(g, random_tensor({4, 8}, rng), batch, p, &maps);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(maps[(h * 4 + i) * 4 + j] == doctest::Approx(j < 3 ? 1.0 / 3 : 0.0).epsilon(1e-15));
}

TEST_CASE("attention matches a slow per-head reference") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    // B=2 examples of L=4 over d=8 with 2 heads; second example padded.
    Batch batch{2, 4, {2, 4, 5, 6, 2, 4, 0, 0}, {1, 1, 1, 1, 1, 1, 0, 0}};
    Tensor q = random_tensor({8, 8}, rng, 2.0), k = random_tensor({8, 8}, rng, 2.0), v = random_tensor({8, 8}, rng);
    Graph g = Graph::inference();
    std::vector<double> maps, ref_maps;
    Tensor out = attention_core(g, q, k, v, batch, 2, &maps);
    auto ref = slow_attention(q, k, v, batch, 2, ref_maps);
    double worst = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(out[i] - ref[i]));
    for (std::size_t i = 0; i < ref_maps.size(); ++i) worst = std::max(worst, std::abs(maps[i] - ref_maps[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("attention rows sum to one and masked keys get exactly zero") {
  Rng rng(9);
  auto p = perturbed_layer(8, 4, 5);
  Batch batch{3, 5, {2, 4, 5, 6, 7, 2, 4, 0, 0, 0, 2, 4, 5, 6, 0}, {1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 1, 0}};
  Graph g = Graph::inference();
  std::vector<double> maps;
  multi_head_attention(g, random_tensor({15, 8}, rng, 3.0), batch, p, &maps);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t i = 0; i < 5; ++i) {
        double total = 0;
        for (std::size_t j = 0; j < 5; ++j) {
          const double v = maps[((b * 4 + h) * 5 + i) * 5 + j];
          if (!batch.mask[b * 5 + j]) CHECK(v == 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
}

TEST_CASE("an example with every key masked is a contract error") {
  Rng rng(1);
  Batch batch{1, 2, {0, 0}, {0, 0}};
  Graph g = Graph::inference();
  auto p = perturbed_layer(4, 2, 1);
  CHECK_THROWS_AS(multi_head_attention(g, random_tensor({2, 4}, rng), batch, p, nullptr), ContractError);
}

TEST_CASE("appending padding leaves unmasked outputs unchanged") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto l1 = perturbed_layer(8, 2, seed + 10);
    auto l2 = perturbed_layer(8, 2, seed + 20);
    Tensor x = random_tensor({3, 8}, rng);
    Batch short_batch{1, 3, {2, 5, 6}, {1, 1, 1}};
    Tensor x_pad({6, 8});
    for (std::size_t i = 0; i < 24; ++i) x_pad[i] = x[i];
    for (std::size_t i = 24; i < 48; ++i) x_pad[i] = 5.0 * (2 * rng.uniform() - 1);
    Batch long_batch{1, 6, {2, 5, 6, 0, 0, 0}, {1, 1, 1, 0, 0, 0}};
    Graph g = Graph::inference();
    Tensor a = encoder_layer_forward(g, encoder_layer_forward(g, x, short_batch, l1), short_batch, l2);
    Tensor b = encoder_layer_forward(g, encoder_layer_forward(g, x_pad, long_batch, l1), long_batch, l2);
    double worst = 0;
    for (std::size_t i = 0; i < 24; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("zero projections with identity norms keep a normalized input") {
  Rng rng(4);
  const std::size_t d = 8;
  auto p = EncoderLayerParams::init(d, 2, 1);
  for (auto t : {p.wq, p.wk, p.wv, p.wo, p.w1, p.w2})
    for (auto& v : t.data()) v = 0;
  Graph g = Graph::inference();
  Tensor ones({d}, 1.0), zeros({d}, 0.0);
  Tensor x = ops::layer_norm(g, random_tensor({5, d}, rng), ones, zeros, kLayerNormEps);
  Batch batch{1, 5, {2, 4, 5, 6, 7}, {1, 1, 1, 1, 1}};
  Tensor y = encoder_layer_forward(g, x, batch, p);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-9));
}

TEST_CASE("encoder output shape equals input shape") {
  Rng rng(6);
  auto p = perturbed_layer(8, 2, 2);
  for (std::size_t L : {1, 3, 16}) {
    Batch batch;
    batch.size = 2;
    batch.length = L;
    batch.ids.assign(2 * L, 4);
    batch.mask.assign(2 * L, 1);
    Graph g = Graph::inference();
    CHECK(encoder_layer_forward(g, random_tensor({2 * L, 8}, rng), batch, p).shape() == Shape{2 * L, 8});
  }
}

TEST_CASE("layer parameter count is 12 d^2 + 13 d") {
  for (std::size_t d : {4, 8, 32, 64}) {
    auto p = EncoderLayerParams::init(d, 4, 0);
    std::size_t total = 0;
    for (const auto& t : p.tensors()) total += t.numel();
    CHECK(total == 12 * d * d + 13 * d);
    CHECK(EncoderLayerParams::param_count(d) == total);
    CHECK(EncoderLayerParams::tensor_names().size() == p.tensors().size());
  }
  CHECK_THROWS_AS(EncoderLayerParams::init(6, 4, 0), ConfigError);
}

TEST_CASE("initialization: truncated normal weights, zero biases, unit gains") {
  auto p = EncoderLayerParams::init(16, 4, 9);
  for (const auto& t : {p.wq, p.wk, p.wv, p.wo, p.w1, p.w2}) {
    double sq = 0;
    for (double v : t.data()) {
      CHECK(std::abs(v) <= 0.04);
      sq += v * v;
    }
    const double std = std::sqrt(sq / static_cast<double>(t.numel()));
    CHECK(std > 0.012);
    CHECK(std < 0.02);
  }
  for (const auto& t : {p.bq, p.bk, p.bv, p.bo, p.b1, p.b2, p.ln1_b, p.ln2_b})
    for (double v : t.data()) CHECK(v == 0.0);
  for (const auto& t : {p.ln1_g, p.ln2_g})
    for (double v : t.data()) CHECK(v == 1.0);
  auto again = EncoderLayerParams::init(16, 4, 9);
  CHECK(std::equal(p.w1.data().begin(), p.w1.data().end(), again.w1.data().begin()));
}

TEST_CASE("gelu is the exact erf form") {
  Graph g = Graph::inference();
  Tensor x({3}, {-1.0, 0.5, 2.0});
  Tensor y = ops::gelu(g, x);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(y[i] == doctest::Approx(0.5 * x[i] * (1 + std::erf(x[i] / std::sqrt(2.0)))).epsilon(1e-15));
}

TEST_CASE("embeddings: token plus position, then layer norm") {
  auto emb = Embeddings::init(10, 8, 4, 3);
  CHECK(emb.param_count() == 10 * 4 + 8 * 4 + 2 * 4);
  Batch batch{1, 2, {5, 7}, {1, 1}};
  Graph g = Graph::inference();
  Tensor out = embed(g, emb, batch);
  Tensor ones({4}, 1.0), zeros({4}, 0.0);
  Tensor manual({2, 4});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 4; ++c) manual[i * 4 + c] = emb.token[batch.ids[i] * 4 + c] + emb.position[i * 4 + c];
  Tensor ref = ops::layer_norm(g, manual, ones, zeros, kLayerNormEps);
  for (std::size_t i = 0; i < 8; ++i) CHECK(out[i] == ref[i]);
  Batch too_long{1, 9, std::vector<std::size_t>(9, 4), std::vector<std::uint8_t>(9, 1)};
  CHECK_THROWS(embed(g, emb, too_long));
}
