// SPDX-License-Identifier: Apache-2.0
//
// Tokenizer, embeddings and the post-norm Transformer encoder layer.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hmnet/tensor.hpp"

namespace hmnet {

enum class InputMode { single, pair, qa_triple };

InputMode parse_input_mode(std::string_view s);
std::string to_string(InputMode mode);

/// Token ids plus a 0/1 attention mask of the same length.
struct Encoding {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;
};

/// Whitespace + lowercase tokenizer over a closed vocabulary.
class Tokenizer {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;
  static constexpr const char* kSpecials[4] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

  Tokenizer() : Tokenizer(std::vector<std::string>{}, 64) {}
  /// Specials are prepended; `tokens` must not contain them or duplicates.
  Tokenizer(const std::vector<std::string>& tokens, std::size_t max_len);

  /// Vocabulary of every token seen in `texts` (min frequency 1), ordered by
  /// first appearance.
  static Tokenizer build(const std::vector<std::string>& texts, std::size_t max_len);
  /// One token per line, line number = id, specials first.
  static Tokenizer load(const std::string& path, std::size_t max_len);
  void save(const std::string& path) const;

  /// Lowercased whitespace split, no vocabulary lookup.
  static std::vector<std::string> split(std::string_view text);

  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t max_len() const { return max_len_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t id_of(std::string_view token) const;

  /// single: [CLS] a
  /// pair:   [CLS] a [SEP] b [SEP]
  /// qa:     [CLS] a [SEP] b [SEP] c
  /// Over-long inputs lose tokens from the end of text_b first, then text_c,
  /// then text_a.
  Encoding encode(std::string_view text_a, std::optional<std::string_view> text_b,
                  std::optional<std::string_view> text_c, InputMode mode) const;
  Encoding encode(std::string_view text_a) const { return encode(text_a, std::nullopt, std::nullopt, InputMode::single); }

  /// Space-joined tokens; unknown ids render as "[UNK]".
  std::string decode(const std::vector<std::size_t>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t max_len_;
};

/// A padded batch of B sequences of common length L, stored row-major.
struct Batch {
  std::size_t size = 0;    // B
  std::size_t length = 0;  // L
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;
};

/// Pad encodings with [PAD] (mask 0) to the longest one.
Batch pad_batch(const std::vector<Encoding>& encodings);

struct EncoderLayerParams {
  std::size_t d = 0;
  std::size_t heads = 0;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b;
  Tensor w1, b1, w2, b2;
  Tensor ln2_g, ln2_b;

  /// Weights ~ truncated normal(0, 0.02), biases 0, norm gains 1.
  static EncoderLayerParams init(std::size_t d, std::size_t heads, std::uint64_t seed);
  /// Every parameter tensor in a fixed order.
  std::vector<Tensor> tensors() const;
  static std::vector<std::string> tensor_names();
  /// 12 d^2 + 13 d.
  static std::size_t param_count(std::size_t d) { return 12 * d * d + 13 * d; }
};

struct Embeddings {
  Tensor token;     // [V, d]
  Tensor position;  // [max_len, d]
  Tensor ln_g, ln_b;

  static Embeddings init(std::size_t vocab, std::size_t max_len, std::size_t d, std::uint64_t seed);
  std::vector<Tensor> tensors() const;
  static std::vector<std::string> tensor_names();
  std::size_t param_count() const;
};

constexpr double kLayerNormEps = 1e-12;

/// Token + position embedding followed by layer norm: [B*L, d].
Tensor embed(Graph& g, const Embeddings& emb, const Batch& batch);

/// Scaled dot-product attention over pre-projected q/k/v of shape [B*L, d],
/// split into `heads` heads. Masked keys get -inf before the softmax. When
/// `maps` is non-null it receives the probabilities, [B][h][L][L] flattened.
Tensor attention_core(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v, const Batch& batch,
                      std::size_t heads, std::vector<double>* maps);

/// Multi-head self-attention including the input and output projections.
Tensor multi_head_attention(Graph& g, const Tensor& hidden, const Batch& batch, const EncoderLayerParams& p,
                            std::vector<double>* maps);

/// x1 = LN(x + MHA(x)); out = LN(x1 + FFN(x1)), FFN = W2 gelu(W1 x + b1) + b2.
Tensor encoder_layer_forward(Graph& g, const Tensor& hidden, const Batch& batch, const EncoderLayerParams& p,
                             std::vector<double>* maps = nullptr);

}  // namespace hmnet
