// include/pronscore/model.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PRONSCORE_MODEL_HPP_
#define PRONSCORE_MODEL_HPP_

#include <string>
#include <vector>

#include "pronscore/data_model.hpp"
#include "pronscore/ops.hpp"
#include "pronscore/rng.hpp"
#include "pronscore/supervision.hpp"
#include "pronscore/tensor.hpp"

namespace pronscore {

// How word/utterance scores are derived from the encoder:
//   kBase - dedicated CLS head for the utterance, a per-phone word head whose
//           outputs are averaged per word at inference;
//   kMean - means of the phoneme-level scores within each unit;
//   kAttn - attention-weighted means of the phoneme-level scores.
enum class PoolingStrategy { kBase, kMean, kAttn };

std::string to_string(PoolingStrategy p);
PoolingStrategy pooling_from_string(const std::string& s);

struct ModelConfig {
  int K = 42;
  int d_model = 24;
  int depth = 3;
  int n_heads = 1;
  int ffn_mult = 4;
  int max_seq_len = 50;
  PoolingStrategy pooling = PoolingStrategy::kAttn;
  double dropout = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

// Ordered named-parameter container. Order is the initialization and
// checkpoint order, so it must stay stable.
class ModelParams {
 public:
  static ModelParams init(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  nn::Tensor& at(const std::string& name);
  const nn::Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::pair<std::string, nn::Tensor>>& named() { return named_; }
  const std::vector<std::pair<std::string, nn::Tensor>>& named() const {
    return named_;
  }
  std::vector<nn::Tensor> tensors() const;
  void zero_grad();
  ModelParams clone() const;

  // Used by the checkpoint loader; tensors must match init()'s layout.
  static ModelParams from_named(const ModelConfig& config,
                                std::vector<std::pair<std::string, nn::Tensor>> named);

 private:
  ModelConfig config_;
  std::vector<std::pair<std::string, nn::Tensor>> named_;
};

struct EmbeddedBatch {
  nn::Tensor x;               // [B, L+1, d]; position 0 is the CLS token
  nn::Tensor attn_mask;       // [B, L+1]
  nn::Tensor phone_mask;      // [B, L]
  nn::Tensor word_masks;      // [B, W, L] word membership
  nn::Tensor word_slot_mask;  // [B, W] real words vs padded slots
  std::vector<const UtteranceRecord*> records;
  int64_t B = 0, L = 0, W = 0;
};

// All batch-level score tensors; rows are trimmed per record by
// extract_outputs. word_phone_scores is BASE's per-phone word head, the
// training target carrier for the word loss.
struct ForwardGraph {
  EmbeddedBatch batch;
  nn::Tensor phone_scores;       // [B, L]
  nn::Tensor word_scores;        // [B, W]
  nn::Tensor word_phone_scores;  // [B, L], BASE only
  nn::Tensor utt_scores;         // [B]
  nn::Tensor word_attn;          // [B, W, L], ATTN only
  nn::Tensor utt_attn;           // [B, L], ATTN only
};

// Per-utterance view of a forward pass.
struct ModelOutput {
  std::vector<double> phone_scores;
  std::vector<double> word_scores;
  double utt_score = 0.0;
  std::vector<std::vector<double>> word_attn_weights;  // ATTN only
  std::vector<double> utt_attn_weights;                // ATTN only
};

EmbeddedBatch embed(const std::vector<const UtteranceRecord*>& batch,
                    const ModelParams& params, Rng* dropout_rng = nullptr);

ForwardGraph forward(const std::vector<const UtteranceRecord*>& batch,
                     const ModelParams& params, Rng* dropout_rng = nullptr);

std::vector<ModelOutput> extract_outputs(const ForwardGraph& g);

// Sum of the regime's active masked-MSE terms. Inactive levels contribute
// exactly zero and propagate no gradient.
nn::Tensor loss(const ForwardGraph& g, SupervisionRegime regime);

// Helpers shared with evaluation.
std::vector<const UtteranceRecord*> record_ptrs(
    const std::vector<UtteranceRecord>& records);

}  // namespace pronscore

#endif  // PRONSCORE_MODEL_HPP_
