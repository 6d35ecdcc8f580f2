// src/model.cpp
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

#include "pronscore/model.hpp"

#include <algorithm>
#include <cmath>

namespace pronscore {

using nn::Shape;
using nn::Tensor;

std::string to_string(PoolingStrategy p) {
  switch (p) {
    case PoolingStrategy::kBase: return "base";
    case PoolingStrategy::kMean: return "mean";
    case PoolingStrategy::kAttn: return "attn";
  }
  throw ConfigError("unknown pooling strategy");
}

PoolingStrategy pooling_from_string(const std::string& s) {
  if (s == "base") return PoolingStrategy::kBase;
  if (s == "mean") return PoolingStrategy::kMean;
  if (s == "attn") return PoolingStrategy::kAttn;
  throw ConfigError("unknown pooling strategy '" + s + "'");
}

void ModelConfig::validate() const {
  if (K <= 0) throw ConfigError("model config: K must be positive");
  if (d_model <= 0 || depth <= 0 || n_heads <= 0 || ffn_mult <= 0)
    throw ConfigError("model config: sizes must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (max_seq_len <= 0) throw ConfigError("model config: max_seq_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("model config: dropout outside [0, 1)");
}

namespace {

Tensor init_linear_weight(Rng& rng, int64_t fan_in, int64_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(fan_in * fan_out));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

Tensor init_linear_bias(Rng& rng, int64_t fan_in, int64_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(fan_out));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from({fan_out}, std::move(v), true);
}

Tensor init_embedding(Rng& rng, Shape shape) {
  std::vector<double> v(static_cast<size_t>(nn::shape_numel(shape)));
  for (double& x : v) x = 0.02 * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config_ = config;
  Rng rng(config.seed);
  const int64_t d = config.d_model;
  const int64_t ff = static_cast<int64_t>(config.ffn_mult) * d;

  auto put = [&](const std::string& name, Tensor t) {
    p.named_.emplace_back(name, std::move(t));
  };
  auto put_linear = [&](const std::string& name, int64_t in, int64_t out) {
    put(name + ".w", init_linear_weight(rng, in, out));
    put(name + ".b", init_linear_bias(rng, in, out));
  };

  put_linear("feat_proj", 2 * config.K, d);
  put("phone_emb", init_embedding(rng, {config.K, d}));
  put("pos_emb", init_embedding(rng, {config.max_seq_len + 1, d}));
  put("cls", init_embedding(rng, {d}));
  for (int i = 0; i < config.depth; ++i) {
    const std::string pre = "enc." + std::to_string(i) + ".";
    put(pre + "ln1.g", Tensor::full({d}, 1.0, true));
    put(pre + "ln1.b", Tensor::zeros({d}, true));
    put_linear(pre + "attn.q", d, d);
    put_linear(pre + "attn.k", d, d);
    put_linear(pre + "attn.v", d, d);
    put_linear(pre + "attn.o", d, d);
    put(pre + "ln2.g", Tensor::full({d}, 1.0, true));
    put(pre + "ln2.b", Tensor::zeros({d}, true));
    put_linear(pre + "ffn.1", d, ff);
    put_linear(pre + "ffn.2", ff, d);
  }
  put("final_ln.g", Tensor::full({d}, 1.0, true));
  put("final_ln.b", Tensor::zeros({d}, true));
  put_linear("head.phone", d, 1);
  if (config.pooling == PoolingStrategy::kBase) {
    put_linear("head.word", d, 1);
    put_linear("head.utt", d, 1);
  } else if (config.pooling == PoolingStrategy::kAttn) {
    put_linear("attn_pool.word", d, 1);
    put_linear("attn_pool.utt", d, 1);
  }
  return p;
}

ModelParams ModelParams::from_named(
    const ModelConfig& config,
    std::vector<std::pair<std::string, Tensor>> named) {
  ModelParams ref = init(config);
  if (named.size() != ref.named_.size())
    throw ConfigError("parameter container holds " + std::to_string(named.size()) +
                      " tensors, model needs " + std::to_string(ref.named_.size()));
  for (size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != ref.named_[i].first)
      throw ConfigError("parameter " + std::to_string(i) + " named '" +
                        named[i].first + "', expected '" + ref.named_[i].first +
                        "'");
    if (!nn::same_shape(named[i].second.shape(), ref.named_[i].second.shape()))
      throw ConfigError("parameter '" + named[i].first + "' has shape " +
                        nn::shape_str(named[i].second.shape()) + ", expected " +
                        nn::shape_str(ref.named_[i].second.shape()));
  }
  ModelParams p;
  p.config_ = config;
  p.named_ = std::move(named);
  return p;
}

nn::Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : named_)
    if (n == name) return t;
  throw ConfigError("no parameter named '" + name + "'");
}

const nn::Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& [n, t] : named_)
    if (n == name) return t;
  throw ConfigError("no parameter named '" + name + "'");
}

bool ModelParams::has(const std::string& name) const {
  for (const auto& [n, t] : named_)
    if (n == name) return true;
  return false;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(named_.size());
  for (const auto& [n, t] : named_) out.push_back(t);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& [n, t] : named_) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  std::vector<std::pair<std::string, Tensor>> named;
  named.reserve(named_.size());
  for (const auto& [n, t] : named_)
    named.emplace_back(n, Tensor::from(t.shape(), t.values(), true));
  ModelParams p;
  p.config_ = config_;
  p.named_ = std::move(named);
  return p;
}

std::vector<const UtteranceRecord*> record_ptrs(
    const std::vector<UtteranceRecord>& records) {
  std::vector<const UtteranceRecord*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&r);
  return out;
}

EmbeddedBatch embed(const std::vector<const UtteranceRecord*>& batch,
                    const ModelParams& params, Rng* dropout_rng) {
  const ModelConfig& cfg = params.config();
  if (batch.empty()) throw DataError("embed: empty batch");
  const int64_t B = static_cast<int64_t>(batch.size());
  const int64_t L = cfg.max_seq_len;
  const int64_t d = cfg.d_model;
  const int64_t K2 = 2 * static_cast<int64_t>(cfg.K);

  int64_t W = 0;
  for (const auto* rec : batch) {
    if (static_cast<int64_t>(rec->phones.size()) > L)
      throw DataError("embed: utterance '" + rec->utt_id + "' has " +
                      std::to_string(rec->phones.size()) +
                      " phones, max_seq_len is " + std::to_string(L));
    if (rec->phones.empty())
      throw DataError("embed: utterance '" + rec->utt_id + "' has no phones");
    W = std::max(W, static_cast<int64_t>(rec->num_words()));
  }

  // Dense constant inputs; padded positions carry zeros / phone id 0 and are
  // excluded from attention and every reduction by the masks.
  std::vector<double> feats(static_cast<size_t>(B * L * K2), 0.0);
  std::vector<int64_t> phone_ids(static_cast<size_t>(B * L), 0);
  std::vector<double> attn_mask(static_cast<size_t>(B * (L + 1)), 0.0);
  std::vector<double> phone_mask(static_cast<size_t>(B * L), 0.0);
  std::vector<double> word_masks(static_cast<size_t>(B * W * L), 0.0);
  std::vector<double> word_slots(static_cast<size_t>(B * W), 0.0);

  for (int64_t b = 0; b < B; ++b) {
    const UtteranceRecord& rec = *batch[static_cast<size_t>(b)];
    attn_mask[b * (L + 1)] = 1.0;  // CLS
    const int n_words = rec.num_words();
    for (int w = 0; w < n_words; ++w) word_slots[b * W + w] = 1.0;
    for (size_t i = 0; i < rec.phones.size(); ++i) {
      const PhoneEntry& p = rec.phones[i];
      if (static_cast<int64_t>(p.gop_features.size()) != K2)
        throw DataError("embed: utterance '" + rec.utt_id +
                        "' feature length mismatch");
      std::copy(p.gop_features.begin(), p.gop_features.end(),
                feats.begin() + (b * L + static_cast<int64_t>(i)) * K2);
      phone_ids[b * L + static_cast<int64_t>(i)] = p.phone_id;
      attn_mask[b * (L + 1) + 1 + static_cast<int64_t>(i)] = 1.0;
      phone_mask[b * L + static_cast<int64_t>(i)] = 1.0;
      word_masks[(b * W + p.word_index) * L + static_cast<int64_t>(i)] = 1.0;
    }
    // A declared word with no phones cannot be pooled.
    for (int w = 0; w < n_words; ++w) {
      bool any = false;
      for (int64_t l = 0; l < L; ++l)
        if (word_masks[(b * W + w) * L + l] != 0.0) any = true;
      if (!any)
        throw DataError("forward: utterance '" + rec.utt_id + "' word " +
                        std::to_string(w) + " has no phones");
    }
  }

  Tensor feat_in = Tensor::from({B, L, K2}, std::move(feats));
  Tensor projected = nn::linear(feat_in, params.at("feat_proj.w"),
                                params.at("feat_proj.b"));  // [B, L, d]
  Tensor phone_e = nn::reshape(
      nn::embedding_lookup(params.at("phone_emb"), phone_ids), {B, L, d});
  Tensor content = nn::add(projected, phone_e);

  Tensor cls_row = nn::tile_dim0(nn::reshape(params.at("cls"), {1, d}), B);
  Tensor seq = nn::concat_dim1(nn::reshape(cls_row, {B, 1, d}), content);
  seq = nn::add(seq, params.at("pos_emb"));  // broadcast [L+1, d] over batch

  if (dropout_rng && cfg.dropout > 0.0)
    seq = nn::dropout(seq, cfg.dropout, *dropout_rng);

  EmbeddedBatch eb;
  eb.x = std::move(seq);
  eb.attn_mask = Tensor::from({B, L + 1}, std::move(attn_mask));
  eb.phone_mask = Tensor::from({B, L}, std::move(phone_mask));
  eb.word_masks = Tensor::from({B, W, L}, std::move(word_masks));
  eb.word_slot_mask = Tensor::from({B, W}, std::move(word_slots));
  eb.records = batch;
  eb.B = B;
  eb.L = L;
  eb.W = W;
  return eb;
}

namespace {

Tensor encoder(const EmbeddedBatch& eb, const ModelParams& params,
               Rng* dropout_rng) {
  const ModelConfig& cfg = params.config();
  Tensor h = eb.x;
  auto maybe_dropout = [&](Tensor t) {
    if (dropout_rng && cfg.dropout > 0.0)
      return nn::dropout(t, cfg.dropout, *dropout_rng);
    return t;
  };
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string pre = "enc." + std::to_string(i) + ".";
    nn::AttentionParams ap{params.at(pre + "attn.q.w"), params.at(pre + "attn.q.b"),
                           params.at(pre + "attn.k.w"), params.at(pre + "attn.k.b"),
                           params.at(pre + "attn.v.w"), params.at(pre + "attn.v.b"),
                           params.at(pre + "attn.o.w"), params.at(pre + "attn.o.b")};
    Tensor normed = nn::layer_norm(h, params.at(pre + "ln1.g"),
                                   params.at(pre + "ln1.b"));
    Tensor att = nn::multi_head_self_attention(normed, eb.attn_mask, ap,
                                               cfg.n_heads);
    h = nn::add(h, maybe_dropout(att));
    Tensor normed2 = nn::layer_norm(h, params.at(pre + "ln2.g"),
                                    params.at(pre + "ln2.b"));
    Tensor ff = nn::linear(
        nn::gelu(nn::linear(normed2, params.at(pre + "ffn.1.w"),
                            params.at(pre + "ffn.1.b"))),
        params.at(pre + "ffn.2.w"), params.at(pre + "ffn.2.b"));
    h = nn::add(h, maybe_dropout(ff));
  }
  return nn::layer_norm(h, params.at("final_ln.g"), params.at("final_ln.b"));
}

// [B, T, d] x head -> [B, T]
Tensor scalar_head(const Tensor& h, const ModelParams& params,
                   const std::string& name) {
  Tensor out = nn::linear(h, params.at(name + ".w"), params.at(name + ".b"));
  return nn::reshape(out, {h.dim(0), h.dim(1)});
}

}  // namespace

ForwardGraph forward(const std::vector<const UtteranceRecord*>& batch,
                     const ModelParams& params, Rng* dropout_rng) {
  const ModelConfig& cfg = params.config();
  ForwardGraph g;
  g.batch = embed(batch, params, dropout_rng);
  const EmbeddedBatch& eb = g.batch;

  Tensor h = encoder(eb, params, dropout_rng);
  Tensor h_phones = nn::slice_dim1(h, 1, eb.L);  // [B, L, d]
  g.phone_scores = scalar_head(h_phones, params, "head.phone");  // [B, L]

  switch (cfg.pooling) {
    case PoolingStrategy::kBase: {
      Tensor h_cls = nn::slice_dim1(h, 0, 1);  // [B, 1, d]
      g.utt_scores = nn::reshape(scalar_head(h_cls, params, "head.utt"), {eb.B});
      g.word_phone_scores = scalar_head(h_phones, params, "head.word");
      // Inference-time word score: mean of the word head over each word.
      g.word_scores = nn::masked_mean(nn::tile_dim1(g.word_phone_scores, eb.W),
                                      eb.word_masks, /*allow_empty_rows=*/true);
      break;
    }
    case PoolingStrategy::kMean: {
      g.utt_scores = nn::masked_mean(g.phone_scores, eb.phone_mask);
      g.word_scores = nn::masked_mean(nn::tile_dim1(g.phone_scores, eb.W),
                                      eb.word_masks, /*allow_empty_rows=*/true);
      break;
    }
    case PoolingStrategy::kAttn: {
      Tensor word_logits = nn::tile_dim1(
          scalar_head(h_phones, params, "attn_pool.word"), eb.W);  // [B, W, L]
      g.word_attn = nn::softmax_masked(word_logits, eb.word_masks,
                                       /*allow_empty_rows=*/true);
      g.word_scores = nn::masked_weighted_sum(
          nn::tile_dim1(g.phone_scores, eb.W), g.word_attn, eb.word_masks);

      Tensor utt_logits = scalar_head(h_phones, params, "attn_pool.utt");
      g.utt_attn = nn::softmax_masked(utt_logits, eb.phone_mask);
      g.utt_scores =
          nn::masked_weighted_sum(g.phone_scores, g.utt_attn, eb.phone_mask);
      break;
    }
  }
  return g;
}

std::vector<ModelOutput> extract_outputs(const ForwardGraph& g) {
  const EmbeddedBatch& eb = g.batch;
  std::vector<ModelOutput> outs;
  outs.reserve(static_cast<size_t>(eb.B));
  const bool attn = g.word_attn.defined();
  for (int64_t b = 0; b < eb.B; ++b) {
    const UtteranceRecord& rec = *eb.records[static_cast<size_t>(b)];
    const int64_t n_phones = static_cast<int64_t>(rec.phones.size());
    const int n_words = rec.num_words();
    ModelOutput out;
    out.utt_score = g.utt_scores.values()[static_cast<size_t>(b)];
    for (int64_t i = 0; i < n_phones; ++i)
      out.phone_scores.push_back(g.phone_scores.values()[b * eb.L + i]);
    for (int w = 0; w < n_words; ++w)
      out.word_scores.push_back(g.word_scores.values()[b * eb.W + w]);
    if (attn) {
      for (int w = 0; w < n_words; ++w) {
        std::vector<double> weights;
        for (int64_t i = 0; i < n_phones; ++i)
          weights.push_back(g.word_attn.values()[(b * eb.W + w) * eb.L + i]);
        out.word_attn_weights.push_back(std::move(weights));
      }
      for (int64_t i = 0; i < n_phones; ++i)
        out.utt_attn_weights.push_back(g.utt_attn.values()[b * eb.L + i]);
    }
    outs.push_back(std::move(out));
  }
  return outs;
}

nn::Tensor loss(const ForwardGraph& g, SupervisionRegime regime) {
  const EmbeddedBatch& eb = g.batch;
  const RegimeFlags flags = regime_flags(regime);
  const bool base = g.word_phone_scores.defined();

  auto require_label = [](bool ok, const UtteranceRecord& rec, const char* level) {
    if (!ok)
      throw MissingLabelError("utterance '" + rec.utt_id + "' lacks a " +
                              std::string(level) + "-level label required by "
                              "the supervision regime");
  };

  Tensor total;
  auto accumulate = [&](Tensor term) {
    total = total.defined() ? nn::add(total, term) : term;
  };

  if (flags.use_phone) {
    std::vector<double> target(static_cast<size_t>(eb.B * eb.L), 0.0);
    for (int64_t b = 0; b < eb.B; ++b) {
      const UtteranceRecord& rec = *eb.records[static_cast<size_t>(b)];
      for (size_t i = 0; i < rec.phones.size(); ++i) {
        require_label(rec.phones[i].phone_label.has_value(), rec, "phone");
        target[b * eb.L + static_cast<int64_t>(i)] = *rec.phones[i].phone_label;
      }
    }
    accumulate(nn::mse_masked(g.phone_scores,
                              Tensor::from({eb.B, eb.L}, std::move(target)),
                              eb.phone_mask));
  }

  if (flags.use_word) {
    if (base) {
      // Word label repeated over each constituent phone.
      std::vector<double> target(static_cast<size_t>(eb.B * eb.L), 0.0);
      for (int64_t b = 0; b < eb.B; ++b) {
        const UtteranceRecord& rec = *eb.records[static_cast<size_t>(b)];
        require_label(rec.word_labels.has_value(), rec, "word");
        for (size_t i = 0; i < rec.phones.size(); ++i)
          target[b * eb.L + static_cast<int64_t>(i)] =
              (*rec.word_labels)[static_cast<size_t>(rec.phones[i].word_index)];
      }
      accumulate(nn::mse_masked(g.word_phone_scores,
                                Tensor::from({eb.B, eb.L}, std::move(target)),
                                eb.phone_mask));
    } else {
      std::vector<double> target(static_cast<size_t>(eb.B * eb.W), 0.0);
      for (int64_t b = 0; b < eb.B; ++b) {
        const UtteranceRecord& rec = *eb.records[static_cast<size_t>(b)];
        require_label(rec.word_labels.has_value(), rec, "word");
        for (size_t w = 0; w < rec.word_labels->size(); ++w)
          target[b * eb.W + static_cast<int64_t>(w)] = (*rec.word_labels)[w];
      }
      accumulate(nn::mse_masked(g.word_scores,
                                Tensor::from({eb.B, eb.W}, std::move(target)),
                                eb.word_slot_mask));
    }
  }

  if (flags.use_utt) {
    std::vector<double> target(static_cast<size_t>(eb.B), 0.0);
    for (int64_t b = 0; b < eb.B; ++b) {
      const UtteranceRecord& rec = *eb.records[static_cast<size_t>(b)];
      require_label(rec.utt_label.has_value(), rec, "utterance");
      target[static_cast<size_t>(b)] = *rec.utt_label;
    }
    accumulate(nn::mse_masked(g.utt_scores, Tensor::from({eb.B}, std::move(target)),
                              Tensor::full({eb.B}, 1.0)));
  }

  return total;
}

}  // namespace pronscore
