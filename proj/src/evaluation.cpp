// src/evaluation.cpp
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

#include "pronscore/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "pronscore/rng.hpp"

namespace pronscore {

using nlohmann::json;

double pcc(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ShapeError("pcc: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  const size_t n = x.size();
  if (n < 2) throw DomainError("pcc: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DomainError("pcc: undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

double mse(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ShapeError("mse: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  if (x.empty()) throw DomainError("mse: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i)
    acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

Metric metric_pcc() {
  return [](const std::vector<const ScoredItem*>& items) {
    std::vector<double> p, l;
    p.reserve(items.size());
    l.reserve(items.size());
    for (const auto* it : items) {
      p.push_back(it->prediction);
      l.push_back(it->label);
    }
    return pcc(p, l);
  };
}

Metric metric_mse() {
  return [](const std::vector<const ScoredItem*>& items) {
    std::vector<double> p, l;
    p.reserve(items.size());
    l.reserve(items.size());
    for (const auto* it : items) {
      p.push_back(it->prediction);
      l.push_back(it->label);
    }
    return mse(p, l);
  };
}

BootstrapResult bootstrap_by_speaker(const std::vector<ScoredItem>& items,
                                     const Metric& metric, int n_boot,
                                     uint64_t seed) {
  if (n_boot <= 0) throw ConfigError("bootstrap: n_boot must be positive");
  // Speakers sorted by id so resamples are independent of item order.
  std::map<std::string, std::vector<const ScoredItem*>> by_speaker;
  for (const auto& it : items) by_speaker[it.speaker_id].push_back(&it);
  const int64_t S = static_cast<int64_t>(by_speaker.size());
  if (S < 2)
    throw InsufficientDataError("bootstrap: need at least 2 speakers, got " +
                                std::to_string(S));
  std::vector<const std::vector<const ScoredItem*>*> groups;
  groups.reserve(static_cast<size_t>(S));
  for (const auto& [spk, v] : by_speaker) groups.push_back(&v);

  Rng base(seed);
  BootstrapResult result;
  result.values.reserve(static_cast<size_t>(n_boot));
  for (int r = 0; r < n_boot; ++r) {
    Rng rng = base.split(static_cast<uint64_t>(r));
    std::vector<const ScoredItem*> resample;
    for (int64_t s = 0; s < S; ++s) {
      const auto& grp = *groups[static_cast<size_t>(rng.uniform_int(0, S - 1))];
      resample.insert(resample.end(), grp.begin(), grp.end());
    }
    try {
      result.values.push_back(metric(resample));
    } catch (const DomainError&) {
      result.excluded += 1;
    }
  }
  return result;
}

PoolSummary pool_and_interval(std::vector<double> values) {
  if (values.empty()) throw DomainError("pool_and_interval: empty pool");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  auto percentile = [&](double p) {
    const double h = p * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  };
  PoolSummary s;
  s.mean = mean;
  s.p2_5 = percentile(0.025);
  s.p97_5 = percentile(0.975);
  s.ci = std::max(std::abs(mean - s.p2_5), std::abs(mean - s.p97_5));
  return s;
}

TrainedLevels trained_levels(SupervisionRegime regime, PoolingStrategy pooling) {
  const RegimeFlags f = regime_flags(regime);
  TrainedLevels t;
  t.word = f.use_word;
  t.utt = f.use_utt;
  t.phone = pooling == PoolingStrategy::kBase ? f.use_phone : true;
  return t;
}

Predictions predict(const Checkpoint& ckpt,
                    const std::vector<UtteranceRecord>& records,
                    int batch_size) {
  Predictions preds;
  for (size_t start = 0; start < records.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t end =
        std::min(records.size(), start + static_cast<size_t>(batch_size));
    std::vector<const UtteranceRecord*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&records[i]);
    ForwardGraph g = forward(batch, ckpt.params);
    std::vector<ModelOutput> outs = extract_outputs(g);
    for (size_t i = 0; i < outs.size(); ++i) {
      const UtteranceRecord& rec = *batch[i];
      const ModelOutput& out = outs[i];
      for (size_t q = 0; q < rec.phones.size(); ++q)
        if (rec.phones[q].phone_label)
          preds.phone.push_back({rec.speaker_id, out.phone_scores[q],
                                 *rec.phones[q].phone_label});
      if (rec.word_labels)
        for (size_t w = 0; w < rec.word_labels->size(); ++w)
          preds.word.push_back({rec.speaker_id, out.word_scores[w],
                                (*rec.word_labels)[w]});
      if (rec.utt_label)
        preds.utt.push_back({rec.speaker_id, out.utt_score, *rec.utt_label});
    }
  }
  return preds;
}

namespace {

LevelReport pooled_level_report(
    const std::vector<std::vector<ScoredItem>>& per_model_items, int n_boot,
    uint64_t seed, bool with_mse) {
  LevelReport rep;
  rep.present = true;
  std::vector<double> pcc_values, mse_values;
  int64_t excluded = 0;
  std::set<std::string> speakers;
  for (size_t m = 0; m < per_model_items.size(); ++m) {
    const auto& items = per_model_items[m];
    const uint64_t model_seed = mix_seed(seed, static_cast<uint64_t>(m));
    BootstrapResult pr =
        bootstrap_by_speaker(items, metric_pcc(), n_boot, model_seed);
    pcc_values.insert(pcc_values.end(), pr.values.begin(), pr.values.end());
    excluded += pr.excluded;
    if (with_mse) {
      BootstrapResult mr =
          bootstrap_by_speaker(items, metric_mse(), n_boot, model_seed);
      mse_values.insert(mse_values.end(), mr.values.begin(), mr.values.end());
    }
    for (const auto& it : items) speakers.insert(it.speaker_id);
  }
  rep.n_items = static_cast<int64_t>(per_model_items.front().size());
  rep.n_speakers = static_cast<int64_t>(speakers.size());
  rep.excluded = excluded;
  const PoolSummary ps = pool_and_interval(std::move(pcc_values));
  rep.pcc_mean = ps.mean;
  rep.pcc_ci = ps.ci;
  if (with_mse) {
    const PoolSummary ms = pool_and_interval(std::move(mse_values));
    rep.mse_mean = ms.mean;
    rep.mse_ci = ms.ci;
  }
  return rep;
}

}  // namespace

EvalReport evaluate(const std::vector<Checkpoint>& ckpts,
                    const std::vector<UtteranceRecord>& records, int n_boot,
                    uint64_t seed, int batch_size) {
  if (ckpts.empty()) throw ConfigError("evaluate: no checkpoints");
  if (records.empty()) throw InsufficientDataError("evaluate: no records");

  // Every checkpoint must report comparable levels.
  TrainedLevels levels{true, true, true};
  for (const auto& c : ckpts) {
    auto it = c.meta.find("regime");
    if (it == c.meta.end()) continue;  // untagged: all architecture outputs
    TrainedLevels t = trained_levels(regime_from_string(it->second),
                                     c.config().pooling);
    levels.phone = levels.phone && t.phone;
    levels.word = levels.word && t.word;
    levels.utt = levels.utt && t.utt;
  }

  std::vector<std::vector<ScoredItem>> phone_items, word_items, utt_items;
  for (const auto& c : ckpts) {
    Predictions p = predict(c, records, batch_size);
    phone_items.push_back(std::move(p.phone));
    word_items.push_back(std::move(p.word));
    utt_items.push_back(std::move(p.utt));
  }

  EvalReport rep;
  rep.n_boot = n_boot;
  rep.n_models = static_cast<int64_t>(ckpts.size());
  rep.eval_seed = seed;
  {
    std::set<std::string> seeds, draws;
    for (const auto& c : ckpts) {
      auto s = c.meta.find("train_seed");
      seeds.insert(s == c.meta.end() ? "" : s->second);
      auto d = c.meta.find("draw");
      draws.insert(d == c.meta.end() ? "" : d->second);
    }
    rep.n_seeds = static_cast<int64_t>(seeds.size());
    rep.n_draws = static_cast<int64_t>(draws.size());
  }

  auto run_level = [&](bool enabled, const char* name,
                       std::vector<std::vector<ScoredItem>>& items) {
    LevelReport out;
    if (!enabled) return out;
    if (items.front().empty())
      throw MissingLabelError(std::string("evaluate: no labeled items at the ") +
                              name + " level");
    return pooled_level_report(items, n_boot, seed, /*with_mse=*/true);
  };
  rep.phone = run_level(levels.phone, "phone", phone_items);
  rep.word = run_level(levels.word, "word", word_items);
  rep.utt = run_level(levels.utt, "utterance", utt_items);
  return rep;
}

EvalReport evaluate_gop_baseline(const std::vector<UtteranceRecord>& records,
                                 int K, int n_boot, uint64_t seed) {
  std::vector<ScoredItem> items;
  for (const auto& rec : records)
    for (const auto& p : rec.phones) {
      if (!p.phone_label) continue;
      if (p.phone_id < 0 || p.phone_id >= K ||
          static_cast<int>(p.gop_features.size()) != 2 * K)
        throw DataError("gop baseline: utterance '" + rec.utt_id +
                        "' has inconsistent features for K=" + std::to_string(K));
      items.push_back({rec.speaker_id,
                       p.gop_features[static_cast<size_t>(p.phone_id)],
                       *p.phone_label});
    }
  if (items.empty())
    throw MissingLabelError("gop baseline: no phone-labeled items");

  EvalReport rep;
  rep.n_boot = n_boot;
  rep.n_models = 1;
  rep.n_seeds = 1;
  rep.n_draws = 1;
  rep.eval_seed = seed;
  rep.meta["system"] = "gop";
  std::vector<std::vector<ScoredItem>> groups{std::move(items)};
  rep.phone = pooled_level_report(groups, n_boot, seed, /*with_mse=*/false);
  return rep;
}

namespace {

json level_to_json(const LevelReport& r) {
  json j;
  j["pcc_mean"] = r.pcc_mean;
  j["pcc_ci"] = r.pcc_ci;
  if (r.mse_mean) {
    j["mse_mean"] = *r.mse_mean;
    j["mse_ci"] = *r.mse_ci;
  } else {
    j["mse_mean"] = nullptr;
    j["mse_ci"] = nullptr;
  }
  j["n_items"] = r.n_items;
  j["n_speakers"] = r.n_speakers;
  j["excluded"] = r.excluded;
  return j;
}

LevelReport level_from_json(const json& j) {
  LevelReport r;
  r.present = true;
  r.pcc_mean = j.at("pcc_mean").get<double>();
  r.pcc_ci = j.at("pcc_ci").get<double>();
  if (!j.at("mse_mean").is_null()) {
    r.mse_mean = j["mse_mean"].get<double>();
    r.mse_ci = j["mse_ci"].get<double>();
  }
  r.n_items = j.at("n_items").get<int64_t>();
  r.n_speakers = j.at("n_speakers").get<int64_t>();
  r.excluded = j.at("excluded").get<int64_t>();
  return r;
}

}  // namespace

void write_report(const std::string& path, const EvalReport& report) {
  json j;
  j["format"] = "pronscore-report";
  j["version"] = 1;
  j["n_boot"] = report.n_boot;
  j["n_models"] = report.n_models;
  j["n_seeds"] = report.n_seeds;
  j["n_draws"] = report.n_draws;
  j["eval_seed"] = report.eval_seed;
  j["meta"] = report.meta;
  json levels;
  if (report.phone.present) levels["phone"] = level_to_json(report.phone);
  if (report.word.present) levels["word"] = level_to_json(report.word);
  if (report.utt.present) levels["utterance"] = level_to_json(report.utt);
  j["levels"] = std::move(levels);
  std::ofstream out(path);
  if (!out) throw FileError("cannot write report '" + path + "'");
  out << j.dump(2) << "\n";
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open report '" + path + "'");
  json j;
  try {
    in >> j;
    if (j.at("format") != "pronscore-report")
      throw ParseError("report '" + path + "': unsupported format");
    EvalReport r;
    r.n_boot = j.at("n_boot").get<int64_t>();
    r.n_models = j.at("n_models").get<int64_t>();
    r.n_seeds = j.at("n_seeds").get<int64_t>();
    r.n_draws = j.at("n_draws").get<int64_t>();
    r.eval_seed = j.at("eval_seed").get<uint64_t>();
    r.meta = j.at("meta").get<std::map<std::string, std::string>>();
    const json& levels = j.at("levels");
    if (levels.contains("phone")) r.phone = level_from_json(levels["phone"]);
    if (levels.contains("word")) r.word = level_from_json(levels["word"]);
    if (levels.contains("utterance")) r.utt = level_from_json(levels["utterance"]);
    return r;
  } catch (const json::exception& e) {
    throw ParseError("report '" + path + "': " + e.what());
  }
}

}  // namespace pronscore
