// src/data_model.cpp
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

#include "pronscore/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "pronscore/errors.hpp"
#include "pronscore/rng.hpp"

namespace pronscore {

using nlohmann::json;

namespace {

constexpr double kProficiencyLo = 0.7;
constexpr double kProficiencyHi = 1.8;

double clip02(double v) { return std::min(2.0, std::max(0.0, v)); }

void check_label_range(const std::string& utt_id, const char* field, double v) {
  if (!(v >= 0.0 && v <= 2.0))
    throw ValidationError("utterance '" + utt_id + "': " + field + " = " +
                          std::to_string(v) + " outside [0, 2]");
}

}  // namespace

double rescale_labels(double raw) {
  if (!(raw >= 0.0 && raw <= 10.0))
    throw RangeError("rescale_labels: score " + std::to_string(raw) +
                     " outside [0, 10]");
  return raw / 5.0;
}

void validate_record(const UtteranceRecord& rec, int K, int max_seq_len) {
  if (rec.utt_id.empty())
    throw ValidationError("record with empty utt_id");
  if (rec.phones.empty())
    throw ValidationError("utterance '" + rec.utt_id + "': phones list empty");
  if (max_seq_len > 0 && static_cast<int>(rec.phones.size()) > max_seq_len)
    throw ValidationError("utterance '" + rec.utt_id + "': " +
                          std::to_string(rec.phones.size()) +
                          " phones exceed max_seq_len " +
                          std::to_string(max_seq_len));
  int prev_word = 0;
  for (size_t i = 0; i < rec.phones.size(); ++i) {
    const PhoneEntry& p = rec.phones[i];
    if (p.phone_id < 0 || p.phone_id >= K)
      throw ValidationError("utterance '" + rec.utt_id + "': phone_id " +
                            std::to_string(p.phone_id) + " outside [0, " +
                            std::to_string(K) + ")");
    if (static_cast<int>(p.gop_features.size()) != 2 * K)
      throw ValidationError("utterance '" + rec.utt_id + "': gop_features has " +
                            std::to_string(p.gop_features.size()) +
                            " values, expected " + std::to_string(2 * K));
    if (p.phone_label) check_label_range(rec.utt_id, "phone_label", *p.phone_label);
    if (i == 0 && p.word_index != 0)
      throw ValidationError("utterance '" + rec.utt_id +
                            "': word_index must start at 0");
    if (p.word_index < prev_word)
      throw ValidationError("utterance '" + rec.utt_id +
                            "': word_index decreases at phone " +
                            std::to_string(i));
    prev_word = p.word_index;
  }
  if (rec.word_labels) {
    if (static_cast<int>(rec.word_labels->size()) != rec.num_words())
      throw ValidationError("utterance '" + rec.utt_id + "': word_labels has " +
                            std::to_string(rec.word_labels->size()) +
                            " entries for " + std::to_string(rec.num_words()) +
                            " words");
    for (double w : *rec.word_labels) check_label_range(rec.utt_id, "word_label", w);
  }
  if (rec.utt_label) check_label_range(rec.utt_id, "utt_label", *rec.utt_label);
}

Corpus load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open manifest '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("manifest '" + path + "': missing header line");

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError("manifest '" + path + "' line 1: " + e.what());
  }
  if (!header.contains("version") || header["version"] != 1)
    throw ParseError("manifest '" + path + "': unsupported or missing version");
  if (!header.contains("label_range") || header["label_range"] != "0-2")
    throw ParseError("manifest '" + path +
                     "': header must declare label_range \"0-2\"");
  if (!header.contains("K") || !header["K"].is_number_integer())
    throw ParseError("manifest '" + path + "': header missing integer K");

  Corpus corpus;
  corpus.K = header["K"].get<int>();
  if (corpus.K <= 0)
    throw ParseError("manifest '" + path + "': K must be positive");

  std::unordered_set<std::string> seen_ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("manifest '" + path + "' line " +
                       std::to_string(line_no) + ": " + e.what());
    }
    UtteranceRecord rec;
    try {
      rec.utt_id = j.at("utt_id").get<std::string>();
      rec.speaker_id = j.at("speaker_id").get<std::string>();
      if (j.contains("utt_label")) rec.utt_label = j["utt_label"].get<double>();
      if (j.contains("word_labels"))
        rec.word_labels = j["word_labels"].get<std::vector<double>>();
      for (const auto& pj : j.at("phones")) {
        PhoneEntry p;
        p.phone_id = pj.at("phone_id").get<int>();
        p.word_index = pj.at("word_index").get<int>();
        p.gop_features = pj.at("gop").get<std::vector<double>>();
        if (pj.contains("phone_label"))
          p.phone_label = pj["phone_label"].get<double>();
        rec.phones.push_back(std::move(p));
      }
    } catch (const json::exception& e) {
      throw ParseError("manifest '" + path + "' line " +
                       std::to_string(line_no) + ": " + e.what());
    }
    if (!seen_ids.insert(rec.utt_id).second)
      throw ValidationError("manifest '" + path + "': duplicate utt_id '" +
                            rec.utt_id + "'");
    validate_record(rec, corpus.K);
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

void write_manifest(const std::string& path, const Corpus& corpus,
                    const std::string& config_json) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write manifest '" + path + "'");
  json header{{"version", 1}, {"K", corpus.K}, {"label_range", "0-2"}};
  if (!config_json.empty()) {
    try {
      header["config"] = json::parse(config_json);
    } catch (const json::exception& e) {
      throw ParseError(std::string("write_manifest: bad config json: ") +
                       e.what());
    }
  }
  out << header.dump() << "\n";
  for (const auto& rec : corpus.records) {
    validate_record(rec, corpus.K);
    json j;
    j["utt_id"] = rec.utt_id;
    j["speaker_id"] = rec.speaker_id;
    if (rec.utt_label) j["utt_label"] = *rec.utt_label;
    if (rec.word_labels) j["word_labels"] = *rec.word_labels;
    json phones = json::array();
    for (const auto& p : rec.phones) {
      json pj;
      pj["phone_id"] = p.phone_id;
      pj["word_index"] = p.word_index;
      if (p.phone_label) pj["phone_label"] = *p.phone_label;
      pj["gop"] = p.gop_features;
      phones.push_back(std::move(pj));
    }
    j["phones"] = std::move(phones);
    out << j.dump() << "\n";
  }
  if (!out) throw FileError("short write to manifest '" + path + "'");
}

DatasetSplit split_by_speaker(const std::vector<UtteranceRecord>& records,
                              const std::array<double, 3>& fractions,
                              uint64_t seed) {
  double fsum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw RangeError("split_by_speaker: negative fraction");
    fsum += f;
  }
  if (std::abs(fsum - 1.0) > 1e-9)
    throw RangeError("split_by_speaker: fractions sum to " +
                     std::to_string(fsum) + ", expected 1");

  std::vector<std::string> speakers;
  {
    std::unordered_set<std::string> seen;
    for (const auto& r : records)
      if (seen.insert(r.speaker_id).second) speakers.push_back(r.speaker_id);
  }
  std::sort(speakers.begin(), speakers.end());
  const int64_t S = static_cast<int64_t>(speakers.size());
  if (S < 3)
    throw InsufficientDataError("split_by_speaker: need at least 3 speakers, got " +
                                std::to_string(S));

  // Largest-remainder allocation of speaker counts.
  std::array<int64_t, 3> counts{};
  std::array<double, 3> remainders{};
  int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(S);
    counts[i] = static_cast<int64_t>(std::floor(exact));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (int64_t left = S - assigned, i = 0; left > 0; --left, ++i)
    counts[order[static_cast<size_t>(i % 3)]] += 1;

  Rng rng(seed);
  rng.shuffle(speakers);

  std::unordered_set<std::string> train_set(speakers.begin(),
                                            speakers.begin() + counts[0]);
  std::unordered_set<std::string> dev_set(speakers.begin() + counts[0],
                                          speakers.begin() + counts[0] + counts[1]);
  DatasetSplit split;
  for (const auto& r : records) {
    if (train_set.count(r.speaker_id))
      split.train.push_back(r);
    else if (dev_set.count(r.speaker_id))
      split.dev.push_back(r);
    else
      split.test.push_back(r);
  }
  return split;
}

std::vector<UtteranceRecord> generate_synthetic(const SynthSpec& spec) {
  if (spec.n_speakers <= 0 || spec.utts_per_speaker <= 0 || spec.K <= 0)
    throw RangeError("generate_synthetic: counts must be positive");
  if (spec.words_per_utt.lo <= 0 || spec.words_per_utt.hi < spec.words_per_utt.lo ||
      spec.phones_per_word.lo <= 0 ||
      spec.phones_per_word.hi < spec.phones_per_word.lo)
    throw RangeError("generate_synthetic: empty word/phone count range");
  if (spec.noise_phone < 0 || spec.noise_word < 0 || spec.noise_utt < 0 ||
      spec.feature_snr < 0)
    throw RangeError("generate_synthetic: noise terms must be non-negative");

  Rng rng(spec.seed);
  std::vector<UtteranceRecord> records;
  records.reserve(static_cast<size_t>(spec.n_speakers) * spec.utts_per_speaker);

  char buf[64];
  for (int s = 0; s < spec.n_speakers; ++s) {
    const double proficiency = rng.uniform(kProficiencyLo, kProficiencyHi);
    std::snprintf(buf, sizeof(buf), "spk%04d", s);
    const std::string speaker_id(buf);
    for (int u = 0; u < spec.utts_per_speaker; ++u) {
      UtteranceRecord rec;
      std::snprintf(buf, sizeof(buf), "%s_utt%04d", speaker_id.c_str(), u);
      rec.utt_id = buf;
      rec.speaker_id = speaker_id;

      const int n_words = static_cast<int>(
          rng.uniform_int(spec.words_per_utt.lo, spec.words_per_utt.hi));
      std::vector<double> word_means;
      double utt_sum = 0.0;
      int utt_count = 0;
      for (int w = 0; w < n_words; ++w) {
        const int n_phones = static_cast<int>(
            rng.uniform_int(spec.phones_per_word.lo, spec.phones_per_word.hi));
        double word_sum = 0.0;
        for (int q = 0; q < n_phones; ++q) {
          PhoneEntry p;
          p.word_index = w;
          p.phone_id = static_cast<int>(rng.uniform_int(0, spec.K - 1));
          const double label =
              clip02(proficiency + spec.noise_phone * rng.normal());
          p.phone_label = label;
          p.gop_features.resize(static_cast<size_t>(2 * spec.K));
          for (double& f : p.gop_features) f = rng.normal();
          p.gop_features[static_cast<size_t>(p.phone_id)] +=
              spec.feature_snr * (label - 1.0);
          word_sum += label;
          utt_sum += label;
          ++utt_count;
          rec.phones.push_back(std::move(p));
        }
        word_means.push_back(word_sum / n_phones);
      }
      std::vector<double> word_labels;
      for (double m : word_means)
        word_labels.push_back(clip02(m + spec.noise_word * rng.normal()));
      rec.word_labels = std::move(word_labels);
      rec.utt_label = clip02(utt_sum / utt_count + spec.noise_utt * rng.normal());
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace pronscore
