// include/pronscore/data_model.hpp
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

#ifndef PRONSCORE_DATA_MODEL_HPP_
#define PRONSCORE_DATA_MODEL_HPP_

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace pronscore {

// One scored phone: canonical phone id, containing word, 2K feature vector
// and an optional accuracy label on the 0-2 scale.
struct PhoneEntry {
  int phone_id = 0;
  int word_index = 0;
  std::vector<double> gop_features;  // length 2K
  std::optional<double> phone_label;
};

struct UtteranceRecord {
  std::string utt_id;
  std::string speaker_id;
  std::vector<PhoneEntry> phones;
  std::optional<std::vector<double>> word_labels;  // one per word, 0-2
  std::optional<double> utt_label;                 // 0-2

  int num_words() const {
    int mx = -1;
    for (const auto& p : phones) mx = std::max(mx, p.word_index);
    return mx + 1;
  }
};

// A corpus is a header (K) plus records; labels are stored pre-rescaled in
// [0,2] and the manifest header carries a label_range marker so mixed-range
// files are rejected early.
struct Corpus {
  int K = 42;
  std::vector<UtteranceRecord> records;
};

struct DatasetSplit {
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> dev;
  std::vector<UtteranceRecord> test;
};

struct IntRange {
  int lo = 1;
  int hi = 1;
};

// Synthetic corpus generator spec. Labels follow the mean-pooling generative
// story: a per-speaker proficiency drives phone labels; word and utterance
// labels are means of their phone labels plus noise, clipped to [0,2]. The
// feature vector carries the phone label in the target-LPP coordinate at the
// given signal-to-noise ratio; every other coordinate is standard noise.
struct SynthSpec {
  int n_speakers = 60;
  int utts_per_speaker = 16;
  IntRange words_per_utt{2, 4};
  IntRange phones_per_word{2, 3};
  int K = 8;
  double noise_phone = 0.35;
  double noise_word = 0.05;
  double noise_utt = 0.05;
  double feature_snr = 4.0;
  uint64_t seed = 1234;
};

// 0-10 rater scale -> 0-2 phoneme scale (exact division by 5).
double rescale_labels(double raw_word_or_utt_score);

// Record-level invariant checks; throws ValidationError naming the utt_id
// and offending field.
void validate_record(const UtteranceRecord& rec, int K, int max_seq_len = 0);

// JSONL manifest with a self-describing header line.
Corpus load_manifest(const std::string& path);
void write_manifest(const std::string& path, const Corpus& corpus,
                    const std::string& generator_config_json = "");

// Speaker-disjoint split with largest-remainder allocation of speaker counts.
DatasetSplit split_by_speaker(const std::vector<UtteranceRecord>& records,
                              const std::array<double, 3>& fractions,
                              uint64_t seed);

std::vector<UtteranceRecord> generate_synthetic(const SynthSpec& spec);

}  // namespace pronscore

#endif  // PRONSCORE_DATA_MODEL_HPP_
