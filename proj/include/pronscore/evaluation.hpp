// include/pronscore/evaluation.hpp
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

#ifndef PRONSCORE_EVALUATION_HPP_
#define PRONSCORE_EVALUATION_HPP_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pronscore/checkpoint.hpp"
#include "pronscore/data_model.hpp"
#include "pronscore/supervision.hpp"

namespace pronscore {

struct ScoredItem {
  std::string speaker_id;
  double prediction = 0.0;
  double label = 0.0;
};

// Sample Pearson correlation; errors on constant input rather than
// silently returning 0.
double pcc(const std::vector<double>& x, const std::vector<double>& y);
double mse(const std::vector<double>& x, const std::vector<double>& y);

using Metric = std::function<double(const std::vector<const ScoredItem*>&)>;

Metric metric_pcc();
Metric metric_mse();

struct BootstrapResult {
  std::vector<double> values;
  int64_t excluded = 0;  // resamples where the metric was undefined
};

// Cluster bootstrap: each resample draws as many speakers as there are
// distinct speakers, with replacement, and keeps every item of each drawn
// speaker (duplicated speakers contribute duplicated items). The RNG stream
// is split per resample index, so parallel and serial runs agree.
BootstrapResult bootstrap_by_speaker(const std::vector<ScoredItem>& items,
                                     const Metric& metric, int n_boot,
                                     uint64_t seed);

struct PoolSummary {
  double mean = 0.0;
  double ci = 0.0;  // max distance from the mean to the 2.5/97.5 percentiles
  double p2_5 = 0.0;
  double p97_5 = 0.0;
};

// Percentiles use linear interpolation between closest ranks
// (rank = (m - 1) * p on the sorted values).
PoolSummary pool_and_interval(std::vector<double> values);

struct LevelReport {
  bool present = false;
  double pcc_mean = 0.0;
  double pcc_ci = 0.0;
  std::optional<double> mse_mean;  // absent where MSE is not meaningful
  std::optional<double> mse_ci;
  int64_t n_items = 0;
  int64_t n_speakers = 0;
  int64_t excluded = 0;
};

struct EvalReport {
  LevelReport phone, word, utt;
  int64_t n_boot = 0;
  int64_t n_models = 0;
  int64_t n_seeds = 0;
  int64_t n_draws = 0;
  uint64_t eval_seed = 0;
  std::map<std::string, std::string> meta;
};

// Which levels carry a trained predictor: BASE trains a head per active
// loss; MEAN/ATTN always train the phone head (every active loss flows
// through it) and pool word/utterance only when those losses were active.
struct TrainedLevels {
  bool phone = false, word = false, utt = false;
};
TrainedLevels trained_levels(SupervisionRegime regime, PoolingStrategy pooling);

// Per-item predictions for one checkpoint over a record set.
struct Predictions {
  std::vector<ScoredItem> phone, word, utt;  // items lacking labels are skipped
};
Predictions predict(const Checkpoint& ckpt,
                    const std::vector<UtteranceRecord>& records,
                    int batch_size = 25);

// Bootstrap + pooling across all provided checkpoints (seeds and/or subset
// draws); one report with per-level means and confidence intervals.
EvalReport evaluate(const std::vector<Checkpoint>& ckpts,
                    const std::vector<UtteranceRecord>& records, int n_boot,
                    uint64_t seed, int batch_size = 25);

// Raw GOP value of the canonical phone (the target-LPP feature coordinate)
// as the phone prediction; PCC only, MSE reported as n/a.
EvalReport evaluate_gop_baseline(const std::vector<UtteranceRecord>& records,
                                 int K, int n_boot, uint64_t seed);

void write_report(const std::string& path, const EvalReport& report);
EvalReport load_report(const std::string& path);

}  // namespace pronscore

#endif  // PRONSCORE_EVALUATION_HPP_
