// include/pronscore/experiment.hpp
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

#ifndef PRONSCORE_EXPERIMENT_HPP_
#define PRONSCORE_EXPERIMENT_HPP_

#include <map>
#include <string>
#include <vector>

#include "pronscore/evaluation.hpp"
#include "pronscore/selection.hpp"
#include "pronscore/train.hpp"

namespace pronscore {

// "randbal" / "randunbal" / "bestbal" / "bestunbal".
struct StrategyToken {
  SelectionStrategy strategy = SelectionStrategy::kRandom;
  bool balanced = false;
};
StrategyToken parse_strategy_token(const std::string& token);
std::string strategy_token(SelectionStrategy s, bool balanced);

// Two-stage experiment grid. Stage 1 trains utterance-only models per seed;
// stage 2 selects n utterances per (strategy, n, draw, seed) cell and
// finetunes or retrains with the stage-2 regime; evaluation pools bootstrap
// values over all seeds and draws of a cell group. Artifacts are named
// canonically and existing ones are reused (resume), after a config check.
struct MatrixSpec {
  std::string out_dir;
  ModelConfig config;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  int draws = 5;
  std::vector<int64_t> n_values{100};
  std::vector<std::string> strategies{"randbal"};
  SupervisionRegime stage2_regime = SupervisionRegime::kP;
  int stage1_epochs = 100;
  int ft_epochs = 30;
  int tr_epochs = 60;
  int batch_size = 25;
  double lr = 1e-3;
  int bins = 5;
  int n_boot = 1000;
  uint64_t eval_seed = 0;
  int jobs = 1;
  bool run_ft = true;
  bool run_tr = true;
  bool gop_baseline = true;
};

// Runs the grid; returns the pooled reports keyed by report file stem
// (e.g. "1s_U_attn_none_nall", "2sft_P_attn_randbal_n100").
std::map<std::string, EvalReport> experiment_matrix(
    const MatrixSpec& spec, const std::vector<UtteranceRecord>& train_records,
    const std::vector<UtteranceRecord>& dev_records);

// One point of a budget curve, parsed from a canonical report name.
struct CurvePoint {
  std::string series;  // "<stage>-<strategy>", e.g. "2sft-randbal"
  int64_t n = 0;       // -1 for full-data reference systems
  double pcc_mean = 0.0;
  double pcc_ci = 0.0;
};

std::vector<CurvePoint> collect_curve_points(
    const std::vector<std::string>& report_paths,
    const std::string& level = "phone");
void write_curves_tsv(const std::string& path,
                      const std::vector<CurvePoint>& points);
void write_curves_svg(const std::string& path,
                      const std::vector<CurvePoint>& points);

}  // namespace pronscore

#endif  // PRONSCORE_EXPERIMENT_HPP_
