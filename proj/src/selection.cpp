// src/selection.cpp
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

#include "pronscore/selection.hpp"

#include <algorithm>
#include <cmath>

#include "pronscore/rng.hpp"

namespace pronscore {

std::string to_string(SelectionStrategy s) {
  return s == SelectionStrategy::kRandom ? "random" : "best";
}

SelectionStrategy selection_strategy_from_string(const std::string& s) {
  if (s == "random" || s == "rand") return SelectionStrategy::kRandom;
  if (s == "best") return SelectionStrategy::kBest;
  throw ConfigError("unknown selection strategy '" + s + "'");
}

std::map<std::string, double> absolute_errors(
    const Checkpoint& ckpt, const std::vector<UtteranceRecord>& records,
    int batch_size) {
  std::map<std::string, double> out;
  for (size_t start = 0; start < records.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t end =
        std::min(records.size(), start + static_cast<size_t>(batch_size));
    std::vector<const UtteranceRecord*> batch;
    for (size_t i = start; i < end; ++i) {
      if (!records[i].utt_label)
        throw MissingLabelError("utterance '" + records[i].utt_id +
                                "' lacks the utterance-level label needed to "
                                "compute absolute errors");
      batch.push_back(&records[i]);
    }
    ForwardGraph g = forward(batch, ckpt.params);
    for (size_t i = start; i < end; ++i) {
      const double pred = g.utt_scores.values()[i - start];
      out[records[i].utt_id] = std::abs(pred - *records[i].utt_label);
    }
  }
  return out;
}

std::vector<PoolItem> build_pool(const std::vector<UtteranceRecord>& records,
                                 const std::map<std::string, double>& abs_errors) {
  std::vector<PoolItem> pool;
  pool.reserve(records.size());
  for (const auto& r : records) {
    auto it = abs_errors.find(r.utt_id);
    if (it == abs_errors.end())
      throw DataError("pool item '" + r.utt_id + "' has no absolute error");
    if (!r.utt_label)
      throw MissingLabelError("pool item '" + r.utt_id +
                              "' lacks an utterance-level label");
    pool.push_back({r.utt_id, it->second, *r.utt_label});
  }
  return pool;
}

std::vector<std::string> select(const std::vector<PoolItem>& pool,
                                const SelectionSpec& spec) {
  const int64_t pool_size = static_cast<int64_t>(pool.size());
  if (spec.n < 1 || spec.n > pool_size)
    throw InsufficientDataError("select: n=" + std::to_string(spec.n) +
                                " outside [1, pool size " +
                                std::to_string(pool_size) + "]");
  const int B = spec.balanced ? spec.bins : 1;
  if (B < 1) throw ConfigError("select: bin count must be >= 1");

  // Equal-width bins over the full [0, 2] label range, last bin right-closed.
  std::vector<std::vector<PoolItem>> bins(static_cast<size_t>(B));
  for (const auto& item : pool) {
    int b = static_cast<int>(std::floor(item.utt_label / 2.0 * B));
    if (b >= B) b = B - 1;
    if (b < 0) b = 0;
    bins[static_cast<size_t>(b)].push_back(item);
  }

  // Per-bin ordering: ascending AE for "best", seeded shuffle for "random";
  // utt_id breaks ties and pre-sorts shuffles so pool order never matters.
  Rng rng(spec.seed);
  for (auto& bin : bins) {
    std::sort(bin.begin(), bin.end(), [](const PoolItem& a, const PoolItem& b) {
      return a.utt_id < b.utt_id;
    });
    if (spec.strategy == SelectionStrategy::kBest) {
      std::stable_sort(bin.begin(), bin.end(),
                       [](const PoolItem& a, const PoolItem& b) {
                         return a.abs_error < b.abs_error;
                       });
    } else {
      rng.shuffle(bin);
    }
  }

  // Quotas: floor(n/B) each, one extra for the first (n mod B) non-empty
  // bins in ascending order.
  std::vector<int64_t> quota(static_cast<size_t>(B), spec.n / B);
  for (int64_t extra = spec.n % B, b = 0; extra > 0 && b < B; ++b)
    if (!bins[static_cast<size_t>(b)].empty()) {
      quota[static_cast<size_t>(b)] += 1;
      --extra;
    }

  std::vector<size_t> taken(static_cast<size_t>(B), 0);
  int64_t total = 0;
  for (int b = 0; b < B; ++b) {
    taken[static_cast<size_t>(b)] = static_cast<size_t>(
        std::min<int64_t>(quota[static_cast<size_t>(b)],
                          static_cast<int64_t>(bins[static_cast<size_t>(b)].size())));
    total += static_cast<int64_t>(taken[static_cast<size_t>(b)]);
  }
  // Under-populated bins leave a deficit; hand it out round-robin in
  // ascending bin order.
  while (total < spec.n) {
    bool progressed = false;
    for (int b = 0; b < B && total < spec.n; ++b) {
      auto& t = taken[static_cast<size_t>(b)];
      if (t < bins[static_cast<size_t>(b)].size()) {
        ++t;
        ++total;
        progressed = true;
      }
    }
    if (!progressed)
      throw InsufficientDataError("select: pool exhausted before reaching n");
  }

  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(spec.n));
  for (int b = 0; b < B; ++b)
    for (size_t i = 0; i < taken[static_cast<size_t>(b)]; ++i)
      out.push_back(bins[static_cast<size_t>(b)][i].utt_id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pronscore
