// include/pronscore/gop.hpp
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

#ifndef PRONSCORE_GOP_HPP_
#define PRONSCORE_GOP_HPP_

#include <string>
#include <vector>

namespace pronscore {

// T x K frame-level phone posteriors from a native acoustic model. Rows are
// probability distributions; validation enforces entries in (0,1] and row
// sums within 1e-6 of 1.
struct PosteriorMatrix {
  int64_t T = 0;
  int64_t K = 0;
  std::vector<double> values;  // row-major

  double at(int64_t t, int64_t q) const { return values[t * K + q]; }
  void validate() const;
};

// Inclusive frame range of one aligned phone.
struct PhoneSegment {
  int phone_id = 0;
  int64_t t_start = 0;
  int64_t t_end = 0;
};

// Average log phone posterior over the segment, one component per phone:
//   lpp[q] = 1/(t_e - t_s + 1) * sum_t log post[t][q]
// Natural log. Exact zero posteriors are a domain error here; smoothing, if
// any, is the ingestion converter's job.
std::vector<double> lpp_vector(const PosteriorMatrix& post,
                               const PhoneSegment& seg);

// lpp of the canonical phone itself; always <= 0.
double gop_score(const PosteriorMatrix& post, const PhoneSegment& seg);

// 2K features: K LPPs, then target LPP minus every LPP. The entry at
// K + phone_id is identically zero.
std::vector<double> gop_feature_vector(const PosteriorMatrix& post,
                                       const PhoneSegment& seg);

// Posterior file: text ("T K" header then T rows) or binary (magic "PSPB\x01",
// uint32 T, uint32 K, then T*K little-endian float64), sniffed by magic.
PosteriorMatrix load_posteriors(const std::string& path);
void write_posteriors_text(const std::string& path, const PosteriorMatrix& m);
void write_posteriors_binary(const std::string& path, const PosteriorMatrix& m);

// Alignment file: one line per phone segment,
//   utt_id phone_id t_start t_end word_index
struct AlignmentEntry {
  std::string utt_id;
  int phone_id = 0;
  int64_t t_start = 0;
  int64_t t_end = 0;
  int word_index = 0;
};
std::vector<AlignmentEntry> load_alignments(const std::string& path);

}  // namespace pronscore

#endif  // PRONSCORE_GOP_HPP_
