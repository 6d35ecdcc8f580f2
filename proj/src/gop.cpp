// src/gop.cpp
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

#include "pronscore/gop.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pronscore/errors.hpp"

namespace pronscore {

namespace {

constexpr char kBinaryMagic[5] = {'P', 'S', 'P', 'B', '\x01'};

void check_segment(const PosteriorMatrix& post, const PhoneSegment& seg) {
  if (seg.phone_id < 0 || seg.phone_id >= post.K)
    throw RangeError("phone_id " + std::to_string(seg.phone_id) +
                     " outside inventory of size " + std::to_string(post.K));
  if (seg.t_start < 0 || seg.t_start > seg.t_end || seg.t_end >= post.T)
    throw RangeError("segment [" + std::to_string(seg.t_start) + ", " +
                     std::to_string(seg.t_end) + "] outside matrix with T=" +
                     std::to_string(post.T));
}

}  // namespace

void PosteriorMatrix::validate() const {
  if (T <= 0 || K <= 0)
    throw ValidationError("posterior matrix: T and K must be positive");
  if (static_cast<int64_t>(values.size()) != T * K)
    throw ValidationError("posterior matrix: buffer holds " +
                          std::to_string(values.size()) + " values, expected " +
                          std::to_string(T * K));
  for (int64_t t = 0; t < T; ++t) {
    double row_sum = 0.0;
    for (int64_t q = 0; q < K; ++q) {
      const double v = at(t, q);
      if (!(v > 0.0 && v <= 1.0))
        throw ValidationError("posterior matrix: entry (" + std::to_string(t) +
                              ", " + std::to_string(q) + ") = " +
                              std::to_string(v) + " outside (0, 1]");
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw ValidationError("posterior matrix: row " + std::to_string(t) +
                            " sums to " + std::to_string(row_sum));
  }
}

std::vector<double> lpp_vector(const PosteriorMatrix& post,
                               const PhoneSegment& seg) {
  check_segment(post, seg);
  const double inv_len = 1.0 / static_cast<double>(seg.t_end - seg.t_start + 1);
  std::vector<double> lpp(static_cast<size_t>(post.K), 0.0);
  for (int64_t t = seg.t_start; t <= seg.t_end; ++t) {
    for (int64_t q = 0; q < post.K; ++q) {
      const double v = post.at(t, q);
      if (v == 0.0)
        throw DomainError("log of zero posterior at frame " + std::to_string(t) +
                          ", phone " + std::to_string(q));
      lpp[static_cast<size_t>(q)] += std::log(v);
    }
  }
  for (double& v : lpp) v *= inv_len;
  return lpp;
}

double gop_score(const PosteriorMatrix& post, const PhoneSegment& seg) {
  return lpp_vector(post, seg)[static_cast<size_t>(seg.phone_id)];
}

std::vector<double> gop_feature_vector(const PosteriorMatrix& post,
                                       const PhoneSegment& seg) {
  const std::vector<double> lpp = lpp_vector(post, seg);
  const double target = lpp[static_cast<size_t>(seg.phone_id)];
  std::vector<double> feat(static_cast<size_t>(2 * post.K));
  for (int64_t q = 0; q < post.K; ++q) {
    feat[static_cast<size_t>(q)] = lpp[static_cast<size_t>(q)];
    feat[static_cast<size_t>(post.K + q)] = target - lpp[static_cast<size_t>(q)];
  }
  return feat;
}

PosteriorMatrix load_posteriors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open posterior file '" + path + "'");

  char magic[5] = {};
  in.read(magic, 5);
  PosteriorMatrix m;
  if (in.gcount() == 5 && std::memcmp(magic, kBinaryMagic, 5) == 0) {
    uint32_t T = 0, K = 0;
    in.read(reinterpret_cast<char*>(&T), 4);
    in.read(reinterpret_cast<char*>(&K), 4);
    if (!in) throw ParseError("posterior file '" + path + "': truncated header");
    m.T = T;
    m.K = K;
    m.values.resize(static_cast<size_t>(m.T * m.K));
    in.read(reinterpret_cast<char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (in.gcount() !=
        static_cast<std::streamsize>(m.values.size() * sizeof(double)))
      throw ParseError("posterior file '" + path + "': truncated data");
  } else {
    in.clear();
    in.seekg(0);
    std::string line;
    if (!std::getline(in, line))
      throw ParseError("posterior file '" + path + "': empty");
    {
      std::istringstream hs(line);
      if (!(hs >> m.T >> m.K))
        throw ParseError("posterior file '" + path + "' line 1: expected 'T K'");
    }
    m.values.reserve(static_cast<size_t>(m.T * m.K));
    int line_no = 1;
    for (int64_t t = 0; t < m.T; ++t) {
      if (!std::getline(in, line))
        throw ParseError("posterior file '" + path + "': expected " +
                         std::to_string(m.T) + " rows, got " + std::to_string(t));
      ++line_no;
      std::istringstream rs(line);
      for (int64_t q = 0; q < m.K; ++q) {
        double v;
        if (!(rs >> v))
          throw ParseError("posterior file '" + path + "' line " +
                           std::to_string(line_no) + ": expected " +
                           std::to_string(m.K) + " values");
        m.values.push_back(v);
      }
    }
  }
  m.validate();
  return m;
}

void write_posteriors_text(const std::string& path, const PosteriorMatrix& m) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write posterior file '" + path + "'");
  out << m.T << " " << m.K << "\n";
  out.precision(17);
  for (int64_t t = 0; t < m.T; ++t) {
    for (int64_t q = 0; q < m.K; ++q) out << (q ? " " : "") << m.at(t, q);
    out << "\n";
  }
}

void write_posteriors_binary(const std::string& path, const PosteriorMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write posterior file '" + path + "'");
  out.write(kBinaryMagic, 5);
  const uint32_t T = static_cast<uint32_t>(m.T), K = static_cast<uint32_t>(m.K);
  out.write(reinterpret_cast<const char*>(&T), 4);
  out.write(reinterpret_cast<const char*>(&K), 4);
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
}

std::vector<AlignmentEntry> load_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open alignment file '" + path + "'");
  std::vector<AlignmentEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    AlignmentEntry e;
    if (!(ls >> e.utt_id >> e.phone_id >> e.t_start >> e.t_end >> e.word_index))
      throw ParseError("alignment file '" + path + "' line " +
                       std::to_string(line_no) +
                       ": expected 'utt_id phone_id t_start t_end word_index'");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pronscore
