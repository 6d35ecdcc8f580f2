// tests/test_gop.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "pronscore/errors.hpp"
#include "pronscore/gop.hpp"
#include "pronscore/rng.hpp"

using namespace pronscore;
namespace fs = std::filesystem;

namespace {

PosteriorMatrix random_posteriors(Rng& rng, int64_t T, int64_t K) {
  PosteriorMatrix m;
  m.T = T;
  m.K = K;
  m.values.resize(static_cast<size_t>(T * K));
  for (int64_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (int64_t q = 0; q < K; ++q)
      sum += (m.values[t * K + q] = rng.uniform(0.01, 1.0));
    for (int64_t q = 0; q < K; ++q) m.values[t * K + q] /= sum;
  }
  return m;
}

PosteriorMatrix uniform_posteriors(int64_t T, int64_t K) {
  PosteriorMatrix m;
  m.T = T;
  m.K = K;
  m.values.assign(static_cast<size_t>(T * K), 1.0 / static_cast<double>(K));
  return m;
}

}  // namespace

TEST_CASE("lpp of a near-one-hot frame") {
  const double eps = 1e-9;
  PosteriorMatrix m{1, 2, {1.0 - eps, eps}};
  const auto lpp = lpp_vector(m, {0, 0, 0});
  CHECK(lpp[0] == doctest::Approx(std::log1p(-eps)).epsilon(1e-12));
  CHECK(std::abs(lpp[0]) < 2e-9);
}

TEST_CASE("lpp two-frame K=2 instance against frozen 12-digit values") {
  // Independently evaluated: ((ln .5 + ln .25)/2, (ln .5 + ln .75)/2).
  PosteriorMatrix m{2, 2, {0.5, 0.5, 0.25, 0.75}};
  const PhoneSegment seg{1, 0, 1};
  const auto lpp = lpp_vector(m, seg);
  CHECK(lpp[0] == doctest::Approx(-1.039720770839918).epsilon(1e-12));
  CHECK(lpp[1] == doctest::Approx(-0.490414626505863).epsilon(1e-12));
  const auto loop = oracles::lpp_loop(m, seg);
  CHECK(std::abs(lpp[0] - loop[0]) < 1e-15);
  CHECK(std::abs(lpp[1] - loop[1]) < 1e-15);

  // Full 4-vector with target 1: second half is (lpp1 - lpp0, 0).
  const auto feat = gop_feature_vector(m, seg);
  CHECK(feat[0] == doctest::Approx(-1.039720770839918).epsilon(1e-12));
  CHECK(feat[1] == doctest::Approx(-0.490414626505863).epsilon(1e-12));
  CHECK(feat[2] == doctest::Approx(0.549306144334055).epsilon(1e-12));
  CHECK(feat[3] == 0.0);
}

TEST_CASE("uniform posteriors give -ln K everywhere") {
  for (int64_t K : {2, 5, 42}) {
    PosteriorMatrix m = uniform_posteriors(4, K);
    const PhoneSegment seg{static_cast<int>(K - 1), 1, 3};
    const auto lpp = lpp_vector(m, seg);
    for (double v : lpp)
      CHECK(v == doctest::Approx(-std::log(static_cast<double>(K))).epsilon(1e-12));
    CHECK(gop_score(m, seg) ==
          doctest::Approx(-std::log(static_cast<double>(K))).epsilon(1e-12));
    const auto feat = gop_feature_vector(m, seg);
    for (int64_t q = 0; q < K; ++q) {
      CHECK(feat[static_cast<size_t>(q)] ==
            doctest::Approx(-std::log(static_cast<double>(K))).epsilon(1e-12));
      CHECK(std::abs(feat[static_cast<size_t>(K + q)]) < 1e-15);
    }
  }
}

TEST_CASE("gop_score matches the loop oracle and stays non-positive") {
  Rng rng(17);
  for (int it = 0; it < 500; ++it) {
    const int64_t T = rng.uniform_int(1, 10), K = rng.uniform_int(2, 8);
    PosteriorMatrix m = random_posteriors(rng, T, K);
    PhoneSegment seg;
    seg.t_start = rng.uniform_int(0, T - 1);
    seg.t_end = rng.uniform_int(seg.t_start, T - 1);
    seg.phone_id = static_cast<int>(rng.uniform_int(0, K - 1));
    const auto oracle = oracles::lpp_loop(m, seg);
    const double score = gop_score(m, seg);
    CHECK(std::abs(score - oracle[static_cast<size_t>(seg.phone_id)]) < 1e-12);
    CHECK(score <= 0.0);
    const auto feat = gop_feature_vector(m, seg);
    for (int64_t q = 0; q < K; ++q) {
      CHECK(std::abs(feat[static_cast<size_t>(q)] - oracle[static_cast<size_t>(q)]) < 1e-12);
      CHECK(std::abs(feat[static_cast<size_t>(K + q)] -
                     (oracle[static_cast<size_t>(seg.phone_id)] -
                      oracle[static_cast<size_t>(q)])) < 1e-12);
    }
    CHECK(feat[static_cast<size_t>(K + seg.phone_id)] == 0.0);
  }
}

TEST_CASE("permuting the inventory permutes both feature halves") {
  Rng rng(23);
  const int64_t T = 4, K = 5;
  PosteriorMatrix m = random_posteriors(rng, T, K);
  std::vector<int64_t> perm{3, 0, 4, 1, 2};  // new column q <- old perm[q]
  PosteriorMatrix mp;
  mp.T = T;
  mp.K = K;
  mp.values.resize(m.values.size());
  for (int64_t t = 0; t < T; ++t)
    for (int64_t q = 0; q < K; ++q)
      mp.values[t * K + q] = m.values[t * K + perm[static_cast<size_t>(q)]];

  const PhoneSegment seg{2, 1, 3};
  int new_target = 0;
  while (perm[static_cast<size_t>(new_target)] != seg.phone_id) ++new_target;
  const PhoneSegment seg_p{new_target, 1, 3};

  const auto feat = gop_feature_vector(m, seg);
  const auto feat_p = gop_feature_vector(mp, seg_p);
  for (int64_t q = 0; q < K; ++q) {
    CHECK(feat_p[static_cast<size_t>(q)] ==
          doctest::Approx(feat[static_cast<size_t>(perm[static_cast<size_t>(q)])]).epsilon(1e-14));
    CHECK(feat_p[static_cast<size_t>(K + q)] ==
          doctest::Approx(feat[static_cast<size_t>(K + perm[static_cast<size_t>(q)])]).epsilon(1e-14));
  }
}

TEST_CASE("lpp of an even segment is the mean of its halves") {
  Rng rng(31);
  PosteriorMatrix m = random_posteriors(rng, 8, 4);
  const PhoneSegment whole{1, 2, 5};
  const PhoneSegment left{1, 2, 3}, right{1, 4, 5};
  const auto w = lpp_vector(m, whole);
  const auto l = lpp_vector(m, left);
  const auto r = lpp_vector(m, right);
  for (int64_t q = 0; q < 4; ++q)
    CHECK(w[static_cast<size_t>(q)] ==
          doctest::Approx((l[static_cast<size_t>(q)] + r[static_cast<size_t>(q)]) / 2)
              .epsilon(1e-13));
}

TEST_CASE("gop error paths") {
  PosteriorMatrix m{2, 2, {0.5, 0.5, 0.25, 0.75}};
  SUBCASE("segment out of bounds") {
    CHECK_THROWS_AS(lpp_vector(m, {0, 0, 2}), RangeError);
    CHECK_THROWS_AS(lpp_vector(m, {0, -1, 1}), RangeError);
    CHECK_THROWS_AS(lpp_vector(m, {5, 0, 1}), RangeError);
  }
  SUBCASE("exact zero posterior names frame and phone") {
    PosteriorMatrix z{1, 2, {1.0, 0.0}};
    try {
      lpp_vector(z, {0, 0, 0});
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("frame 0") != std::string::npos);
      CHECK(msg.find("phone 1") != std::string::npos);
    }
  }
  SUBCASE("validation rejects bad rows") {
    PosteriorMatrix bad{1, 2, {0.9, 0.3}};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    PosteriorMatrix zero{1, 2, {1.0, 0.0}};
    CHECK_THROWS_AS(zero.validate(), ValidationError);
  }
}

TEST_CASE("posterior files round trip in both encodings") {
  Rng rng(41);
  PosteriorMatrix m = random_posteriors(rng, 6, 3);
  const fs::path dir = fs::temp_directory_path() / "pronscore_gop_test";
  fs::create_directories(dir);

  const fs::path text = dir / "m.post";
  write_posteriors_text(text.string(), m);
  PosteriorMatrix mt = load_posteriors(text.string());
  CHECK(mt.T == m.T);
  CHECK(mt.K == m.K);
  for (size_t i = 0; i < m.values.size(); ++i)
    CHECK(mt.values[i] == doctest::Approx(m.values[i]).epsilon(1e-15));

  const fs::path bin = dir / "m.postb";
  write_posteriors_binary(bin.string(), m);
  PosteriorMatrix mb = load_posteriors(bin.string());
  CHECK(mb.values == m.values);  // bit-exact

  CHECK_THROWS_AS(load_posteriors((dir / "missing.post").string()), FileError);
}

TEST_CASE("alignment file parsing") {
  const fs::path dir = fs::temp_directory_path() / "pronscore_gop_test";
  fs::create_directories(dir);
  const fs::path path = dir / "ali.txt";
  {
    std::ofstream out(path);
    out << "# comment\n";
    out << "utt1 3 0 4 0\n";
    out << "utt1 5 5 9 1\n";
  }
  const auto entries = load_alignments(path.string());
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].utt_id == "utt1");
  CHECK(entries[0].phone_id == 3);
  CHECK(entries[1].t_start == 5);
  CHECK(entries[1].word_index == 1);

  std::ofstream(path) << "utt1 3 0\n";
  CHECK_THROWS_AS(load_alignments(path.string()), ParseError);
}
