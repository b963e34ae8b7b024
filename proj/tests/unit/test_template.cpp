/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "segbert/error.hpp"
#include "segbert/template.hpp"
#include "support.hpp"

using namespace segbert;
using namespace segbert::templ;
using segbert::testing::brute_force_dtw_cost;
using segbert::testing::duplicate_then_truncate;
using segbert::testing::integer_segment;
using segbert::testing::random_matrix;

namespace {

using Path = std::vector<std::pair<std::size_t, std::size_t>>;

Errc error_code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected segbert::Error");
  return Errc::state;
}

void check_path_shape(const DtwMapping& m) {
  REQUIRE(!m.path.empty());
  CHECK(m.path.front() == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(m.path.back() == std::pair<std::size_t, std::size_t>{m.source_len - 1, m.target_len - 1});
  CHECK(m.path.size() <= m.source_len + m.target_len - 1);
  for (std::size_t k = 1; k < m.path.size(); ++k) {
    const auto di = m.path[k].first - m.path[k - 1].first;
    const auto dj = m.path[k].second - m.path[k - 1].second;
    CHECK(di <= 1);
    CHECK(dj <= 1);
    CHECK(di + dj >= 1);
  }
}

// Strongly varying base rows plus a small per-segment offset, so the
// diagonal is the unique optimal alignment between any two of them.
Tensor offset_segment(std::size_t rows, double offset) {
  Tensor t(rows, 3);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < 3; ++c) t(r, c) = 10.0 * static_cast<double>(r) + c + offset;
  return t;
}

}  // namespace

TEST_SUITE("dtw") {
  TEST_CASE("self alignment is diagonal with zero cost") {
    Rng rng(1);
    Tensor a = random_matrix(4, 3, rng);
    DtwResult r = dtw_align(a, a);
    CHECK(r.cost == 0.0);
    CHECK(r.mapping.path == Path{{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  }

  TEST_CASE("one frame against three") {
    Rng rng(2);
    DtwResult r = dtw_align(random_matrix(1, 2, rng), random_matrix(3, 2, rng));
    CHECK(r.mapping.path == Path{{0, 0}, {0, 1}, {0, 2}});
    CHECK(r.mapping.source_len == 1);
    CHECK(r.mapping.target_len == 3);
  }

  TEST_CASE("ties prefer the diagonal, then source steps") {
    // All frames equal: every path costs 0 and the backtrace decides.
    Tensor a(3, 1, 0.0), b(2, 1, 0.0);
    CHECK(dtw_align(a, b).mapping.path == Path{{0, 0}, {1, 0}, {2, 1}});
    CHECK(dtw_align(b, a).mapping.path == Path{{0, 0}, {0, 1}, {1, 2}});
  }

  TEST_CASE("cost equals exhaustive enumeration") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
      Tensor a = integer_segment(1 + rng.index(8), 4, rng);
      Tensor b = integer_segment(1 + rng.index(8), 4, rng);
      DtwResult r = dtw_align(a, b);
      CHECK(r.cost == brute_force_dtw_cost(a, b));
      check_path_shape(r.mapping);
      double along = 0.0;
      for (auto [i, j] : r.mapping.path) along += segbert::testing::frame_distance(a, i, b, j);
      CHECK(along == r.cost);
    }
  }

  TEST_CASE("optimum is symmetric") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      Tensor a = integer_segment(1 + rng.index(12), 3, rng);
      Tensor b = integer_segment(1 + rng.index(12), 3, rng);
      CHECK(dtw_align(a, b).cost == dtw_align(b, a).cost);
      Tensor x = random_matrix(1 + rng.index(12), 3, rng);
      Tensor y = random_matrix(1 + rng.index(12), 3, rng);
      const double xy = dtw_align(x, y).cost, yx = dtw_align(y, x).cost;
      CHECK(std::abs(xy - yx) <= 1e-12 * std::max(1.0, xy));
    }
  }

  TEST_CASE("custom frame cost is honoured") {
    Tensor a = Tensor::matrix({{0.0}, {1.0}});
    Tensor b = Tensor::matrix({{0.0}, {3.0}});
    auto l1 = [](std::span<const double> x, std::span<const double> y) { return std::abs(x[0] - y[0]); };
    CHECK(dtw_align(a, b, l1).cost == 2.0);
    CHECK(dtw_align(a, b).cost == 4.0);
  }

  TEST_CASE("input errors") {
    Tensor empty(0, 3), a(2, 3), b(2, 4);
    CHECK(error_code_of([&] { dtw_align(empty, a); }) == Errc::empty_input);
    CHECK(error_code_of([&] { dtw_align(a, b); }) == Errc::dimension);
  }
}

TEST_SUITE("warp") {
  TEST_CASE("identity mapping copies the source") {
    Rng rng(3);
    Tensor s = random_matrix(5, 2, rng);
    DtwMapping id{{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}}, 5, 5};
    CHECK(warp_to(s, 5, id) == s);
  }

  TEST_CASE("one source frame fills three targets") {
    Tensor s = Tensor::matrix({{1.5, -2.0}});
    Tensor w = warp_to(s, 3, {{{0, 0}, {0, 1}, {0, 2}}, 1, 3});
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(w(r, 0) == 1.5);
      CHECK(w(r, 1) == -2.0);
    }
  }

  TEST_CASE("hand-evaluated averaging") {
    Tensor s = Tensor::matrix({{1.0, 2.0}, {3.0, 6.0}, {5.0, 7.0}});
    Tensor w = warp_to(s, 2, {{{0, 0}, {1, 0}, {2, 1}}, 3, 2});
    CHECK(w == Tensor::matrix({{2.0, 4.0}, {5.0, 7.0}}));
  }

  TEST_CASE("warped values stay inside the source range") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      Tensor s = random_matrix(1 + rng.index(9), 3, rng, -4, 4);
      Tensor t = random_matrix(1 + rng.index(9), 3, rng, -4, 4);
      DtwResult r = dtw_align(s, t);
      Tensor w = warp_to(s, t.rows(), r.mapping);
      CHECK(w.rows() == t.rows());
      CHECK(w.min() >= s.min());
      CHECK(w.max() <= s.max());
    }
  }

  TEST_CASE("inconsistent mapping is a dimension error") {
    Tensor s(3, 2);
    DtwMapping m{{{0, 0}, {1, 1}, {2, 1}}, 3, 2};
    CHECK(error_code_of([&] { warp_to(s, 3, m); }) == Errc::dimension);
    CHECK(error_code_of([&] { warp_to(Tensor(4, 2), 2, m); }) == Errc::dimension);
  }

  TEST_CASE("inverted mapping swaps roles") {
    DtwMapping m{{{0, 0}, {1, 0}, {2, 1}}, 3, 2};
    DtwMapping inv = m.inverted();
    CHECK(inv.source_len == 2);
    CHECK(inv.target_len == 3);
    CHECK(inv.path == Path{{0, 0}, {0, 1}, {1, 2}});
  }
}

TEST_SUITE("build_template") {
  TEST_CASE("single segment is the template") {
    Rng rng(4);
    Tensor a = random_matrix(6, 4, rng);
    CHECK(build_template({{"p", {a}}}).frames == a);
  }

  TEST_CASE("identical segments are a fixed point") {
    Rng rng(4);
    Tensor a = random_matrix(6, 4, rng);
    CHECK(build_template({{"p", {a, a}}}).frames == a);
  }

  TEST_CASE("running average weighs later segments more") {
    Tensor a = offset_segment(5, 0.3), b = offset_segment(5, -0.2), c = offset_segment(5, 0.1);
    Tensor t = build_template({{"p", {a, b, c}}}).frames;
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(std::abs(t[i] - (0.25 * a[i] + 0.25 * b[i] + 0.5 * c[i])) < 1e-12);
  }

  TEST_CASE("order is phone id then insertion") {
    Tensor a = offset_segment(4, 1.0), b = offset_segment(4, 0.0);
    // "x" sorts after "a", so b (in "a") seeds and a (in "x") is averaged in.
    Tensor t = build_template({{"x", {a}}, {"a", {b}}}).frames;
    CHECK(t == build_template({{"p", {b, a}}}).frames);
  }

  TEST_CASE("length equals the longest processed segment") {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
      PhoneSegmentSet set;
      std::size_t longest = 0;
      for (std::size_t p = 0, n = 1 + rng.index(4); p < n; ++p) {
        auto& list = set["p" + std::to_string(p)];
        for (std::size_t k = 0, m = 1 + rng.index(4); k < m; ++k) {
          list.push_back(random_matrix(1 + rng.index(10), 3, rng));
          longest = std::max(longest, list.back().rows());
        }
      }
      AcousticTemplate t = build_template(set);
      CHECK(t.length() == longest);
      CHECK(t.frames.all_finite());
      CHECK(build_template(set).frames == t.frames);
    }
  }

  TEST_CASE("empty set is rejected") {
    CHECK(error_code_of([] { build_template({}); }) == Errc::empty_input);
  }

  TEST_CASE("corpus collection groups by phone in corpus order") {
    Rng rng(2);
    features::Utterance u;
    u.mel.frames = random_matrix(6, 2, rng);
    u.phonemes = {1, 2, 1};
    u.alignment.phones = {{"b", 0, 2}, {"a", 2, 3}, {"b", 3, 6}};
    std::vector<features::Utterance> corpus{u};
    PhoneSegmentSet set = collect_phone_segments(corpus);
    REQUIRE(set.size() == 2);
    CHECK(set["a"].size() == 1);
    REQUIRE(set["b"].size() == 2);
    CHECK(set["b"][0] == u.mel.frames.slice_rows(0, 2));
    CHECK(set["b"][1] == u.mel.frames.slice_rows(3, 6));
  }

  TEST_CASE("template file round trip") {
    Rng rng(9);
    AcousticTemplate t{random_matrix(7, 3, rng), 12.5};
    segbert::testing::TempDir dir("tmpl");
    save_template(t, dir / "t.sbtp");
    CHECK(load_template(dir / "t.sbtp").frames == t.frames);
    CHECK_THROWS_AS(features::load_mel(dir / "t.sbtp"), Error);
  }
}

TEST_SUITE("pad_mask") {
  TEST_CASE("duplicate-then-truncate for every K class") {
    Rng rng(12);
    for (std::size_t len : {1u, 3u, 5u}) {
      AcousticTemplate t{random_matrix(len, 4, rng)};
      for (std::size_t k : {std::size_t{1}, len - 1, len, len + 1, 2 * len, 2 * len + 3}) {
        if (k == 0) continue;
        Tensor got = pad_mask(t, k);
        CHECK(got == duplicate_then_truncate(t.frames, k));
        CHECK(got.min() >= t.frames.min());
        CHECK(got.max() <= t.frames.max());
      }
      CHECK(pad_mask(t, len) == t.frames);
    }
  }

  TEST_CASE("three-frame template padded to five") {
    AcousticTemplate t{Tensor::matrix({{0.0}, {1.0}, {2.0}})};
    CHECK(pad_mask(t, 5) == Tensor::matrix({{0.0}, {1.0}, {2.0}, {0.0}, {1.0}}));
  }
}
