#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "halvinglab/curve_model.hpp"
#include "halvinglab/errors.hpp"

using namespace halvinglab;

namespace {

CurveSet fixture8() { return load_csv(HALVINGLAB_DATA_DIR "/fixture8.csv"); }

LearningCurve curve(int id, std::vector<double> values, std::vector<double> h = {0.0}) {
  return {id, std::move(h), std::move(values)};
}

// Rank of every curve by the mean of values[from, to), ties by id.
std::vector<int> brute_ranks(const CurveSet& set, int from, int to) {
  std::vector<double> score;
  for (const auto& c : set.curves()) {
    double s = 0.0;
    for (int t = from; t < to; ++t) s += c.values[t];
    score.push_back(s / (to - from));
  }
  std::vector<int> rank(set.size(), 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = 0; j < set.size(); ++j) {
      if (score[j] < score[i] || (score[j] == score[i] && set[j].id < set[i].id)) ++rank[i];
    }
  }
  return rank;
}

}  // namespace

TEST_CASE("perf examples") {
  PerfSpec half{0.5};
  CHECK(perf(curve(0, {1, 2, 3, 4}), half) == 3.5);
  CHECK(perf(curve(0, {5, 4, 3, 2, 1}), PerfSpec{1.0}) == 3.0);
  CHECK(perf(curve(0, std::vector<double>(7, 0.25)), PerfSpec{}) == 0.25);
  CHECK(PerfSpec{}.window_steps(100) == 20);
  CHECK(PerfSpec{}.window_steps(2) == 1);
  CHECK_THROWS_AS(PerfSpec{1.5}.window_steps(10), ConfigError);
  CHECK_THROWS_AS(PerfSpec{0.0}.window_steps(10), ConfigError);
}

TEST_CASE("perf properties") {
  const CurveSet set = fixture8();
  for (const auto& c : set.curves()) {
    LearningCurve shifted = c;
    for (double& v : shifted.values) v += 3.25;
    CHECK(perf(shifted, PerfSpec{}) == doctest::Approx(perf(c, PerfSpec{}) + 3.25).epsilon(1e-14));
  }
  // Decreasing curve: final window no worse than the first window.
  const LearningCurve dec = curve(0, {9, 7, 6, 4, 3.5, 3, 2, 1.5, 1, 0.5});
  for (double f : {0.1, 0.2, 0.5, 1.0}) {
    const int w = PerfSpec{f}.window_steps(10);
    double head = 0.0;
    for (int t = 0; t < w; ++t) head += dec.values[t];
    CHECK(perf(dec, PerfSpec{f}) <= head / w);
  }
}

TEST_CASE("best_candidate") {
  CurveSet two({curve(0, {1, 0.5}), curve(1, {1, 0.3})});
  auto b = best_candidate(two, PerfSpec{0.5});
  CHECK(b.id == 1);
  CHECK(b.perf == 0.3);

  CurveSet same({curve(4, {1, 2}), curve(2, {1, 2}), curve(9, {1, 2})});
  b = best_candidate(same, PerfSpec{});
  CHECK(b.id == 2);
  CHECK(b.perf == 2.0);

  for (double f : {0.1, 0.2, 0.5, 1.0}) {
    const CurveSet set = fixture8();
    const int w = PerfSpec{f}.window_steps(set.steps());
    int arg = -1;
    double lo = INFINITY;
    for (const auto& c : set.curves()) {
      double s = 0.0;
      for (int t = set.steps() - w; t < set.steps(); ++t) s += c.values[t];
      if (s / w < lo) {
        lo = s / w;
        arg = c.id;
      }
    }
    b = best_candidate(set, PerfSpec{f});
    CHECK(b.id == arg);
    CHECK(b.perf == doctest::Approx(lo).epsilon(1e-15));
  }
  CHECK_THROWS_AS(best_candidate(CurveSet({}), PerfSpec{}), ConfigError);
}

TEST_CASE("reference differencing") {
  const CurveSet set = fixture8();
  REQUIRE(set.reference());
  const CurveSet diff = apply_reference_diff(set);
  const auto& ref = *set.reference();
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (int t = 0; t < set.steps(); ++t) {
      CHECK(diff[i].values[t] == set[i].values[t] - ref[t]);
      CHECK(std::abs(diff[i].values[t] + ref[t] - set[i].values[t]) <= 1e-12);
    }
  }
  for (double r : *diff.reference()) CHECK(r == 0.0);

  CurveSet self({curve(0, {1, 2, 3}), curve(1, {0, 1, 0})}, std::vector<double>{1, 2, 3});
  CHECK(apply_reference_diff(self)[0].values == std::vector<double>{0, 0, 0});
  CurveSet zero({curve(0, {1, 2, 3})}, std::vector<double>{0, 0, 0});
  CHECK(apply_reference_diff(zero)[0].values == zero[0].values);
  CHECK_THROWS_AS(apply_reference_diff(CurveSet({curve(0, {1, 2})})), ConfigError);
}

TEST_CASE("CurveSet validation") {
  CHECK_THROWS_AS(CurveSet({curve(0, {1, 2}), curve(1, {1})}), ConfigError);
  CHECK_THROWS_AS(CurveSet({curve(0, {1, 2}), curve(0, {1, 3})}), ConfigError);
  CHECK_THROWS_AS(CurveSet({curve(0, {1, NAN})}), ConfigError);
  CHECK_THROWS_AS(CurveSet({curve(0, {1, 2}, {}), curve(1, {1, 2}, {})}), ConfigError);
  CHECK_THROWS_AS(CurveSet({curve(0, {1, 2}, {0.0}), curve(1, {1, 2}, {0.0, 1.0})}), ConfigError);
}

TEST_CASE("synthetic generation") {
  SyntheticFamilySpec spec;
  spec.family = CurveFamily::power_law;
  const CurveSet a = generate_synthetic(spec, 6, 12, 42);
  const CurveSet b = generate_synthetic(spec, 6, 12, 42);
  CHECK(a == b);
  CHECK(!(a == generate_synthetic(spec, 6, 12, 43)));

  for (const auto& c : a.curves()) {
    REQUIRE(c.hyperparams.size() == 3);
    for (int t = 1; t <= 12; ++t) {
      CHECK(c.values[t - 1] == power_law_value(c.hyperparams[0], c.hyperparams[1], c.hyperparams[2], t));
    }
  }
  CHECK(power_law_value(2.0, 1.0, 0.5, 4) == doctest::Approx(1.0));
  CHECK(exponential_decay_value(1.0, 2.0, 0.1, 5, 10) == doctest::Approx(std::exp(-1.0) + 0.1));

  spec.family = CurveFamily::exponential_decay;
  const CurveSet e = generate_synthetic(spec, 4, 9, 5);
  for (const auto& c : e.curves()) {
    for (int t = 1; t <= 9; ++t) {
      CHECK(c.values[t - 1] == exponential_decay_value(c.hyperparams[0], c.hyperparams[1], c.hyperparams[2], t, 9));
    }
  }
}

TEST_CASE("crossing_pair_mix guarantees rank changes") {
  SyntheticFamilySpec spec;
  spec.family = CurveFamily::crossing_pair_mix;
  spec.slow_starter_fraction = 0.25;
  spec.noise_std = 0.01;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const CurveSet set = generate_synthetic(spec, 8, 20, seed);
    const int early = trailing_window(0.1, 20);
    const auto first = brute_ranks(set, 0, early);
    const int w = PerfSpec{}.window_steps(20);
    const auto last = brute_ranks(set, 20 - w, 20);
    int changed = 0;
    for (std::size_t i = 0; i < set.size(); ++i) changed += first[i] != last[i];
    CHECK(changed >= 2);
    CHECK(count_rank_changes(set, PerfSpec{}) == changed);
  }
}

TEST_CASE("synthetic spec validation") {
  SyntheticFamilySpec spec;
  spec.param_ranges["a"] = {2.0, 1.0};
  CHECK_THROWS_AS(generate_synthetic(spec, 4, 4, 1), ConfigError);
  spec = {};
  spec.noise_std = -1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.slow_starter_fraction = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(SyntheticFamilySpec{}, 1, 4, 1), ConfigError);
  CHECK_THROWS_AS(parse_family("sigmoid"), ConfigError);
}

TEST_CASE("CSV round trip") {
  const CurveSet set = fixture8();
  CHECK(set.size() == 8);
  CHECK(set.steps() == 10);
  CHECK(set.dims() == 2);
  std::stringstream buf;
  write_csv(set, buf);
  CHECK(read_csv(buf) == set);

  SyntheticFamilySpec spec;
  spec.noise_std = 0.3;
  const CurveSet noisy = generate_synthetic(spec, 5, 7, 9);
  std::stringstream buf2;
  write_csv(noisy, buf2);
  CHECK(read_csv(buf2) == noisy);
}

TEST_CASE("CSV with 512 rows") {
  std::stringstream in;
  in << "candidate_id,t,value,h1\n";
  for (int i = 0; i < 4; ++i) {
    for (int t = 1; t <= 128; ++t) in << (10 * i + 3) << ',' << t << ',' << 0.5 * t + i << ',' << i << '\n';
  }
  const CurveSet set = read_csv(in);
  CHECK(set.size() == 4);
  CHECK(set.steps() == 128);
  CHECK(set.dims() == 1);
  // Reindexed in ascending order of file ids.
  for (int i = 0; i < 4; ++i) CHECK(set[i].id == i);
}

TEST_CASE("CSV errors carry line numbers") {
  const auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_csv(in);
    } catch (const ParseError& e) {
      CAPTURE(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("no ParseError for: " << text);
  };
  fails_with("candidate_id,t,value,h1\n0,1,1.0,0\n0,2,1.0,0\n1,1,1.0,1\n", "candidate 1");
  fails_with("candidate_id,t,value\n0,1,1.0\n", "line 1");
  fails_with("candidate_id,t,value,h1\n0,1,nan,0\n", "line 2");
  fails_with("candidate_id,t,value,h1\n0,1,1.0\n", "line 2");
  fails_with("candidate_id,t,value,h1\n0,1,1.0,0\n0,1,2.0,0\n", "line 3");
  fails_with("candidate_id,t,value,h1\n0,1,1.0,0\n0,2,2.0,5\n", "line 3");
  fails_with("candidate_id,t,value,h1\n0,1,abc,0\n", "line 2");
}

TEST_CASE("load_csv on a missing file is an I/O error") {
  CHECK_THROWS_AS(load_csv("/nonexistent/curves.csv"), IoError);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.30000000000000004}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
