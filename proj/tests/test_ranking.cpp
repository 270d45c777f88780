#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "halvinglab/errors.hpp"
#include "halvinglab/ranking.hpp"

using namespace halvinglab;

namespace {

// Pairwise sum written out directly, with Phi through erf.
std::vector<double> brute_wins(const std::vector<CandidateSummary>& s) {
  const std::size_t n = s.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double z = (s[i].mu - s[j].mu) / std::sqrt(s[i].sigma2 + s[j].sigma2);
      out[i] += 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
    }
    out[i] /= static_cast<double>(n - 1);
  }
  return out;
}

std::vector<CandidateSummary> random_summaries(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> var(0.01, 2.0);
  std::vector<CandidateSummary> s;
  for (int i = 0; i < n; ++i) s.push_back({i, normal(gen), var(gen)});
  return s;
}

CurveSet constant_set(const std::vector<double>& levels, int steps) {
  std::vector<LearningCurve> curves;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    curves.push_back({static_cast<int>(i), {static_cast<double>(i)}, std::vector<double>(steps, levels[i])});
  }
  return CurveSet(curves);
}

}  // namespace

TEST_CASE("expected wins examples") {
  const std::vector<CandidateSummary> same(5, CandidateSummary{0, 0.3, 0.2});
  for (double w : expected_wins(same)) CHECK(w == 0.5);

  const std::vector<CandidateSummary> two = {{1, 0.0, 0.5}, {2, 1.0, 0.5}};
  const auto w = expected_wins(two);
  CHECK(w[0] == doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.8413447460685429).epsilon(1e-12));

  const std::vector<CandidateSummary> three = {{0, 0.1, 0.3}, {1, -0.4, 0.05}, {2, 0.7, 1.1}};
  const auto got = expected_wins(three);
  const auto want = brute_wins(three);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);

  CHECK_THROWS_AS(expected_wins(std::vector<CandidateSummary>{{0, 0.0, 1.0}}), ConfigError);
}

TEST_CASE("expected wins properties") {
  std::mt19937_64 gen(1);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(gen() % 30);
    auto s = random_summaries(gen, n);
    const auto w = expected_wins(s);
    const auto b = brute_wins(s);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(w[i] >= 0.0);
      CHECK(w[i] <= 1.0);
      CHECK(std::abs(w[i] - b[i]) <= 1e-12);
      sum += w[i];
    }
    // Sum of wins times (n - 1) counts every pair once.
    CHECK(std::abs(sum - n / 2.0) <= 1e-12);

    const double scale = 0.25 + 3.0 * std::uniform_real_distribution<double>(0, 1)(gen);
    const double shift = std::normal_distribution<double>(0, 5)(gen);
    auto t = s;
    for (auto& c : t) {
      c.mu = scale * c.mu + shift;
      c.sigma2 = scale * scale * c.sigma2;
    }
    const auto wt = expected_wins(t);
    for (int i = 0; i < n; ++i) CHECK(std::abs(wt[i] - w[i]) <= 1e-12);
  }
}

TEST_CASE("rank_ascending breaks ties by id") {
  const std::vector<int> ids = {7, 3, 5, 1};
  const std::vector<double> scores = {0.5, 0.5, 0.1, 0.5};
  const Ranking r = rank_ascending(ids, scores);
  CHECK(r.ids == std::vector<int>{5, 1, 3, 7});
  CHECK(r.scores == std::vector<double>{0.1, 0.5, 0.5, 0.5});
}

TEST_CASE("exact-tie summaries rank by id regardless of input order") {
  std::vector<CandidateSummary> s = {{4, 0.2, 0.1}, {2, 0.2, 0.1}, {9, -1.0, 0.1}, {6, 0.2, 0.1}};
  std::vector<int> ids;
  for (const auto& c : s) ids.push_back(c.candidate_id);
  const Ranking a = rank_ascending(ids, expected_wins(s));
  std::reverse(s.begin(), s.end());
  std::reverse(ids.begin(), ids.end());
  const Ranking b = rank_ascending(ids, expected_wins(s));
  CHECK(a == b);
  CHECK(a.ids == std::vector<int>{9, 2, 4, 6});
}

TEST_CASE("rank_by_current") {
  std::vector<LearningCurve> curves;
  curves.push_back({0, {0.0}, {9, 8, 5, 1, 0, 0, 0, 0, 0, 0}});
  curves.push_back({1, {1.0}, {9, 8, 2, 2, 0, 0, 0, 0, 0, 0}});
  const CurveSet set(curves);
  const std::vector<int> ids = {0, 1};
  // T = 10: window ceil(2) = 2, so observed_until = 4 scores mean(y3, y4).
  const Ranking r = rank_by_current(set, ids, 4);
  CHECK(r.ids == std::vector<int>{1, 0});
  CHECK(r.scores == std::vector<double>{2.0, 3.0});
  // Only one value seen: the window shrinks to it.
  CHECK(rank_by_current(set, ids, 1).scores == std::vector<double>{9.0, 9.0});
  CHECK_THROWS_AS(rank_by_current(set, ids, 0), ConfigError);

  const CurveSet consts = constant_set({0.2, 0.1}, 10);
  for (int t = 1; t <= 10; ++t) CHECK(rank_by_current(consts, ids, t).ids.front() == 1);

  CHECK(ceil_fraction(0.2, 35) == 7);
  CHECK(ceil_fraction(0.2, 12) == 3);
  CHECK(ceil_fraction(0.1, 30) == 3);
}

TEST_CASE("rank_by_current at T agrees with the oracle") {
  SyntheticFamilySpec spec;
  spec.family = CurveFamily::crossing_pair_mix;
  spec.noise_std = 0.05;
  spec.slow_starter_fraction = 0.3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CurveSet set = generate_synthetic(spec, 12, 25, seed);
    std::vector<int> ids;
    for (const auto& c : set.curves()) ids.push_back(c.id);
    const Ranking cur = rank_by_current(set, ids, 25, 0.2);
    const Ranking orc = rank_by_oracle(set, ids, PerfSpec{0.2});
    CHECK(cur.ids == orc.ids);
    CHECK(orc.ids.front() == best_candidate(set, PerfSpec{0.2}).id);
  }
  CHECK_THROWS_AS(rank_by_oracle(constant_set({1, 2}, 3), std::vector<int>{}, PerfSpec{}), ConfigError);
  const CurveSet tied = constant_set({0.5, 0.5, 0.5}, 4);
  CHECK(rank_by_oracle(tied, std::vector<int>{2, 0, 1}, PerfSpec{}).ids == std::vector<int>{0, 1, 2});
}

TEST_CASE("rank_by_gp") {
  const CurveSet set = load_csv(HALVINGLAB_DATA_DIR "/fixture8.csv");
  std::vector<gp::CurvePrefix> prefixes;
  for (std::size_t i = 0; i < 4; ++i) prefixes.push_back({i, 10});
  for (std::size_t i = 4; i < 8; ++i) prefixes.push_back({i, 5});
  const auto data = gp::make_training_data(set, prefixes);
  const gp::GpModel model = gp::fit(data.observations, data.standardization);
  std::vector<int> ids = {4, 5, 6, 7};
  const Ranking a = rank_by_gp(model, set, ids, PerfSpec{}, 64, 3);
  std::reverse(ids.begin(), ids.end());
  const Ranking b = rank_by_gp(model, set, ids, PerfSpec{}, 64, 3);
  CHECK(a == b);
  CHECK(std::is_permutation(a.ids.begin(), a.ids.end(), ids.begin()));
  CHECK(std::is_sorted(a.scores.begin(), a.scores.end()));

  // Two candidates far apart: the lower curve wins.
  std::vector<LearningCurve> sep;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> v;
    for (int t = 1; t <= 10; ++t) v.push_back((i == 5 ? 5.0 : 0.1 * i) + 1.0 / t);
    sep.push_back({i, {static_cast<double>(i)}, v});
  }
  const CurveSet far(sep);
  std::vector<gp::CurvePrefix> p2;
  for (std::size_t i = 0; i < 6; ++i) p2.push_back({i, i < 4 ? 10 : 6});
  const auto d2 = gp::make_training_data(far, p2);
  const gp::GpModel m2 = gp::fit(d2.observations, d2.standardization);
  CHECK(rank_by_gp(m2, far, std::vector<int>{5, 4}, PerfSpec{}, 64, 1).ids == std::vector<int>{4, 5});
}
