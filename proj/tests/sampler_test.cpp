#include "crowdcluster/sampler.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

namespace crowdcluster {
namespace {

std::vector<ObjectId> ids(int n) {
  std::vector<ObjectId> out;
  for (int i = 0; i < n; ++i) out.push_back("obj" + std::to_string(i));
  return out;
}

std::map<ObjectId, int> coverage(const SamplingPlan& plan) {
  std::map<ObjectId, int> c;
  for (const auto& page : plan.pages)
    for (const auto& id : page.object_ids) ++c[id];
  return c;
}

TEST(OccurrencesPerObject, ExactLogs) {
  EXPECT_EQ(occurrences_per_object(8, 2), 9);
  EXPECT_EQ(occurrences_per_object(8, 8), 3);
  EXPECT_EQ(occurrences_per_object(27, 3), 15);  // ceil(log2 27 * 3)
  EXPECT_EQ(occurrences_per_object(2, 2), 1);
}

TEST(OccurrencesPerObject, PaperScale) {
  // log2(2000) * log6(2000) = 46.5184... (50-digit evaluation)
  EXPECT_EQ(occurrences_per_object(2000, 6), 47);
  // log2(60) * log6(60) = 13.4978...
  EXPECT_EQ(occurrences_per_object(60, 6), 14);
}

TEST(OccurrencesPerObject, RejectsSmallInputs) {
  EXPECT_THROW(occurrences_per_object(1, 6), ValidationError);
  EXPECT_THROW(occurrences_per_object(10, 1), ValidationError);
}

TEST(BuildPlan, EvenCover) {
  const auto plan = build_plan(ids(6), 3, 2, 3, 0);
  EXPECT_EQ(plan.pages.size(), 4u);
  for (const auto& [id, count] : coverage(plan)) EXPECT_EQ(count, 2) << id;
  EXPECT_TRUE(validate_plan(plan).empty());
}

TEST(BuildPlan, PaddedLastPage) {
  const auto plan = build_plan(ids(7), 3, 2, 3, 5);
  EXPECT_EQ(plan.pages.size(), 5u);
  int extra = 0;
  for (const auto& [id, count] : coverage(plan)) {
    EXPECT_GE(count, 2);
    EXPECT_LE(count, 3);
    extra += count - 2;
  }
  EXPECT_EQ(extra, 1);  // 15 slots, 14 tokens
  EXPECT_TRUE(validate_plan(plan).empty());
}

TEST(BuildPlan, DeterministicForSeed) {
  const auto a = build_plan(ids(40), 6, 5, 3, 11);
  const auto b = build_plan(ids(40), 6, 5, 3, 11);
  EXPECT_EQ(a, b);
  const auto c = build_plan(ids(40), 6, 5, 3, 12);
  EXPECT_NE(a.pages, c.pages);
}

TEST(BuildPlan, RejectsTooFewObjects) {
  EXPECT_THROW(build_plan(ids(4), 6, 2, 3, 0), ValidationError);
  EXPECT_THROW(build_plan(ids(20), 9, 2, 3, 0), ValidationError);
  EXPECT_NO_THROW(build_plan(ids(20), 9, 2, 3, 0, /*allow_any_page_size=*/true));
}

TEST(BuildPlan, PagesAreVaried) {
  const auto plan = build_plan(ids(60), 6, 14, 3, 1);
  std::set<std::vector<ObjectId>> sets;
  for (auto page : plan.pages) {
    std::sort(page.object_ids.begin(), page.object_ids.end());
    sets.insert(page.object_ids);
  }
  EXPECT_EQ(sets.size(), plan.pages.size());
}

TEST(ValidatePlan, FlagsDuplicateObject) {
  auto plan = build_plan(ids(6), 3, 2, 3, 0);
  plan.pages[1].object_ids[1] = plan.pages[1].object_ids[0];
  const auto violations = validate_plan(plan);
  int duplicates = 0;
  for (const auto& v : violations) {
    if (v.rule == "duplicate_object") {
      ++duplicates;
      EXPECT_EQ(v.page_id, plan.pages[1].page_id);
    }
  }
  EXPECT_EQ(duplicates, 1);
}

TEST(ValidatePlan, FlagsUnderCoverage) {
  SamplingPlan plan;
  plan.N = 3;
  plan.M = 3;
  plan.V = 2;
  plan.R = 3;
  plan.object_ids = {"a", "b", "c"};
  plan.pages = {{"p0", {"a", "b", "c"}}, {"p1", {"a", "b", "c"}}};
  EXPECT_TRUE(validate_plan(plan).empty());
  plan.V = 3;
  plan.pages.push_back({"p2", {"a", "b", "d"}});
  plan.object_ids.push_back("d");
  plan.N = 4;
  // c occurs V-1 times; d occurs once. Page count is ceil(12/3)=4, not 3.
  auto violations = validate_plan(plan);
  int low = 0;
  for (const auto& v : violations) low += v.rule == "coverage_low";
  EXPECT_EQ(low, 2);
}

TEST(ValidatePlan, RandomPlansAreValid) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 3 + static_cast<int>(rng() % 6);
    const int n = m + static_cast<int>(rng() % 60);
    const int v = 1 + static_cast<int>(rng() % 8);
    const auto seed = rng();
    const auto plan = build_plan(ids(n), m, v, 3, seed);
    const auto violations = validate_plan(plan);
    ASSERT_TRUE(violations.empty()) << "n=" << n << " m=" << m << " v=" << v << ": "
                                    << violations.front().rule << " "
                                    << violations.front().detail;
  }
}

TEST(Budget, LogSquaredGrowth) {
  for (int m = 3; m <= 8; ++m) {
    for (long long n : {100LL, 200LL, 500LL, 700LL, 1000LL, 2000LL, 5000LL, 10000LL, 100000LL}) {
      const int v = occurrences_per_object(n, m);
      const long long pages = page_count(n, m, v);
      const long long budget = pair_observation_budget(pages, m, 3);
      // Crowd tasks issued stay below one comparison per object pair.
      EXPECT_LT(pages * 3, exhaustive_pair_count(n)) << "n=" << n << " m=" << m;
      // Pair observations drop below the exhaustive count from n ~ 700 on.
      if (n >= 700) EXPECT_LT(budget, exhaustive_pair_count(n)) << "n=" << n << " m=" << m;
      // O(N log^2 N): the ratio to N log2^2 N stays bounded by a constant.
      const double lg = std::log2(static_cast<double>(n));
      EXPECT_LT(budget / (n * lg * lg), 3.0 * (m - 1) / 2.0 / std::log2(m) + 1.0);
    }
  }
}

}  // namespace
}  // namespace crowdcluster
