#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "crowdcluster/evaluation.hpp"
#include "oracles.hpp"

using namespace crowdcluster;

namespace {

ClusteringResult clustering_of(const std::vector<int>& sizes) {
  ClusteringResult r;
  int next = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    r.members.emplace_back();
    for (int i = 0; i < sizes[c]; ++i) {
      const ObjectId id = "x" + std::to_string(next++);
      r.members.back().push_back(id);
      r.assignment.assignment[id] = static_cast<int>(c);
    }
  }
  r.cluster_count = static_cast<int>(sizes.size());
  return r;
}

std::vector<IntruderResponse> answers(const std::vector<IntruderTask>& tasks, int correct_per_task,
                                      int wrong_per_task) {
  std::vector<IntruderResponse> out;
  for (const auto& t : tasks) {
    const ObjectId wrong = t.shown_objects[0] == t.intruder ? t.shown_objects[1] : t.shown_objects[0];
    for (int i = 0; i < correct_per_task; ++i) out.push_back({t.task_id, "w" + std::to_string(i), t.intruder});
    for (int i = 0; i < wrong_per_task; ++i) out.push_back({t.task_id, "v" + std::to_string(i), wrong});
  }
  return out;
}

}  // namespace

TEST(GenerateIntruderTasks, TwoClustersOfTenGiveFourTasks) {
  const ClusteringResult r = clustering_of({10, 10});
  const IntruderGeneration g = generate_intruder_tasks(r, 6, 2, 1);
  ASSERT_EQ(g.tasks.size(), 4u);
  EXPECT_TRUE(g.diagnostics.empty());
  for (const auto& t : g.tasks) {
    EXPECT_EQ(t.shown_objects.size(), 6u);
    int members = 0;
    for (const auto& id : t.shown_objects) members += r.assignment.assignment.at(id) == t.cluster_id;
    EXPECT_EQ(members, 5);
    EXPECT_NE(r.assignment.assignment.at(t.intruder), t.cluster_id);
    EXPECT_NO_THROW(validate_intruder_task(t, r.assignment));
  }
  EXPECT_EQ(g.tasks[0].task_id, "it-c000-t0000");
  EXPECT_EQ(g.tasks[3].task_id, "it-c001-t0001");
}

TEST(GenerateIntruderTasks, SingleClusterIsAProtocolError) {
  try {
    generate_intruder_tasks(clustering_of({12}), 6, 2, 0);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("intruder undefined"), std::string::npos);
  }
}

TEST(GenerateIntruderTasks, SmallClusterIsSkippedWithDiagnostic) {
  const IntruderGeneration g = generate_intruder_tasks(clustering_of({10, 4}), 6, 2, 0);
  EXPECT_EQ(g.tasks.size(), 2u);
  ASSERT_EQ(g.diagnostics.size(), 1u);
  EXPECT_NE(g.diagnostics[0].find("cluster 1 skipped"), std::string::npos);
  for (const auto& t : g.tasks) EXPECT_EQ(t.cluster_id, 0);
  EXPECT_THROW(generate_intruder_tasks(clustering_of({3, 4}), 6, 2, 0), ProtocolError);
}

TEST(GenerateIntruderTasks, DeterministicPerSeed) {
  const ClusteringResult r = clustering_of({9, 7, 8});
  const auto a = generate_intruder_tasks(r, 6, 3, 5).tasks;
  EXPECT_EQ(a, generate_intruder_tasks(r, 6, 3, 5).tasks);
  EXPECT_NE(a, generate_intruder_tasks(r, 6, 3, 6).tasks);
}

TEST(GenerateIntruderTasks, InvariantsHoldOnRandomClusterings) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = std::uniform_int_distribution<int>(2, 6)(rng);
    std::vector<int> sizes;
    for (int c = 0; c < k; ++c) sizes.push_back(std::uniform_int_distribution<int>(1, 12)(rng));
    const int g_size = std::uniform_int_distribution<int>(2, 7)(rng);
    const ClusteringResult r = clustering_of(sizes);
    IntruderGeneration g;
    try {
      g = generate_intruder_tasks(r, g_size, 2, rng());
    } catch (const ProtocolError&) {
      EXPECT_TRUE(std::all_of(sizes.begin(), sizes.end(), [&](int s) { return s < g_size - 1; }));
      continue;
    }
    for (const auto& t : g.tasks) {
      EXPECT_EQ(static_cast<int>(t.shown_objects.size()), g_size);
      const std::set<ObjectId> unique(t.shown_objects.begin(), t.shown_objects.end());
      EXPECT_EQ(unique.size(), t.shown_objects.size());
      EXPECT_TRUE(unique.count(t.intruder));
      EXPECT_NO_THROW(validate_intruder_task(t, r.assignment));
    }
    const auto skipped = std::count_if(sizes.begin(), sizes.end(), [&](int s) { return s < g_size - 1; });
    EXPECT_EQ(g.diagnostics.size(), static_cast<std::size_t>(skipped));
  }
}

TEST(GenerateIntruderTasks, IntruderIsUniformOverOutsideObjects) {
  // Other clusters of sizes 1 and 9: uniform over objects puts the singleton
  // at 10%, uniform over clusters would put it at 50%.
  const ClusteringResult r = clustering_of({5, 1, 9});
  const ObjectId singleton = r.members[1][0];
  int hits = 0;
  const int trials = 4000;
  for (int s = 0; s < trials; ++s) {
    for (const auto& t : generate_intruder_tasks(r, 6, 1, s).tasks)
      if (t.cluster_id == 0 && t.intruder == singleton) ++hits;
  }
  EXPECT_NEAR(static_cast<double>(hits) / trials, 0.1, 0.02);
}

TEST(ValidateIntruderTask, RejectsBrokenTasks) {
  const ClusteringResult r = clustering_of({6, 6});
  IntruderTask t = generate_intruder_tasks(r, 6, 1, 0).tasks[0];
  IntruderTask dup = t;
  dup.shown_objects[1] = dup.shown_objects[0];
  EXPECT_THROW(validate_intruder_task(dup, r.assignment), ValidationError);
  IntruderTask inside = t;
  inside.intruder = *std::find_if(t.shown_objects.begin(), t.shown_objects.end(),
                                  [&](const ObjectId& id) { return id != t.intruder; });
  EXPECT_THROW(validate_intruder_task(inside, r.assignment), ValidationError);
}

TEST(ScoreIntruder, TenOfTwelve) {
  const auto tasks = generate_intruder_tasks(clustering_of({10, 10}), 6, 2, 0).tasks;
  const auto responses = answers(tasks, 2, 0);
  auto mixed = responses;
  mixed.insert(mixed.end(), responses.begin(), responses.begin() + 2);
  mixed.push_back({tasks[0].task_id, "z", tasks[0].intruder == tasks[0].shown_objects[0]
                                                ? tasks[0].shown_objects[1]
                                                : tasks[0].shown_objects[0]});
  mixed.push_back(mixed.back());
  mixed.back().worker_id = "z2";
  // 8 + 2 correct, 2 wrong.
  const EvaluationReport rep = score_intruder(tasks, mixed);
  EXPECT_EQ(rep.correct, 10);
  EXPECT_EQ(rep.total, 12);
  EXPECT_NEAR(rep.overall_quality, 10.0 / 12.0, 1e-15);
}

TEST(ScoreIntruder, PerfectEvaluatorsScoreOne) {
  const auto tasks = generate_intruder_tasks(clustering_of({8, 9, 10}), 6, 2, 3).tasks;
  const EvaluationReport rep = score_intruder(tasks, answers(tasks, 3, 0));
  EXPECT_EQ(rep.overall_quality, 1.0);
  for (const auto& [c, cell] : rep.per_cluster) EXPECT_EQ(cell.quality, 1.0);
}

TEST(ScoreIntruder, OrderInvariantAndPerClusterSumsMatch) {
  const auto tasks = generate_intruder_tasks(clustering_of({8, 9, 10}), 6, 2, 3).tasks;
  auto responses = answers(tasks, 2, 1);
  const EvaluationReport a = score_intruder(tasks, responses);
  std::mt19937_64 rng(1);
  std::shuffle(responses.begin(), responses.end(), rng);
  const EvaluationReport b = score_intruder(tasks, responses);
  EXPECT_EQ(a.overall_quality, b.overall_quality);
  EXPECT_EQ(a.ci95, b.ci95);
  long long correct = 0, total = 0;
  for (const auto& [c, cell] : a.per_cluster) {
    correct += cell.correct;
    total += cell.total;
    EXPECT_EQ(cell.correct, b.per_cluster.at(c).correct);
  }
  EXPECT_EQ(correct, a.correct);
  EXPECT_EQ(total, a.total);
}

TEST(ScoreIntruder, RejectsBadResponses) {
  const auto tasks = generate_intruder_tasks(clustering_of({6, 6}), 6, 1, 0).tasks;
  EXPECT_THROW(score_intruder(tasks, {}), ValidationError);
  EXPECT_THROW(score_intruder(tasks, {{"nope", "w", tasks[0].intruder}}), ValidationError);
  EXPECT_THROW(score_intruder(tasks, {{tasks[0].task_id, "w", "not-shown"}}), ValidationError);
}

TEST(WilsonInterval, EightyThreeOfHundred) {
  const auto [lo, hi] = wilson_interval(83, 100);
  EXPECT_NEAR(lo, 0.744, 2.5e-3);
  EXPECT_NEAR(hi, 0.893, 2.5e-3);
  const auto ref = oracles::wilson(83, 100, 1.959963984540054);
  EXPECT_NEAR(lo, ref.first, 1e-12);
  EXPECT_NEAR(hi, ref.second, 1e-12);
}

TEST(WilsonInterval, MatchesOracleAndStaysInUnitInterval) {
  for (long long n : {1LL, 5LL, 37LL, 1000LL}) {
    for (long long k = 0; k <= n; k += std::max(1LL, n / 7)) {
      const auto [lo, hi] = wilson_interval(k, n);
      const auto ref = oracles::wilson(static_cast<double>(k), static_cast<double>(n), 1.959963984540054);
      EXPECT_NEAR(lo, std::max(0.0, ref.first), 1e-12);
      EXPECT_NEAR(hi, std::min(1.0, ref.second), 1e-12);
      EXPECT_LE(lo, static_cast<double>(k) / n + 1e-15);
      EXPECT_GE(hi, static_cast<double>(k) / n - 1e-15);
    }
  }
  EXPECT_THROW(wilson_interval(0, 0), ValidationError);
}

TEST(ReportTable, ListsClustersAndOverall) {
  const auto tasks = generate_intruder_tasks(clustering_of({6, 6}), 6, 1, 0).tasks;
  const std::string table = report_table(score_intruder(tasks, answers(tasks, 1, 0)));
  EXPECT_NE(table.find("overall"), std::string::npos);
  EXPECT_NE(table.find("Wilson"), std::string::npos);
}
