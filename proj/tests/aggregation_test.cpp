#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "crowdcluster/aggregation.hpp"
#include "crowdcluster/kernels.hpp"
#include "crowdcluster/rng.hpp"
#include "oracles.hpp"

using namespace crowdcluster;

namespace {

std::vector<ObjectId> ids(int n) {
  std::vector<ObjectId> out;
  for (int i = 0; i < n; ++i) out.push_back("o" + std::to_string(i));
  return out;
}

// Every worker labels every pair according to `truth`.
std::vector<IndexedPair> consensus_pairs(const std::vector<int>& truth, int workers) {
  std::vector<IndexedPair> out;
  const int n = static_cast<int>(truth.size());
  for (int w = 0; w < workers; ++w)
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) out.push_back({a, b, w, truth[a] == truth[b]});
  return out;
}

std::vector<IndexedPair> random_pairs(int n, int workers, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> obj(0, n - 1), wrk(0, workers - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<IndexedPair> out;
  while (static_cast<int>(out.size()) < count) {
    int a = obj(rng), b = obj(rng);
    if (a == b) continue;
    out.push_back({std::min(a, b), std::max(a, b), wrk(rng), coin(rng)});
  }
  return out;
}

// Random state with responsibilities and weights strictly inside the simplex.
ModelState random_state(int n, int workers, const AggregationConfig& c, std::mt19937_64& rng) {
  ModelState s = initial_state(n, workers, c, rng());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  for (Eigen::Index i = 0; i < s.embeddings.size(); ++i) s.embeddings.data()[i] = normal(rng);
  for (int j = 0; j < workers; ++j) {
    s.scale(j) = 1.0 + 0.3 * normal(rng);
    s.bias(j) = 0.3 * normal(rng);
  }
  for (Eigen::Index i = 0; i < s.weights.size(); ++i) s.weights(i) = unit(rng);
  s.weights /= s.weights.sum();
  for (Eigen::Index i = 0; i < s.responsibilities.size(); ++i)
    s.responsibilities.data()[i] = unit(rng);
  for (Eigen::Index i = 0; i < s.responsibilities.rows(); ++i)
    s.responsibilities.row(i) /= s.responsibilities.row(i).sum();
  return s;
}

// The objective written out term by term with plain loops.
double naive_objective(const ModelState& s, const std::vector<IndexedPair>& pairs,
                       const AggregationConfig& c) {
  const double pi = std::numbers::pi;
  double total = 0.0;
  for (const auto& p : pairs) {
    double dot = 0.0;
    for (int d = 0; d < s.dim(); ++d) dot += s.embeddings(p.a, d) * s.embeddings(p.b, d);
    const double prob = 1.0 / (1.0 + std::exp(-(s.scale(p.worker) * dot + s.bias(p.worker))));
    total += std::log(p.same ? prob : 1.0 - prob);
  }
  const int k = s.n_components();
  for (int i = 0; i < s.n_objects(); ++i) {
    for (int m = 0; m < k; ++m) {
      const double r = s.responsibilities(i, m);
      if (r == 0) continue;
      double sq = 0.0;
      for (int d = 0; d < s.dim(); ++d) {
        const double diff = s.embeddings(i, d) - s.means(m, d);
        sq += diff * diff;
      }
      const double log_normal =
          -0.5 * s.dim() * std::log(2 * pi * c.sigma_x * c.sigma_x) -
          sq / (2 * c.sigma_x * c.sigma_x);
      total += r * (std::log(s.weights(m)) + log_normal - std::log(r));
    }
  }
  auto log_gauss = [&](double x, double mean, double sigma) {
    return -0.5 * std::log(2 * pi * sigma * sigma) - (x - mean) * (x - mean) / (2 * sigma * sigma);
  };
  for (int j = 0; j < s.n_workers(); ++j) {
    total += log_gauss(s.scale(j), 1.0, c.sigma_s);
    total += log_gauss(s.bias(j), 0.0, c.sigma_tau);
  }
  for (int m = 0; m < k; ++m)
    for (int d = 0; d < s.dim(); ++d) total += log_gauss(s.means(m, d), 0.0, c.sigma_mu);
  const double conc = 1.0 + c.alpha / k;
  total += std::lgamma(k * conc) - k * std::lgamma(conc);
  for (int m = 0; m < k; ++m) total += (conc - 1.0) * std::log(s.weights(m));
  return total;
}

AggregationConfig small_config() {
  AggregationConfig c;
  c.dim = 3;
  c.max_components = 5;
  return c;
}

}  // namespace

TEST(PairProbability, LogisticOfScaledDotPlusBias) {
  AggregationConfig c = small_config();
  c.dim = 2;
  ModelState s = initial_state(2, 2, c, 1);
  s.embeddings << 1.0, 0.0, 1.0, 0.0;
  s.bias(1) = -1.0;
  s.scale(1) = 2.0;
  EXPECT_NEAR(pair_probability(s, 0, 1, 0), 0.7310585786, 1e-9);
  EXPECT_NEAR(pair_probability(s, 0, 1, 1), 0.7310585786, 1e-9);
  s.embeddings.setZero();
  EXPECT_DOUBLE_EQ(pair_probability(s, 0, 1, 0), 0.5);
}

TEST(PairProbability, LogisticIsStableAtExtremes) {
  EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
  EXPECT_GT(logistic(-800.0), -1e-300);
  EXPECT_DOUBLE_EQ(logistic(800.0), 1.0);
  EXPECT_NEAR(logistic(2.0) + logistic(-2.0), 1.0, 1e-15);
}

TEST(Objective, ZeroEmbeddingsGiveLogHalfPerPair) {
  std::mt19937_64 rng(3);
  const auto pairs = random_pairs(6, 2, 40, rng);
  const PairSet set(pairs, 6, 2);
  RowMatrix x = RowMatrix::Zero(6, 3);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(2), t = Eigen::VectorXd::Zero(2);
  EXPECT_NEAR(kernels::pair_log_likelihood(x, s, t, set), 40 * std::log(0.5), 1e-10);
  EXPECT_NEAR(kernels::serial::pair_log_likelihood(x, s, t, set), 40 * std::log(0.5), 1e-10);
}

TEST(Objective, MatchesTermByTermOracle) {
  std::mt19937_64 rng(11);
  const AggregationConfig c = small_config();
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 4;
    const auto pairs = random_pairs(n, 3, 25, rng);
    const ModelState s = random_state(n, 3, c, rng);
    const double expected = naive_objective(s, pairs, c);
    EXPECT_NEAR(objective(s, PairSet(pairs, n, 3), c), expected, 1e-9 * std::abs(expected));
  }
}

TEST(Objective, EmptyPairSetLeavesOnlyPriorAndMixtureTerms) {
  std::mt19937_64 rng(5);
  const AggregationConfig c = small_config();
  const ModelState s = random_state(4, 2, c, rng);
  EXPECT_NEAR(objective(s, PairSet({}, 4, 2), c), naive_objective(s, {}, c), 1e-9);
}

TEST(Objective, DeterministicAcrossCalls) {
  std::mt19937_64 rng(6);
  const AggregationConfig c = small_config();
  const auto pairs = random_pairs(8, 3, 60, rng);
  const PairSet set(pairs, 8, 3);
  const ModelState s = random_state(8, 3, c, rng);
  const double first = objective(s, set, c);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(objective(s, set, c), first);
}

TEST(Objective, NonFiniteStateNamesTheTerm) {
  std::mt19937_64 rng(7);
  const AggregationConfig c = small_config();
  ModelState s = random_state(4, 2, c, rng);
  s.scale(0) = std::numeric_limits<double>::infinity();
  try {
    objective(s, PairSet({{0, 1, 0, true}}, 4, 2), c);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("objective term"), std::string::npos);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  const AggregationConfig c = small_config();
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const auto pairs = random_pairs(12, 3, 80, rng);
    const PairSet set(pairs, 12, 3);
    const ModelState s = random_state(12, 3, c, rng);
    const ObjectiveGradient g = objective_gradient(s, set, c);

    auto check = [&](double analytic, auto&& perturb) {
      ModelState plus = s, minus = s;
      perturb(plus, h);
      perturb(minus, -h);
      const double numeric = (objective(plus, set, c) - objective(minus, set, c)) / (2 * h);
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      EXPECT_LT(rel, 1e-4) << "analytic " << analytic << " numeric " << numeric;
    };
    for (int i = 0; i < 12; ++i)
      for (int d = 0; d < c.dim; ++d)
        check(g.embeddings(i, d), [&](ModelState& m, double e) { m.embeddings(i, d) += e; });
    for (int j = 0; j < 3; ++j) {
      check(g.scale(j), [&](ModelState& m, double e) { m.scale(j) += e; });
      check(g.bias(j), [&](ModelState& m, double e) { m.bias(j) += e; });
    }
  }
}

TEST(EmStep, ObjectiveNeverDecreases) {
  std::mt19937_64 rng(99);
  const AggregationConfig c = small_config();
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + trial % 6;
    const PairSet set(random_pairs(n, 3, 8 * n, rng), n, 3);
    ModelState s = initial_state(n, 3, c, rng());
    double previous = objective(s, set, c);
    std::array<double, 3> steps{1e-3, 1e-3, 1e-3};
    for (int sweep = 0; sweep < 40; ++sweep) {
      s = em_step(s, set, c, nullptr, &steps);
      EXPECT_GE(s.objective, previous - 1e-9 * std::max(1.0, std::abs(previous)));
      previous = s.objective;
    }
  }
}

TEST(EmStep, ResponsibilitiesAndWeightsStayOnTheSimplex) {
  std::mt19937_64 rng(12);
  const AggregationConfig c = small_config();
  const PairSet set(random_pairs(9, 2, 70, rng), 9, 2);
  ModelState s = initial_state(9, 2, c, 4);
  for (int sweep = 0; sweep < 15; ++sweep) {
    s = em_step(s, set, c);
    EXPECT_NEAR(s.weights.sum(), 1.0, 1e-12);
    EXPECT_GT(s.weights.minCoeff(), 0.0);
    for (int i = 0; i < 9; ++i) {
      EXPECT_NEAR(s.responsibilities.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(s.responsibilities.row(i).minCoeff(), 0.0);
    }
  }
}

TEST(EmStep, ClosedFormUpdatesAreStationary) {
  std::mt19937_64 rng(21);
  const AggregationConfig c = small_config();
  const PairSet set(random_pairs(7, 2, 40, rng), 7, 2);
  ModelState s = random_state(7, 2, c, rng);
  update_responsibilities(s, c);
  double f = objective(s, set, c);
  for (double e : {1e-3, -1e-3}) {
    ModelState m = s;
    m.responsibilities(0, 0) += e;
    m.responsibilities(0, 1) -= e;
    EXPECT_LE(objective(m, set, c), f + 1e-12);
  }
  update_components(s, c);
  f = objective(s, set, c);
  for (double e : {1e-3, -1e-3}) {
    ModelState m = s;
    m.means(0, 0) += e;
    EXPECT_LE(objective(m, set, c), f + 1e-12);
    m = s;
    m.weights(0) += e;
    m.weights(1) -= e;
    EXPECT_LE(objective(m, set, c), f + 1e-12);
  }
}

TEST(Fit, ConvergedStateIsAFixedPoint) {
  AggregationConfig c = small_config();
  c.rel_tol = 1e-10;
  c.max_sweeps = 2000;
  const auto pairs = consensus_pairs({0, 0, 1, 1, 2, 2}, 3);
  const PairSet set(pairs, 6, 3);
  const FitResult r = fit(set, c);
  ASSERT_TRUE(r.diagnostics.converged);
  const ModelState next = em_step(r.state, set, c);
  EXPECT_NEAR(next.objective, r.state.objective, 1e-6 * std::abs(r.state.objective));
}

TEST(Fit, RecoversPlantedFourObjectInstance) {
  const auto pairs = consensus_pairs({0, 0, 1, 1}, 3);
  const FitResult r = fit(pairs, 4, 3, AggregationConfig{});
  const ClusteringResult out = extract_clusters(r.state, ids(4));
  EXPECT_EQ(out.cluster_count, 2);
  EXPECT_TRUE(partition_equal(out.assignment, make_partition(ids(4), {0, 0, 1, 1})));
}

TEST(Fit, AllSameLabelsGiveOneCluster) {
  const auto pairs = consensus_pairs({0, 0, 0, 0, 0, 0, 0, 0}, 3);
  const FitResult r = fit(pairs, 8, 3, AggregationConfig{});
  EXPECT_EQ(extract_clusters(r.state, ids(8)).cluster_count, 1);
}

TEST(Fit, MatchesBruteForceAgreementMaximizerOnSmallInstances) {
  // Complete noiseless labels replicated over 20 workers. A single copy is not
  // enough evidence to overcome the priors at this size (see README). The
  // all-distinct partition is excluded: a negative worker bias explains it
  // without separating any embeddings.
  int checked = 0;
  for (int n = 2; n <= 6; ++n) {
    for (const auto& truth : oracles::set_partitions(n)) {
      if (*std::max_element(truth.begin(), truth.end()) == n - 1 && n > 1) continue;
      const auto pairs = consensus_pairs(truth, 20);
      std::vector<std::vector<int>> same(n, std::vector<int>(n, 0)), diff = same;
      for (const auto& p : pairs) (p.same ? same : diff)[p.a][p.b]++;
      long long best = -1;
      std::vector<int> argmax;
      for (const auto& cand : oracles::set_partitions(n)) {
        const long long score = oracles::agreement(cand, same, diff);
        if (score > best) {
          best = score;
          argmax = cand;
        }
      }
      const FitResult r = fit(pairs, n, 20, AggregationConfig{});
      const ClusteringResult out = extract_clusters(r.state, ids(n));
      std::vector<int> got;
      for (const auto& id : ids(n)) got.push_back(out.assignment.assignment.at(id));
      EXPECT_TRUE(oracles::brute_same_relation(got, argmax))
          << "got " << testing::PrintToString(got) << " want " << testing::PrintToString(argmax);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 277 - 5);
}

TEST(Fit, WorkerRelabelingDoesNotChangeTheClustering) {
  std::vector<int> truth = {0, 0, 0, 1, 1, 1, 2, 2, 2};
  auto pairs = consensus_pairs(truth, 4);
  const FitResult base = fit(pairs, 9, 4, AggregationConfig{});
  for (auto& p : pairs) p.worker = 3 - p.worker;
  const FitResult permuted = fit(pairs, 9, 4, AggregationConfig{});
  EXPECT_TRUE(partition_equal(extract_clusters(base.state, ids(9)).assignment,
                              extract_clusters(permuted.state, ids(9)).assignment));
  EXPECT_NEAR(base.state.objective, permuted.state.objective,
              1e-6 * std::abs(base.state.objective));
}

TEST(Fit, DeterministicForFixedSeed) {
  std::mt19937_64 rng(8);
  const auto pairs = random_pairs(10, 3, 90, rng);
  AggregationConfig c;
  c.seed = 77;
  const FitResult a = fit(pairs, 10, 3, c);
  const FitResult b = fit(pairs, 10, 3, c);
  EXPECT_EQ(a.state.objective, b.state.objective);
  EXPECT_EQ(a.state.embeddings, b.state.embeddings);
  EXPECT_EQ(a.diagnostics.best_restart, b.diagnostics.best_restart);
}

TEST(Fit, PicksTheBestRestart) {
  std::mt19937_64 rng(10);
  const auto pairs = random_pairs(10, 3, 90, rng);
  AggregationConfig c;
  c.restarts = 4;
  const FitResult r = fit(pairs, 10, 3, c);
  ASSERT_EQ(r.diagnostics.restart_objectives.size(), 4u);
  for (double f : r.diagnostics.restart_objectives) EXPECT_LE(f, r.state.objective);
  EXPECT_EQ(r.diagnostics.restart_objectives[r.diagnostics.best_restart], r.state.objective);
}

TEST(Fit, RejectsEmptyEvidenceAndBadConfig) {
  EXPECT_THROW(fit(std::vector<IndexedPair>{}, 3, 1, AggregationConfig{}), ValidationError);
  AggregationConfig c;
  c.sigma_x = 0;
  EXPECT_THROW(fit(consensus_pairs({0, 1}, 1), 2, 1, c), ValidationError);
  EXPECT_THROW(PairSet({{0, 0, 0, true}}, 2, 1), ValidationError);
  EXPECT_THROW(PairSet({{0, 5, 0, true}}, 2, 1), ValidationError);
}

TEST(ExtractClusters, OneHotResponsibilitiesRelabelBySize) {
  AggregationConfig c;
  ModelState s = initial_state(6, 1, c, 0);
  s.responsibilities.setZero();
  const int comp[6] = {7, 2, 7, 15, 7, 2};
  for (int i = 0; i < 6; ++i) s.responsibilities(i, comp[i]) = 1.0;
  const ClusteringResult r = extract_clusters(s, ids(6));
  EXPECT_EQ(r.cluster_count, 3);
  EXPECT_EQ(r.assignment.assignment.at("o0"), 0);
  EXPECT_EQ(r.assignment.assignment.at("o1"), 1);
  EXPECT_EQ(r.assignment.assignment.at("o3"), 2);
  EXPECT_EQ(r.members[0], (std::vector<ObjectId>{"o0", "o2", "o4"}));
}

TEST(ExtractClusters, TiesGoToTheLowerComponent) {
  AggregationConfig c;
  c.max_components = 3;
  ModelState s = initial_state(2, 1, c, 0);
  s.responsibilities << 0.4, 0.4, 0.2, 0.2, 0.4, 0.4;
  const ClusteringResult r = extract_clusters(s, ids(2));
  EXPECT_EQ(r.cluster_count, 2);
  // Equal sizes keep component order: component 0 gets label 0.
  EXPECT_EQ(r.assignment.assignment.at("o0"), 0);
  EXPECT_EQ(r.assignment.assignment.at("o1"), 1);
}

TEST(Projection, CentersAndOrdersAxesByVariance) {
  AggregationConfig c;
  c.dim = 3;
  ModelState s = initial_state(4, 1, c, 0);
  s.embeddings << 3, 0, 1, -3, 0, 1, 0, 1, 1, 0, -1, 1;
  const Projection p = project_2d(s);
  EXPECT_FALSE(p.degenerate);
  double sx = 0, sy = 0;
  for (const auto& pt : p.points) {
    sx += pt[0];
    sy += pt[1];
  }
  EXPECT_NEAR(sx, 0.0, 1e-12);
  EXPECT_NEAR(sy, 0.0, 1e-12);
  EXPECT_NEAR(p.points[0][0], 3.0, 1e-9);
  EXPECT_NEAR(p.points[1][0], -3.0, 1e-9);
  EXPECT_NEAR(std::abs(p.points[2][1]), 1.0, 1e-9);
}

TEST(Projection, DegenerateCases) {
  AggregationConfig c;
  c.dim = 1;
  ModelState one = initial_state(3, 1, c, 0);
  one.embeddings << 1, 2, 3;
  const Projection p1 = project_2d(one);
  EXPECT_TRUE(p1.degenerate);
  EXPECT_EQ(p1.points[2][0], 3.0);
  EXPECT_EQ(p1.points[2][1], 0.0);

  c.dim = 2;
  ModelState line = initial_state(3, 1, c, 0);
  line.embeddings << 0, 0, 1, 1, 2, 2;
  const Projection p2 = project_2d(line);
  EXPECT_TRUE(p2.degenerate);
  for (const auto& pt : p2.points) EXPECT_EQ(pt[1], 0.0);
  EXPECT_NEAR(p2.points[2][0] - p2.points[0][0], 2 * std::sqrt(2.0), 1e-9);
}

TEST(IndexEvidence, IndexesObjectsAndWorkersLexicographically) {
  const std::vector<PairLabel> labels = {{"b", "c", "w2", "p", true}, {"a", "b", "w1", "p", false}};
  const IndexedEvidence e = index_evidence(labels);
  EXPECT_EQ(e.object_ids, (std::vector<ObjectId>{"a", "b", "c"}));
  EXPECT_EQ(e.worker_ids, (std::vector<WorkerId>{"w1", "w2"}));
  EXPECT_EQ(e.pairs[0].a, 1);
  EXPECT_EQ(e.pairs[0].worker, 1);
  EXPECT_THROW(index_evidence(labels, {"a", "b"}), ValidationError);
}
