#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdcluster/core.hpp"

namespace crowdcluster {

inline constexpr int kDefaultPageSize = 6;
inline constexpr int kDefaultReplication = 3;
inline constexpr int kMinPolicyPageSize = 3;
inline constexpr int kMaxPolicyPageSize = 8;

struct SamplingPlan {
  int N = 0;
  int M = kDefaultPageSize;
  int V = 1;
  int R = kDefaultReplication;
  std::uint64_t seed = 0;
  // Lifts the 3..8 page-size policy; structural rules still apply.
  bool allow_any_page_size = false;
  std::vector<ObjectId> object_ids;
  std::vector<Page> pages;

  bool operator==(const SamplingPlan&) const = default;
};

struct PlanViolation {
  std::string page_id;  // empty for plan- or object-level rules
  std::string rule;
  std::string detail;
};

// ceil(log2 N * log_M N), at least 1.
int occurrences_per_object(long long n, int m);

long long page_count(long long n, int m, int v);

// Pair observations a plan generates: pages * C(M,2) * R.
long long pair_observation_budget(long long pages, int m, int r);

// N(N-1)/2, the exhaustive pairwise alternative.
long long exhaustive_pair_count(long long n);

SamplingPlan build_plan(const std::vector<ObjectRecord>& objects, int m, int v, int r,
                        std::uint64_t seed, bool allow_any_page_size = false);

SamplingPlan build_plan(const std::vector<ObjectId>& object_ids, int m, int v, int r,
                        std::uint64_t seed, bool allow_any_page_size = false);

std::vector<PlanViolation> validate_plan(const SamplingPlan& plan);

}  // namespace crowdcluster
