#include "crowdcluster/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace crowdcluster {

namespace {

std::string page_name(std::size_t index, std::size_t total) {
  const std::string digits = std::to_string(index);
  const std::size_t width = std::max<std::size_t>(5, std::to_string(total).size());
  return "p" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

bool contains(const std::vector<int>& slots, int object) {
  return std::find(slots.begin(), slots.end(), object) != slots.end();
}

// Swaps the token at (p, s) with a token from another page so that neither
// page ends up holding a duplicate. Returns false if no partner exists.
bool repair_slot(std::vector<std::vector<int>>& pages, std::size_t p, std::size_t s) {
  const int dup = pages[p][s];
  for (std::size_t step = 1; step < pages.size(); ++step) {
    const std::size_t q = (p + step) % pages.size();
    if (contains(pages[q], dup)) continue;
    for (std::size_t t = 0; t < pages[q].size(); ++t) {
      const int candidate = pages[q][t];
      if (contains(pages[p], candidate)) continue;
      std::swap(pages[p][s], pages[q][t]);
      return true;
    }
  }
  return false;
}

bool has_duplicate(const std::vector<int>& page, std::size_t upto) {
  for (std::size_t i = 0; i < upto; ++i) {
    if (page[i] == page[upto]) return true;
  }
  return false;
}

// Breaks pages that share an identical object set with an earlier page, when
// a duplicate-free swap exists.
void diversify(std::vector<std::vector<int>>& pages, std::mt19937_64& rng) {
  std::map<std::vector<int>, std::size_t> seen;
  for (std::size_t p = 0; p < pages.size(); ++p) {
    std::vector<int> key = pages[p];
    std::sort(key.begin(), key.end());
    if (!seen.count(key)) {
      seen.emplace(std::move(key), p);
      continue;
    }
    bool fixed = false;
    for (int attempt = 0; attempt < 64 && !fixed && pages.size() > 2; ++attempt) {
      const std::size_t q = std::uniform_int_distribution<std::size_t>(0, pages.size() - 1)(rng);
      if (q == p) continue;
      const std::size_t s = std::uniform_int_distribution<std::size_t>(0, pages[p].size() - 1)(rng);
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, pages[q].size() - 1)(rng);
      if (contains(pages[q], pages[p][s]) || contains(pages[p], pages[q][t])) continue;
      std::swap(pages[p][s], pages[q][t]);
      fixed = true;
    }
    std::vector<int> updated = pages[p];
    std::sort(updated.begin(), updated.end());
    seen.emplace(std::move(updated), p);
  }
}

}  // namespace

int occurrences_per_object(long long n, int m) {
  if (n < 2) throw ValidationError("occurrences_per_object: N must be at least 2");
  if (m < 2) throw ValidationError("occurrences_per_object: M must be at least 2");
  const double log2n = std::log2(static_cast<double>(n));
  const double logmn = log2n / std::log2(static_cast<double>(m));
  // Tolerate rounding so exact products such as 3*3 are not bumped to 10.
  const double v = std::ceil(log2n * logmn - 1e-9);
  return std::max(1, static_cast<int>(v));
}

long long page_count(long long n, int m, int v) {
  return (n * v + m - 1) / m;
}

long long pair_observation_budget(long long pages, int m, int r) {
  return pages * (static_cast<long long>(m) * (m - 1) / 2) * r;
}

long long exhaustive_pair_count(long long n) { return n * (n - 1) / 2; }

SamplingPlan build_plan(const std::vector<ObjectRecord>& objects, int m, int v, int r,
                        std::uint64_t seed, bool allow_any_page_size) {
  validate_objects(objects);
  std::vector<ObjectId> ids;
  ids.reserve(objects.size());
  for (const auto& o : objects) ids.push_back(o.object_id);
  return build_plan(ids, m, v, r, seed, allow_any_page_size);
}

SamplingPlan build_plan(const std::vector<ObjectId>& object_ids, int m, int v, int r,
                        std::uint64_t seed, bool allow_any_page_size) {
  const int n = static_cast<int>(object_ids.size());
  if (m < 2) throw ValidationError("page size M must be at least 2");
  if (!allow_any_page_size && (m < kMinPolicyPageSize || m > kMaxPolicyPageSize))
    throw ValidationError("page size M=" + std::to_string(m) + " outside policy range [3, 8]");
  if (v < 1) throw ValidationError("occurrences V must be at least 1");
  if (r < 1) throw ValidationError("replication R must be at least 1");
  if (n < m)
    throw ValidationError("need at least M=" + std::to_string(m) + " objects, got " +
                          std::to_string(n));
  if (std::set<ObjectId>(object_ids.begin(), object_ids.end()).size() != object_ids.size())
    throw ValidationError("duplicate object ids in plan input");

  std::mt19937_64 rng(seed);
  std::vector<int> tokens;
  tokens.reserve(static_cast<std::size_t>(n) * v);
  for (int i = 0; i < n; ++i) tokens.insert(tokens.end(), v, i);
  std::shuffle(tokens.begin(), tokens.end(), rng);

  const auto total_pages = static_cast<std::size_t>(page_count(n, m, v));
  std::vector<std::vector<int>> pages(total_pages);
  for (std::size_t k = 0; k < tokens.size(); ++k) pages[k / m].push_back(tokens[k]);

  if (n == m) {
    // Every page must hold every object; only the display order varies.
    for (auto& page : pages) {
      page.resize(n);
      std::iota(page.begin(), page.end(), 0);
      std::shuffle(page.begin(), page.end(), rng);
    }
  }

  for (std::size_t p = 0; p < pages.size(); ++p) {
    for (std::size_t s = 1; s < pages[p].size(); ++s) {
      if (has_duplicate(pages[p], s) && !repair_slot(pages, p, s))
        throw Error("sampler could not repair a duplicate on page " + std::to_string(p));
    }
  }

  // Pad the trailing partial page with distinct objects, least covered
  // first; the cover order is seeded so ties do not favour low ids.
  auto& last = pages.back();
  if (static_cast<int>(last.size()) < m) {
    std::vector<int> extra_counts(n, 0);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    while (static_cast<int>(last.size()) < m) {
      int best = -1;
      for (int candidate : order) {
        if (contains(last, candidate)) continue;
        if (best < 0 || extra_counts[candidate] < extra_counts[best]) best = candidate;
      }
      last.push_back(best);
      ++extra_counts[best];
    }
  }

  diversify(pages, rng);

  SamplingPlan plan;
  plan.N = n;
  plan.M = m;
  plan.V = v;
  plan.R = r;
  plan.seed = seed;
  plan.allow_any_page_size = allow_any_page_size;
  plan.object_ids = object_ids;
  plan.pages.reserve(pages.size());
  for (std::size_t p = 0; p < pages.size(); ++p) {
    Page page{page_name(p, pages.size()), {}};
    for (int idx : pages[p]) page.object_ids.push_back(object_ids[idx]);
    plan.pages.push_back(std::move(page));
  }
  return plan;
}

std::vector<PlanViolation> validate_plan(const SamplingPlan& plan) {
  std::vector<PlanViolation> out;
  auto add = [&out](std::string page, std::string rule, std::string detail) {
    out.push_back({std::move(page), std::move(rule), std::move(detail)});
  };

  if (plan.M < 2) add("", "page_size", "M must be at least 2");
  if (!plan.allow_any_page_size &&
      (plan.M < kMinPolicyPageSize || plan.M > kMaxPolicyPageSize))
    add("", "page_size_policy", "M=" + std::to_string(plan.M) + " outside [3, 8]");
  if (plan.V < 1) add("", "occurrences", "V must be at least 1");
  if (plan.R < 1) add("", "replication", "R must be at least 1");
  if (plan.N != static_cast<int>(plan.object_ids.size()))
    add("", "object_count", "N=" + std::to_string(plan.N) + " but " +
                                std::to_string(plan.object_ids.size()) + " object ids");
  if (plan.M >= 1 && plan.V >= 1) {
    const long long expected = page_count(plan.N, plan.M, plan.V);
    if (static_cast<long long>(plan.pages.size()) != expected)
      add("", "page_count", "expected " + std::to_string(expected) + " pages, found " +
                                std::to_string(plan.pages.size()));
  }

  std::map<ObjectId, int> coverage;
  for (const auto& id : plan.object_ids) coverage.emplace(id, 0);
  std::set<std::string> page_ids;
  for (const auto& page : plan.pages) {
    if (!page_ids.insert(page.page_id).second)
      add(page.page_id, "page_id_unique", "page id repeated");
    if (static_cast<int>(page.object_ids.size()) != plan.M)
      add(page.page_id, "page_size", "page holds " + std::to_string(page.object_ids.size()) +
                                         " objects, expected " + std::to_string(plan.M));
    std::set<ObjectId> seen;
    for (const auto& id : page.object_ids) {
      if (!seen.insert(id).second) add(page.page_id, "duplicate_object", "object " + id);
      auto it = coverage.find(id);
      if (it == coverage.end())
        add(page.page_id, "unknown_object", "object " + id);
      else
        ++it->second;
    }
  }
  for (const auto& [id, count] : coverage) {
    if (count < plan.V)
      add("", "coverage_low", "object " + id + " occurs " + std::to_string(count) +
                                  " times, expected at least " + std::to_string(plan.V));
    else if (count > plan.V + 1)
      add("", "coverage_high", "object " + id + " occurs " + std::to_string(count) +
                                   " times, expected at most " + std::to_string(plan.V + 1));
  }
  return out;
}

}  // namespace crowdcluster
