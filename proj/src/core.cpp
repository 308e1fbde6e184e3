#include "crowdcluster/core.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

namespace crowdcluster {

namespace {

std::string join(const std::vector<std::string>& ids) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ", ";
    out << ids[i];
  }
  return out.str();
}

void require_same_objects(const Partition& p, const Partition& q) {
  if (p.size() != q.size() ||
      !std::equal(p.assignment.begin(), p.assignment.end(),
                  q.assignment.begin(),
                  [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw ValidationError("partitions cover different object sets");
  }
}

long long choose2(long long n) { return n * (n - 1) / 2; }

}  // namespace

Partition Partition::normalized() const {
  Partition out;
  std::map<int, int> relabel;
  for (const auto& [id, label] : assignment) {
    auto [it, inserted] = relabel.try_emplace(label, static_cast<int>(relabel.size()));
    out.assignment.emplace(id, it->second);
  }
  return out;
}

int Partition::cluster_count() const {
  std::set<int> labels;
  for (const auto& [id, label] : assignment) labels.insert(label);
  return static_cast<int>(labels.size());
}

void validate_objects(const std::vector<ObjectRecord>& objects) {
  std::set<ObjectId> seen;
  for (const auto& o : objects) {
    if (o.object_id.empty()) throw ValidationError("object_id must be non-empty");
    if (o.payload_uri.empty())
      throw ValidationError("object " + o.object_id + ": payload_uri must be non-empty");
    if (!seen.insert(o.object_id).second)
      throw ValidationError("duplicate object_id " + o.object_id);
  }
}

void validate_page(const Page& page) {
  if (page.object_ids.size() < 2)
    throw ValidationError("page " + page.page_id + ": needs at least 2 objects");
  std::set<ObjectId> seen;
  for (const auto& id : page.object_ids) {
    if (!seen.insert(id).second)
      throw ValidationError("page " + page.page_id + ": duplicate object " + id);
  }
}

void validate_response(const GroupingResponse& response, const Page& page) {
  if (response.page_id != page.page_id)
    throw ValidationError("response page_id " + response.page_id +
                          " does not match page " + page.page_id);
  if (response.worker_id.empty()) throw ValidationError("worker_id must be non-empty");
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  std::set<ObjectId> on_page(page.object_ids.begin(), page.object_ids.end());
  for (const auto& id : page.object_ids) {
    if (!response.groups.count(id)) missing.push_back(id);
  }
  for (const auto& [id, label] : response.groups) {
    if (!on_page.count(id)) extra.push_back(id);
  }
  if (missing.empty() && extra.empty()) return;
  std::string msg = "response for page " + page.page_id + " does not cover the page:";
  if (!missing.empty()) msg += " missing [" + join(missing) + "]";
  if (!extra.empty()) msg += " extra [" + join(extra) + "]";
  throw ValidationError(msg);
}

std::vector<PairLabel> canonical_pairs(const GroupingResponse& response,
                                       const Page& page) {
  validate_page(page);
  validate_response(response, page);
  // groups is keyed by object id, so iteration is already lexicographic.
  std::vector<std::pair<ObjectId, int>> items(response.groups.begin(),
                                              response.groups.end());
  std::vector<PairLabel> pairs;
  pairs.reserve(items.size() * (items.size() - 1) / 2);
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      pairs.push_back(PairLabel{items[i].first, items[j].first, response.worker_id,
                                response.page_id, items[i].second == items[j].second});
    }
  }
  return pairs;
}

Page page_from_response(const GroupingResponse& response) {
  Page page{response.page_id, {}};
  for (const auto& [id, label] : response.groups) page.object_ids.push_back(id);
  return page;
}

Partition partition_of(const GroupingResponse& response) {
  Partition p;
  p.assignment = response.groups;
  return p;
}

bool partition_equal(const Partition& p, const Partition& q) {
  require_same_objects(p, q);
  // Same relation iff the label correspondence is a bijection.
  std::unordered_map<int, int> forward;
  std::unordered_map<int, int> backward;
  auto qi = q.assignment.begin();
  for (const auto& [id, lp] : p.assignment) {
    const int lq = (qi++)->second;
    auto [f, fnew] = forward.try_emplace(lp, lq);
    if (!fnew && f->second != lq) return false;
    auto [b, bnew] = backward.try_emplace(lq, lp);
    if (!bnew && b->second != lp) return false;
  }
  return true;
}

double adjusted_rand_index(const Partition& p, const Partition& q) {
  require_same_objects(p, q);
  const auto n = static_cast<long long>(p.size());
  if (n < 2) throw ValidationError("adjusted_rand_index needs at least 2 objects");

  std::map<std::pair<int, int>, long long> table;
  std::map<int, long long> rows;
  std::map<int, long long> cols;
  auto qi = q.assignment.begin();
  for (const auto& [id, lp] : p.assignment) {
    const int lq = (qi++)->second;
    ++table[{lp, lq}];
    ++rows[lp];
    ++cols[lq];
  }
  long long index = 0;
  for (const auto& [cell, count] : table) index += choose2(count);
  long long a = 0;
  for (const auto& [label, count] : rows) a += choose2(count);
  long long b = 0;
  for (const auto& [label, count] : cols) b += choose2(count);
  const long long total = choose2(n);

  // (index - a*b/T) / ((a+b)/2 - a*b/T), scaled by 2T to stay in integers.
  using Wide = __int128;
  const Wide numerator = 2 * Wide{index} * total - 2 * Wide{a} * b;
  const Wide denominator = (Wide{a} + b) * total - 2 * Wide{a} * b;
  if (denominator == 0) return 1.0;  // both all-singletons or both one block
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

Partition make_partition(const std::vector<ObjectId>& ids, const std::vector<int>& labels) {
  if (ids.size() != labels.size())
    throw ValidationError("make_partition: ids and labels differ in length");
  Partition p;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!p.assignment.emplace(ids[i], labels[i]).second)
      throw ValidationError("make_partition: duplicate object " + ids[i]);
  }
  return p;
}

}  // namespace crowdcluster
