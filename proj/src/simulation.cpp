#include "crowdcluster/simulation.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "crowdcluster/rng.hpp"

namespace crowdcluster {

namespace {

std::string padded(const std::string& prefix, int index, int width) {
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int width_for(int count) { return std::max(4, static_cast<int>(std::to_string(count).size())); }

// Palette indices in order of first appearance on the page.
std::map<ObjectId, int> to_palette(const Page& page, const std::map<ObjectId, long long>& keys) {
  std::map<long long, int> palette;
  std::map<ObjectId, int> out;
  for (const auto& id : page.object_ids) {
    const long long key = keys.at(id);
    auto [it, inserted] = palette.try_emplace(key, static_cast<int>(palette.size()));
    out[id] = it->second;
  }
  return out;
}

int truth_of(const WorldSpec& world, const ObjectId& id) {
  auto it = world.truth.assignment.find(id);
  if (it == world.truth.assignment.end())
    throw ValidationError("object " + id + " is not part of the simulated world");
  return it->second;
}

ObjectId faithful_pick(const IntruderTask& task, const WorldSpec& world, std::mt19937_64& rng) {
  std::map<int, int> counts;
  for (const auto& id : task.shown_objects) ++counts[truth_of(world, id)];
  int majority = counts.begin()->first;
  for (const auto& [cluster, count] : counts) {
    if (count > counts[majority]) majority = cluster;
  }
  std::vector<ObjectId> odd;
  for (const auto& id : task.shown_objects) {
    if (truth_of(world, id) != majority) odd.push_back(id);
  }
  const auto& pool = odd.empty() ? task.shown_objects : odd;
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

}  // namespace

std::string to_string(WorkerKind kind) {
  switch (kind) {
    case WorkerKind::kFaithful: return "faithful";
    case WorkerKind::kNoisy: return "noisy";
    case WorkerKind::kSplitter: return "splitter";
    case WorkerKind::kSpammer: return "spammer";
  }
  return "unknown";
}

WorkerKind worker_kind_from_string(const std::string& text) {
  if (text == "faithful") return WorkerKind::kFaithful;
  if (text == "noisy") return WorkerKind::kNoisy;
  if (text == "splitter") return WorkerKind::kSplitter;
  if (text == "spammer") return WorkerKind::kSpammer;
  throw ValidationError("unknown worker kind '" + text + "'");
}

void SimWorker::validate() const {
  if (worker_id.empty()) throw ValidationError("simulated worker needs an id");
  if (!(p_flip >= 0.0 && p_flip <= 1.0))
    throw ValidationError("worker " + worker_id + ": p_flip must be in [0, 1]");
  if (kind == WorkerKind::kFaithful && p_flip != 0.0)
    throw ValidationError("worker " + worker_id + ": faithful workers have p_flip 0");
}

WorldSpec make_world(int n, int k_true, int attribute_count, std::uint64_t seed) {
  if (n < 1) throw ValidationError("world needs at least one object");
  if (k_true < 1) throw ValidationError("world needs at least one planted cluster");
  if (k_true > n) throw ValidationError("K_true exceeds N");
  if (attribute_count < 1) throw ValidationError("attribute_count must be at least 1");

  WorldSpec world;
  world.N = n;
  world.K_true = k_true;
  world.attribute_count = attribute_count;
  world.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % k_true;
  std::shuffle(labels.begin(), labels.end(), rng);
  std::uniform_int_distribution<int> attr(0, attribute_count - 1);
  const int width = width_for(n);
  for (int i = 0; i < n; ++i) {
    const ObjectId id = padded("obj", i, width);
    world.object_ids.push_back(id);
    world.truth.assignment.emplace(id, labels[i]);
    world.attributes.emplace(id, attr(rng));
  }
  return world;
}

GroupingResponse simulate_grouping(const SimWorker& worker, const Page& page,
                                   const WorldSpec& world) {
  std::mt19937_64 rng(derive_seed(worker.seed, stable_hash(page.page_id)));
  const int m = static_cast<int>(page.object_ids.size());
  std::map<ObjectId, long long> keys;
  for (const auto& id : page.object_ids) {
    const int cluster = truth_of(world, id);
    switch (worker.kind) {
      case WorkerKind::kSplitter:
        keys[id] = static_cast<long long>(cluster) * world.attribute_count +
                   world.attributes.at(id);
        break;
      case WorkerKind::kSpammer:
        keys[id] = std::uniform_int_distribution<int>(0, m - 1)(rng);
        break;
      default:
        keys[id] = cluster;
    }
  }
  GroupingResponse r{page.page_id, worker.worker_id, to_palette(page, keys)};
  if (worker.kind == WorkerKind::kNoisy) {
    std::bernoulli_distribution flip(worker.p_flip);
    std::uniform_int_distribution<int> color(0, m - 1);
    for (const auto& id : page.object_ids) {
      // Draw both so the stream does not depend on earlier outcomes.
      const bool flipped = flip(rng);
      const int label = color(rng);
      if (flipped) r.groups[id] = label;
    }
  }
  return r;
}

IntruderResponse simulate_intruder_pick(const SimWorker& worker, const IntruderTask& task,
                                        const WorldSpec& world) {
  std::mt19937_64 rng(derive_seed(worker.seed, stable_hash(task.task_id)));
  auto uniform = [&] {
    return task.shown_objects[std::uniform_int_distribution<std::size_t>(
        0, task.shown_objects.size() - 1)(rng)];
  };
  ObjectId chosen;
  switch (worker.kind) {
    case WorkerKind::kSpammer: chosen = uniform(); break;
    case WorkerKind::kNoisy: {
      const bool random_pick = std::bernoulli_distribution(worker.p_flip)(rng);
      chosen = random_pick ? uniform() : faithful_pick(task, world, rng);
      break;
    }
    default: chosen = faithful_pick(task, world, rng);
  }
  return {task.task_id, worker.worker_id, chosen};
}

std::vector<SimWorker> make_crowd(const std::string& prefix, WorkerKind kind, int count,
                                  double p_flip, std::uint64_t seed) {
  std::vector<SimWorker> out;
  for (int i = 0; i < count; ++i) {
    SimWorker w{padded(prefix, i, 4), kind, kind == WorkerKind::kFaithful ? 0.0 : p_flip,
                derive_seed(seed, stable_hash(padded(prefix, i, 4)))};
    w.validate();
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::size_t> assign_workers(const std::string& page_id, std::size_t worker_count,
                                        int replication, std::uint64_t seed) {
  if (worker_count < static_cast<std::size_t>(replication))
    throw ValidationError("need at least R=" + std::to_string(replication) +
                          " distinct workers, have " + std::to_string(worker_count));
  std::vector<std::size_t> all(worker_count);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> chosen;
  std::mt19937_64 rng(derive_seed(seed, stable_hash(page_id)));
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), replication, rng);
  return chosen;
}

std::vector<GroupingResponse> simulate_responses(const SamplingPlan& plan,
                                                 const std::vector<SimWorker>& workers,
                                                 const WorldSpec& world, std::uint64_t seed) {
  for (const auto& w : workers) w.validate();
  const auto pages = static_cast<long>(plan.pages.size());
  std::vector<std::vector<GroupingResponse>> per_page(plan.pages.size());
  // Pages are independent; results land in page order regardless of threads.
#pragma omp parallel for schedule(static)
  for (long p = 0; p < pages; ++p) {
    const Page& page = plan.pages[static_cast<std::size_t>(p)];
    for (std::size_t w : assign_workers(page.page_id, workers.size(), plan.R, seed))
      per_page[static_cast<std::size_t>(p)].push_back(simulate_grouping(workers[w], page, world));
  }
  std::vector<GroupingResponse> out;
  out.reserve(plan.pages.size() * static_cast<std::size_t>(plan.R));
  for (auto& list : per_page)
    for (auto& r : list) out.push_back(std::move(r));
  return out;
}

PipelineMetrics run_pipeline(const WorldSpec& world, const std::vector<SimWorker>& workers,
                             const PipelineOptions& options) {
  PipelineMetrics metrics;
  metrics.V = options.V ? *options.V : occurrences_per_object(world.N, options.M);
  const SamplingPlan plan =
      build_plan(world.object_ids, options.M, metrics.V, options.R, options.plan_seed);
  metrics.pages = static_cast<int>(plan.pages.size());

  const auto responses = simulate_responses(plan, workers, world, options.plan_seed);
  std::map<std::string, const Page*> page_by_id;
  for (const auto& page : plan.pages) page_by_id.emplace(page.page_id, &page);
  std::vector<PairLabel> labels;
  for (const auto& r : responses) {
    auto pairs = canonical_pairs(r, *page_by_id.at(r.page_id));
    labels.insert(labels.end(), pairs.begin(), pairs.end());
  }
  metrics.pair_count = static_cast<long long>(labels.size());

  const IndexedEvidence evidence = index_evidence(labels, world.object_ids);
  const PairSet pair_set(evidence.pairs, static_cast<int>(evidence.object_ids.size()),
                         static_cast<int>(evidence.worker_ids.size()));
  const FitResult fitted = fit(pair_set, options.aggregation);
  metrics.sweep_count = static_cast<int>(fitted.diagnostics.sweeps.size());
  metrics.objective = fitted.state.objective;
  metrics.clustering = summarize(fitted.state, evidence.object_ids);
  metrics.cluster_count = metrics.clustering.cluster_count;
  metrics.ari = world.N >= 2 ? adjusted_rand_index(metrics.clustering.assignment, world.truth)
                             : 1.0;

  if (metrics.cluster_count < 2) {
    metrics.diagnostics.push_back("intruder evaluation skipped: fewer than 2 clusters");
    return metrics;
  }
  IntruderGeneration generated;
  try {
    generated = generate_intruder_tasks(metrics.clustering, options.display_size,
                                        options.tasks_per_cluster, options.evaluation_seed);
  } catch (const ProtocolError& e) {
    metrics.diagnostics.push_back(std::string("intruder evaluation skipped: ") + e.what());
    return metrics;
  }
  metrics.diagnostics.insert(metrics.diagnostics.end(), generated.diagnostics.begin(),
                             generated.diagnostics.end());
  const std::vector<SimWorker> evaluators =
      options.evaluators.empty()
          ? make_crowd("eval", WorkerKind::kFaithful, options.evaluation_replication, 0.0,
                       options.evaluation_seed)
          : options.evaluators;
  std::vector<IntruderResponse> picks;
  for (const auto& task : generated.tasks) {
    for (std::size_t e : assign_workers(task.task_id, evaluators.size(),
                                        options.evaluation_replication, options.evaluation_seed))
      picks.push_back(simulate_intruder_pick(evaluators[e], task, world));
  }
  metrics.report = score_intruder(generated.tasks, picks);
  metrics.intruder_quality = metrics.report->overall_quality;
  metrics.intruder_responses = metrics.report->total;
  return metrics;
}

}  // namespace crowdcluster
