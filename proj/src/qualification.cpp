#include "crowdcluster/qualification.hpp"

#include <map>
#include <set>

namespace crowdcluster {

void validate_curriculum(const std::vector<TrainingItem>& items) {
  std::set<std::string> ids;
  for (const auto& item : items) {
    validate_page(item.page);
    if (!ids.insert(item.page.page_id).second)
      throw ValidationError("training page " + item.page.page_id + " listed twice");
    std::set<ObjectId> shown(item.page.object_ids.begin(), item.page.object_ids.end());
    std::set<ObjectId> gold;
    for (const auto& [id, label] : item.gold.assignment) gold.insert(id);
    if (shown != gold)
      throw ValidationError("training page " + item.page.page_id +
                            ": gold does not cover exactly the page objects");
  }
}

WorkerProfile score_training(const std::vector<GroupingResponse>& responses,
                             const std::vector<TrainingItem>& items, double threshold) {
  if (items.empty()) throw ValidationError("training curriculum is empty");
  std::map<std::string, const TrainingItem*> by_page;
  for (const auto& item : items) by_page.emplace(item.page.page_id, &item);

  std::map<std::string, const GroupingResponse*> answered;
  WorkerId worker;
  for (const auto& r : responses) {
    if (worker.empty()) worker = r.worker_id;
    if (r.worker_id != worker)
      throw ValidationError("training responses come from more than one worker");
    if (!by_page.count(r.page_id))
      throw ValidationError("response for unknown training page " + r.page_id);
    if (!answered.emplace(r.page_id, &r).second)
      throw ValidationError("two responses for training page " + r.page_id);
  }
  for (const auto& item : items) {
    if (!answered.count(item.page.page_id))
      throw ValidationError("missing response for training page " + item.page.page_id);
  }

  int correct = 0;
  for (const auto& item : items) {
    const GroupingResponse& r = *answered.at(item.page.page_id);
    validate_response(r, item.page);
    if (partition_equal(partition_of(r), item.gold)) ++correct;
  }

  WorkerProfile profile;
  profile.worker_id = worker;
  profile.completed_pages = static_cast<int>(items.size());
  profile.skill = 100.0 * correct / static_cast<double>(items.size());
  profile.qualified = profile.skill >= threshold;
  return profile;
}

std::vector<TrainingItem> default_curriculum() {
  struct Spec {
    const char* hint;
    std::vector<std::pair<const char*, int>> objects;  // name, gold group
  };
  // Each page grows by one object and asks for one more distinction.
  const std::vector<Spec> specs = {
      {"Label both boots with the same color.", {{"boot-a", 0}, {"boot-b", 0}}},
      {"Label the two sandals with one color and the boot with another.",
       {{"sandal-a", 0}, {"boot-a", 1}, {"sandal-b", 0}}},
      {"Give the heels one palette color and the sneakers a second one.",
       {{"heel-a", 0}, {"sneaker-a", 1}, {"heel-b", 0}, {"sneaker-b", 1}}},
      {"Group the shoes by type: heels, sneakers and boots each get their own color.",
       {{"heel-a", 0}, {"boot-a", 1}, {"sneaker-a", 2}, {"heel-b", 0}, {"boot-b", 1}}},
      {"Pick a palette color per kind of shoe and mark every shoe of that kind with it.",
       {{"heel-a", 0},
        {"sandal-a", 1},
        {"boot-a", 2},
        {"heel-b", 0},
        {"sandal-b", 1},
        {"boot-b", 2}}},
  };

  std::vector<TrainingItem> items;
  for (std::size_t p = 0; p < specs.size(); ++p) {
    TrainingItem item;
    const std::string prefix = "train-" + std::to_string(p + 1);
    item.page.page_id = prefix;
    item.hint = specs[p].hint;
    for (const auto& [name, group] : specs[p].objects) {
      const std::string id = prefix + "-" + name;
      item.page.object_ids.push_back(id);
      item.gold.assignment.emplace(id, group);
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace crowdcluster
