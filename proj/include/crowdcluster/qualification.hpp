#pragma once

#include <string>
#include <vector>

#include "crowdcluster/core.hpp"

namespace crowdcluster {

inline constexpr double kDefaultSkillThreshold = 80.0;

struct TrainingItem {
  Page page;
  Partition gold;
  std::string hint;
};

struct WorkerProfile {
  WorkerId worker_id;
  double skill = 0.0;  // 0..100
  bool qualified = false;
  int completed_pages = 0;

  bool operator==(const WorkerProfile&) const = default;
};

// skill = 100 * (pages grouped exactly like gold, up to relabeling) / pages.
WorkerProfile score_training(const std::vector<GroupingResponse>& responses,
                             const std::vector<TrainingItem>& items,
                             double threshold = kDefaultSkillThreshold);

// Five pages of 2, 3, 4, 5 and 6 objects with unambiguous gold groupings.
std::vector<TrainingItem> default_curriculum();

void validate_curriculum(const std::vector<TrainingItem>& items);

}  // namespace crowdcluster
