#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdcluster {

// Error taxonomy shared by every module. The service and CLI map these onto
// HTTP statuses and exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class NotFoundError : public Error {
 public:
  using Error::Error;
};
class ConflictError : public Error {
 public:
  using Error::Error;
};
class ProtocolError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};

using ObjectId = std::string;
using WorkerId = std::string;

struct ObjectRecord {
  ObjectId object_id;
  std::string payload_uri;
  std::map<std::string, std::string> metadata;
};

// One unit of crowd work: M objects shown together.
struct Page {
  std::string page_id;
  std::vector<ObjectId> object_ids;

  bool operator==(const Page&) const = default;
};

// A worker's grouping of one page. Labels are palette indices and carry no
// meaning beyond equality.
struct GroupingResponse {
  std::string page_id;
  WorkerId worker_id;
  std::map<ObjectId, int> groups;

  bool operator==(const GroupingResponse&) const = default;
};

// Same/different observation for one unordered pair; a < b.
struct PairLabel {
  ObjectId a;
  ObjectId b;
  WorkerId worker_id;
  std::string page_id;
  bool same = false;

  bool operator==(const PairLabel&) const = default;
};

// Object -> cluster index.
struct Partition {
  std::map<ObjectId, int> assignment;

  bool operator==(const Partition&) const = default;

  std::size_t size() const { return assignment.size(); }

  // Relabels clusters contiguously from 0 in order of first appearance
  // under the lexicographic object order.
  Partition normalized() const;

  int cluster_count() const;
};

void validate_objects(const std::vector<ObjectRecord>& objects);
void validate_page(const Page& page);

// Throws ValidationError naming missing and extra ids.
void validate_response(const GroupingResponse& response, const Page& page);

// Expands a grouping into C(M,2) canonical pair labels, sorted by (a, b).
std::vector<PairLabel> canonical_pairs(const GroupingResponse& response,
                                       const Page& page);

// Page implied by a response's own keys, with objects in lexicographic order.
Page page_from_response(const GroupingResponse& response);

Partition partition_of(const GroupingResponse& response);

bool partition_equal(const Partition& p, const Partition& q);

double adjusted_rand_index(const Partition& p, const Partition& q);

// Partition built from a flat label vector, objects named by the ids given.
Partition make_partition(const std::vector<ObjectId>& ids,
                         const std::vector<int>& labels);

}  // namespace crowdcluster
