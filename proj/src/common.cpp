#include "etap/common.hpp"

#include <algorithm>
#include <sstream>

namespace etap {

Group::Group(std::initializer_list<TaskId> members)
    : Group(std::vector<TaskId>(members)) {}

Group::Group(std::vector<TaskId> members) : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  if (std::adjacent_find(members_.begin(), members_.end()) != members_.end()) {
    throw Error("group contains a duplicate task id");
  }
  if (!members_.empty() && members_.front() < 0) {
    throw Error("group contains a negative task id");
  }
}

bool Group::contains(TaskId t) const {
  return std::binary_search(members_.begin(), members_.end(), t);
}

std::string Group::label() const {
  std::string out;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (i > 0) out += '+';
    out += std::to_string(members_[i]);
  }
  return out;
}

Group Group::parse_label(const std::string& label) {
  std::vector<TaskId> ids;
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, '+')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      throw Error("malformed group label: " + label);
    }
    if (used != part.size()) throw Error("malformed group label: " + label);
    ids.push_back(v);
  }
  return Group(std::move(ids));
}

void check_group_in_range(const Group& group, int n_tasks) {
  for (TaskId t : group) {
    if (t < 0 || t >= n_tasks) {
      throw Error("task id " + std::to_string(t) + " out of range for " +
                  std::to_string(n_tasks) + " tasks");
    }
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void enumerate_rec(int n, int size, int start, std::vector<TaskId>& cur,
                   std::vector<Group>& out) {
  if (static_cast<int>(cur.size()) == size) {
    out.emplace_back(cur);
    return;
  }
  for (int t = start; t < n; ++t) {
    cur.push_back(t);
    enumerate_rec(n, size, t + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

std::vector<Group> enumerate_groups(int n_tasks, int min_size, int max_size) {
  if (n_tasks > 24) throw Error("group enumeration limited to 24 tasks");
  std::vector<Group> out;
  std::vector<TaskId> cur;
  for (int s = std::max(min_size, 1); s <= std::min(max_size, n_tasks); ++s) {
    enumerate_rec(n_tasks, s, 0, cur, out);
  }
  return out;
}

}  // namespace etap
