#ifndef ETAP_COMMON_HPP_
#define ETAP_COMMON_HPP_

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace etap {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

using TaskId = int;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : Error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// A set of tasks, stored as strictly increasing task ids.
///
/// Ordering is lexicographic on the sorted member list, which is the
/// tie-breaking order used by group selection.
class Group {
 public:
  Group() = default;
  Group(std::initializer_list<TaskId> members);
  explicit Group(std::vector<TaskId> members);

  std::span<const TaskId> members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  bool contains(TaskId t) const;
  auto begin() const { return members_.begin(); }
  auto end() const { return members_.end(); }
  TaskId operator[](std::size_t i) const { return members_[i]; }

  /// Members joined by '+', e.g. "0+2+5".
  std::string label() const;
  static Group parse_label(const std::string& label);

  friend bool operator==(const Group&, const Group&) = default;
  friend std::strong_ordering operator<=>(const Group& a, const Group& b) {
    return a.members_ <=> b.members_;
  }

 private:
  std::vector<TaskId> members_;
};

/// Throws if any member is outside [0, n_tasks).
void check_group_in_range(const Group& group, int n_tasks);

/// Deterministic 64-bit seed derivation (splitmix64 finaliser over the inputs).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index = 0);

/// All groups over n tasks with size in [min_size, max_size], ordered by size
/// then lexicographically.
std::vector<Group> enumerate_groups(int n_tasks, int min_size, int max_size);

}  // namespace etap

#endif  // ETAP_COMMON_HPP_
