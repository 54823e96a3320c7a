#ifndef ETAP_SELECTOR_HPP_
#define ETAP_SELECTOR_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etap/affinity.hpp"
#include "etap/common.hpp"
#include "etap/ensemble.hpp"

namespace etap {

struct Candidate {
  Group group;
  std::map<TaskId, double> gains;
};

struct SelectionProblem {
  int n_tasks = 0;
  std::vector<Candidate> candidates;
  int budget = 1;

  /// Throws on duplicate groups, gains not keyed by members, or budget < 1.
  void validate() const;
};

struct SelectionResult {
  std::vector<Group> chosen;  // ascending
  double objective = 0.0;
  /// Index into `chosen` serving each task; nullopt means single-task fallback.
  std::vector<std::optional<int>> assignment;
};

/// Sum over tasks of the best gain among chosen groups containing the task,
/// counting uncovered tasks as 0.
double selection_objective(const SelectionProblem& problem,
                           const std::vector<Group>& chosen);

inline constexpr double kMaxExhaustiveCombinations = 1e7;

/// Enumerates every selection of 1..B candidates. Ties go to the
/// lexicographically smallest sorted group list.
SelectionResult select_exhaustive(const SelectionProblem& problem);

struct PrunedNode {
  std::vector<int> chosen;  // candidate indices in canonical order
  double bound = 0.0;
};

struct SearchStats {
  std::int64_t nodes = 0;
  std::vector<PrunedNode> pruned;  // filled only when record_pruned is set
  bool record_pruned = false;
};

/// Depth-first branch-and-bound with the same optimum and tie rule as
/// select_exhaustive.
SelectionResult select_branch_and_bound(const SelectionProblem& problem,
                                        SearchStats* stats = nullptr);

/// Candidate gains filled in by the fitted predictor.
SelectionProblem build_problem(const EnsemblePredictor& predictor,
                               const AffinityMatrix& matrix,
                               const std::vector<Group>& candidate_groups,
                               int n_tasks, int budget);

/// All groups of size 2..n, or a seeded half of them when n exceeds
/// full_limit.
std::vector<Group> candidate_universe(int n_tasks, std::uint64_t seed,
                                      int full_limit = 10);

void to_json(nlohmann::json& j, const SelectionResult& r);
void from_json(const nlohmann::json& j, SelectionResult& r);
std::string selection_table(const SelectionProblem& problem,
                            const SelectionResult& result);

}  // namespace etap

#endif  // ETAP_SELECTOR_HPP_
