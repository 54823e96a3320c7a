#include "etap/selector.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "etap/gain_oracle.hpp"
#include "etap/io_util.hpp"

namespace etap {

namespace {

constexpr double kUncovered = -std::numeric_limits<double>::infinity();

// Candidates in canonical order with a dense gain table.
struct Table {
  int n = 0;
  std::vector<Group> groups;
  std::vector<std::vector<double>> gain;  // [candidate][task], -inf if absent
};

Table make_table(const SelectionProblem& problem) {
  problem.validate();
  if (problem.candidates.empty()) {
    throw Error("selection needs at least one candidate group");
  }
  std::vector<const Candidate*> sorted;
  for (const auto& c : problem.candidates) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const Candidate* a, const Candidate* b) { return a->group < b->group; });
  Table t;
  t.n = problem.n_tasks;
  for (const Candidate* c : sorted) {
    t.groups.push_back(c->group);
    std::vector<double> row(static_cast<std::size_t>(t.n), kUncovered);
    for (const auto& [task, g] : c->gains) row[task] = g;
    t.gain.push_back(std::move(row));
  }
  return t;
}

double objective_of(const std::vector<double>& best) {
  double total = 0.0;
  for (double b : best) {
    if (b != kUncovered) total += b;
  }
  return total;
}

SelectionResult make_result(const SelectionProblem& problem, const Table& table,
                            const std::vector<int>& chosen, double objective) {
  SelectionResult r;
  for (int c : chosen) r.chosen.push_back(table.groups[c]);
  r.objective = objective;
  r.assignment.assign(static_cast<std::size_t>(problem.n_tasks), std::nullopt);
  for (int t = 0; t < problem.n_tasks; ++t) {
    double best = kUncovered;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const double g = table.gain[chosen[k]][t];
      if (g != kUncovered && (!r.assignment[t] || g > best)) {
        best = g;
        r.assignment[t] = static_cast<int>(k);
      }
    }
  }
  return r;
}

double combination_count(int n, int budget) {
  double total = 0.0;
  double term = 1.0;
  for (int k = 1; k <= std::min(budget, n); ++k) {
    term = term * (n - k + 1) / k;
    total += term;
  }
  return total;
}

class Search {
 public:
  Search(const Table& table, int budget, bool prune, SearchStats* stats)
      : table_(table),
        budget_(budget),
        prune_(prune),
        stats_(stats),
        current_(static_cast<std::size_t>(table.n), kUncovered) {
    const auto c = table.groups.size();
    suffix_max_.assign(c + 1, std::vector<double>(table.n, kUncovered));
    for (std::size_t i = c; i-- > 0;) {
      for (int t = 0; t < table.n; ++t) {
        suffix_max_[i][t] = std::max(suffix_max_[i + 1][t], table.gain[i][t]);
      }
    }
  }

  void run() { descend(0); }

  double best_objective() const { return best_; }
  const std::vector<int>& best_set() const { return best_set_; }

 private:
  // Upper bound on any selection extending the current one with candidates
  // from index `from` onward.
  double bound(std::size_t from, double objective) const {
    double extra = 0.0;
    for (int t = 0; t < table_.n; ++t) {
      const double base = current_[t] == kUncovered ? 0.0 : current_[t];
      const double reach = suffix_max_[from][t];
      if (reach != kUncovered && reach > base) extra += reach - base;
    }
    return objective + extra;
  }

  void descend(std::size_t from) {
    for (std::size_t c = from; c < table_.groups.size(); ++c) {
      if (stats_) ++stats_->nodes;
      const std::vector<double> saved = current_;
      for (int t = 0; t < table_.n; ++t) {
        const double g = table_.gain[c][t];
        if (g != kUncovered && (current_[t] == kUncovered || g > current_[t])) {
          current_[t] = g;
        }
      }
      chosen_.push_back(static_cast<int>(c));
      const double obj = objective_of(current_);
      if (best_set_.empty() || obj > best_) {
        best_ = obj;
        best_set_ = chosen_;
      }
      if (static_cast<int>(chosen_.size()) < budget_ &&
          c + 1 < table_.groups.size()) {
        bool skip = false;
        if (prune_) {
          const double b = bound(c + 1, obj);
          // Conservative margin keeps rounding from cutting a branch the
          // exhaustive search would take.
          if (b < best_ - 1e-9 * (1.0 + std::abs(best_))) {
            skip = true;
            if (stats_ && stats_->record_pruned) {
              stats_->pruned.push_back(PrunedNode{chosen_, b});
            }
          }
        }
        if (!skip) descend(c + 1);
      }
      chosen_.pop_back();
      current_ = saved;
    }
  }

  const Table& table_;
  int budget_;
  bool prune_;
  SearchStats* stats_;
  std::vector<double> current_;
  std::vector<int> chosen_;
  std::vector<std::vector<double>> suffix_max_;
  double best_ = kUncovered;
  std::vector<int> best_set_;
};

}  // namespace

void SelectionProblem::validate() const {
  if (budget < 1) throw Error("selection budget must be at least 1");
  if (n_tasks < 1) throw Error("selection needs at least one task");
  std::set<Group> seen;
  for (const auto& c : candidates) {
    check_group_in_range(c.group, n_tasks);
    if (c.group.empty()) throw Error("candidate group is empty");
    if (!seen.insert(c.group).second) {
      throw Error("duplicate candidate group " + c.group.label());
    }
    if (c.gains.size() != c.group.size()) {
      throw Error("gains for " + c.group.label() + " are not keyed by members");
    }
    for (const auto& [t, g] : c.gains) {
      if (!c.group.contains(t)) {
        throw Error("gains for " + c.group.label() + " name non-member " +
                    std::to_string(t));
      }
      if (!std::isfinite(g)) throw Error("non-finite candidate gain");
    }
  }
}

double selection_objective(const SelectionProblem& problem,
                           const std::vector<Group>& chosen) {
  std::vector<double> best(static_cast<std::size_t>(problem.n_tasks), kUncovered);
  for (const Group& g : chosen) {
    const auto it = std::find_if(
        problem.candidates.begin(), problem.candidates.end(),
        [&](const Candidate& c) { return c.group == g; });
    if (it == problem.candidates.end()) {
      throw Error("group " + g.label() + " is not a candidate");
    }
    for (const auto& [t, v] : it->gains) {
      if (best[t] == kUncovered || v > best[t]) best[t] = v;
    }
  }
  return objective_of(best);
}

SelectionResult select_exhaustive(const SelectionProblem& problem) {
  const Table table = make_table(problem);
  if (combination_count(static_cast<int>(table.groups.size()), problem.budget) >
      kMaxExhaustiveCombinations) {
    throw Error("exhaustive selection exceeds the combination guard");
  }
  Search search(table, problem.budget, /*prune=*/false, nullptr);
  search.run();
  return make_result(problem, table, search.best_set(), search.best_objective());
}

SelectionResult select_branch_and_bound(const SelectionProblem& problem,
                                        SearchStats* stats) {
  const Table table = make_table(problem);
  Search search(table, problem.budget, /*prune=*/true, stats);
  search.run();
  return make_result(problem, table, search.best_set(), search.best_objective());
}

SelectionProblem build_problem(const EnsemblePredictor& predictor,
                               const AffinityMatrix& matrix,
                               const std::vector<Group>& candidate_groups,
                               int n_tasks, int budget) {
  SelectionProblem problem;
  problem.n_tasks = n_tasks;
  problem.budget = budget;
  for (const Group& g : candidate_groups) {
    problem.candidates.push_back(
        Candidate{g, predict(predictor, g, group_affinity(matrix, g))});
  }
  problem.validate();
  return problem;
}

std::vector<Group> candidate_universe(int n_tasks, std::uint64_t seed,
                                      int full_limit) {
  if (n_tasks <= full_limit) return enumerate_groups(n_tasks, 2, n_tasks);
  const auto total = enumerate_groups(n_tasks, 2, n_tasks).size();
  return sample_training_groups(n_tasks, static_cast<int>(total / 2),
                                {2, n_tasks}, seed);
}

void to_json(nlohmann::json& j, const SelectionResult& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.chosen) {
    groups.push_back(std::vector<TaskId>(g.begin(), g.end()));
  }
  nlohmann::json assignment = nlohmann::json::object();
  for (std::size_t t = 0; t < r.assignment.size(); ++t) {
    assignment[std::to_string(t)] =
        r.assignment[t] ? nlohmann::json(r.chosen[*r.assignment[t]].label())
                        : nlohmann::json("stl");
  }
  j = nlohmann::json{{"schema", "etap.selection/1"},
                     {"groups", groups},
                     {"objective", r.objective},
                     {"assignment", assignment}};
}

void from_json(const nlohmann::json& j, SelectionResult& r) {
  r.chosen.clear();
  for (const auto& g : j.at("groups")) {
    r.chosen.emplace_back(g.get<std::vector<TaskId>>());
  }
  r.objective = j.at("objective").get<double>();
  const auto& a = j.at("assignment");
  r.assignment.assign(a.size(), std::nullopt);
  for (const auto& [k, v] : a.items()) {
    const auto t = static_cast<std::size_t>(std::stoi(k));
    if (t >= r.assignment.size()) throw Error("assignment task out of range");
    const auto label = v.get<std::string>();
    if (label == "stl") continue;
    const Group g = Group::parse_label(label);
    const auto it = std::find(r.chosen.begin(), r.chosen.end(), g);
    if (it == r.chosen.end()) throw Error("assignment names unchosen group");
    r.assignment[t] = static_cast<int>(it - r.chosen.begin());
  }
}

std::string selection_table(const SelectionProblem& problem,
                            const SelectionResult& result) {
  std::ostringstream out;
  out << "budget " << problem.budget << ", " << problem.candidates.size()
      << " candidates, objective " << io::format_double(result.objective)
      << "\n";
  out << std::left << std::setw(6) << "task" << std::setw(16) << "group"
      << "predicted gain\n";
  for (int t = 0; t < problem.n_tasks; ++t) {
    out << std::setw(6) << t;
    if (const auto& a = result.assignment[t]) {
      const Group& g = result.chosen[*a];
      const auto it = std::find_if(
          problem.candidates.begin(), problem.candidates.end(),
          [&](const Candidate& c) { return c.group == g; });
      out << std::setw(16) << g.label()
          << io::format_double(it->gains.at(t)) << "\n";
    } else {
      out << std::setw(16) << "(single-task)" << "0\n";
    }
  }
  return out.str();
}

}  // namespace etap
