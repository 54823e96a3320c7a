#ifndef ETAP_TASK_SUITE_HPP_
#define ETAP_TASK_SUITE_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "etap/common.hpp"

namespace etap {

enum class TaskKind { kRegression, kBinary };
enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

const char* to_string(TaskKind kind);
const char* to_string(Split split);
TaskKind task_kind_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct SplitSizes {
  int train = 64;
  int val = 32;
  int test = 256;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

struct TaskSuiteSpec {
  int n_tasks = 6;
  int input_dim = 8;
  int n_clusters = 2;
  /// cluster index per task; empty means round-robin over clusters.
  std::vector<int> cluster_assignment;
  double within_cluster_similarity = 0.9;
  double label_noise_std = 0.5;
  SplitSizes samples;
  std::uint64_t seed = 0;
  TaskKind kind = TaskKind::kRegression;

  /// Throws Error describing the first violated constraint.
  void validate() const;
  int cluster_of(TaskId t) const;
  friend bool operator==(const TaskSuiteSpec&, const TaskSuiteSpec&) = default;
};

struct TaskDataset {
  MatrixXd features;           // samples x input_dim
  VectorXd targets;            // samples
  std::vector<Split> split;    // one label per row

  std::vector<int> rows(Split which) const;
  int count(Split which) const;
};

/// Generated suite with the planted weights kept for inspection.
struct TaskSuite {
  TaskSuiteSpec spec;
  std::vector<VectorXd> cluster_weights;  // per cluster
  std::vector<VectorXd> task_weights;     // per task, w_c + delta_t
  std::vector<TaskDataset> tasks;         // indexed by TaskId

  int n_tasks() const { return static_cast<int>(tasks.size()); }
  const TaskDataset& task(TaskId t) const { return tasks.at(t); }
};

/// Deterministic synthetic suite: each task's target is (w_c + delta_t).x plus
/// Gaussian noise, with |delta_t| = (1 - similarity) |w_c|.
TaskSuite generate_suite(const TaskSuiteSpec& spec);

/// Noise-free target of task t for the given feature rows.
VectorXd planted_response(const TaskSuite& suite, TaskId t,
                          const MatrixXd& features);

void to_json(nlohmann::json& j, const TaskSuiteSpec& spec);
void from_json(const nlohmann::json& j, TaskSuiteSpec& spec);

/// Writes suite.json plus one task_<t>.csv per task into dir.
void export_suite(const TaskSuite& suite, const std::filesystem::path& dir);
/// Reads a suite written by export_suite. Planted weights are regenerated from
/// the settings sidecar; the CSV rows are authoritative for the datasets.
TaskSuite import_suite(const std::filesystem::path& dir);

}  // namespace etap

#endif  // ETAP_TASK_SUITE_HPP_
