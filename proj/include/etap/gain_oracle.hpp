#ifndef ETAP_GAIN_ORACLE_HPP_
#define ETAP_GAIN_ORACLE_HPP_

#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "etap/common.hpp"
#include "etap/mtl_engine.hpp"
#include "etap/task_suite.hpp"

namespace etap {

struct GainRecord {
  Group group;
  std::map<TaskId, double> gains;
  std::map<TaskId, double> stl_losses;
  std::map<TaskId, double> mtl_losses;
  std::uint64_t seed = 0;
};

/// (stl - mtl) / stl. Positive means joint training lowered the loss.
double relative_gain(double stl_loss, double mtl_loss);

/// Single-task test losses keyed by (task, seed). The first caller for a key
/// trains; concurrent callers for the same key wait on that result.
class StlCache {
 public:
  StlCache(const TaskSuite& suite, TrainConfig config);

  double test_loss(TaskId task, std::uint64_t seed);
  std::size_t size() const;
  /// Number of single-task trainings actually run.
  std::size_t trainings() const;

 private:
  const TaskSuite& suite_;
  TrainConfig config_;
  mutable std::mutex mutex_;
  std::map<std::pair<TaskId, std::uint64_t>, std::shared_future<double>> entries_;
  std::size_t trainings_ = 0;
};

/// Trains the group jointly and compares each member's test loss with its
/// single-task test loss under the same seed.
GainRecord measure_gain(const Group& group, const TaskSuite& suite,
                        const TrainConfig& config, StlCache& cache);
GainRecord measure_gain(const Group& group, const TaskSuite& suite,
                        const TrainConfig& config);

struct GainBatch {
  std::vector<GainRecord> records;  // successful groups, input order
  std::vector<std::pair<Group, std::string>> errors;
};

GainBatch measure_gains_batch(const std::vector<Group>& groups,
                              const TaskSuite& suite, const TrainConfig& config,
                              int parallelism, StlCache& cache);
GainBatch measure_gains_batch(const std::vector<Group>& groups,
                              const TaskSuite& suite, const TrainConfig& config,
                              int parallelism);

/// Uniform sample without replacement from the groups with size in
/// [min_size, max_size], returned in canonical (size, lexicographic) order.
std::vector<Group> sample_training_groups(int n_tasks, int count,
                                          std::pair<int, int> size_range,
                                          std::uint64_t seed);

void to_json(nlohmann::json& j, const GainRecord& r);
void from_json(const nlohmann::json& j, GainRecord& r);
std::string gains_to_csv(const std::vector<GainRecord>& records);

}  // namespace etap

#endif  // ETAP_GAIN_ORACLE_HPP_
