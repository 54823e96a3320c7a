#include "etap/gain_oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <random>
#include <thread>

#include "etap/io_util.hpp"

namespace etap {

double relative_gain(double stl_loss, double mtl_loss) {
  if (!(stl_loss > 0.0)) {
    throw Error("single-task loss must be positive, got " +
                io::format_double(stl_loss));
  }
  return (stl_loss - mtl_loss) / stl_loss;
}

StlCache::StlCache(const TaskSuite& suite, TrainConfig config)
    : suite_(suite), config_(std::move(config)) {}

double StlCache::test_loss(TaskId task, std::uint64_t seed) {
  const auto key = std::make_pair(task, seed);
  std::promise<double> promise;
  std::shared_future<double> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      future = promise.get_future().share();
      entries_.emplace(key, future);
      owner = true;
      ++trainings_;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      TrainConfig cfg = config_;
      cfg.seed = seed;
      promise.set_value(train_stl(task, suite_, cfg).losses.at(task).test);
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

std::size_t StlCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t StlCache::trainings() const {
  std::lock_guard lock(mutex_);
  return trainings_;
}

GainRecord measure_gain(const Group& group, const TaskSuite& suite,
                        const TrainConfig& config, StlCache& cache) {
  if (group.size() < 2) {
    throw Error("gain is undefined for groups with fewer than two tasks");
  }
  check_group_in_range(group, suite.n_tasks());
  GainRecord rec;
  rec.group = group;
  rec.seed = config.seed;
  const TrainedModel mtl = train_mtl(group, suite, config);
  for (TaskId t : group) {
    const double stl = cache.test_loss(t, config.seed);
    if (!(stl > 0.0)) {
      throw Error("task " + std::to_string(t) +
                  " has a non-positive single-task test loss");
    }
    const double joint = mtl.losses.at(t).test;
    rec.stl_losses[t] = stl;
    rec.mtl_losses[t] = joint;
    rec.gains[t] = relative_gain(stl, joint);
  }
  return rec;
}

GainRecord measure_gain(const Group& group, const TaskSuite& suite,
                        const TrainConfig& config) {
  StlCache cache(suite, config);
  return measure_gain(group, suite, config, cache);
}

GainBatch measure_gains_batch(const std::vector<Group>& groups,
                              const TaskSuite& suite, const TrainConfig& config,
                              int parallelism, StlCache& cache) {
  std::vector<std::optional<GainRecord>> results(groups.size());
  std::vector<std::string> failures(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < groups.size(); i = next++) {
      try {
        results[i] = measure_gain(groups[i], suite, config, cache);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(parallelism,
                                                static_cast<int>(groups.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  GainBatch out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (results[i]) {
      out.records.push_back(std::move(*results[i]));
    } else {
      out.errors.emplace_back(groups[i], failures[i]);
    }
  }
  return out;
}

GainBatch measure_gains_batch(const std::vector<Group>& groups,
                              const TaskSuite& suite, const TrainConfig& config,
                              int parallelism) {
  StlCache cache(suite, config);
  return measure_gains_batch(groups, suite, config, parallelism, cache);
}

std::vector<Group> sample_training_groups(int n_tasks, int count,
                                          std::pair<int, int> size_range,
                                          std::uint64_t seed) {
  auto [lo, hi] = size_range;
  if (lo < 1 || hi < lo || hi > n_tasks) {
    throw Error("invalid group size range");
  }
  auto all = enumerate_groups(n_tasks, lo, hi);
  if (count < 0 || static_cast<std::size_t>(count) > all.size()) {
    throw Error("cannot sample " + std::to_string(count) + " distinct groups; "
                "only " + std::to_string(all.size()) + " exist");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  std::vector<Group> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

namespace {

nlohmann::json task_map(const std::map<TaskId, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [t, v] : m) j[std::to_string(t)] = v;
  return j;
}

std::map<TaskId, double> task_map_from(const nlohmann::json& j) {
  std::map<TaskId, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<double>();
  return m;
}

}  // namespace

void to_json(nlohmann::json& j, const GainRecord& r) {
  j = nlohmann::json{{"group", std::vector<TaskId>(r.group.begin(), r.group.end())},
                     {"gains", task_map(r.gains)},
                     {"stl_losses", task_map(r.stl_losses)},
                     {"mtl_losses", task_map(r.mtl_losses)},
                     {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, GainRecord& r) {
  r.group = Group(j.at("group").get<std::vector<TaskId>>());
  r.gains = task_map_from(j.at("gains"));
  r.stl_losses = task_map_from(j.at("stl_losses"));
  r.mtl_losses = task_map_from(j.at("mtl_losses"));
  r.seed = j.at("seed").get<std::uint64_t>();
  for (TaskId t : r.group) {
    if (!r.gains.count(t) || !r.stl_losses.count(t) || !r.mtl_losses.count(t)) {
      throw Error("gain record for " + r.group.label() + " misses task " +
                  std::to_string(t));
    }
  }
  if (r.gains.size() != r.group.size()) {
    throw Error("gain record keys do not match its group");
  }
}

std::string gains_to_csv(const std::vector<GainRecord>& records) {
  std::string csv = "group,task,gain,stl_loss,mtl_loss\n";
  for (const auto& r : records) {
    for (TaskId t : r.group) {
      csv += r.group.label() + "," + std::to_string(t) + "," +
             io::format_double(r.gains.at(t)) + "," +
             io::format_double(r.stl_losses.at(t)) + "," +
             io::format_double(r.mtl_losses.at(t)) + "\n";
    }
  }
  return csv;
}

}  // namespace etap
