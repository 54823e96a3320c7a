#ifndef ETAP_HARNESS_HPP_
#define ETAP_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "etap/affinity.hpp"
#include "etap/ensemble.hpp"
#include "etap/gain_oracle.hpp"
#include "etap/metrics.hpp"
#include "etap/mtl_engine.hpp"
#include "etap/selector.hpp"
#include "etap/task_suite.hpp"

namespace etap {

/// Raised by a pipeline stage; carries the stage name for reporting.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  TaskSuiteSpec suite;
  TrainConfig train;
  int n_train_groups = 10;
  /// 0 means every candidate group not used for training.
  int n_heldout_groups = 0;
  std::pair<int, int> group_size_range{2, 0};  // 0 upper bound = n_tasks
  MappingKind mapping = MappingKind::kSpline;
  bool residual_enabled = true;
  int min_degree = 2;
  int max_degree = 6;
  std::vector<double> lambda_grid = log_grid(0.001, 1.0, 7);
  std::vector<int> budgets{2, 3, 4};
  std::vector<std::uint64_t> seeds{0};
  int workers = 1;
  bool write_trace = false;
  /// Measure every candidate group so selections can be compared with the
  /// exhaustive optimum of realised losses.
  bool exhaustive_reference = true;
  std::filesystem::path output_dir = "etap-out";

  void validate() const;
  std::pair<int, int> size_range() const;
};

/// Six tasks in two planted clusters; the configuration the acceptance suite
/// calls the reference suite.
ExperimentConfig reference_config();

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Suite/training configuration for one repetition seed.
TaskSuiteSpec suite_for_seed(const ExperimentConfig& config, std::uint64_t seed);
TrainConfig train_for_seed(const ExperimentConfig& config, std::uint64_t seed);
EnsembleOptions ensemble_options(const ExperimentConfig& config,
                                 std::uint64_t seed, MappingKind mapping,
                                 bool residual_enabled);

/// Directory of repetition `index` (seed `seed`) inside the output directory.
std::filesystem::path repetition_dir(const ExperimentConfig& config,
                                     std::size_t index);

struct GroupSplit {
  std::vector<Group> train;
  std::vector<Group> heldout;
};

GroupSplit split_groups(const ExperimentConfig& config, std::uint64_t seed);

// Individual pipeline stages. Each reads its inputs from the repetition
// directory and writes its outputs there.
void stage_generate(const ExperimentConfig& config, std::size_t rep);
void stage_train_affinity(const ExperimentConfig& config, std::size_t rep);
void stage_oracle(const ExperimentConfig& config, std::size_t rep);
void stage_fit(const ExperimentConfig& config, std::size_t rep);
void stage_evaluate(const ExperimentConfig& config, std::size_t rep);
void stage_select(const ExperimentConfig& config, std::size_t rep);
void stage_report(const ExperimentConfig& config, std::size_t rep);

enum class Stage { kGenerate, kTrainAffinity, kOracle, kFit, kEvaluate, kSelect, kReport };
const char* to_string(Stage stage);

/// Runs one stage for every repetition.
void run_stage(const ExperimentConfig& config, Stage stage);

/// Full pipeline for every repetition, then summary.json at the top level.
nlohmann::json run_experiment(const ExperimentConfig& config);

/// Held-out metrics for one fitted predictor against measured gains.
struct HeldoutEvaluation {
  EvalReport report;
  std::vector<double> actual;
  std::vector<double> predicted;
};

HeldoutEvaluation evaluate_predictor(const EnsemblePredictor& predictor,
                                     const AffinityMatrix& matrix,
                                     const std::vector<GainRecord>& heldout);

/// {affine, spline} x {residual off, on} on the persisted artifacts of every
/// repetition. Writes ablation.json and returns it.
nlohmann::json compare_ablations(const ExperimentConfig& config);

/// Sum of realised test losses when each task uses its assigned group, or its
/// single-task model when unassigned.
struct RealisedLoss {
  double total = 0.0;
  std::map<TaskId, double> per_task;
};

RealisedLoss realised_loss(const SelectionResult& selection,
                           const TaskSuite& suite, const TrainConfig& train,
                           StlCache& cache);

nlohmann::json summarize(const ExperimentConfig& config);

}  // namespace etap

#endif  // ETAP_HARNESS_HPP_
