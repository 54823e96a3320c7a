#ifndef ETAP_ENSEMBLE_HPP_
#define ETAP_ENSEMBLE_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etap/affinity.hpp"
#include "etap/common.hpp"
#include "etap/gain_oracle.hpp"
#include "etap/ridge.hpp"
#include "etap/spline_map.hpp"

namespace etap {

enum class MappingKind { kAffine, kSpline };

const char* to_string(MappingKind kind);
MappingKind mapping_kind_from_string(const std::string& s);

/// Bit t is 1 iff task t is in the group.
VectorXd encode_multi_hot(const Group& group, int n_tasks);
Group decode_multi_hot(const VectorXd& bits);

struct TrainingPair {
  Group group;
  TaskId task = 0;
  double affinity = 0.0;
  double gain = 0.0;
};

/// A measured training group together with its group affinity scores.
struct TrainingGroup {
  GainRecord record;
  GroupAffinity affinity;
};

std::vector<TrainingGroup> make_training_groups(
    const std::vector<GainRecord>& records, const AffinityMatrix& matrix);
std::vector<TrainingPair> flatten_pairs(const std::vector<TrainingGroup>& groups);

/// CV settings used by both stages: standardised features, default grid.
inline CvConfig default_ensemble_cv() {
  CvConfig cv;
  cv.ridge.standardize = true;
  return cv;
}

struct Stage1Options {
  MappingKind kind = MappingKind::kSpline;
  int min_degree = 2;
  int max_degree = 6;
  /// Upper bound on interior knots; negative means floor(sqrt(#groups)).
  int max_interior_knots = -1;
  CvConfig cv = default_ensemble_cv();
};

/// Global scalar map from group affinity to predicted gain.
struct Stage1Model {
  MappingKind kind = MappingKind::kSpline;
  std::optional<SplineSpec<double>> spline;
  RidgeModel<double> ridge;
  double cv_mse = 0.0;

  VectorXd features(double z) const;
  double predict(double z) const;
};

Stage1Model fit_stage1(const std::vector<TrainingPair>& pairs,
                       int n_training_groups, const Stage1Options& options);

std::map<TaskId, double> predict_stage1(const Stage1Model& stage1,
                                        const GroupAffinity& affinity);

using ResidualModels = std::vector<std::optional<RidgeModel<double>>>;

/// One ridge model per task mapping the multi-hot group code to the stage-1
/// residual; tasks seen in fewer than two training groups get none.
ResidualModels fit_residual(const std::vector<TrainingGroup>& groups,
                            const Stage1Model& stage1, int n_tasks,
                            const CvConfig& cv);

struct EnsembleOptions {
  MappingKind mapping = MappingKind::kSpline;
  bool residual_enabled = true;
  int min_degree = 2;
  int max_degree = 6;
  int max_interior_knots = -1;
  CvConfig cv = default_ensemble_cv();
};

struct EnsemblePredictor {
  int n_tasks = 0;
  MappingKind mapping = MappingKind::kSpline;
  bool residual_enabled = true;
  Stage1Model stage1;
  ResidualModels residual_models;  // empty when residual is disabled
  std::vector<std::string> warnings;
};

EnsemblePredictor fit_ensemble(const std::vector<TrainingGroup>& groups,
                               int n_tasks, const EnsembleOptions& options);

struct PredictionParts {
  std::map<TaskId, double> stage1;
  std::map<TaskId, double> residual;
  std::map<TaskId, double> final;
};

PredictionParts predict_parts(const EnsemblePredictor& predictor,
                              const Group& group,
                              const GroupAffinity& affinity);

/// Final per-member gain predictions for a group of at least two tasks.
std::map<TaskId, double> predict(const EnsemblePredictor& predictor,
                                 const Group& group,
                                 const GroupAffinity& affinity);

void to_json(nlohmann::json& j, const EnsemblePredictor& p);
void from_json(const nlohmann::json& j, EnsemblePredictor& p);

}  // namespace etap

#endif  // ETAP_ENSEMBLE_HPP_
