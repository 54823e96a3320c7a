#ifndef ETAP_MTL_ENGINE_HPP_
#define ETAP_MTL_ENGINE_HPP_

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "etap/common.hpp"
#include "etap/task_suite.hpp"

namespace etap {

enum class Activation { kTanh, kIdentity };

/// Which velocity is written into traces. kZero records a zero vector so the
/// affinity reduces to its no-momentum form; the optimiser itself is unchanged.
enum class VelocityMode { kJoint, kZero };

/// Shared encoder: dense layers of hidden_dims with the given activation.
/// Each task head: one linear layer from the last encoder width to a scalar.
/// Empty hidden_dims gives a linear model with no shared parameters.
struct Architecture {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  Activation activation = Activation::kTanh;
  TaskKind loss = TaskKind::kRegression;

  int encoder_width() const;
  Eigen::Index shared_size() const;
  Eigen::Index head_size() const;
};

struct ModelParams {
  VectorXd shared;
  std::map<TaskId, VectorXd> heads;
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 100;
  int batch_size = 16;
  std::vector<int> hidden_dims = {4};
  Activation activation = Activation::kTanh;
  VelocityMode velocity_mode = VelocityMode::kJoint;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Batch {
  MatrixXd features;
  VectorXd targets;
};

struct StepTrace {
  std::int64_t step = 0;
  std::vector<TaskId> tasks;          // group members, ascending
  std::vector<double> losses;         // parallel to tasks
  std::vector<VectorXd> gradients;    // parallel to tasks, d loss / d shared
  VectorXd velocity_in;               // optimiser velocity before the step
};

struct SplitLosses {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

struct TrainedModel {
  Architecture arch;
  Group group;
  ModelParams params;
  std::map<TaskId, SplitLosses> losses;
  std::vector<StepTrace> trace;  // empty unless requested
};

Architecture make_architecture(const TaskSuiteSpec& suite,
                               const TrainConfig& config);

/// Seeded init, uniform in +-1/sqrt(fan_in) per layer. Shared weights depend
/// only on the seed and each head only on (seed, task).
ModelParams init_params(const Architecture& arch, const std::vector<TaskId>& tasks,
                        std::uint64_t seed);

/// Mean batch loss: squared error or binary cross-entropy on logits.
double forward_loss(const Architecture& arch, const ModelParams& params,
                    TaskId task, const Batch& batch);

/// Network output (prediction or logit) per batch row.
VectorXd forward(const Architecture& arch, const ModelParams& params,
                 TaskId task, const MatrixXd& features);

struct LossGradient {
  double loss = 0.0;
  VectorXd shared;
  VectorXd head;
};

/// Loss with analytic gradients for both the shared encoder and the head.
LossGradient loss_and_gradient(const Architecture& arch,
                               const ModelParams& params, TaskId task,
                               const Batch& batch);

/// Gradient of the batch-mean loss with respect to the shared parameters only.
VectorXd shared_gradient(const Architecture& arch, const ModelParams& params,
                         TaskId task, const Batch& batch);

/// v' = momentum * v - lr * g, theta' = theta + v'. Returns (theta', v').
std::pair<VectorXd, VectorXd> sgd_momentum_step(const VectorXd& params,
                                                const VectorXd& velocity,
                                                const VectorXd& gradient,
                                                double learning_rate,
                                                double momentum);

/// Joint training of a group on the mean of task losses.
TrainedModel train_mtl(const Group& group, const TaskSuite& suite,
                       const TrainConfig& config, bool capture_trace = false);

/// Single-task training; identical to train_mtl on the singleton group.
TrainedModel train_stl(TaskId task, const TaskSuite& suite,
                       const TrainConfig& config);

/// Mean loss of the model over one split of a task's dataset.
double split_loss(const TrainedModel& model, const TaskSuite& suite, TaskId task,
                  Split split);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

nlohmann::json trace_to_json(const StepTrace& step);
StepTrace trace_from_json(const nlohmann::json& j);

}  // namespace etap

#endif  // ETAP_MTL_ENGINE_HPP_
