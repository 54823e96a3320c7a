#ifndef ETAP_AFFINITY_HPP_
#define ETAP_AFFINITY_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etap/common.hpp"
#include "etap/mtl_engine.hpp"

namespace etap {

/// Steps whose target-task loss is at or below this are skipped.
inline constexpr double kLossGuard = 1e-12;

/// Per-step affinity from task i to task j:
///   g_j . (lr * g_i - momentum * v_prev) / loss_j
/// std::nullopt when loss_j <= kLossGuard.
template <typename DerivedI, typename DerivedJ, typename DerivedV>
std::optional<typename DerivedI::Scalar> step_affinity(
    const Eigen::MatrixBase<DerivedI>& grad_i,
    const Eigen::MatrixBase<DerivedJ>& grad_j,
    typename DerivedI::Scalar loss_j, typename DerivedI::Scalar learning_rate,
    typename DerivedI::Scalar momentum,
    const Eigen::MatrixBase<DerivedV>& velocity_prev) {
  if (grad_i.size() != grad_j.size() || grad_i.size() != velocity_prev.size()) {
    throw Error("step_affinity: vector lengths differ");
  }
  if (loss_j <= kLossGuard) return std::nullopt;
  return grad_j.dot(learning_rate * grad_i - momentum * velocity_prev) / loss_j;
}

struct AffinityMatrix {
  int n = 0;
  MatrixXd values;         // (i, j) = time-averaged affinity i -> j
  Eigen::MatrixXi steps_used;

  double operator()(TaskId from, TaskId to) const { return values(from, to); }
};

struct GroupAffinity {
  Group group;
  std::map<TaskId, double> scores;  // target task -> mean affinity from others
};

/// Time-averaged pairwise affinities over every step of a joint-training
/// trace. The trace must contain tasks 0..n-1 at every step.
AffinityMatrix pairwise_affinity(const std::vector<StepTrace>& trace,
                                 double learning_rate, double momentum);

/// Mean of pairwise affinities from the other members toward each member.
GroupAffinity group_affinity(const AffinityMatrix& matrix, const Group& group);

void to_json(nlohmann::json& j, const AffinityMatrix& m);
void from_json(const nlohmann::json& j, AffinityMatrix& m);
std::string affinity_to_csv(const AffinityMatrix& m);

}  // namespace etap

#endif  // ETAP_AFFINITY_HPP_
