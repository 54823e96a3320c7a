#include "etap/affinity.hpp"

#include "etap/io_util.hpp"

namespace etap {

AffinityMatrix pairwise_affinity(const std::vector<StepTrace>& trace,
                                 double learning_rate, double momentum) {
  if (trace.empty()) throw Error("pairwise_affinity: empty trace");
  const int n = static_cast<int>(trace.front().tasks.size());
  for (const auto& step : trace) {
    if (static_cast<int>(step.tasks.size()) != n) {
      throw Error("pairwise_affinity: task set changes across steps");
    }
    for (int t = 0; t < n; ++t) {
      if (step.tasks[t] != t) {
        throw Error("pairwise_affinity: trace must cover tasks 0..n-1");
      }
    }
  }

  AffinityMatrix out;
  out.n = n;
  MatrixXd sums = MatrixXd::Zero(n, n);
  out.steps_used = Eigen::MatrixXi::Zero(n, n);
  const Eigen::Index p = trace.front().velocity_in.size();
  MatrixXd grads(p, n);
  MatrixXd updates(p, n);
  for (const auto& step : trace) {
    for (int t = 0; t < n; ++t) {
      if (step.gradients[t].size() != p) {
        throw Error("pairwise_affinity: gradient length mismatch");
      }
      grads.col(t) = step.gradients[t];
      updates.col(t) = learning_rate * step.gradients[t] -
                       momentum * step.velocity_in;
    }
    // dots(j, i) = g_j . u_i
    const MatrixXd dots = grads.transpose() * updates;
    for (int j = 0; j < n; ++j) {
      const double loss_j = step.losses[j];
      if (loss_j <= kLossGuard) continue;
      for (int i = 0; i < n; ++i) {
        sums(i, j) += dots(j, i) / loss_j;
        out.steps_used(i, j) += 1;
      }
    }
  }

  out.values.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (out.steps_used(i, j) == 0) {
        throw Error("pairwise_affinity: every step skipped for pair (" +
                    std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      out.values(i, j) = sums(i, j) / out.steps_used(i, j);
    }
  }
  return out;
}

GroupAffinity group_affinity(const AffinityMatrix& matrix, const Group& group) {
  if (group.size() < 2) {
    throw Error("group_affinity needs at least two tasks, got " +
                std::to_string(group.size()));
  }
  check_group_in_range(group, matrix.n);
  GroupAffinity out;
  out.group = group;
  const double others = static_cast<double>(group.size() - 1);
  for (TaskId t : group) {
    double total = 0.0;
    for (TaskId s : group) {
      if (s != t) total += matrix(s, t);
    }
    out.scores[t] = total / others;
  }
  return out;
}

void to_json(nlohmann::json& j, const AffinityMatrix& m) {
  std::vector<double> values;
  std::vector<int> steps;
  for (int i = 0; i < m.n; ++i) {
    for (int k = 0; k < m.n; ++k) {
      values.push_back(m.values(i, k));
      steps.push_back(m.steps_used(i, k));
    }
  }
  j = nlohmann::json{{"schema", "etap.affinity/1"},
                     {"n", m.n},
                     {"values", values},
                     {"steps_used", steps}};
}

void from_json(const nlohmann::json& j, AffinityMatrix& m) {
  m.n = j.at("n").get<int>();
  const auto values = j.at("values").get<std::vector<double>>();
  const auto steps = j.at("steps_used").get<std::vector<int>>();
  const auto nn = static_cast<std::size_t>(m.n) * m.n;
  if (values.size() != nn || steps.size() != nn) {
    throw Error("affinity JSON: expected n*n values");
  }
  m.values.resize(m.n, m.n);
  m.steps_used.resize(m.n, m.n);
  for (int i = 0; i < m.n; ++i) {
    for (int k = 0; k < m.n; ++k) {
      m.values(i, k) = values[i * m.n + k];
      m.steps_used(i, k) = steps[i * m.n + k];
    }
  }
}

std::string affinity_to_csv(const AffinityMatrix& m) {
  std::string csv = "from";
  for (int k = 0; k < m.n; ++k) csv += "," + std::to_string(k);
  csv += '\n';
  for (int i = 0; i < m.n; ++i) {
    csv += std::to_string(i);
    for (int k = 0; k < m.n; ++k) csv += "," + io::format_double(m.values(i, k));
    csv += '\n';
  }
  return csv;
}

}  // namespace etap
