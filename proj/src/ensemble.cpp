#include "etap/ensemble.hpp"

#include <cmath>
#include <limits>

namespace etap {

const char* to_string(MappingKind kind) {
  return kind == MappingKind::kAffine ? "affine" : "spline";
}

MappingKind mapping_kind_from_string(const std::string& s) {
  if (s == "affine") return MappingKind::kAffine;
  if (s == "spline") return MappingKind::kSpline;
  throw Error("unknown mapping kind '" + s + "'");
}

VectorXd encode_multi_hot(const Group& group, int n_tasks) {
  check_group_in_range(group, n_tasks);
  VectorXd bits = VectorXd::Zero(n_tasks);
  for (TaskId t : group) bits[t] = 1.0;
  return bits;
}

Group decode_multi_hot(const VectorXd& bits) {
  std::vector<TaskId> members;
  for (Eigen::Index i = 0; i < bits.size(); ++i) {
    if (bits[i] == 1.0) {
      members.push_back(static_cast<TaskId>(i));
    } else if (bits[i] != 0.0) {
      throw Error("multi-hot code must be 0/1");
    }
  }
  return Group(std::move(members));
}

std::vector<TrainingGroup> make_training_groups(
    const std::vector<GainRecord>& records, const AffinityMatrix& matrix) {
  std::vector<TrainingGroup> out;
  for (const auto& r : records) {
    out.push_back(TrainingGroup{r, group_affinity(matrix, r.group)});
  }
  return out;
}

std::vector<TrainingPair> flatten_pairs(
    const std::vector<TrainingGroup>& groups) {
  std::vector<TrainingPair> pairs;
  for (const auto& g : groups) {
    for (TaskId t : g.record.group) {
      pairs.push_back(TrainingPair{g.record.group, t, g.affinity.scores.at(t),
                                   g.record.gains.at(t)});
    }
  }
  return pairs;
}

VectorXd Stage1Model::features(double z) const {
  if (kind == MappingKind::kAffine) return affine_expand(z);
  return basis_expand(z, *spline);
}

double Stage1Model::predict(double z) const {
  return features(z).dot(ridge.coefficients) + ridge.intercept;
}

namespace {

MatrixXd design_matrix(const std::vector<TrainingPair>& pairs,
                       const Stage1Model& shape) {
  MatrixXd x(static_cast<Eigen::Index>(pairs.size()),
             shape.features(pairs.front().affinity).size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = shape.features(pairs[i].affinity);
  }
  return x;
}

}  // namespace

Stage1Model fit_stage1(const std::vector<TrainingPair>& pairs,
                       int n_training_groups, const Stage1Options& options) {
  if (pairs.size() < 3) throw Error("stage 1 needs at least three pairs");
  std::vector<double> z;
  VectorXd y(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    z.push_back(pairs[i].affinity);
    y[static_cast<Eigen::Index>(i)] = pairs[i].gain;
  }
  const auto [zmin, zmax] = std::minmax_element(z.begin(), z.end());
  if (!(*zmin < *zmax)) {
    throw Error("stage 1: affinity scores span a degenerate domain");
  }

  std::vector<Stage1Model> shapes;
  if (options.kind == MappingKind::kAffine) {
    shapes.push_back(Stage1Model{MappingKind::kAffine, std::nullopt, {}, 0.0});
  } else {
    const int cap =
        options.max_interior_knots >= 0
            ? options.max_interior_knots
            : static_cast<int>(std::floor(std::sqrt(
                  static_cast<double>(std::max(n_training_groups, 0)))));
    for (int d = options.min_degree; d <= options.max_degree; ++d) {
      int last_basis = -1;
      for (int m = 0; m <= cap; ++m) {
        auto spec = fit_knots(z, d, m);
        // Merged quantiles can repeat an earlier knot vector.
        if (spec.basis_count() == last_basis) continue;
        last_basis = spec.basis_count();
        shapes.push_back(
            Stage1Model{MappingKind::kSpline, std::move(spec), {}, 0.0});
      }
    }
  }

  // Every candidate shape sees identical folds; strict improvement is required
  // to move to a later (more complex) shape.
  std::optional<Stage1Model> best;
  for (auto& shape : shapes) {
    const MatrixXd x = design_matrix(pairs, shape);
    auto cv = ridge_fit_cv(x, y, options.cv);
    const double score =
        *std::min_element(cv.cv_mse.begin(), cv.cv_mse.end());
    if (!best || score < best->cv_mse) {
      shape.ridge = std::move(cv.model);
      shape.cv_mse = score;
      best = std::move(shape);
    }
  }
  return *best;
}

std::map<TaskId, double> predict_stage1(const Stage1Model& stage1,
                                        const GroupAffinity& affinity) {
  std::map<TaskId, double> out;
  for (const auto& [t, z] : affinity.scores) out[t] = stage1.predict(z);
  return out;
}

ResidualModels fit_residual(const std::vector<TrainingGroup>& groups,
                            const Stage1Model& stage1, int n_tasks,
                            const CvConfig& cv) {
  ResidualModels models(static_cast<std::size_t>(n_tasks));
  for (TaskId t = 0; t < n_tasks; ++t) {
    std::vector<VectorXd> codes;
    std::vector<double> residuals;
    for (const auto& g : groups) {
      if (!g.record.group.contains(t)) continue;
      codes.push_back(encode_multi_hot(g.record.group, n_tasks));
      residuals.push_back(g.record.gains.at(t) -
                          stage1.predict(g.affinity.scores.at(t)));
    }
    if (codes.size() < 2) continue;
    MatrixXd x(static_cast<Eigen::Index>(codes.size()), n_tasks);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = codes[i];
    }
    const Eigen::Map<const VectorXd> y(residuals.data(),
                                       static_cast<Eigen::Index>(residuals.size()));
    models[t] = ridge_fit_cv(x, VectorXd(y), cv).model;
  }
  return models;
}

EnsemblePredictor fit_ensemble(const std::vector<TrainingGroup>& groups,
                               int n_tasks, const EnsembleOptions& options) {
  for (const auto& g : groups) check_group_in_range(g.record.group, n_tasks);
  EnsemblePredictor p;
  p.n_tasks = n_tasks;
  p.mapping = options.mapping;
  p.residual_enabled = options.residual_enabled;

  Stage1Options s1{options.mapping, options.min_degree, options.max_degree,
                   options.max_interior_knots, options.cv};
  p.stage1 = fit_stage1(flatten_pairs(groups),
                        static_cast<int>(groups.size()), s1);
  if (!options.residual_enabled) return p;

  p.residual_models = fit_residual(groups, p.stage1, n_tasks, options.cv);

  // Training-set check: the residual stage should not raise per-task MSE.
  for (TaskId t = 0; t < n_tasks; ++t) {
    if (!p.residual_models[t]) continue;
    double before = 0.0, after = 0.0;
    int count = 0;
    for (const auto& g : groups) {
      if (!g.record.group.contains(t)) continue;
      const auto parts = predict_parts(p, g.record.group, g.affinity);
      const double y = g.record.gains.at(t);
      before += std::pow(y - parts.stage1.at(t), 2);
      after += std::pow(y - parts.final.at(t), 2);
      ++count;
    }
    if (after / count > before / count + 1e-9) {
      p.warnings.push_back("residual model for task " + std::to_string(t) +
                           " increased training MSE");
    }
  }
  return p;
}

PredictionParts predict_parts(const EnsemblePredictor& predictor,
                              const Group& group,
                              const GroupAffinity& affinity) {
  if (group.size() < 2) throw Error("predict needs a group of two or more tasks");
  check_group_in_range(group, predictor.n_tasks);
  if (affinity.group != group) {
    throw Error("group affinity does not belong to group " + group.label());
  }
  PredictionParts parts;
  parts.stage1 = predict_stage1(predictor.stage1, affinity);
  const VectorXd code = encode_multi_hot(group, predictor.n_tasks);
  for (TaskId t : group) {
    double r = 0.0;
    if (predictor.residual_enabled) {
      const auto& m = predictor.residual_models.at(t);
      if (m) r = code.dot(m->coefficients) + m->intercept;
    }
    parts.residual[t] = r;
    parts.final[t] = predictor.residual_enabled ? parts.stage1.at(t) + r
                                                : parts.stage1.at(t);
  }
  return parts;
}

std::map<TaskId, double> predict(const EnsemblePredictor& predictor,
                                 const Group& group,
                                 const GroupAffinity& affinity) {
  return predict_parts(predictor, group, affinity).final;
}

void to_json(nlohmann::json& j, const EnsemblePredictor& p) {
  nlohmann::json stage1{{"mapping", to_string(p.stage1.kind)},
                        {"ridge", p.stage1.ridge},
                        {"cv_mse", p.stage1.cv_mse}};
  if (p.stage1.spline) stage1["spline"] = *p.stage1.spline;
  nlohmann::json residual = nlohmann::json::array();
  for (const auto& m : p.residual_models) {
    residual.push_back(m ? nlohmann::json(*m) : nlohmann::json(nullptr));
  }
  j = nlohmann::json{{"schema", "etap.predictor/1"},
                     {"n_tasks", p.n_tasks},
                     {"mapping", to_string(p.mapping)},
                     {"residual_enabled", p.residual_enabled},
                     {"stage1", stage1},
                     {"residual_models", residual},
                     {"warnings", p.warnings}};
}

void from_json(const nlohmann::json& j, EnsemblePredictor& p) {
  if (j.value("schema", std::string()) != "etap.predictor/1") {
    throw Error("unsupported predictor schema");
  }
  p.n_tasks = j.at("n_tasks").get<int>();
  p.mapping = mapping_kind_from_string(j.at("mapping").get<std::string>());
  p.residual_enabled = j.at("residual_enabled").get<bool>();
  const auto& s1 = j.at("stage1");
  p.stage1.kind = mapping_kind_from_string(s1.at("mapping").get<std::string>());
  p.stage1.ridge = s1.at("ridge").get<RidgeModel<double>>();
  p.stage1.cv_mse = s1.at("cv_mse").get<double>();
  p.stage1.spline.reset();
  if (s1.contains("spline")) {
    p.stage1.spline = s1.at("spline").get<SplineSpec<double>>();
  }
  if (p.stage1.kind == MappingKind::kSpline && !p.stage1.spline) {
    throw Error("spline predictor is missing its knot vector");
  }
  p.residual_models.clear();
  for (const auto& m : j.at("residual_models")) {
    if (m.is_null()) {
      p.residual_models.emplace_back();
    } else {
      p.residual_models.emplace_back(m.get<RidgeModel<double>>());
    }
  }
  if (p.residual_enabled &&
      static_cast<int>(p.residual_models.size()) != p.n_tasks) {
    throw Error("predictor needs one residual slot per task");
  }
  p.warnings = j.value("warnings", std::vector<std::string>{});
}

}  // namespace etap
