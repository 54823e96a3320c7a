#include "etap/task_suite.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "etap/io_util.hpp"

namespace etap {

namespace {

enum SuiteStream : std::uint64_t {
  kClusterWeights = 1,
  kTaskPerturbation = 2,
  kFeatures = 3,
  kNoise = 4,
};

VectorXd standard_normal(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

const char* to_string(TaskKind kind) {
  return kind == TaskKind::kRegression ? "regression" : "binary";
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "regression") return TaskKind::kRegression;
  if (s == "binary") return TaskKind::kBinary;
  throw Error("unknown task kind '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw Error("unknown split '" + s + "'");
}

void TaskSuiteSpec::validate() const {
  if (n_tasks < 2) throw Error("suite needs at least 2 tasks");
  if (input_dim < 1) throw Error("input_dim must be positive");
  if (n_clusters < 1) throw Error("n_clusters must be positive");
  if (!cluster_assignment.empty()) {
    if (static_cast<int>(cluster_assignment.size()) != n_tasks) {
      throw Error("cluster_assignment must have one entry per task");
    }
    for (int c : cluster_assignment) {
      if (c < 0 || c >= n_clusters) {
        throw Error("cluster assignment " + std::to_string(c) +
                    " out of range");
      }
    }
  }
  if (!(within_cluster_similarity >= 0.0 && within_cluster_similarity <= 1.0)) {
    throw Error("within_cluster_similarity must lie in [0, 1]");
  }
  if (!(label_noise_std >= 0.0) || !std::isfinite(label_noise_std)) {
    throw Error("label_noise_std must be finite and non-negative");
  }
  if (samples.train < 1 || samples.val < 1 || samples.test < 1) {
    throw Error("every split needs at least one sample");
  }
}

int TaskSuiteSpec::cluster_of(TaskId t) const {
  if (cluster_assignment.empty()) return t % n_clusters;
  return cluster_assignment.at(t);
}

std::vector<int> TaskDataset::rows(Split which) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(static_cast<int>(i));
  }
  return out;
}

int TaskDataset::count(Split which) const {
  int n = 0;
  for (Split s : split) n += (s == which);
  return n;
}

TaskSuite generate_suite(const TaskSuiteSpec& spec) {
  spec.validate();
  TaskSuite suite;
  suite.spec = spec;
  const int d = spec.input_dim;

  std::mt19937_64 cluster_rng(derive_seed(spec.seed, kClusterWeights));
  // Entries ~ N(0, 1/d) so the noise-free signal has unit variance.
  for (int c = 0; c < spec.n_clusters; ++c) {
    suite.cluster_weights.push_back(standard_normal(d, cluster_rng) /
                                    std::sqrt(static_cast<double>(d)));
  }

  const int n_rows = spec.samples.train + spec.samples.val + spec.samples.test;
  for (TaskId t = 0; t < spec.n_tasks; ++t) {
    const VectorXd& wc = suite.cluster_weights[spec.cluster_of(t)];

    // Isotropic direction scaled to (1 - s)|w_c|.
    std::mt19937_64 delta_rng(derive_seed(spec.seed, kTaskPerturbation, t));
    VectorXd dir = standard_normal(d, delta_rng);
    const double dir_norm = dir.norm();
    if (dir_norm > 0.0) dir /= dir_norm;
    VectorXd w = wc + (1.0 - spec.within_cluster_similarity) * wc.norm() * dir;
    suite.task_weights.push_back(w);

    TaskDataset data;
    std::mt19937_64 feature_rng(derive_seed(spec.seed, kFeatures, t));
    std::normal_distribution<double> normal(0.0, 1.0);
    data.features.resize(n_rows, d);
    for (int r = 0; r < n_rows; ++r) {
      for (int k = 0; k < d; ++k) data.features(r, k) = normal(feature_rng);
    }

    std::mt19937_64 noise_rng(derive_seed(spec.seed, kNoise, t));
    VectorXd signal = data.features * w;
    data.targets.resize(n_rows);
    for (int r = 0; r < n_rows; ++r) {
      const double eps = spec.label_noise_std > 0.0
                             ? spec.label_noise_std * normal(noise_rng)
                             : 0.0;
      const double latent = signal[r] + eps;
      data.targets[r] = spec.kind == TaskKind::kRegression
                            ? latent
                            : (latent > 0.0 ? 1.0 : 0.0);
    }

    data.split.reserve(n_rows);
    data.split.insert(data.split.end(), spec.samples.train, Split::kTrain);
    data.split.insert(data.split.end(), spec.samples.val, Split::kVal);
    data.split.insert(data.split.end(), spec.samples.test, Split::kTest);
    suite.tasks.push_back(std::move(data));
  }
  return suite;
}

VectorXd planted_response(const TaskSuite& suite, TaskId t,
                          const MatrixXd& features) {
  VectorXd latent = features * suite.task_weights.at(t);
  if (suite.spec.kind == TaskKind::kBinary) {
    return latent.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  }
  return latent;
}

void to_json(nlohmann::json& j, const TaskSuiteSpec& spec) {
  j = nlohmann::json{
      {"schema", "etap.suite_spec/1"},
      {"n_tasks", spec.n_tasks},
      {"input_dim", spec.input_dim},
      {"n_clusters", spec.n_clusters},
      {"cluster_assignment", spec.cluster_assignment},
      {"within_cluster_similarity", spec.within_cluster_similarity},
      {"label_noise_std", spec.label_noise_std},
      {"samples",
       {{"train", spec.samples.train},
        {"val", spec.samples.val},
        {"test", spec.samples.test}}},
      {"seed", spec.seed},
      {"kind", to_string(spec.kind)},
  };
}

void from_json(const nlohmann::json& j, TaskSuiteSpec& spec) {
  TaskSuiteSpec def;
  spec.n_tasks = j.value("n_tasks", def.n_tasks);
  spec.input_dim = j.value("input_dim", def.input_dim);
  spec.n_clusters = j.value("n_clusters", def.n_clusters);
  spec.cluster_assignment =
      j.value("cluster_assignment", std::vector<int>{});
  spec.within_cluster_similarity =
      j.value("within_cluster_similarity", def.within_cluster_similarity);
  spec.label_noise_std = j.value("label_noise_std", def.label_noise_std);
  if (j.contains("samples")) {
    const auto& s = j.at("samples");
    spec.samples.train = s.value("train", def.samples.train);
    spec.samples.val = s.value("val", def.samples.val);
    spec.samples.test = s.value("test", def.samples.test);
  }
  spec.seed = j.value("seed", def.seed);
  spec.kind = task_kind_from_string(j.value("kind", std::string("regression")));
}

void export_suite(const TaskSuite& suite, const std::filesystem::path& dir) {
  io::write_json(dir / "suite.json", nlohmann::json(suite.spec));
  for (TaskId t = 0; t < suite.n_tasks(); ++t) {
    const TaskDataset& data = suite.task(t);
    std::string csv;
    for (int k = 0; k < data.features.cols(); ++k) {
      csv += "x" + std::to_string(k) + ",";
    }
    csv += "target,split\n";
    for (int r = 0; r < data.features.rows(); ++r) {
      for (int k = 0; k < data.features.cols(); ++k) {
        csv += io::format_double(data.features(r, k));
        csv += ',';
      }
      csv += io::format_double(data.targets[r]);
      csv += ',';
      csv += to_string(data.split[r]);
      csv += '\n';
    }
    io::write_file(dir / ("task_" + std::to_string(t) + ".csv"), csv);
  }
}

TaskSuite import_suite(const std::filesystem::path& dir) {
  TaskSuiteSpec spec = io::read_json(dir / "suite.json").get<TaskSuiteSpec>();
  TaskSuite suite = generate_suite(spec);
  for (TaskId t = 0; t < spec.n_tasks; ++t) {
    const auto path = dir / ("task_" + std::to_string(t) + ".csv");
    std::istringstream in(io::read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
    const auto header = io::split_csv_line(line);
    const int d = static_cast<int>(header.size()) - 2;
    if (d != spec.input_dim || header[d] != "target" ||
        header[d + 1] != "split") {
      throw Error(path.string() + ": header does not match suite spec");
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = io::split_csv_line(line);
      if (static_cast<int>(cells.size()) != d + 2) {
        throw Error(path.string() + ": ragged row");
      }
      rows.push_back(std::move(cells));
    }
    TaskDataset data;
    data.features.resize(static_cast<int>(rows.size()), d);
    data.targets.resize(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int k = 0; k < d; ++k) {
        data.features(r, k) = io::parse_double(rows[r][k]);
      }
      data.targets[r] = io::parse_double(rows[r][d]);
      data.split.push_back(split_from_string(rows[r][d + 1]));
    }
    if (data.count(Split::kTrain) != spec.samples.train ||
        data.count(Split::kVal) != spec.samples.val ||
        data.count(Split::kTest) != spec.samples.test) {
      throw Error(path.string() + ": split sizes do not match suite spec");
    }
    suite.tasks[t] = std::move(data);
  }
  return suite;
}

}  // namespace etap
