#include "etap/mtl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace etap {

namespace {

enum EngineStream : std::uint64_t {
  kSharedInit = 11,
  kHeadInit = 12,
  kBatchOrder = 13,
};

struct LayerView {
  Eigen::Map<const MatrixXd> weight;
  Eigen::Map<const VectorXd> bias;
};

std::vector<int> layer_widths(const Architecture& arch) {
  std::vector<int> widths{arch.input_dim};
  widths.insert(widths.end(), arch.hidden_dims.begin(), arch.hidden_dims.end());
  return widths;
}

std::vector<LayerView> shared_layers(const Architecture& arch,
                                     const VectorXd& shared) {
  const auto widths = layer_widths(arch);
  std::vector<LayerView> layers;
  Eigen::Index offset = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const int in = widths[l - 1];
    const int out = widths[l];
    layers.push_back(LayerView{
        Eigen::Map<const MatrixXd>(shared.data() + offset, out, in),
        Eigen::Map<const VectorXd>(shared.data() + offset + out * in, out)});
    offset += out * in + out;
  }
  return layers;
}

double activate(Activation a, double x) {
  return a == Activation::kTanh ? std::tanh(x) : x;
}

// Derivative expressed through the activation output.
double activate_grad_from_output(Activation a, double h) {
  return a == Activation::kTanh ? 1.0 - h * h : 1.0;
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double mean_loss(TaskKind kind, const VectorXd& output, const VectorXd& y) {
  const auto n = static_cast<double>(y.size());
  if (kind == TaskKind::kRegression) return (output - y).squaredNorm() / n;
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    total += softplus(output[i]) - y[i] * output[i];
  }
  return total / n;
}

void check_batch(const Architecture& arch, const ModelParams& params,
                 TaskId task, const Batch& batch) {
  if (batch.features.cols() != arch.input_dim) {
    throw Error("batch feature width " + std::to_string(batch.features.cols()) +
                " does not match input_dim " + std::to_string(arch.input_dim));
  }
  if (batch.features.rows() != batch.targets.size() ||
      batch.targets.size() == 0) {
    throw Error("batch rows and targets disagree or batch is empty");
  }
  if (params.shared.size() != arch.shared_size()) {
    throw Error("shared parameter length does not match architecture");
  }
  auto it = params.heads.find(task);
  if (it == params.heads.end()) {
    throw Error("no head for task " + std::to_string(task));
  }
  if (it->second.size() != arch.head_size()) {
    throw Error("head parameter length does not match architecture");
  }
}

// Activations per layer, starting with the input.
std::vector<MatrixXd> encode(const Architecture& arch,
                             const std::vector<LayerView>& layers,
                             const MatrixXd& features) {
  std::vector<MatrixXd> acts{features};
  for (const auto& layer : layers) {
    MatrixXd pre = acts.back() * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    acts.push_back(pre.unaryExpr(
        [a = arch.activation](double v) { return activate(a, v); }));
  }
  return acts;
}

}  // namespace

int Architecture::encoder_width() const {
  return hidden_dims.empty() ? input_dim : hidden_dims.back();
}

Eigen::Index Architecture::shared_size() const {
  const auto widths = layer_widths(*this);
  Eigen::Index n = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    n += static_cast<Eigen::Index>(widths[l]) * widths[l - 1] + widths[l];
  }
  return n;
}

Eigen::Index Architecture::head_size() const { return encoder_width() + 1; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error("learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error("momentum must lie in [0, 1)");
  }
  if (epochs < 1) throw Error("epochs must be at least 1");
  if (batch_size < 1) throw Error("batch_size must be at least 1");
  for (int h : hidden_dims) {
    if (h < 1) throw Error("hidden layer widths must be positive");
  }
}

Architecture make_architecture(const TaskSuiteSpec& suite,
                               const TrainConfig& config) {
  return Architecture{suite.input_dim, config.hidden_dims, config.activation,
                      suite.kind};
}

ModelParams init_params(const Architecture& arch,
                        const std::vector<TaskId>& tasks, std::uint64_t seed) {
  ModelParams params;
  params.shared.resize(arch.shared_size());
  std::mt19937_64 rng(derive_seed(seed, kSharedInit));
  const auto widths = layer_widths(arch);
  Eigen::Index offset = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l - 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const Eigen::Index count =
        static_cast<Eigen::Index>(widths[l]) * widths[l - 1] + widths[l];
    for (Eigen::Index i = 0; i < count; ++i) params.shared[offset + i] = u(rng);
    offset += count;
  }
  const double head_bound =
      1.0 / std::sqrt(static_cast<double>(arch.encoder_width()));
  // Heads start from the same draw so identical tasks stay identical.
  for (TaskId t : tasks) {
    std::mt19937_64 head_rng(derive_seed(seed, kHeadInit));
    std::uniform_real_distribution<double> u(-head_bound, head_bound);
    VectorXd head(arch.head_size());
    for (Eigen::Index i = 0; i < head.size(); ++i) head[i] = u(head_rng);
    params.heads[t] = head;
  }
  return params;
}

VectorXd forward(const Architecture& arch, const ModelParams& params,
                 TaskId task, const MatrixXd& features) {
  const auto layers = shared_layers(arch, params.shared);
  const auto acts = encode(arch, layers, features);
  const VectorXd& head = params.heads.at(task);
  const int width = arch.encoder_width();
  return (acts.back() * head.head(width)).array() + head[width];
}

double forward_loss(const Architecture& arch, const ModelParams& params,
                    TaskId task, const Batch& batch) {
  check_batch(arch, params, task, batch);
  return mean_loss(arch.loss, forward(arch, params, task, batch.features),
                   batch.targets);
}

LossGradient loss_and_gradient(const Architecture& arch,
                               const ModelParams& params, TaskId task,
                               const Batch& batch) {
  check_batch(arch, params, task, batch);
  const auto layers = shared_layers(arch, params.shared);
  const auto acts = encode(arch, layers, batch.features);
  const VectorXd& head = params.heads.at(task);
  const int width = arch.encoder_width();
  const VectorXd output = (acts.back() * head.head(width)).array() + head[width];
  const auto n = static_cast<double>(batch.targets.size());

  LossGradient out;
  out.loss = mean_loss(arch.loss, output, batch.targets);

  // d loss / d output
  VectorXd d_out(output.size());
  if (arch.loss == TaskKind::kRegression) {
    d_out = 2.0 * (output - batch.targets) / n;
  } else {
    for (Eigen::Index i = 0; i < output.size(); ++i) {
      d_out[i] = (sigmoid(output[i]) - batch.targets[i]) / n;
    }
  }

  out.head.resize(arch.head_size());
  out.head.head(width) = acts.back().transpose() * d_out;
  out.head[width] = d_out.sum();

  out.shared.resize(arch.shared_size());
  MatrixXd d_act = d_out * head.head(width).transpose();  // rows x width
  // Walk layers backwards, filling the flat gradient from the end.
  Eigen::Index end = arch.shared_size();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const MatrixXd& h_out = acts[l + 1];
    const MatrixXd& h_in = acts[l];
    MatrixXd d_pre = d_act.array() *
                     h_out.unaryExpr([a = arch.activation](double h) {
                            return activate_grad_from_output(a, h);
                          }).array();
    const Eigen::Index n_out = layers[l].weight.rows();
    const Eigen::Index n_in = layers[l].weight.cols();
    const Eigen::Index begin = end - (n_out * n_in + n_out);
    Eigen::Map<MatrixXd>(out.shared.data() + begin, n_out, n_in) =
        d_pre.transpose() * h_in;
    out.shared.segment(begin + n_out * n_in, n_out) =
        d_pre.colwise().sum().transpose();
    if (l > 0) d_act = d_pre * layers[l].weight;
    end = begin;
  }
  return out;
}

VectorXd shared_gradient(const Architecture& arch, const ModelParams& params,
                         TaskId task, const Batch& batch) {
  return loss_and_gradient(arch, params, task, batch).shared;
}

std::pair<VectorXd, VectorXd> sgd_momentum_step(const VectorXd& params,
                                                const VectorXd& velocity,
                                                const VectorXd& gradient,
                                                double learning_rate,
                                                double momentum) {
  if (params.size() != velocity.size() || params.size() != gradient.size()) {
    throw Error("sgd_momentum_step: parameter, velocity and gradient lengths "
                "differ");
  }
  VectorXd v = momentum * velocity - learning_rate * gradient;
  VectorXd p = params + v;
  return {std::move(p), std::move(v)};
}

namespace {

Batch gather(const TaskDataset& data, const std::vector<int>& rows) {
  Batch b;
  b.features.resize(static_cast<Eigen::Index>(rows.size()),
                    data.features.cols());
  b.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.features.row(i) = data.features.row(rows[i]);
    b.targets[i] = data.targets[rows[i]];
  }
  return b;
}

struct TaskStream {
  TaskId task;
  std::vector<int> train_rows;
  std::vector<int> order;
  std::mt19937_64 rng;
};

}  // namespace

TrainedModel train_mtl(const Group& group, const TaskSuite& suite,
                       const TrainConfig& config, bool capture_trace) {
  config.validate();
  if (group.empty()) throw Error("train_mtl: empty group");
  check_group_in_range(group, suite.n_tasks());

  TrainedModel model;
  model.arch = make_architecture(suite.spec, config);
  model.group = group;
  const std::vector<TaskId> tasks(group.begin(), group.end());
  model.params = init_params(model.arch, tasks, config.seed);

  std::vector<TaskStream> streams;
  std::size_t max_rows = 0;
  for (TaskId t : tasks) {
    TaskStream s{t, suite.task(t).rows(Split::kTrain), {},
                 std::mt19937_64(derive_seed(config.seed, kBatchOrder))};
    s.order = s.train_rows;
    max_rows = std::max(max_rows, s.train_rows.size());
    streams.push_back(std::move(s));
  }
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (max_rows + bs - 1) / bs;

  VectorXd velocity = VectorXd::Zero(model.params.shared.size());
  std::map<TaskId, VectorXd> head_velocity;
  for (TaskId t : tasks) {
    head_velocity[t] = VectorXd::Zero(model.arch.head_size());
  }

  const double n_group = static_cast<double>(tasks.size());
  std::int64_t step = 0;
  std::vector<LossGradient> grads(tasks.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto& s : streams) {
      s.order = s.train_rows;
      std::shuffle(s.order.begin(), s.order.end(), s.rng);
    }
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      VectorXd mean_grad = VectorXd::Zero(model.params.shared.size());
      for (std::size_t i = 0; i < streams.size(); ++i) {
        const auto& s = streams[i];
        std::size_t start = (b * bs) % s.order.size();
        std::size_t stop = std::min(start + bs, s.order.size());
        std::vector<int> rows(s.order.begin() + start, s.order.begin() + stop);
        grads[i] = loss_and_gradient(model.arch, model.params, s.task,
                                     gather(suite.task(s.task), rows));
        if (!std::isfinite(grads[i].loss) || !grads[i].shared.allFinite() ||
            !grads[i].head.allFinite()) {
          throw DivergenceError(step, "training diverged at step " +
                                          std::to_string(step) + " (task " +
                                          std::to_string(s.task) + ")");
        }
        mean_grad += grads[i].shared;
      }
      mean_grad /= n_group;

      if (capture_trace) {
        StepTrace st;
        st.step = step;
        st.tasks = tasks;
        for (const auto& g : grads) {
          st.losses.push_back(g.loss);
          st.gradients.push_back(g.shared);
        }
        st.velocity_in = config.velocity_mode == VelocityMode::kJoint
                             ? velocity
                             : VectorXd::Zero(velocity.size());
        model.trace.push_back(std::move(st));
      }

      auto [shared, v] =
          sgd_momentum_step(model.params.shared, velocity, mean_grad,
                            config.learning_rate, config.momentum);
      model.params.shared = std::move(shared);
      velocity = std::move(v);
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto [head, hv] = sgd_momentum_step(
            model.params.heads[tasks[i]], head_velocity[tasks[i]],
            grads[i].head, config.learning_rate, config.momentum);
        model.params.heads[tasks[i]] = std::move(head);
        head_velocity[tasks[i]] = std::move(hv);
      }
    }
  }

  for (TaskId t : tasks) {
    SplitLosses l{split_loss(model, suite, t, Split::kTrain),
                  split_loss(model, suite, t, Split::kVal),
                  split_loss(model, suite, t, Split::kTest)};
    if (!std::isfinite(l.train) || !std::isfinite(l.val) ||
        !std::isfinite(l.test)) {
      throw DivergenceError(step, "non-finite final loss for task " +
                                      std::to_string(t));
    }
    model.losses[t] = l;
  }
  return model;
}

TrainedModel train_stl(TaskId task, const TaskSuite& suite,
                       const TrainConfig& config) {
  return train_mtl(Group{task}, suite, config, false);
}

double split_loss(const TrainedModel& model, const TaskSuite& suite,
                  TaskId task, Split split) {
  const TaskDataset& data = suite.task(task);
  return forward_loss(model.arch, model.params, task,
                      gather(data, data.rows(split)));
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"learning_rate", c.learning_rate},
      {"momentum", c.momentum},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"hidden_dims", c.hidden_dims},
      {"activation", c.activation == Activation::kTanh ? "tanh" : "identity"},
      {"velocity_mode",
       c.velocity_mode == VelocityMode::kJoint ? "joint" : "zero"},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig def;
  c.learning_rate = j.value("learning_rate", def.learning_rate);
  c.momentum = j.value("momentum", def.momentum);
  c.epochs = j.value("epochs", def.epochs);
  c.batch_size = j.value("batch_size", def.batch_size);
  c.hidden_dims = j.value("hidden_dims", def.hidden_dims);
  const auto act = j.value("activation", std::string("tanh"));
  if (act != "tanh" && act != "identity") {
    throw Error("unknown activation '" + act + "'");
  }
  c.activation = act == "tanh" ? Activation::kTanh : Activation::kIdentity;
  const auto vm = j.value("velocity_mode", std::string("joint"));
  if (vm != "joint" && vm != "zero") {
    throw Error("unknown velocity_mode '" + vm + "'");
  }
  c.velocity_mode = vm == "joint" ? VelocityMode::kJoint : VelocityMode::kZero;
  c.seed = j.value("seed", def.seed);
}

namespace {

std::vector<double> to_std(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json trace_to_json(const StepTrace& step) {
  nlohmann::json grads = nlohmann::json::array();
  for (const auto& g : step.gradients) grads.push_back(to_std(g));
  return nlohmann::json{{"step", step.step},
                        {"tasks", step.tasks},
                        {"losses", step.losses},
                        {"gradients", grads},
                        {"velocity_in", to_std(step.velocity_in)}};
}

StepTrace trace_from_json(const nlohmann::json& j) {
  StepTrace st;
  st.step = j.at("step").get<std::int64_t>();
  st.tasks = j.at("tasks").get<std::vector<TaskId>>();
  st.losses = j.at("losses").get<std::vector<double>>();
  for (const auto& g : j.at("gradients")) {
    st.gradients.push_back(from_std(g.get<std::vector<double>>()));
  }
  st.velocity_in = from_std(j.at("velocity_in").get<std::vector<double>>());
  if (st.losses.size() != st.tasks.size() ||
      st.gradients.size() != st.tasks.size()) {
    throw Error("trace line has inconsistent task/loss/gradient counts");
  }
  return st;
}

}  // namespace etap
