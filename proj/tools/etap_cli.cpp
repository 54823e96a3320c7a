// Command-line driver for the task-grouping pipeline.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "etap/harness.hpp"
#include "etap/io_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config_path;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::optional<int> n_tasks;
  std::optional<int> input_dim;
  std::optional<double> similarity;
  std::optional<double> noise;
  std::optional<int> n_train_groups;
  std::optional<int> heldout;
  std::string mapping;
  std::string residual;
  std::vector<int> budgets;
  std::optional<int> workers;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<double> momentum;
  std::optional<int> batch_size;
  std::vector<int> hidden;
  bool linear = false;
  bool write_trace = false;
};

void add_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_path, "experiment config JSON");
  cmd->add_option("-o,--out", o.out,
                  "output directory (default $ETAP_OUTPUT_ROOT/etap-out)");
  cmd->add_option("--seeds", o.seeds, "repetition seeds");
  cmd->add_option("--n-tasks", o.n_tasks, "number of synthetic tasks");
  cmd->add_option("--input-dim", o.input_dim, "feature dimension");
  cmd->add_option("--similarity", o.similarity, "within-cluster similarity");
  cmd->add_option("--noise", o.noise, "label noise std");
  cmd->add_option("--n-train-groups", o.n_train_groups,
                  "training groups with measured gains");
  cmd->add_option("--heldout", o.heldout, "held-out groups (0 = all others)");
  cmd->add_option("--mapping", o.mapping, "affine or spline")
      ->check(CLI::IsMember({"affine", "spline"}));
  cmd->add_option("--residual", o.residual, "residual correction on/off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--budgets", o.budgets, "group budgets");
  cmd->add_option("--workers", o.workers, "oracle worker threads");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.learning_rate, "learning rate");
  cmd->add_option("--momentum", o.momentum, "momentum coefficient");
  cmd->add_option("--batch-size", o.batch_size, "per-task batch size");
  cmd->add_option("--hidden", o.hidden, "hidden layer widths");
  cmd->add_flag("--linear", o.linear, "no hidden layers");
  cmd->add_flag("--write-trace", o.write_trace, "persist the joint trace");
}

fs::path default_out() {
  if (const char* root = std::getenv("ETAP_OUTPUT_ROOT"); root && *root) {
    return fs::path(root) / "etap-out";
  }
  return "etap-out";
}

etap::ExperimentConfig resolve(const Overrides& o) {
  const fs::path out = o.out.empty() ? default_out() : fs::path(o.out);
  etap::ExperimentConfig c = etap::reference_config();
  if (!o.config_path.empty()) {
    c = etap::io::read_json(o.config_path).get<etap::ExperimentConfig>();
  } else if (fs::exists(out / "config.json")) {
    c = etap::io::read_json(out / "config.json").get<etap::ExperimentConfig>();
  }
  c.output_dir = out;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.n_tasks) {
    c.suite.n_tasks = *o.n_tasks;
    c.suite.cluster_assignment.clear();
  }
  if (o.input_dim) c.suite.input_dim = *o.input_dim;
  if (o.similarity) c.suite.within_cluster_similarity = *o.similarity;
  if (o.noise) c.suite.label_noise_std = *o.noise;
  if (o.n_train_groups) c.n_train_groups = *o.n_train_groups;
  if (o.heldout) c.n_heldout_groups = *o.heldout;
  if (!o.mapping.empty()) c.mapping = etap::mapping_kind_from_string(o.mapping);
  if (!o.residual.empty()) c.residual_enabled = o.residual == "on";
  if (!o.budgets.empty()) c.budgets = o.budgets;
  if (o.workers) c.workers = *o.workers;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.momentum) c.train.momentum = *o.momentum;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (!o.hidden.empty()) c.train.hidden_dims = o.hidden;
  if (o.linear) c.train.hidden_dims.clear();
  if (o.write_trace) c.write_trace = true;
  c.validate();
  return c;
}

void print_summary(const nlohmann::json& s) {
  std::cout << "held-out R2 " << s.at("heldout_r2_mean").get<double>() << " +- "
            << s.at("heldout_r2_std").get<double>() << ", Pearson "
            << s.at("heldout_pearson_mean").get<double>() << " +- "
            << s.at("heldout_pearson_std").get<double>() << "\n";
  for (const auto& b : s.at("budgets")) {
    std::cout << "B=" << b.at("budget").get<int>()
              << "  etap " << b.at("etap_mean_loss").get<double>()
              << "  naive " << b.at("naive_mean_loss").get<double>();
    if (b.contains("optimal_mean_loss")) {
      std::cout << "  optimal " << b.at("optimal_mean_loss").get<double>();
    }
    std::cout << "\n";
  }
}

void print_ablation(const nlohmann::json& a) {
  std::cout << "mapping  residual  R2 mean (std)        Pearson mean (std)\n";
  for (const auto& c : a.at("cells")) {
    std::printf("%-8s %-9s %8.4f (%6.4f)    %8.4f (%6.4f)\n",
                c.at("mapping").get<std::string>().c_str(),
                c.at("residual_enabled").get<bool>() ? "on" : "off",
                c.at("r2_mean").get<double>(), c.at("r2_std").get<double>(),
                c.at("pearson_mean").get<double>(),
                c.at("pearson_std").get<double>());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-affinity based multi-task grouping pipeline"};
  app.require_subcommand(1);
  Overrides o;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"run", "run every stage and write summary.json"},
      {"generate", "generate the synthetic task suite"},
      {"train-affinity", "joint training run and pairwise affinities"},
      {"oracle", "measure ground-truth gains for sampled groups"},
      {"fit", "fit the two-stage gain predictor"},
      {"evaluate", "score the predictor on held-out groups"},
      {"select", "choose task groups per budget"},
      {"report", "retrain chosen groups and report realised losses"},
      {"ablate", "compare affine/spline x residual on/off"},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_options(cmd, o);
    cmds.push_back(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    const etap::ExperimentConfig config = resolve(o);
    etap::io::write_json(config.output_dir / "config.json", config);
    const std::string name = app.get_subcommands().front()->get_name();
    stage = name;
    if (name == "run") {
      print_summary(etap::run_experiment(config));
    } else if (name == "ablate") {
      print_ablation(etap::compare_ablations(config));
    } else {
      using etap::Stage;
      const std::pair<const char*, Stage> stages[] = {
          {"generate", Stage::kGenerate}, {"train-affinity", Stage::kTrainAffinity},
          {"oracle", Stage::kOracle},     {"fit", Stage::kFit},
          {"evaluate", Stage::kEvaluate}, {"select", Stage::kSelect},
          {"report", Stage::kReport}};
      for (const auto& [n, s] : stages) {
        if (name == n) etap::run_stage(config, s);
      }
      if (name == "report") {
        const auto summary = etap::summarize(config);
        etap::io::write_json(config.output_dir / "summary.json", summary);
        print_summary(summary);
      }
    }
  } catch (const etap::StageError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "stage '" << stage << "' failed: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
