#include "etap/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "etap/io_util.hpp"

namespace etap {

namespace fs = std::filesystem;

namespace {

enum HarnessStream : std::uint64_t {
  kTrainGroups = 201,
  kHeldoutGroups = 202,
  kUniverse = 203,
  kCvFolds = 204,
};

std::vector<std::string> labels(const std::vector<Group>& groups) {
  std::vector<std::string> out;
  for (const auto& g : groups) out.push_back(g.label());
  return out;
}

std::vector<Group> groups_from_labels(const nlohmann::json& j) {
  std::vector<Group> out;
  for (const auto& s : j) out.push_back(Group::parse_label(s.get<std::string>()));
  return out;
}

fs::path rep_file(const ExperimentConfig& config, std::size_t rep,
                  const std::string& name) {
  return repetition_dir(config, rep) / name;
}

template <typename F>
void in_stage(const char* stage, F&& body) {
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::vector<GainRecord> read_gains(const fs::path& path) {
  std::vector<GainRecord> out;
  for (const auto& j : io::read_jsonl(path)) out.push_back(j.get<GainRecord>());
  return out;
}

std::vector<GainRecord> lookup(const std::vector<GainRecord>& all,
                               const std::vector<Group>& groups) {
  std::map<Group, const GainRecord*> by_group;
  for (const auto& r : all) by_group[r.group] = &r;
  std::vector<GainRecord> out;
  for (const auto& g : groups) {
    auto it = by_group.find(g);
    if (it == by_group.end()) {
      throw Error("no measured gains for group " + g.label());
    }
    out.push_back(*it->second);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void ExperimentConfig::validate() const {
  suite.validate();
  train.validate();
  const auto [lo, hi] = size_range();
  if (lo < 2 || hi < lo || hi > suite.n_tasks) {
    throw Error("group size range must lie within [2, n_tasks]");
  }
  if (n_train_groups < 2) throw Error("need at least two training groups");
  if (n_heldout_groups < 0) throw Error("held-out group count is negative");
  if (budgets.empty()) throw Error("no budgets given");
  for (int b : budgets) {
    if (b < 1) throw Error("budgets must be positive");
  }
  if (seeds.empty()) throw Error("no repetition seeds given");
  if (lambda_grid.empty()) throw Error("empty lambda grid");
  if (min_degree < 1 || max_degree > 6 || min_degree > max_degree) {
    throw Error("spline degree range must lie within [1, 6]");
  }
}

std::pair<int, int> ExperimentConfig::size_range() const {
  return {group_size_range.first,
          group_size_range.second > 0 ? group_size_range.second : suite.n_tasks};
}

ExperimentConfig reference_config() {
  ExperimentConfig c;
  c.suite.n_tasks = 6;
  c.suite.input_dim = 8;
  c.suite.n_clusters = 2;
  c.suite.cluster_assignment = {0, 0, 0, 1, 1, 1};
  c.suite.within_cluster_similarity = 0.9;
  c.suite.label_noise_std = 0.3;
  c.suite.samples = {24, 24, 400};
  c.train.learning_rate = 0.02;
  c.train.momentum = 0.9;
  c.train.epochs = 150;
  c.train.batch_size = 8;
  c.train.hidden_dims = {1};
  c.n_train_groups = 10;
  c.n_heldout_groups = 0;
  return c;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{
      {"schema", "etap.experiment/1"},
      {"suite", c.suite},
      {"train", c.train},
      {"n_train_groups", c.n_train_groups},
      {"n_heldout_groups", c.n_heldout_groups},
      {"group_size_range", {c.group_size_range.first, c.group_size_range.second}},
      {"mapping", to_string(c.mapping)},
      {"residual_enabled", c.residual_enabled},
      {"min_degree", c.min_degree},
      {"max_degree", c.max_degree},
      {"lambda_grid", c.lambda_grid},
      {"budgets", c.budgets},
      {"seeds", c.seeds},
      {"workers", c.workers},
      {"write_trace", c.write_trace},
      {"exhaustive_reference", c.exhaustive_reference},
      {"output_dir", c.output_dir.string()},
  };
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig def = reference_config();
  c = def;
  if (j.contains("suite")) {
    nlohmann::json s = nlohmann::json(def.suite);
    s.merge_patch(j.at("suite"));
    c.suite = s.get<TaskSuiteSpec>();
  }
  if (j.contains("train")) {
    nlohmann::json t = nlohmann::json(def.train);
    t.merge_patch(j.at("train"));
    c.train = t.get<TrainConfig>();
  }
  c.n_train_groups = j.value("n_train_groups", def.n_train_groups);
  c.n_heldout_groups = j.value("n_heldout_groups", def.n_heldout_groups);
  if (j.contains("group_size_range")) {
    const auto r = j.at("group_size_range").get<std::vector<int>>();
    if (r.size() != 2) throw Error("group_size_range needs two entries");
    c.group_size_range = {r[0], r[1]};
  }
  c.mapping = mapping_kind_from_string(
      j.value("mapping", std::string(to_string(def.mapping))));
  c.residual_enabled = j.value("residual_enabled", def.residual_enabled);
  c.min_degree = j.value("min_degree", def.min_degree);
  c.max_degree = j.value("max_degree", def.max_degree);
  c.lambda_grid = j.value("lambda_grid", def.lambda_grid);
  c.budgets = j.value("budgets", def.budgets);
  c.seeds = j.value("seeds", def.seeds);
  c.workers = j.value("workers", def.workers);
  c.write_trace = j.value("write_trace", def.write_trace);
  c.exhaustive_reference =
      j.value("exhaustive_reference", def.exhaustive_reference);
  c.output_dir = j.value("output_dir", def.output_dir.string());
}

TaskSuiteSpec suite_for_seed(const ExperimentConfig& config,
                             std::uint64_t seed) {
  TaskSuiteSpec s = config.suite;
  s.seed = seed;
  return s;
}

TrainConfig train_for_seed(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig t = config.train;
  t.seed = seed;
  return t;
}

EnsembleOptions ensemble_options(const ExperimentConfig& config,
                                 std::uint64_t seed, MappingKind mapping,
                                 bool residual_enabled) {
  EnsembleOptions o;
  o.mapping = mapping;
  o.residual_enabled = residual_enabled;
  o.min_degree = config.min_degree;
  o.max_degree = config.max_degree;
  o.cv.lambda_grid = config.lambda_grid;
  o.cv.seed = derive_seed(seed, kCvFolds);
  return o;
}

fs::path repetition_dir(const ExperimentConfig& config, std::size_t index) {
  return config.output_dir / ("rep_" + std::to_string(index) + "_seed_" +
                              std::to_string(config.seeds.at(index)));
}

GroupSplit split_groups(const ExperimentConfig& config, std::uint64_t seed) {
  const int n = config.suite.n_tasks;
  const auto [lo, hi] = config.size_range();
  GroupSplit split;
  split.train = sample_training_groups(n, config.n_train_groups, {lo, hi},
                                       derive_seed(seed, kTrainGroups));
  const std::set<Group> used(split.train.begin(), split.train.end());
  std::vector<Group> rest;
  for (auto& g : candidate_universe(n, derive_seed(seed, kUniverse))) {
    if (static_cast<int>(g.size()) >= lo && static_cast<int>(g.size()) <= hi &&
        !used.count(g)) {
      rest.push_back(g);
    }
  }
  if (config.n_heldout_groups == 0 ||
      static_cast<std::size_t>(config.n_heldout_groups) >= rest.size()) {
    if (config.n_heldout_groups > 0 &&
        static_cast<std::size_t>(config.n_heldout_groups) > rest.size()) {
      throw Error("not enough groups left for the held-out set");
    }
    split.heldout = rest;
  } else {
    std::mt19937_64 rng(derive_seed(seed, kHeldoutGroups));
    std::shuffle(rest.begin(), rest.end(), rng);
    rest.resize(static_cast<std::size_t>(config.n_heldout_groups));
    std::sort(rest.begin(), rest.end(), [](const Group& a, const Group& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    split.heldout = rest;
  }
  for (const auto& g : split.heldout) {
    if (used.count(g)) throw Error("training and held-out groups overlap");
  }
  return split;
}

void stage_generate(const ExperimentConfig& config, std::size_t rep) {
  in_stage("generate", [&] {
    const auto seed = config.seeds.at(rep);
    export_suite(generate_suite(suite_for_seed(config, seed)),
                 rep_file(config, rep, "suite"));
  });
}

void stage_train_affinity(const ExperimentConfig& config, std::size_t rep) {
  in_stage("train-affinity", [&] {
    const auto seed = config.seeds.at(rep);
    const TaskSuite suite = import_suite(rep_file(config, rep, "suite"));
    std::vector<TaskId> all(static_cast<std::size_t>(suite.n_tasks()));
    std::iota(all.begin(), all.end(), 0);
    const TrainConfig train = train_for_seed(config, seed);
    const TrainedModel joint = train_mtl(Group(all), suite, train, true);
    const AffinityMatrix m =
        pairwise_affinity(joint.trace, train.learning_rate, train.momentum);
    io::write_json(rep_file(config, rep, "affinity.json"), m);
    io::write_file(rep_file(config, rep, "affinity.csv"), affinity_to_csv(m));
    if (config.write_trace) {
      std::vector<nlohmann::json> lines;
      for (const auto& st : joint.trace) lines.push_back(trace_to_json(st));
      io::write_jsonl(rep_file(config, rep, "trace.jsonl"), lines);
    }
  });
}

void stage_oracle(const ExperimentConfig& config, std::size_t rep) {
  in_stage("oracle", [&] {
    const auto seed = config.seeds.at(rep);
    const TaskSuite suite = import_suite(rep_file(config, rep, "suite"));
    const GroupSplit split = split_groups(config, seed);
    io::write_json(rep_file(config, rep, "groups.json"),
                   nlohmann::json{{"schema", "etap.groups/1"},
                                  {"train", labels(split.train)},
                                  {"heldout", labels(split.heldout)}});

    std::set<Group> wanted(split.train.begin(), split.train.end());
    wanted.insert(split.heldout.begin(), split.heldout.end());
    if (config.exhaustive_reference) {
      for (const auto& g :
           candidate_universe(suite.n_tasks(), derive_seed(seed, kUniverse))) {
        wanted.insert(g);
      }
    }
    std::vector<Group> ordered(wanted.begin(), wanted.end());
    std::sort(ordered.begin(), ordered.end(), [](const Group& a, const Group& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });

    const TrainConfig train = train_for_seed(config, seed);
    StlCache cache(suite, train);
    const GainBatch batch =
        measure_gains_batch(ordered, suite, train, config.workers, cache);
    std::vector<nlohmann::json> lines;
    for (const auto& r : batch.records) lines.push_back(r);
    io::write_jsonl(rep_file(config, rep, "gains.jsonl"), lines);
    io::write_file(rep_file(config, rep, "gains.csv"),
                   gains_to_csv(batch.records));

    nlohmann::json stl = nlohmann::json::object();
    for (TaskId t = 0; t < suite.n_tasks(); ++t) {
      stl[std::to_string(t)] = cache.test_loss(t, train.seed);
    }
    io::write_json(rep_file(config, rep, "stl_losses.json"), stl);

    if (!batch.errors.empty()) {
      nlohmann::json errs = nlohmann::json::array();
      for (const auto& [g, msg] : batch.errors) {
        errs.push_back({{"group", g.label()}, {"error", msg}});
      }
      io::write_json(rep_file(config, rep, "oracle_errors.json"), errs);
      // Training and held-out groups are required downstream.
      for (const auto& [g, msg] : batch.errors) {
        if (std::find(split.train.begin(), split.train.end(), g) !=
                split.train.end() ||
            std::find(split.heldout.begin(), split.heldout.end(), g) !=
                split.heldout.end()) {
          throw Error("group " + g.label() + ": " + msg);
        }
      }
    }
  });
}

namespace {

struct RepArtifacts {
  AffinityMatrix matrix;
  std::vector<GainRecord> all;
  std::vector<Group> train_groups;
  std::vector<Group> heldout_groups;
};

RepArtifacts load_artifacts(const ExperimentConfig& config, std::size_t rep) {
  RepArtifacts a;
  a.matrix = io::read_json(rep_file(config, rep, "affinity.json"))
                 .get<AffinityMatrix>();
  a.all = read_gains(rep_file(config, rep, "gains.jsonl"));
  const auto groups = io::read_json(rep_file(config, rep, "groups.json"));
  a.train_groups = groups_from_labels(groups.at("train"));
  a.heldout_groups = groups_from_labels(groups.at("heldout"));
  const std::set<Group> train(a.train_groups.begin(), a.train_groups.end());
  for (const auto& g : a.heldout_groups) {
    if (train.count(g)) {
      throw Error("held-out group " + g.label() + " is also a training group");
    }
  }
  return a;
}

EnsemblePredictor fit_for(const ExperimentConfig& config, std::size_t rep,
                          const RepArtifacts& a, MappingKind mapping,
                          bool residual) {
  const auto training =
      make_training_groups(lookup(a.all, a.train_groups), a.matrix);
  return fit_ensemble(training, a.matrix.n,
                      ensemble_options(config, config.seeds.at(rep), mapping,
                                       residual));
}

}  // namespace

void stage_fit(const ExperimentConfig& config, std::size_t rep) {
  in_stage("fit", [&] {
    const RepArtifacts a = load_artifacts(config, rep);
    const EnsemblePredictor p =
        fit_for(config, rep, a, config.mapping, config.residual_enabled);
    io::write_json(rep_file(config, rep, "predictor.json"), p);
  });
}

HeldoutEvaluation evaluate_predictor(const EnsemblePredictor& predictor,
                                     const AffinityMatrix& matrix,
                                     const std::vector<GainRecord>& heldout) {
  HeldoutEvaluation e;
  for (const auto& r : heldout) {
    const auto pred = predict(predictor, r.group, group_affinity(matrix, r.group));
    for (TaskId t : r.group) {
      e.actual.push_back(r.gains.at(t));
      e.predicted.push_back(pred.at(t));
    }
  }
  e.report = evaluate(e.actual, e.predicted);
  return e;
}

void stage_evaluate(const ExperimentConfig& config, std::size_t rep) {
  in_stage("evaluate", [&] {
    const RepArtifacts a = load_artifacts(config, rep);
    const EnsemblePredictor p = io::read_json(rep_file(config, rep, "predictor.json"))
                                    .get<EnsemblePredictor>();
    const auto heldout = lookup(a.all, a.heldout_groups);
    std::string csv = "group,task,actual,affinity,stage1,residual,final\n";
    std::vector<double> actual, stage1, final;
    for (const auto& r : heldout) {
      const auto ga = group_affinity(a.matrix, r.group);
      const auto parts = predict_parts(p, r.group, ga);
      for (TaskId t : r.group) {
        actual.push_back(r.gains.at(t));
        stage1.push_back(parts.stage1.at(t));
        final.push_back(parts.final.at(t));
        csv += r.group.label() + "," + std::to_string(t) + "," +
               io::format_double(r.gains.at(t)) + "," +
               io::format_double(ga.scores.at(t)) + "," +
               io::format_double(parts.stage1.at(t)) + "," +
               io::format_double(parts.residual.at(t)) + "," +
               io::format_double(parts.final.at(t)) + "\n";
      }
    }
    io::write_file(rep_file(config, rep, "predictions.csv"), csv);
    io::write_json(rep_file(config, rep, "evaluation.json"),
                   nlohmann::json{{"schema", "etap.evaluation/1"},
                                  {"final", evaluate(actual, final)},
                                  {"stage1", evaluate(actual, stage1)}});
  });
}

void stage_select(const ExperimentConfig& config, std::size_t rep) {
  in_stage("select", [&] {
    const auto seed = config.seeds.at(rep);
    const AffinityMatrix m = io::read_json(rep_file(config, rep, "affinity.json"))
                                 .get<AffinityMatrix>();
    const EnsemblePredictor p = io::read_json(rep_file(config, rep, "predictor.json"))
                                    .get<EnsemblePredictor>();
    const auto universe = candidate_universe(m.n, derive_seed(seed, kUniverse));
    for (int b : config.budgets) {
      const SelectionProblem problem = build_problem(p, m, universe, m.n, b);
      const SelectionResult result = select_branch_and_bound(problem);
      const auto stem = "selection_B" + std::to_string(b);
      io::write_json(rep_file(config, rep, stem + ".json"), result);
      io::write_file(rep_file(config, rep, stem + ".txt"),
                     selection_table(problem, result));
    }
  });
}

RealisedLoss realised_loss(const SelectionResult& selection,
                           const TaskSuite& suite, const TrainConfig& train,
                           StlCache& cache) {
  RealisedLoss out;
  std::map<Group, TrainedModel> models;
  for (TaskId t = 0; t < suite.n_tasks(); ++t) {
    double loss = 0.0;
    if (const auto& a = selection.assignment.at(t)) {
      const Group& g = selection.chosen.at(*a);
      auto it = models.find(g);
      if (it == models.end()) {
        it = models.emplace(g, train_mtl(g, suite, train)).first;
      }
      loss = it->second.losses.at(t).test;
    } else {
      loss = cache.test_loss(t, train.seed);
    }
    out.per_task[t] = loss;
    out.total += loss;
  }
  return out;
}

void stage_report(const ExperimentConfig& config, std::size_t rep) {
  in_stage("report", [&] {
    const auto seed = config.seeds.at(rep);
    const TaskSuite suite = import_suite(rep_file(config, rep, "suite"));
    const TrainConfig train = train_for_seed(config, seed);
    StlCache cache(suite, train);
    const int n = suite.n_tasks();

    std::vector<TaskId> all_ids(static_cast<std::size_t>(n));
    std::iota(all_ids.begin(), all_ids.end(), 0);
    SelectionResult naive;
    naive.chosen = {Group(all_ids)};
    naive.assignment.assign(static_cast<std::size_t>(n), 0);
    const RealisedLoss naive_loss = realised_loss(naive, suite, train, cache);

    std::vector<GainRecord> measured;
    const auto gains_path = rep_file(config, rep, "gains.jsonl");
    if (config.exhaustive_reference) measured = read_gains(gains_path);

    nlohmann::json budgets = nlohmann::json::array();
    for (int b : config.budgets) {
      const auto sel = io::read_json(rep_file(
                           config, rep, "selection_B" + std::to_string(b) + ".json"))
                           .get<SelectionResult>();
      const RealisedLoss etap_loss = realised_loss(sel, suite, train, cache);
      nlohmann::json entry{{"budget", b},
                           {"etap_groups", labels(sel.chosen)},
                           {"etap_total_loss", etap_loss.total},
                           {"naive_total_loss", naive_loss.total}};
      if (config.exhaustive_reference) {
        // Maximising absolute loss reduction is minimising realised loss.
        SelectionProblem truth;
        truth.n_tasks = n;
        truth.budget = b;
        for (const auto& r : measured) {
          Candidate c{r.group, {}};
          for (TaskId t : r.group) {
            c.gains[t] = r.stl_losses.at(t) - r.mtl_losses.at(t);
          }
          truth.candidates.push_back(std::move(c));
        }
        const SelectionResult best = select_exhaustive(truth);
        const RealisedLoss best_loss = realised_loss(best, suite, train, cache);
        entry["optimal_groups"] = labels(best.chosen);
        entry["optimal_total_loss"] = best_loss.total;
      }
      budgets.push_back(entry);
    }
    double stl_total = 0.0;
    for (TaskId t = 0; t < n; ++t) stl_total += cache.test_loss(t, train.seed);
    io::write_json(rep_file(config, rep, "report.json"),
                   nlohmann::json{{"schema", "etap.report/1"},
                                  {"stl_total_loss", stl_total},
                                  {"budgets", budgets}});
  });
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::kGenerate: return "generate";
    case Stage::kTrainAffinity: return "train-affinity";
    case Stage::kOracle: return "oracle";
    case Stage::kFit: return "fit";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kSelect: return "select";
    case Stage::kReport: return "report";
  }
  return "?";
}

void run_stage(const ExperimentConfig& config, Stage stage) {
  config.validate();
  for (std::size_t rep = 0; rep < config.seeds.size(); ++rep) {
    switch (stage) {
      case Stage::kGenerate: stage_generate(config, rep); break;
      case Stage::kTrainAffinity: stage_train_affinity(config, rep); break;
      case Stage::kOracle: stage_oracle(config, rep); break;
      case Stage::kFit: stage_fit(config, rep); break;
      case Stage::kEvaluate: stage_evaluate(config, rep); break;
      case Stage::kSelect: stage_select(config, rep); break;
      case Stage::kReport: stage_report(config, rep); break;
    }
  }
}

nlohmann::json summarize(const ExperimentConfig& config) {
  nlohmann::json reps = nlohmann::json::array();
  std::vector<double> r2, pr;
  std::map<int, std::vector<double>> etap, naive, optimal;
  for (std::size_t rep = 0; rep < config.seeds.size(); ++rep) {
    const auto eval = io::read_json(rep_file(config, rep, "evaluation.json"));
    const auto report = io::read_json(rep_file(config, rep, "report.json"));
    r2.push_back(eval.at("final").at("r2").get<double>());
    pr.push_back(eval.at("final").at("pearson").get<double>());
    for (const auto& b : report.at("budgets")) {
      const int budget = b.at("budget").get<int>();
      etap[budget].push_back(b.at("etap_total_loss").get<double>());
      naive[budget].push_back(b.at("naive_total_loss").get<double>());
      if (b.contains("optimal_total_loss")) {
        optimal[budget].push_back(b.at("optimal_total_loss").get<double>());
      }
    }
    reps.push_back({{"seed", config.seeds[rep]},
                    {"evaluation", eval},
                    {"report", report}});
  }
  nlohmann::json budgets = nlohmann::json::array();
  for (const auto& [b, v] : etap) {
    nlohmann::json e{{"budget", b},
                     {"etap_mean_loss", mean_of(v)},
                     {"naive_mean_loss", mean_of(naive[b])}};
    if (!optimal[b].empty()) e["optimal_mean_loss"] = mean_of(optimal[b]);
    budgets.push_back(e);
  }
  return nlohmann::json{{"schema", "etap.summary/1"},
                        {"heldout_r2_mean", mean_of(r2)},
                        {"heldout_r2_std", sample_std(r2)},
                        {"heldout_pearson_mean", mean_of(pr)},
                        {"heldout_pearson_std", sample_std(pr)},
                        {"budgets", budgets},
                        {"repetitions", reps}};
}

nlohmann::json run_experiment(const ExperimentConfig& config) {
  config.validate();
  io::write_json(config.output_dir / "config.json", config);
  for (Stage s : {Stage::kGenerate, Stage::kTrainAffinity, Stage::kOracle,
                  Stage::kFit, Stage::kEvaluate, Stage::kSelect,
                  Stage::kReport}) {
    run_stage(config, s);
  }
  const auto summary = summarize(config);
  io::write_json(config.output_dir / "summary.json", summary);
  return summary;
}

nlohmann::json compare_ablations(const ExperimentConfig& config) {
  config.validate();
  struct Cell {
    MappingKind mapping;
    bool residual;
  };
  const Cell cells[] = {{MappingKind::kAffine, false},
                        {MappingKind::kAffine, true},
                        {MappingKind::kSpline, false},
                        {MappingKind::kSpline, true}};
  nlohmann::json out_cells = nlohmann::json::array();
  std::vector<RepArtifacts> reps;
  for (std::size_t rep = 0; rep < config.seeds.size(); ++rep) {
    in_stage("ablate", [&] { reps.push_back(load_artifacts(config, rep)); });
  }
  for (const Cell& cell : cells) {
    std::vector<double> r2, pr;
    nlohmann::json per_seed = nlohmann::json::array();
    for (std::size_t rep = 0; rep < reps.size(); ++rep) {
      in_stage("ablate", [&] {
        const auto p = fit_for(config, rep, reps[rep], cell.mapping, cell.residual);
        const auto e = evaluate_predictor(
            p, reps[rep].matrix, lookup(reps[rep].all, reps[rep].heldout_groups));
        r2.push_back(e.report.r2);
        pr.push_back(e.report.pearson);
        per_seed.push_back({{"seed", config.seeds[rep]}, {"report", e.report}});
      });
    }
    out_cells.push_back({{"mapping", to_string(cell.mapping)},
                         {"residual_enabled", cell.residual},
                         {"r2_mean", mean_of(r2)},
                         {"r2_std", sample_std(r2)},
                         {"pearson_mean", mean_of(pr)},
                         {"pearson_std", sample_std(pr)},
                         {"per_seed", per_seed}});
  }
  nlohmann::json out{{"schema", "etap.ablation/1"}, {"cells", out_cells}};
  io::write_json(config.output_dir / "ablation.json", out);
  return out;
}

}  // namespace etap
