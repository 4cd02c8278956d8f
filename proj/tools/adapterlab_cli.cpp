#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "adapterlab/analysis.hpp"
#include "adapterlab/errors.hpp"
#include "lab_config.hpp"

namespace fs = std::filesystem;
using namespace adapterlab;
using cli::LabConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumeric = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string registry;
  std::string out;
  std::size_t runs = 1;
  std::size_t workers = 0;  // 0: take from config

  LabConfig load() const {
    LabConfig c = config_path.empty() ? LabConfig{} : cli::load_config(config_path);
    if (seed) c.train.seed = *seed;
    if (workers > 0) c.workers = workers;
    return c;
  }

  fs::path registry_dir() const {
    if (registry.empty()) throw InputError("--registry is required");
    return registry;
  }
};

void add_common(CLI::App* app, Common& c, bool registry_flag = true) {
  app->add_option("--config", c.config_path, "JSON config (model, adapter, train, pretrain, task sections)")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Base seed; run i uses seed + i");
  if (registry_flag) app->add_option("--registry", c.registry, "Registry directory");
  app->add_option("--out", c.out, "CSV output path (stdout when omitted)");
  app->add_option("--runs", c.runs, "Independent runs per configuration, best by validation accuracy")
      ->check(CLI::PositiveNumber);
  app->add_option("--workers", c.workers, "Parallel training workers");
}

void emit(const std::string& csv, const std::string& out) {
  if (out.empty()) {
    std::cout << csv;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw InputError("cannot write '" + out + "'");
  f << csv;
  if (!f) throw InputError("failed writing '" + out + "'");
  std::cerr << "wrote " << out << '\n';
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

TuningStrategy strategy_or_default(const std::string& text, const LabConfig& c, const ModelConfig& model) {
  const TuningStrategy s = text.empty() ? TuningStrategy{AdapterTuning{c.adapter}} : parse_strategy(text);
  validate_strategy(s, model);
  if (const auto* a = std::get_if<AdapterTuning>(&s); a && a->adapter.validate(model.width)) {
    std::cerr << "warning: adapter bottleneck equals the model width; adapters are meant to be narrow\n";
  }
  return s;
}

SyntheticTask make_task(const LabConfig& c, const std::string& kind, std::size_t vocab) {
  SyntheticTaskSpec spec = c.task;
  if (!kind.empty()) spec.kind = parse_task_kind(kind);
  spec.vocab = vocab;
  return generate_task(spec);
}

// ---- pretrain ----------------------------------------------------------------

struct PretrainArgs {
  Common common;
};

void run_pretrain(const PretrainArgs& a) {
  const LabConfig c = a.common.load();
  const fs::path dir = a.common.registry_dir();
  if (fs::exists(dir / "base.ckpt")) throw ConflictError("registry '" + dir.string() + "' already has a base model");
  const auto corpus =
      generate_corpus(c.model.vocab, c.pretrain.content_length, c.pretrain.corpus_size, derive_seed(c.train.seed, 7));
  TrainConfig tc = c.train;
  tc.epochs = 0;
  tc.total_steps = c.pretrain.steps;
  tc.peak_lr = c.pretrain.peak_lr;
  tc.batch_size = c.pretrain.batch_size;
  std::cerr << "pretraining " << c.model.layers << "x" << c.model.width << " encoder for " << tc.total_steps
            << " steps on " << corpus.size() << " sequences\n";
  PretrainResult r = mlm_pretrain(corpus, c.model, tc, c.pretrain.mask_rate, c.pretrain.init_std);
  TaskRegistry reg(std::make_shared<const BaseParameters>(std::move(r.base)));
  reg.save(dir);
  std::string csv = "step,mlm_loss\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) csv += std::to_string(i) + ',' + num(r.losses[i]) + '\n';
  if (!a.common.out.empty()) emit(csv, a.common.out);
  std::cerr << "final loss " << r.losses.back() << ", saved " << (dir / "base.ckpt").string() << '\n';
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string task_kind;
  std::string task_id;
  std::string strategy;
  bool replace = false;
};

void run_train(const TrainArgs& a) {
  const LabConfig c = a.common.load();
  const fs::path dir = a.common.registry_dir();
  TaskRegistry reg = TaskRegistry::load(dir);
  const SyntheticTask task = make_task(c, a.task_kind, reg.base().config.vocab);
  const std::string id = a.task_id.empty() ? task.name() : a.task_id;
  validate_task_id(id);
  if (reg.contains(id) && !a.replace) throw ConflictError("task '" + id + "' already registered (use --replace)");

  RerunRequest req;
  req.task_id = id;
  req.strategy = strategy_or_default(a.strategy, c, reg.base().config);
  req.runs = a.common.runs;
  req.config = c.train;
  req.workers = c.workers;
  std::cerr << "training '" << id << "' on " << task.name() << " with " << format_strategy(req.strategy) << ", "
            << req.runs << " run(s)\n";
  RerunResult r = rerun_best_of(reg.base_ptr(), task, req);
  for (const auto& o : r.runs) {
    std::cerr << "  seed " << o.seed << ": "
              << (o.failed ? "failed (" + o.failure + ")" : "val " + num(o.val_accuracy)) << '\n';
  }
  if (!reg.contains(id)) reg.add_task(id, req.strategy, task.num_classes, 0);
  reg.store(r.best.artifact);
  reg.save(dir);
  const auto part = trainable_partition(req.strategy, reg.base().config, task.num_classes);
  std::cout << "task " << id << " val_accuracy " << num(r.best.best_val_accuracy) << " seed "
            << r.runs[r.best_index].seed << " trained_fraction " << num(part.trainable_fraction()) << '\n';
  if (!a.common.out.empty()) {
    emit(history_csv({{id + "/seed" + std::to_string(r.runs[r.best_index].seed), r.best.history}}), a.common.out);
  }
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string task_kind;
  std::vector<std::string> task_ids;
  std::string split = "test";
};

const std::vector<Example>& pick_split(const SyntheticTask& t, const std::string& split) {
  if (split == "train") return t.train;
  if (split == "validation") return t.validation;
  if (split == "test") return t.test;
  throw InputError("unknown split '" + split + "' (train, validation, test)");
}

void run_eval(const EvalArgs& a) {
  const LabConfig c = a.common.load();
  const TaskRegistry reg = TaskRegistry::load(a.common.registry_dir());
  std::vector<std::string> ids = a.task_ids.empty() ? reg.task_ids() : a.task_ids;
  if (ids.empty()) throw InputError("registry has no tasks to evaluate");
  std::string csv = "task_id,task,split,accuracy,majority_rate\n";
  for (const auto& id : ids) {
    const TaskArtifact art = reg.artifact(id);
    std::string kind = a.task_kind;
    if (kind.empty()) {
      auto it = art.metadata.hyperparameters.find("task");
      if (it == art.metadata.hyperparameters.end()) throw InputError("task '" + id + "' has no recorded task; pass --task");
      kind = it->second;
    }
    const SyntheticTask task = make_task(c, kind, reg.base().config.vocab);
    const auto& split = pick_split(task, a.split);
    csv += id + ',' + task.name() + ',' + a.split + ',' + num(evaluate(reg.activate(id), split)) + ',' +
           num(majority_fraction(split, task.num_classes)) + '\n';
  }
  emit(csv, a.common.out);
}

// ---- ablate ------------------------------------------------------------------

struct AblateArgs {
  Common common;
  std::string task_id;
  std::string task_kind;
  std::optional<std::size_t> first, last;
  bool revert_layernorm = false;
  std::string split = "validation";
};

void run_ablate(const AblateArgs& a) {
  const LabConfig c = a.common.load();
  const TaskRegistry reg = TaskRegistry::load(a.common.registry_dir());
  const TaskArtifact art = reg.artifact(a.task_id);
  std::string kind = a.task_kind;
  if (kind.empty()) kind = art.metadata.hyperparameters.count("task") ? art.metadata.hyperparameters.at("task") : "";
  if (kind.empty()) throw InputError("task '" + a.task_id + "' has no recorded task; pass --task");
  const SyntheticTask task = make_task(c, kind, reg.base().config.vocab);
  const auto& split = pick_split(task, a.split);
  const ModelView view = reg.activate(a.task_id);
  if (a.first || a.last) {
    const AblationSpec spec{a.first.value_or(0), a.last.value_or(reg.base().config.layers - 1), a.revert_layernorm};
    const double delta = ablate_span(view, spec, split);
    emit("first_layer,last_layer,delta_pp\n" + std::to_string(spec.first_layer) + ',' +
             std::to_string(spec.last_layer) + ',' + num(100.0 * delta) + '\n',
         a.common.out);
  } else {
    emit(ablation_heatmap(view, split, a.revert_layernorm).to_csv(), a.common.out);
  }
}

// ---- sweep -------------------------------------------------------------------

struct SweepArgs {
  Common common;
  std::string kind;  // size | topk | init | lr
  std::string task_kind;
  std::string grid = "desk";
  std::vector<double> values;
  std::string strategy;
};

template <class T>
std::vector<T> grid_or(const std::vector<double>& values, const std::vector<T>& fallback) {
  if (values.empty()) return fallback;
  std::vector<T> out;
  for (double v : values) {
    if constexpr (std::is_integral_v<T>) {
      if (v < 0 || v != static_cast<double>(static_cast<T>(v))) throw InputError("grid value " + num(v) + " is not a count");
    }
    out.push_back(static_cast<T>(v));
  }
  return out;
}

void run_sweep(const SweepArgs& a) {
  const LabConfig c = a.common.load();
  const TaskRegistry reg = TaskRegistry::load(a.common.registry_dir());
  if (a.grid != "desk" && a.grid != "wide") throw InputError("--grid must be 'desk' or 'wide'");
  const bool wide = a.grid == "wide";
  SweepSetup setup{reg.base_ptr(), make_task(c, a.task_kind, reg.base().config.vocab), c.train, a.common.runs,
                   c.adapter, c.workers};
  std::cerr << "sweep " << a.kind << " on " << setup.task.name() << " with " << setup.runs << " run(s) per point\n";
  SweepReport report;
  if (a.kind == "size") {
    report = sweep_adapter_size(setup, grid_or(a.values, wide ? grids::kWideAdapterSize : grids::kDeskAdapterSize));
  } else if (a.kind == "topk") {
    std::vector<std::size_t> fallback;
    for (std::size_t k = 0; k <= reg.base().config.layers; ++k) fallback.push_back(k);
    if (wide) fallback = grids::kWideTopK;
    const auto ks = grid_or(a.values, fallback);
    for (std::size_t k : ks) validate_strategy(VariableFineTune{k}, reg.base().config);
    report = sweep_top_k(setup, ks);
  } else if (a.kind == "init") {
    report = sweep_init_scale(setup, grid_or(a.values, wide ? grids::kWideInitStd : grids::kDeskInitStd));
  } else if (a.kind == "lr") {
    const TuningStrategy s = strategy_or_default(a.strategy, c, reg.base().config);
    report = sweep_learning_rate(setup, s, grid_or(a.values, wide ? grids::kWideLearningRate : grids::kDeskLearningRate));
  } else {
    throw InputError("unknown sweep '" + a.kind + "' (size, topk, init, lr)");
  }
  report.metadata["grid"] = a.values.empty() ? a.grid : "custom";
  emit(report.to_csv(), a.common.out);
}

// ---- budget ------------------------------------------------------------------

struct BudgetArgs {
  Common common;
  std::vector<std::size_t> tasks{1, 9, 17};
  std::vector<std::string> strategies;
  std::optional<double> fraction;
  std::string geometry = "config";
  std::size_t classes = 2;
};

ModelConfig named_geometry(const std::string& name, const LabConfig& c) {
  if (name == "config") return c.model;
  if (name == "base") return ModelConfig{.layers = 12, .width = 768, .heads = 12, .ffn_width = 3072, .vocab = 30522, .max_len = 512};
  if (name == "large") return ModelConfig{.layers = 24, .width = 1024, .heads = 16, .ffn_width = 4096, .vocab = 30522, .max_len = 512};
  throw InputError("unknown geometry '" + name + "' (config, base, large)");
}

void run_budget(const BudgetArgs& a) {
  const LabConfig c = a.common.load();
  std::string csv = "strategy,trained_fraction,tasks,multiplier\n";
  if (a.fraction) {
    if (!(*a.fraction >= 0.0 && *a.fraction <= 1.0)) throw RangeError("--fraction must lie in [0, 1]");
    for (std::size_t n : a.tasks)
      csv += "fraction," + num(*a.fraction) + ',' + std::to_string(n) + ',' + num(param_budget_from_fraction(n, *a.fraction)) + '\n';
  } else {
    const ModelConfig geometry = named_geometry(a.geometry, c);
    std::vector<TuningStrategy> strategies;
    for (const auto& s : a.strategies) strategies.push_back(parse_strategy(s));
    if (strategies.empty()) strategies = {FullFineTune{}, LayerNormOnly{}, AdapterTuning{c.adapter}};
    for (const auto& s : strategies) {
      const double rho = trainable_partition(s, geometry, a.classes).trainable_fraction();
      for (std::size_t n : a.tasks)
        csv += format_strategy(s) + ',' + num(rho) + ',' + std::to_string(n) + ',' +
               num(param_budget(n, s, geometry, a.classes)) + '\n';
    }
  }
  emit(csv, a.common.out);
}

// ---- tradeoff ----------------------------------------------------------------

struct TradeoffArgs {
  Common common;
  std::vector<std::string> reports;
  std::string reference = "full";
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return fields;
}

// Reads sweep reports; method is the strategy kind, budget the trained fraction
// and score the metric in percent.
void run_tradeoff(const TradeoffArgs& a) {
  if (a.reports.empty()) throw InputError("tradeoff needs at least one sweep report");
  std::vector<ScoreRecord> scores;
  std::map<std::string, double> reference;
  for (const auto& path : a.reports) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read report '" + path + "'");
    std::string line, task;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line.rfind("# ", 0) == 0) {
        if (line.rfind("# task=", 0) == 0) task = line.substr(7);
        continue;
      }
      if (!header) {
        if (line.rfind("strategy,hyperparameters,", 0) != 0) throw InputError(path + ": not a sweep report");
        header = true;
        continue;
      }
      if (task.empty()) throw InputError(path + ": report metadata has no task");
      const auto f = split_csv_line(line);
      if (f.size() != 7) throw InputError(path + ":" + std::to_string(line_no) + ": expected 7 fields");
      double fraction = 0.0, metric = 0.0;
      try {
        fraction = std::stod(f[4]);
        metric = std::stod(f[5]);
      } catch (const std::exception&) {
        throw InputError(path + ":" + std::to_string(line_no) + ": malformed number");
      }
      const double score = 100.0 * metric;
      // Any row that trains every parameter is full fine-tuning, e.g. top-k with k = L.
      if (f[0] == a.reference || fraction == 1.0) {
        auto [it, inserted] = reference.emplace(task, score);
        if (!inserted) it->second = std::max(it->second, score);
      }
      scores.push_back({f[0], fraction, task, score});
    }
  }
  emit(bands_csv(normalize_and_percentiles(scores, reference)), a.common.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adapterlab: adapter tuning experiments on a small Transformer encoder"};
  app.require_subcommand(1);

  PretrainArgs pretrain;
  auto* p = app.add_subcommand("pretrain", "Masked-token pretraining of a fresh base into a new registry");
  add_common(p, pretrain.common);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a task on the registry's frozen base (best of --runs)");
  add_common(t, train.common);
  t->add_option("--task", train.task_kind, "parity, majority or first_last_match");
  t->add_option("--task-id", train.task_id, "Registry id (defaults to the task name)");
  t->add_option("--strategy", train.strategy, "full, layernorm, top:N or adapter:M[:STD[:ACT]]");
  t->add_flag("--replace", train.replace, "Overwrite an existing task");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Accuracy of registered tasks");
  add_common(e, ev.common);
  e->add_option("--task-id", ev.task_ids, "Tasks to evaluate (default all)");
  e->add_option("--task", ev.task_kind, "Override the recorded task kind");
  e->add_option("--split", ev.split, "train, validation or test");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Remove trained adapters over layer spans and re-evaluate");
  add_common(b, ab.common);
  b->add_option("--task-id", ab.task_id, "Registered adapter task")->required();
  b->add_option("--task", ab.task_kind, "Override the recorded task kind");
  b->add_option("--first", ab.first, "First layer of a single span (heatmap when omitted)");
  b->add_option("--last", ab.last, "Last layer of the span, inclusive");
  b->add_flag("--revert-layernorm", ab.revert_layernorm, "Also restore the span's pretrained layer norms");
  b->add_option("--split", ab.split, "train, validation or test");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Grid sweeps: size, topk, init or lr");
  add_common(s, sw.common);
  s->add_option("kind", sw.kind, "size, topk, init or lr")->required()->check(CLI::IsMember({"size", "topk", "init", "lr"}));
  s->add_option("--task", sw.task_kind, "parity, majority or first_last_match");
  s->add_option("--grid", sw.grid, "desk (small, default) or wide");
  s->add_option("--values", sw.values, "Explicit grid values");
  s->add_option("--strategy", sw.strategy, "Strategy for the lr sweep (default adapter from config)");

  BudgetArgs bu;
  auto* g = app.add_subcommand("budget", "Total stored parameters for N tasks relative to one model");
  add_common(g, bu.common, false);
  g->add_option("--tasks", bu.tasks, "Task counts");
  g->add_option("--strategy", bu.strategies, "Strategies (default full, layernorm, adapter)");
  g->add_option("--fraction", bu.fraction, "Use this trained fraction instead of a strategy");
  g->add_option("--geometry", bu.geometry, "config, base or large");
  g->add_option("--classes", bu.classes, "Classes per task head");

  TradeoffArgs tr;
  auto* o = app.add_subcommand("tradeoff", "Percentile bands of scores relative to full fine-tuning");
  add_common(o, tr.common, false);
  o->add_option("reports", tr.reports, "Sweep report CSVs")->required();
  o->add_option("--reference", tr.reference, "Strategy kind used as the per-task reference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*p) run_pretrain(pretrain);
    if (*t) run_train(train);
    if (*e) run_eval(ev);
    if (*b) run_ablate(ab);
    if (*s) run_sweep(sw);
    if (*g) run_budget(bu);
    if (*o) run_tradeoff(tr);
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
