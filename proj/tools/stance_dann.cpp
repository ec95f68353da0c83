// Command-line front end: ingest, train, evaluate, gradcheck, synthbench.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stance/config.hpp"
#include "stance/hierarchy.hpp"
#include "stance/ingest.hpp"
#include "stance/metrics.hpp"
#include "stance/model_check.hpp"
#include "stance/synth.hpp"
#include "stance/trainer.hpp"

namespace fs = std::filesystem;
using namespace stance;

namespace {

std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write file: " + p.string());
  os << s;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  write_text(p, j.dump(2) + "\n");
}

nlohmann::json config_json(const RunConfig& rc) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_key_values(rc.model)) j[k] = v;
  for (const auto& [k, v] : to_key_values(rc.train)) j[k] = v;
  return j;
}

std::string history_text(const TrainingHistory& h) {
  std::ostringstream os;
  write_history(os, h);
  return os.str();
}

// gnuplot recipe over the validation columns of each history file.
std::string plot_script(const std::vector<std::string>& histories) {
  std::string s =
      "set xlabel 'epoch'\nset ylabel 'validation loss'\nset key outside\n"
      "plot ";
  for (std::size_t i = 0; i < histories.size(); ++i) {
    const std::string& f = histories[i];
    if (i) s += ", \\\n     ";
    s += "'" + f + "' using 1:5 with lines title 'label run " +
         std::to_string(i) + "', '" + f +
         "' using 1:($6) with lines title 'domain run " + std::to_string(i) +
         "'";
  }
  return s + "\n";
}

std::string fixed3(double v) {
  char b[16];
  std::snprintf(b, sizeof b, "%.3f", v);
  return b;
}

std::string class_list(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& c : v) s += (s.empty() ? "" : ",") + c;
  return s;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string fnc_stances, fnc_bodies, fever, out;
};

int cmd_ingest(const IngestArgs& a) {
  if (a.fnc_stances.empty() != a.fnc_bodies.empty()) {
    throw std::invalid_argument("--fnc-stances and --fnc-bodies go together");
  }
  if (a.fnc_stances.empty() && a.fever.empty()) {
    throw std::invalid_argument("nothing to ingest");
  }
  std::vector<LabeledPair> all;
  FeverLoadStats fever_stats;
  if (!a.fnc_stances.empty()) {
    auto fnc = load_fnc(a.fnc_stances, a.fnc_bodies);
    all.insert(all.end(), fnc.begin(), fnc.end());
  }
  if (!a.fever.empty()) {
    auto fever = load_fever(a.fever, &fever_stats);
    all.insert(all.end(), fever.begin(), fever.end());
  }
  {
    std::ofstream os(a.out, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write file: " + a.out);
    write_dataset(os, all);
  }
  std::map<std::string, std::size_t> by_domain;
  std::map<std::pair<std::string, std::string>, std::size_t> by_label;
  for (const auto& p : all) {
    ++by_domain[std::string(to_string(p.domain))];
    ++by_label[{std::string(to_string(p.domain)),
                std::string(to_string(p.label))}];
  }
  std::cout << "pairs " << all.size() << "\n";
  for (const char* d : {"target", "source"}) {
    std::cout << d << " " << by_domain[d] << "\n";
    for (StanceLabel l : kAllStances) {
      const auto n = by_label[{d, std::string(to_string(l))}];
      if (n) std::cout << "  " << to_string(l) << " " << n << "\n";
    }
  }
  if (!a.fever.empty()) {
    std::cout << "dropped_nei " << fever_stats.dropped_nei << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, data, out_dir;
  std::size_t runs = 0;
  std::int64_t seed = -1;
  bool hierarchy = false;
};

struct StageOutput {
  std::vector<std::string> histories;
  std::size_t best = 0;
  std::vector<double> min_val;
};

// Trains the configured runs, writes their histories, returns the best run.
StageOutput train_stage(const ModelConfig& mc, const TrainConfig& tc,
                        std::span<const LabeledPair> source,
                        std::span<const LabeledPair> target,
                        const fs::path& dir, const std::string& prefix,
                        const std::string& checkpoint) {
  auto runs = train_runs(mc, tc, source, target);
  StageOutput out;
  std::vector<TrainingHistory> hs;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string name = prefix + "history_run" + std::to_string(i) + ".tsv";
    write_text(dir / name, history_text(runs[i].history));
    out.histories.push_back(name);
    hs.push_back(runs[i].history);
    out.min_val.push_back(runs[i].history.min_validation(tc.selection));
  }
  out.best = select_best_index(hs, tc.selection);
  save_checkpoint(runs[out.best].model, (dir / checkpoint).string());
  return out;
}

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.runs) rc.train.runs = a.runs;
  if (a.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(a.seed);
  rc.model.validate();
  rc.train.validate();
  const auto data = read_dataset(a.data);
  std::vector<LabeledPair> source, target;
  for (const auto& p : data) {
    (p.domain == DomainTag::source ? source : target).push_back(p);
  }
  if (target.empty()) throw std::invalid_argument(a.data + ": no target examples");
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["config"] = config_json(rc);
  manifest["datasets"] = {{{"path", a.data}, {"fnv1a64", fnv1a_file(a.data)}}};
  manifest["seed"] = rc.train.seed;
  manifest["runs"] = rc.train.runs;
  manifest["hierarchy"] = a.hierarchy;
  std::vector<std::string> checkpoints =
      a.hierarchy ? std::vector<std::string>{"stage1.ckpt", "stage2.ckpt"}
                  : std::vector<std::string>{"model.ckpt"};
  manifest["artifacts"]["checkpoints"] = checkpoints;
  manifest["artifacts"]["plot"] = "plot.gp";
  manifest["status"] = "training";
  write_json(dir / "manifest.json", manifest);

  std::vector<std::string> all_histories;
  auto record = [&](const std::string& key, const StageOutput& s) {
    manifest["artifacts"][key] = s.histories;
    manifest["best_run"][key] = s.best;
    manifest["min_validation"][key] = s.min_val;
    all_histories.insert(all_histories.end(), s.histories.begin(),
                         s.histories.end());
  };
  if (!a.hierarchy) {
    record("histories",
           train_stage(rc.model, rc.train, source, target, dir, "", "model.ckpt"));
  } else {
    // Stage 1: BOW relatedness gate on target only, no domain head.
    ModelConfig s1 = rc.model;
    s1.use_bow = true;
    s1.use_cnn = false;
    s1.da_bow = s1.da_cnn = false;
    s1.scheme = LabelScheme::related2;
    ModelConfig s2 = rc.model;
    s2.scheme = LabelScheme::stance3;
    TrainConfig t1 = rc.train;
    t1.lambda_max = 0.0;
    record("stage1_histories",
           train_stage(s1, t1, {}, target, dir, "stage1_", "stage1.ckpt"));
    const auto related = stage2_pool(target);
    if (related.empty()) {
      throw std::invalid_argument("hierarchy: no related examples for stage 2");
    }
    record("stage2_histories",
           train_stage(s2, rc.train, source, related, dir, "stage2_",
                       "stage2.ckpt"));
  }
  write_text(dir / "plot.gp", plot_script(all_histories));
  manifest["status"] = "complete";
  write_json(dir / "manifest.json", manifest);
  std::cout << "wrote " << (dir / "manifest.json").string() << "\n";
  for (const auto& [k, v] : manifest["best_run"].items()) {
    std::cout << "best_run " << k << " " << v << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint, data, hierarchy, json_out;
};

const std::vector<std::string>& scorer_classes() {
  static const std::vector<std::string> c{"agree", "disagree", "discuss",
                                          "unrelated"};
  return c;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const auto data = read_dataset(a.data);
  if (data.empty()) throw std::invalid_argument(a.data + ": no examples");
  std::vector<StanceLabel> gold, pred;
  for (const auto& p : data) gold.push_back(p.label);
  if (a.hierarchy.empty()) {
    const StanceModel m = load_checkpoint(a.checkpoint);
    if (class_names(m.config.scheme) != scorer_classes()) {
      throw std::invalid_argument(
          "class order mismatch: checkpoint predicts " +
          class_list(class_names(m.config.scheme)) + ", scorer expects " +
          class_list(scorer_classes()));
    }
    std::vector<FeatureBundle> bundles;
    for (const auto& p : data) bundles.push_back(m.features(p));
    pred = predict_stances(m, bundles);
  } else {
    HierarchicalModel h{load_checkpoint(a.checkpoint),
                        load_checkpoint(a.hierarchy)};
    if (h.stage1.config.scheme != LabelScheme::related2 ||
        h.stage2.config.scheme != LabelScheme::stance3) {
      throw std::invalid_argument(
          "class order mismatch: hierarchy needs stage 1 " +
          class_list(class_names(LabelScheme::related2)) + " and stage 2 " +
          class_list(class_names(LabelScheme::stance3)) + ", got " +
          class_list(class_names(h.stage1.config.scheme)) + " and " +
          class_list(class_names(h.stage2.config.scheme)));
    }
    HierarchyRoutingStats stats;
    pred = predict_hierarchical(h, data, &stats);
    std::cerr << "stage1 " << stats.stage1_examples << " stage2 "
              << stats.stage2_examples << "\n";
  }
  const EvaluationRow row = evaluate(gold, pred);
  std::string per;
  for (double f : row.per_class_f1) per += (per.empty() ? "" : "/") + fixed3(f);
  std::cout << fixed3(row.weighted_accuracy) << " " << fixed3(row.accuracy)
            << " " << fixed3(row.macro_f1) << " " << per << "\n";
  nlohmann::json j{{"weighted_accuracy", row.weighted_accuracy},
                   {"accuracy", row.accuracy},
                   {"macro_f1", row.macro_f1},
                   {"classes", scorer_classes()},
                   {"per_class_f1", row.per_class_f1},
                   {"examples", data.size()}};
  write_json(a.json_out.empty() ? a.checkpoint + ".eval.json" : a.json_out, j);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string config, corrupt;
  std::uint64_t seed = 1;
  double lambda = 1.0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  ModelCheckOptions o;
  o.seed = a.seed;
  o.lambda = a.lambda;
  o.corrupt = a.corrupt;
  if (!a.config.empty()) {
    const RunConfig rc = load_run_config(a.config);
    o.variants = {variant_of(rc.model)};
  }
  const ModelCheckResult r = check_model_gradients(o);
  write_model_check(std::cout, r);
  if (!r.passed()) {
    std::set<std::string> bad;
    for (const auto& p : r.passes) {
      for (const auto& f : p.report.failures()) bad.insert(f);
    }
    for (const auto& [name, ok] : r.zero_lambda) {
      if (!ok) bad.insert(name + " (lambda=0)");
    }
    std::cerr << "gradient check failed:";
    for (const auto& b : bad) std::cerr << " " << b;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------- synthbench

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t seeds = 5;
  std::int64_t epochs = -1;
  std::string out_dir;
};

int cmd_synthbench(const SynthArgs& a) {
  SynthBenchConfig cfg = SynthBenchConfig::defaults();
  if (a.epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(a.epochs);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(a.seed + i);
  const SynthBenchReport r = run_synthbench(cfg, seeds);
  const SynthVerdict v = judge_synthbench(r);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::ostringstream text;
  write_synth_text(text, r, v);
  write_text(dir / "synthbench.txt", text.str());
  write_json(dir / "synthbench.json", synth_json(r, v));
  for (const auto& s : r.seeds) {
    const std::string tag = std::to_string(s.seed);
    write_text(dir / ("history_da_seed" + tag + ".tsv"),
               history_text(s.da.history));
    write_text(dir / ("history_noda_seed" + tag + ".tsv"),
               history_text(s.no_da.history));
  }
  std::cout << text.str();
  std::printf("runtime %.1fs\n", r.seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial domain adaptation for stance detection"};
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Normalize FNC and FEVER files");
  ingest->add_option("--fnc-stances", ia.fnc_stances, "FNC stances CSV");
  ingest->add_option("--fnc-bodies", ia.fnc_bodies, "FNC bodies CSV");
  ingest->add_option("--fever", ia.fever, "FEVER JSONL with resolved documents");
  ingest->add_option("--out", ia.out, "Normalized dataset output")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train and select the best run");
  train_cmd->add_option("--config", ta.config, "key = value config")->required();
  train_cmd->add_option("--data", ta.data, "Normalized dataset")->required();
  train_cmd->add_option("--out-dir", ta.out_dir, "Output directory")->required();
  train_cmd->add_option("--runs", ta.runs, "Override the run count");
  train_cmd->add_option("--seed", ta.seed, "Override the seed");
  train_cmd->add_flag("--hierarchy", ta.hierarchy,
                      "Train the two-stage model");

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint, "Model (or stage 1)")->required();
  eval->add_option("--data", ea.data, "Labeled normalized dataset")->required();
  eval->add_option("--hierarchy", ea.hierarchy, "Stage-2 checkpoint");
  eval->add_option("--json", ea.json_out, "Sidecar path");

  GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks");
  grad->add_option("--config", ga.config, "Check only this architecture");
  grad->add_option("--seed", ga.seed, "Seed");
  grad->add_option("--lambda", ga.lambda, "Reversal scale")
      ->check(CLI::NonNegativeNumber);
  grad->add_option("--corrupt", ga.corrupt, "Fault injection: layer name")
      ->check(CLI::IsMember(corruptible_layers()));

  SynthArgs sa;
  auto* synth = app.add_subcommand("synthbench", "DA vs no-DA on synthetic data");
  synth->add_option("--seed", sa.seed, "First seed");
  synth->add_option("--seeds", sa.seeds, "Number of seeds")
      ->check(CLI::PositiveNumber);
  synth->add_option("--epochs", sa.epochs, "Override the epoch count");
  synth->add_option("--out-dir", sa.out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest) return cmd_ingest(ia);
    if (*train_cmd) return cmd_train(ta);
    if (*eval) return cmd_evaluate(ea);
    if (*grad) return cmd_gradcheck(ga);
    if (*synth) return cmd_synthbench(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
