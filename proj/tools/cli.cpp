// Copyright 2026 The dptab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "dptab/accountant.hpp"
#include "dptab/checkpoint.hpp"
#include "dptab/config.hpp"
#include "dptab/dp_trainer.hpp"
#include "dptab/eval.hpp"
#include "dptab/gbt.hpp"
#include "dptab/sampler.hpp"
#include "dptab/schema.hpp"
#include "json.hpp"

namespace dptab::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct Overrides {
  std::vector<std::pair<std::string, std::string>> items;
  std::string config_file;
};

void flag(CLI::App* app, const std::string& name, const std::string& key, Overrides& o, const std::string& help) {
  app->add_option_function<std::string>(name, [&o, key](const std::string& v) { o.items.emplace_back(key, v); }, help);
}

void switch_flag(CLI::App* app, const std::string& name, const std::string& key, Overrides& o,
                 const std::string& help) {
  app->add_flag_callback(name, [&o, key] { o.items.emplace_back(key, "true"); }, help);
}

void common_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "flat key=value config file");
  flag(app, "--seed", "seed", o, "random seed (required)");
  flag(app, "--workers", "workers", o, "worker threads");
  flag(app, "--out", "output.dir", o, "output directory");
  app->add_option_function<std::vector<std::string>>(
      "--set",
      [&o](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expects key=value");
          o.items.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
      },
      "override any config key (key=value)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig config = default_run_config();
  if (!o.config_file.empty()) apply_config_file(config, o.config_file);
  if (const char* env = std::getenv("DPTAB_OUTPUT_DIR"); env && *env) config.output_dir = env;
  for (const auto& [k, v] : o.items) config.set(k, v);
  return config;
}

fs::path output_dir(const RunConfig& config) {
  if (config.output_dir.empty()) throw InputError("an output directory is required (--out)");
  fs::path dir(config.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::string provenance(const RunConfig& config) {
  return "config_hash=" + config.hash() + ", seed=" + std::to_string(config.require_seed());
}

Json stamp(const RunConfig& config) {
  Json j;
  j["config_hash"] = config.hash();
  j["seed"] = config.require_seed();
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(v > 0 ? "inf" : "-inf"); }

Json optional_number(const std::optional<double>& v) { return v ? json_number(*v) : Json(nullptr); }

std::string require_path(const std::string& value, const char* what) {
  if (value.empty()) throw InputError(std::string("missing ") + what);
  if (!fs::exists(value)) throw InputError(std::string(what) + " not found: " + value);
  return value;
}

// --- prepare -------------------------------------------------------------------

int cmd_prepare(const RunConfig& config, std::ostream& out) {
  const std::uint64_t seed = config.require_seed();
  const fs::path dir = output_dir(config);
  const std::string csv = require_path(config.data_csv, "input CSV (--csv)");
  Schema schema;
  Table table;
  if (!config.schema_path.empty()) {
    schema = load_schema(require_path(config.schema_path, "schema (--schema)"));
    if (!config.target.empty()) schema.target_feature = config.target;
    if (!config.sensitive.empty()) schema.sensitive_feature = config.sensitive;
    schema.validate();
    table = load_csv(csv, schema);
  } else {
    const RawCsv raw = load_raw_csv(csv);
    schema = infer_schema(raw, config.target,
                          config.sensitive.empty() ? std::nullopt : std::optional<std::string>(config.sensitive));
    table = load_csv(csv, schema);
  }
  auto [train, test] = split_train_test(table, config.train_fraction, seed);
  Json schema_doc = Json::parse(schema_to_json(schema));
  schema_doc["provenance"] = stamp(config);
  write_text(dir / "schema.json", schema_doc.dump(2));
  save_csv(dir / "train.csv", train, provenance(config));
  save_csv(dir / "test.csv", test, provenance(config));
  std::size_t categorical = 0;
  for (const auto& f : schema.features) categorical += f.is_categorical();
  out << "prepared " << table.size() << " rows (" << categorical << " categorical, "
      << schema.size() - categorical << " numerical features): " << train.size() << " train, " << test.size()
      << " test -> " << dir.string() << "\n";
  return kOk;
}

// --- train ---------------------------------------------------------------------

int cmd_train(RunConfig config, const std::string& resume_path, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = config.require_seed();
  const fs::path dir = output_dir(config);
  const Schema schema = load_schema(require_path(config.schema_path, "schema (--schema)"));
  const Table train = load_csv(require_path(config.train_csv, "training CSV (--train)"), schema);
  std::optional<Table> heldout;
  if (!config.test_csv.empty()) heldout = load_csv(require_path(config.test_csv, "held-out CSV (--test)"), schema);
  config.train.seed = seed;
  config.train.workers = config.workers;

  std::optional<ResumeState> resume;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(require_path(resume_path, "checkpoint (--resume)"));
    if (!(ck.schema.features.size() == schema.features.size())) throw InputError("checkpoint schema differs");
    resume = ResumeState{std::move(ck.model), std::move(ck.ledger)};
    config.train.model = resume->model.config();
  }
  if (config.train.privacy.non_private) {
    err << "WARNING: NON-PRIVATE training run; the model carries no differential-privacy guarantee\n";
  }
  if (!config.train.privacy.non_private && config.train.privacy.delta >= 1.0 / static_cast<double>(train.size())) {
    err << "warning: delta " << config.train.privacy.delta << " is not below 1/n = "
        << 1.0 / static_cast<double>(train.size()) << "\n";
  }

  TrainResult result;
  try {
    result = two_stage_finetune(schema, train, config.train, heldout ? &heldout->rows : nullptr, nullptr,
                                resume ? &*resume : nullptr);
  } catch (const PrivacyError& e) {
    err << "privacy stop: " << e.what() << "\n";
    return kPrivacyStop;
  }

  Json report = stamp(config);
  Json body = Json::parse(result.report.to_json());
  for (auto& [k, v] : body.items()) report[k] = v;
  report["ledger"] = Json::parse(result.ledger.to_json());

  Checkpoint ck;
  ck.model = std::move(result.model);
  ck.vocab = std::move(result.vocab);
  ck.schema = schema;
  ck.ledger = result.ledger;
  Json meta = stamp(config);
  meta["non_private"] = config.train.privacy.non_private;
  meta["epsilon_target"] = config.train.privacy.epsilon_target;
  meta["delta"] = config.train.privacy.delta;
  meta["spent_epsilon"] = json_number(result.report.spent_epsilon);
  ck.metadata = meta.dump();
  save_checkpoint(dir / "model.ckpt", ck);
  write_text(dir / "train_report.json", report.dump(2));

  if (config.train.privacy.non_private) {
    out << "NON-PRIVATE run finished: " << result.report.steps_taken << " DP-free steps -> "
        << (dir / "model.ckpt").string() << "\n";
    return kOk;
  }
  out << "spent epsilon " << result.report.spent_epsilon << " of " << config.train.privacy.epsilon_target
      << " (delta " << config.train.privacy.delta << ", sigma " << result.report.noise_multiplier << ", "
      << result.report.steps_taken << " steps) -> " << (dir / "model.ckpt").string() << "\n";
  if (result.report.stopped_early) {
    err << "privacy stop: " << result.report.stop_reason << "; checkpoint written\n";
    return kPrivacyStop;
  }
  return result.report.spent_epsilon <= config.train.privacy.epsilon_target ? kOk : kPrivacyStop;
}

// --- sample --------------------------------------------------------------------

int cmd_sample(RunConfig config, const std::vector<std::string>& fixes, std::optional<double> fair_fraction,
               std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = config.require_seed();
  const fs::path dir = output_dir(config);
  const Checkpoint ck = load_checkpoint(require_path(config.checkpoint, "checkpoint (--checkpoint)"));
  if (config.sample_n == 0) throw InputError("number of rows to sample is required (--n)");
  PromptSpec spec = config.prompt;
  for (const auto& fix : fixes) {
    const auto eq = fix.find('=');
    if (eq == std::string::npos) throw InputError("--fix expects Feature=Value, got \"" + fix + "\"");
    spec.fixed_values.emplace_back(fix.substr(0, eq), fix.substr(eq + 1));
  }
  spec.mode = spec.fixed_values.empty() ? PromptMode::random_init : PromptMode::value_specified;
  Json report = stamp(config);

  Table table;
  if (fair_fraction) {
    if (!fixes.empty()) throw InputError("--fix and --fair-fraction cannot be combined");
    const auto sweep = fairness_sweep(ck.model, ck.vocab, ck.schema, config.sample_n, {*fair_fraction}, spec, seed,
                                      config.workers);
    table = sweep.front().combined;
    report["fair_fraction"] = *fair_fraction;
    report["controlled_rows"] = sweep.front().plan.controlled_rows;
    report["reference_dpdiff"] = sweep.front().plan.reference_dpdiff;
    report["data_dpdiff"] = sweep.front().data_dpdiff;
    report["rows_emitted"] = table.size();
  } else {
    SampleResult result = try_sample_rows(ck.model, ck.vocab, ck.schema, config.sample_n, spec, seed, config.workers);
    const Json body = Json::parse(result.report.to_json());
    for (const auto& [k, v] : body.items()) report[k] = v;
    table = std::move(result.table);
    out << "emitted " << result.report.rows_emitted << "/" << result.report.rows_requested
        << " rows, format compliance " << result.report.format_compliance() << "\n";
  }
  write_text(dir / "sampling_report.json", report.dump(2));
  if (table.rows.empty()) {
    err << "generation failure: no row decoded\n";
    return kGenerationFailure;
  }
  save_csv(dir / "synthetic.csv", table, provenance(config));
  return kOk;
}

// --- evaluate ------------------------------------------------------------------

int cmd_evaluate(const RunConfig& config, const std::string& sampling_report, std::ostream& out) {
  config.require_seed();
  const fs::path dir = output_dir(config);
  const Schema schema = load_schema(require_path(config.schema_path, "schema (--schema)"));
  const Table synthetic = load_csv(require_path(config.synthetic_csv, "synthetic CSV (--synthetic)"), schema);
  const Table train = load_csv(require_path(config.train_csv, "training CSV (--train)"), schema);
  const Table test = load_csv(require_path(config.test_csv, "test CSV (--test)"), schema);
  if (synthetic.rows.empty()) throw InputError("synthetic table is empty");
  const std::uint64_t seed = config.require_seed();

  Json report = stamp(config);
  const BinningSpec binning = make_binning(test, config.eval.bins);
  std::ostringstream tvd_csv;
  tvd_csv << "# " << provenance(config) << "\nk,subset,tvd\n";
  Json tvd = Json::object();
  const std::size_t max_k = std::min(config.eval.max_k, schema.size());
  for (std::size_t k = 1; k <= max_k; ++k) {
    const TvdResult r = kway_tvd(synthetic, test, k, binning, config.eval.max_subsets, seed + k);
    tvd[std::to_string(k)] = {{"mean", r.mean}, {"subsets", r.subsets_used}, {"subsets_total", r.subsets_total}};
    for (std::size_t i = 0; i < r.subsets.size(); ++i) {
      tvd_csv << k << ",";
      for (std::size_t j = 0; j < r.subsets[i].size(); ++j) {
        tvd_csv << (j ? "|" : "") << schema.features[r.subsets[i][j]].name;
      }
      tvd_csv << "," << format_number(r.values[i], 6) << "\n";
    }
  }
  report["tvd"] = tvd;

  const DcrResult dcr = dcr_histogram(synthetic, train, config.eval.dcr_bins, config.workers);
  report["dcr"] = {{"min", dcr.min}, {"median", dcr.median}, {"bins", dcr.counts.size()}};
  std::ostringstream dcr_csv;
  dcr_csv << "# " << provenance(config) << "\nbin_low,bin_high,count\n";
  for (std::size_t b = 0; b < dcr.counts.size(); ++b) {
    dcr_csv << format_number(dcr.edges[b], 6) << "," << format_number(dcr.edges[b + 1], 6) << "," << dcr.counts[b]
            << "\n";
  }

  const GridSpec grid = config.eval.full_grid ? GridSpec::full() : GridSpec::desk();
  const DownstreamResult ds = gbt_downstream(synthetic, test, grid, config.eval.folds, seed, config.workers);
  Json downstream{{"accuracy", ds.accuracy}, {"auc", optional_number(ds.auc)}, {"cv_accuracy", ds.cv_accuracy}};
  downstream["params"] = {{"n_estimators", ds.chosen.n_estimators},
                          {"max_depth", ds.chosen.max_depth},
                          {"learning_rate", ds.chosen.learning_rate}};
  if (!ds.note.empty()) downstream["note"] = ds.note;
  report["downstream"] = downstream;

  if (schema.sensitive_feature) {
    const std::string target = schema.target_feature.empty() ? schema.features.back().name : schema.target_feature;
    const FairnessReport data_f = fairness_metrics(synthetic, nullptr, *schema.sensitive_feature, target);
    const FairnessReport model_f = fairness_metrics(test, &ds.test_scores, *schema.sensitive_feature, target);
    Json f{{"data_dpdiff", data_f.data_dpdiff},
           {"model_dpdiff", optional_number(model_f.model_dpdiff)},
           {"eodiff", optional_number(model_f.eodiff)}};
    if (!model_f.warnings.empty()) f["warnings"] = model_f.warnings;
    report["fairness"] = f;
  } else {
    report["fairness"] = nullptr;
  }

  if (!config.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(require_path(config.checkpoint, "checkpoint (--checkpoint)"));
    std::vector<TokenizedExample> examples;
    const Permutation identity = identity_permutation(schema.size());
    for (const Record& r : test.rows) examples.push_back(tokenize_record(r, ck.schema, identity, ck.vocab));
    report["perplexity"] = perplexity(ck.model, examples, config.workers);
  } else {
    report["perplexity"] = nullptr;
  }
  if (!sampling_report.empty()) {
    std::ifstream in(require_path(sampling_report, "sampling report"));
    const Json sr = Json::parse(in);
    report["format_compliance"] = sr.contains("format_compliance") ? sr["format_compliance"] : Json(nullptr);
  } else {
    report["format_compliance"] = nullptr;
  }

  write_text(dir / "eval_report.json", report.dump(2));
  write_text(dir / "tvd_subsets.csv", tvd_csv.str());
  write_text(dir / "dcr_histogram.csv", dcr_csv.str());
  out << "1-way TVD " << tvd["1"]["mean"].get<double>() << ", downstream accuracy " << ds.accuracy << " -> "
      << (dir / "eval_report.json").string() << "\n";
  return kOk;
}

// --- accountant ----------------------------------------------------------------

struct AccountantArgs {
  std::optional<double> q, sigma, epsilon;
  double delta = 1e-6;
  std::optional<std::size_t> steps;
};

int cmd_accountant(const AccountantArgs& a, std::ostream& out) {
  if (!a.q || !a.steps) throw InputError("accountant needs --q and --steps");
  Json j{{"q", *a.q}, {"steps", *a.steps}, {"delta", a.delta}};
  if (a.sigma) {
    j["sigma"] = *a.sigma;
    j["epsilon"] = json_number(rdp_epsilon(*a.q, *a.sigma, *a.steps, a.delta));
  } else if (a.epsilon) {
    j["epsilon"] = *a.epsilon;
    j["sigma"] = calibrate_sigma(*a.epsilon, a.delta, *a.q, *a.steps);
  } else {
    throw InputError("accountant needs --sigma (to get epsilon) or --epsilon (to get sigma)");
  }
  out << j.dump(2) << "\n";
  return kOk;
}

// --- fairness-run --------------------------------------------------------------

int cmd_fairness(const RunConfig& config, std::vector<double> fractions, std::ostream& out) {
  const std::uint64_t seed = config.require_seed();
  const fs::path dir = output_dir(config);
  const Checkpoint ck = load_checkpoint(require_path(config.checkpoint, "checkpoint (--checkpoint)"));
  if (config.sample_n == 0) throw InputError("number of rows is required (--n)");
  std::optional<Table> test;
  if (!config.test_csv.empty()) test = load_csv(require_path(config.test_csv, "test CSV (--test)"), ck.schema);
  std::sort(fractions.begin(), fractions.end());
  const auto sweep = fairness_sweep(ck.model, ck.vocab, ck.schema, config.sample_n, fractions, config.prompt, seed,
                                    config.workers);
  std::ostringstream csv;
  csv << "# " << provenance(config) << "\n";
  csv << "rho,controlled_rows,reference_dpdiff,predicted_dpdiff,data_dpdiff,accuracy,auc,model_dpdiff,eodiff\n";
  Json points = Json::array();
  for (const FairnessPoint& p : sweep) {
    Json j{{"rho", p.rho},
           {"controlled_rows", p.plan.controlled_rows},
           {"reference_dpdiff", p.plan.reference_dpdiff},
           {"predicted_dpdiff", p.plan.predicted_dpdiff},
           {"data_dpdiff", p.data_dpdiff}};
    std::string acc = "", auc_s = "", mdp = "", eo = "";
    if (test) {
      const GridSpec grid = config.eval.full_grid ? GridSpec::full() : GridSpec::desk();
      const DownstreamResult ds = gbt_downstream(p.combined, *test, grid, config.eval.folds, seed, config.workers);
      const FairnessReport f = fairness_metrics(*test, &ds.test_scores, *ck.schema.sensitive_feature,
                                                ck.schema.target_feature);
      j["accuracy"] = ds.accuracy;
      j["auc"] = optional_number(ds.auc);
      j["model_dpdiff"] = optional_number(f.model_dpdiff);
      j["eodiff"] = optional_number(f.eodiff);
      acc = format_number(ds.accuracy, 6);
      if (ds.auc) auc_s = format_number(*ds.auc, 6);
      if (f.model_dpdiff) mdp = format_number(*f.model_dpdiff, 6);
      if (f.eodiff) eo = format_number(*f.eodiff, 6);
    }
    csv << format_number(p.rho, 4) << "," << p.plan.controlled_rows << "," << format_number(p.plan.reference_dpdiff, 6)
        << "," << format_number(p.plan.predicted_dpdiff, 6) << "," << format_number(p.data_dpdiff, 6) << "," << acc
        << "," << auc_s << "," << mdp << "," << eo << "\n";
    points.push_back(j);
    out << "rho " << p.rho << ": Data_DPDiff " << p.data_dpdiff << "\n";
  }
  Json report = stamp(config);
  report["points"] = points;
  write_text(dir / "fairness_report.json", report.dump(2));
  write_text(dir / "fairness_sweep.csv", csv.str());
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentially private tabular data synthesis with a small language model", "dptab"};
  app.require_subcommand(1);
  Overrides o;
  std::string resume_path, sampling_report;
  std::vector<std::string> fixes;
  std::optional<double> fair_fraction;
  std::vector<double> fractions{0.0, 0.05, 0.1, 0.2, 0.5};
  AccountantArgs acc;

  CLI::App* prepare = app.add_subcommand("prepare", "infer or check a schema and write the 80:20 split");
  common_flags(prepare, o);
  flag(prepare, "--csv", "data.csv", o, "input CSV with header");
  flag(prepare, "--schema", "data.schema", o, "schema document to validate against");
  flag(prepare, "--train-fraction", "prepare.train_fraction", o, "training share (default 0.8)");
  flag(prepare, "--target", "data.target", o, "target feature");
  flag(prepare, "--sensitive", "data.sensitive", o, "sensitive feature");

  CLI::App* train = app.add_subcommand("train", "two-stage fine-tuning with DPSGD");
  common_flags(train, o);
  flag(train, "--schema", "data.schema", o, "schema document");
  flag(train, "--train", "data.train", o, "training CSV");
  flag(train, "--test", "data.test", o, "held-out CSV for perplexity");
  flag(train, "--epsilon", "privacy.epsilon", o, "privacy budget epsilon");
  flag(train, "--delta", "privacy.delta", o, "privacy budget delta");
  flag(train, "--clip-norm", "privacy.clip_norm", o, "per-example clip norm C");
  flag(train, "--batch-size", "stage2.batch_size", o, "expected batch size in stage 2");
  flag(train, "--epochs", "stage2.epochs", o, "stage 2 epochs");
  switch_flag(train, "--non-private", "privacy.non_private", o, "NO privacy: sigma = 0");
  switch_flag(train, "--single-stage", "train.single_stage", o, "skip format learning (baseline)");
  train->add_option("--resume", resume_path, "continue from a checkpoint; the ledger carries over");

  CLI::App* sample = app.add_subcommand("sample", "generate synthetic rows");
  common_flags(sample, o);
  flag(sample, "--checkpoint", "data.checkpoint", o, "model checkpoint");
  flag(sample, "--n", "sample.n", o, "rows to generate");
  flag(sample, "--temperature", "sample.temperature", o, "sampling temperature (0: greedy)");
  flag(sample, "--retries", "sample.retries", o, "retries per row");
  sample->add_option("--fix", fixes, "Feature=Value fixed in every prompt (repeatable)");
  sample->add_option("--fair-fraction", fair_fraction, "share of value-specified rows for demographic parity");

  CLI::App* evaluate = app.add_subcommand("evaluate", "fidelity, utility, DCR and fairness metrics");
  common_flags(evaluate, o);
  flag(evaluate, "--synthetic", "data.synthetic", o, "synthetic CSV");
  flag(evaluate, "--train", "data.train", o, "training CSV");
  flag(evaluate, "--test", "data.test", o, "test CSV");
  flag(evaluate, "--schema", "data.schema", o, "schema document");
  flag(evaluate, "--checkpoint", "data.checkpoint", o, "checkpoint for test perplexity");
  flag(evaluate, "--max-k", "eval.max_k", o, "largest k for k-way TVD");
  switch_flag(evaluate, "--full-grid", "eval.full_grid", o, "full boosting grid");
  evaluate->add_option("--sampling-report", sampling_report, "sampling report to copy compliance from");

  CLI::App* accountant = app.add_subcommand("accountant", "epsilon for (q, sigma, T) or sigma for (q, epsilon, T)");
  accountant->add_option("--q", acc.q, "sampling rate");
  accountant->add_option("--sigma", acc.sigma, "noise multiplier");
  accountant->add_option("--epsilon", acc.epsilon, "target epsilon");
  accountant->add_option("--delta", acc.delta, "delta (default 1e-6)");
  accountant->add_option("--steps", acc.steps, "number of steps T");

  CLI::App* fairness = app.add_subcommand("fairness-run", "controlled-generation sweep for demographic parity");
  common_flags(fairness, o);
  flag(fairness, "--checkpoint", "data.checkpoint", o, "model checkpoint");
  flag(fairness, "--n", "sample.n", o, "rows per synthetic table");
  flag(fairness, "--test", "data.test", o, "real test CSV for downstream metrics");
  flag(fairness, "--temperature", "sample.temperature", o, "sampling temperature");
  fairness->add_option("--fractions", fractions, "controlled fractions")->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*accountant) return cmd_accountant(acc, out);
    const RunConfig config = resolve(o);
    if (*prepare) return cmd_prepare(config, out);
    if (*train) return cmd_train(config, resume_path, out, err);
    if (*sample) return cmd_sample(config, fixes, fair_fraction, out, err);
    if (*evaluate) return cmd_evaluate(config, sampling_report, out);
    if (*fairness) return cmd_fairness(config, fractions, out);
  } catch (const PrivacyError& e) {
    err << "privacy stop: " << e.what() << "\n";
    return kPrivacyStop;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kGenerationFailure;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInputError;
}

}  // namespace dptab::cli
