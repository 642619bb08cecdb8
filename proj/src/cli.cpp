#include "hdccf/cli.h"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "hdccf/checkpoint.h"
#include "hdccf/config.h"
#include "hdccf/error.h"
#include "hdccf/evaluator.h"
#include "hdccf/log.h"
#include "hdccf/synthetic.h"
#include "hdccf/trainer.h"
#include "hdccf/verifier.h"

namespace hdccf {

namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kTrainKeys = {
    "dim",         "modulated",   "epochs",     "learning_rate", "beta1",      "beta2",        "epsilon",
    "weight_decay", "early_stop_patience", "eval_every", "batch_size", "pos_neighbors", "sampler_mode", "neg_count",
    "pair_draw",   "temperature", "lambda_u",   "lambda_i",      "omega_u",    "omega_i",      "debias",
    "clamp_mode",  "loss_family"};
const std::vector<std::string> kEvalKeys = {"ks", "candidate_mode", "sampled_count"};

// Registers --key (and --key-with-dashes) for config keys; values land in
// `overrides` when given.
void add_key_flags(CLI::App* cmd, const std::vector<std::string>& keys, KeyValues& overrides) {
  for (const auto& key : keys) {
    std::string names = "--" + key;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != key) names += ",--" + dashed;
    cmd->add_option_function<std::string>(
           names, [&overrides, key](const std::string& v) { overrides[key] = v; }, "config key " + key)
        ->type_name("VALUE");
  }
}

struct Globals {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string log_level = "info";
};

Settings resolve_settings(const Globals& g, const KeyValues& overrides) {
  KeyValues merged;
  if (g.config) merged = read_config(*g.config);
  for (const auto& [k, v] : overrides) merged[k] = v;
  if (g.seed) merged["seed"] = std::to_string(*g.seed);
  if (g.threads) merged["threads"] = std::to_string(*g.threads);
  Settings s;
  if (merged.count("threads") == 0) s.train.threads = std::max(1u, std::thread::hardware_concurrency());
  apply_config(merged, s);
  return s;
}

std::ostream& open_or(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty()) return fallback;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  file.open(p, std::ios::trunc);
  if (!file) throw DataError("cannot write " + path);
  return file;
}

Checkpoint load_matching(const fs::path& path, const SplitDataset& split) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.params.n_users() != split.train.n_users() || ck.params.n_items() != split.train.n_items()) {
    throw DataError("dimension mismatch: checkpoint has " + std::to_string(ck.params.n_users()) + " users and " +
                    std::to_string(ck.params.n_items()) + " items, dataset has " +
                    std::to_string(split.train.n_users()) + " and " + std::to_string(split.train.n_items()));
  }
  return ck;
}

int report_verdict(const std::vector<VerificationReport>& reports, std::ostream& out) {
  std::size_t failed = 0;
  std::size_t total = 0;
  for (const auto& r : reports) {
    for (const auto& row : r.rows) failed += row.pass ? 0 : 1;
    total += r.rows.size();
  }
  if (failed > 0) {
    throw NumericError("verification failed: " + std::to_string(failed) + " of " + std::to_string(total) +
                       " targets outside tolerance");
  }
  out << "all " << total << " targets pass\n";
  return exit_ok;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Debiased contrastive collaborative filtering with a modulated similarity"};
  app.require_subcommand(1);
  Globals g;
  app.add_option_function<std::string>("--config", [&](const std::string& v) { g.config = v; },
                                       "flat key = value file; flags override its keys");
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { g.seed = v; }, "root random seed");
  app.add_option_function<std::size_t>("--threads", [&](std::size_t v) { g.threads = v; },
                                       "worker threads (default: all cores; 1 is the reproducible reference)");
  app.add_option("--log-level", g.log_level, "error, warn, info or debug")->capture_default_str();

  KeyValues overrides;

  auto* prepare = app.add_subcommand("prepare", "filter, index and split an interaction file")->fallthrough();
  std::string prep_input;
  std::string prep_out;
  prepare->add_option("--input", prep_input, "interaction file (user item [rating] timestamp)")->required();
  prepare->add_option("--out", prep_out, "output dataset directory")->required();
  add_key_flags(prepare, {"k_core"}, overrides);

  auto* train = app.add_subcommand("train", "train a model and keep the best checkpoint")->fallthrough();
  std::string train_data;
  std::string train_out = "run";
  train->add_option("--data", train_data, "prepared dataset directory")->required();
  train->add_option("--out", train_out, "directory for model.ckpt, metrics.csv and config.txt")->capture_default_str();
  add_key_flags(train, kTrainKeys, overrides);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "HR@K and NDCG@K of a checkpoint")->fallthrough();
  std::string eval_data;
  std::string eval_ckpt = "run/model.ckpt";
  std::string eval_split = "test";
  std::string eval_output;
  evaluate_cmd->add_option("--data", eval_data, "prepared dataset directory")->required();
  evaluate_cmd->add_option("--checkpoint", eval_ckpt)->capture_default_str();
  evaluate_cmd->add_option("--split", eval_split, "validation or test")
      ->check(CLI::IsMember({"validation", "test"}))
      ->capture_default_str();
  evaluate_cmd->add_option("--output", eval_output, "CSV path (default: standard output)");
  add_key_flags(evaluate_cmd, kEvalKeys, overrides);

  auto* recommend_cmd = app.add_subcommand("recommend", "top-K unseen items for one user")->fallthrough();
  std::string rec_data;
  std::string rec_ckpt = "run/model.ckpt";
  std::string rec_user;
  std::size_t rec_k = 10;
  recommend_cmd->add_option("--data", rec_data, "prepared dataset directory")->required();
  recommend_cmd->add_option("--checkpoint", rec_ckpt)->capture_default_str();
  recommend_cmd->add_option("--user", rec_user, "raw user ID")->required();
  recommend_cmd->add_option("--k", rec_k)->capture_default_str();

  auto* dump = app.add_subcommand("dump-scores", "histograms of positive and negative pair scores")->fallthrough();
  std::string dump_data;
  std::string dump_ckpt = "run/model.ckpt";
  std::size_t dump_bins = 50;
  std::size_t dump_samples = 0;
  std::string dump_output;
  dump->add_option("--data", dump_data, "prepared dataset directory")->required();
  dump->add_option("--checkpoint", dump_ckpt)->capture_default_str();
  dump->add_option("--bins", dump_bins)->capture_default_str();
  dump->add_option("--samples", dump_samples, "positive pairs to score (0: all train pairs)")->capture_default_str();
  dump->add_option("--output", dump_output, "CSV path (default: standard output)");

  auto* verify = app.add_subcommand("verify", "Monte Carlo checks of the sampler and the debiased estimator")
                     ->fallthrough();
  std::string suite = "all";
  std::optional<std::size_t> trials;
  std::optional<double> tolerance;
  std::string verify_csv;
  std::string verify_data;
  verify->add_option("--suite", suite)->check(CLI::IsMember({"frequency", "debias", "all"}))->capture_default_str();
  verify->add_option_function<std::size_t>("--trials", [&](std::size_t v) { trials = v; },
                                           "trials per suite (default 200000 frequency, 100000 debias)");
  verify->add_option_function<double>("--tolerance", [&](double v) { tolerance = v; },
                                      "relative tolerance (default 0.02 frequency, 0.01 debias)");
  verify->add_option("--csv", verify_csv, "machine-readable report path");
  verify->add_option("--data", verify_data, "prepared dataset for the frequency suite (default: bundled synthetic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return exit_ok;
    }
    err << "error: " << e.what() << "\n";
    return exit_usage;
  }

  try {
    set_log_level(parse_log_level(g.log_level));
    Settings s = resolve_settings(g, overrides);
    log_info("seed " + std::to_string(s.train.seed) + ", threads " + std::to_string(s.train.threads));

    if (prepare->parsed()) {
      auto ds = load_interactions(prep_input, s.k_core);
      auto split = leave_one_out_split(ds);
      write_prepared(split, prep_out, prep_input, s.k_core);
      out << "users " << split.train.n_users() << " items " << split.train.n_items() << " train "
          << split.train.size() << " -> " << prep_out << "\n";
      return exit_ok;
    }

    if (train->parsed()) {
      auto split = read_prepared(train_data);
      Trainer trainer(split, s.train);
      fs::create_directories(train_out);
      {
        std::ofstream cfg(fs::path(train_out) / "config.txt");
        write_config(s, cfg);
      }
      TrainOutputs outputs;
      outputs.checkpoint = fs::path(train_out) / "model.ckpt";
      outputs.metrics_csv = fs::path(train_out) / "metrics.csv";
      outputs.debug_dir = train_out;
      auto result = trainer.train(outputs);
      out << "best epoch " << result.best_epoch << " val_ndcg10 " << std::setprecision(6) << result.best_ndcg10
          << " -> " << outputs.checkpoint->string() << "\n";
      if (result.diagnostics.clamped > 0 || result.diagnostics.dropped_terms > 0) {
        log_info("clamped negative scores " + std::to_string(result.diagnostics.clamped) + ", degenerate " +
                 std::to_string(result.diagnostics.degenerate) + ", dropped auxiliary terms " +
                 std::to_string(result.diagnostics.dropped_terms));
      }
      return exit_ok;
    }

    if (evaluate_cmd->parsed()) {
      auto split = read_prepared(eval_data);
      auto ck = load_matching(eval_ckpt, split);
      EvalOptions opts;
      opts.ks = s.ks;
      opts.mode = s.candidate_mode;
      opts.sampled_count = s.sampled_count;
      opts.seed = s.train.seed;
      opts.threads = s.train.threads;
      opts.target = eval_split == "validation" ? EvalTarget::validation : EvalTarget::test;
      auto report = evaluate(ck.params, ck.modulated, split, opts);
      std::ofstream file;
      write_eval_csv(report, open_or(eval_output, file, out));
      return exit_ok;
    }

    if (recommend_cmd->parsed()) {
      auto split = read_prepared(rec_data);
      auto ck = load_matching(rec_ckpt, split);
      auto user = split.train.user_ids().find(rec_user);
      if (!user) throw DataError("unknown user id '" + rec_user + "'");
      for (Index item : recommend(ck.params, ck.modulated, split.train, *user, rec_k)) {
        out << split.train.item_ids().raw(item) << "\n";
      }
      return exit_ok;
    }

    if (dump->parsed()) {
      auto split = read_prepared(dump_data);
      auto ck = load_matching(dump_ckpt, split);
      auto h = score_distribution(ck.params, ck.modulated, split, dump_bins, dump_samples, s.train.seed);
      std::ofstream file;
      write_histogram_csv(h, open_or(dump_output, file, out));
      std::ostringstream msg;
      msg << "overlap mass " << overlap_mass(h) << ", positive mean " << h.positive_mean() << ", negative mean "
          << h.negative_mean() << " (raw range " << h.raw_min << " .. " << h.raw_max << ")";
      log_info(msg.str());
      return exit_ok;
    }

    if (verify->parsed()) {
      std::vector<VerificationReport> reports;
      if (suite == "frequency" || suite == "all") {
        InteractionDataset ds = verify_data.empty() ? random_dataset(50, 30, 0.3, 5, 7)
                                                    : read_prepared(verify_data).train;
        if (ds.size() > 1000) log_warn("frequency suite on " + std::to_string(ds.size()) + " pairs will be slow");
        FrequencyOptions opts;
        if (trials) opts.trials = *trials;
        if (tolerance) opts.tolerance = *tolerance;
        opts.seed = s.train.seed;
        opts.threads = s.train.threads;
        reports.push_back(verify_frequency_expectations(ds, opts));
      }
      if (suite == "debias" || suite == "all") {
        auto world = make_world({});
        DebiasOptions opts;
        if (trials) opts.trials = *trials;
        if (tolerance) opts.tolerance = *tolerance;
        opts.seed = s.train.seed;
        opts.threads = s.train.threads;
        reports.push_back(verify_debias_unbiasedness(world, opts));
        if (decomposition_mismatches(world) != 0) throw NumericError("mixture decomposition does not hold exactly");
      }
      std::ofstream csv;
      if (!verify_csv.empty()) open_or(verify_csv, csv, out);
      for (const auto& r : reports) {
        print_report(r, out);
        if (csv.is_open()) write_report_csv(r, csv);
      }
      return report_verdict(reports, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::usage: return exit_usage;
      case ErrorKind::data: return exit_data;
      case ErrorKind::numeric: return exit_numeric;
    }
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_data;
  }
  return exit_usage;
}

}  // namespace hdccf
