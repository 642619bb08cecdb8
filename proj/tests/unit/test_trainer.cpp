#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hdccf/checkpoint.h"
#include "hdccf/error.h"
#include "hdccf/evaluator.h"
#include "hdccf/log.h"
#include "hdccf/synthetic.h"
#include "hdccf/trainer.h"

using namespace hdccf;
namespace fs = std::filesystem;

namespace {

const bool quiet = (set_log_level(LogLevel::warn), true);

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 3;
  cfg.learning_rate = 0.01;
  cfg.sampler.batch_size = 8;
  cfg.sampler.pos_neighbors = 2;
  cfg.loss.clamp = ClampMode::robinson;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "hdccf_trainer_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 1));
  for (bool modulated : {false, true}) {
    auto cfg = small_config();
    cfg.learning_rate = 0.0;
    cfg.modulated = modulated;
    Trainer t(split, cfg);
    const ModelParams before = t.params();
    t.run_epoch();
    CHECK(t.params() == before);
  }
}

TEST_CASE("training is deterministic under a seed") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 2));
  for (std::size_t threads : {1, 3}) {
    auto cfg = small_config();
    cfg.threads = threads;
    Trainer a(split, cfg);
    Trainer b(split, cfg);
    const double la = a.run_epoch();
    const double lb = b.run_epoch();
    CHECK(la == lb);
    CHECK(a.params() == b.params());
  }
  auto cfg = small_config();
  Trainer a(split, cfg);
  cfg.seed = 43;
  Trainer b(split, cfg);
  CHECK_FALSE(a.params() == b.params());
}

TEST_CASE("only rows in the batch move") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 3));
  auto cfg = small_config();
  cfg.weight_decay = 0.0;
  Trainer t(split, cfg);
  BatchSampler sampler(split.train, cfg.sampler);
  Batch batch = sampler.next();
  const ModelParams before = t.params();
  t.step(batch);
  std::vector<char> user_in(split.train.n_users(), 0);
  std::vector<char> item_in(split.train.n_items(), 0);
  for (const auto& p : batch.pairs) {
    user_in[p.user] = 1;
    item_in[p.item] = 1;
  }
  for (auto u : batch.pool_users) user_in[u] = 1;
  for (auto i : batch.pool_items) item_in[i] = 1;
  for (Index u = 0; u < split.train.n_users(); ++u) {
    CAPTURE(u);
    const bool same = t.params().user_emb.row(u) == before.user_emb.row(u) &&
                      t.params().user_factor.row(u) == before.user_factor.row(u);
    CHECK(same == !user_in[u]);
  }
  for (Index i = 0; i < split.train.n_items(); ++i) {
    CAPTURE(i);
    const bool same = t.params().item_emb.row(i) == before.item_emb.row(i) &&
                      t.params().item_factor.row(i) == before.item_factor.row(i);
    CHECK(same == !item_in[i]);
  }
  CHECK_FALSE(t.params().mod_weights == before.mod_weights);
}

TEST_CASE("repeated steps on one batch lower its loss") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 4));
  for (auto family : {LossFamily::hdccf, LossFamily::bpr}) {
    auto cfg = small_config();
    cfg.learning_rate = 1e-3;
    cfg.loss.family = family;
    Trainer t(split, cfg);
    BatchSampler sampler(split.train, cfg.sampler);
    Batch batch = sampler.next();
    double prev = t.step(batch);
    for (int k = 0; k < 12; ++k) {
      double now = t.step(batch);
      CHECK(now < prev);
      prev = now;
    }
  }
}

TEST_CASE("training separates the two communities of the block dataset") {
  auto split = leave_one_out_split(block_dataset(5));
  auto cfg = small_config();
  cfg.epochs = 30;
  cfg.patience = 100;
  cfg.learning_rate = 0.02;
  EvalOptions opts;
  opts.ks = {2, 10};
  Trainer t(split, cfg);
  const auto before = evaluate(t.params(), true, split, opts);
  auto result = t.train();
  const auto after = evaluate(t.params(), true, split, opts);
  CHECK(after.ndcg_at(10) > before.ndcg_at(10));
  // both held-out items of a user sit in its own block, ahead of the other block
  CHECK(after.hr_at(2) >= 0.9);
  CHECK(result.trace.size() == 30);
}

TEST_CASE("train writes metrics and the best checkpoint") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 6));
  auto dir = scratch_dir("outputs");
  auto cfg = small_config();
  cfg.epochs = 4;
  cfg.eval_every = 2;
  Trainer t(split, cfg);
  TrainOutputs out;
  out.checkpoint = dir / "model.ckpt";
  out.metrics_csv = dir / "metrics.csv";
  auto result = t.train(out);
  REQUIRE(fs::exists(*out.checkpoint));
  auto ck = load_checkpoint(*out.checkpoint);
  CHECK(ck.params == result.best);
  CHECK(ck.seed == cfg.seed);
  std::ifstream in(*out.metrics_csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "epoch,train_loss,val_hr10,val_ndcg10,wall_seconds");
  // epochs 1 and 3 are not evaluated
  CHECK(lines[1].find(",,,") != std::string::npos);
  CHECK(lines[2].find(",,,") == std::string::npos);
  CHECK(result.best_epoch % 2 == 0);
}

TEST_CASE("early stopping after patience evaluations without improvement") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 7));
  auto cfg = small_config();
  cfg.learning_rate = 0.0;  // validation never improves after the first epoch
  cfg.epochs = 10;
  cfg.patience = 2;
  Trainer t(split, cfg);
  auto result = t.train();
  CHECK(result.stopped_early);
  CHECK(result.trace.size() == 3);
  CHECK(result.best_epoch == 1);
}

TEST_CASE("a non-finite loss dumps the batch and raises a numeric error") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 8));
  auto cfg = small_config();
  Trainer t(split, cfg);
  t.params().user_emb(0, 0) = std::numeric_limits<double>::quiet_NaN();
  t.params().user_emb.col(0).setConstant(std::numeric_limits<double>::quiet_NaN());
  auto dir = scratch_dir("nan");
  t.set_debug_dir(dir);
  CHECK_THROWS_AS(t.run_epoch(), NumericError);
  bool dumped = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    dumped |= entry.path().filename().string().rfind("failed_batch_step", 0) == 0;
  }
  CHECK(dumped);
}

TEST_CASE("config validation") {
  auto split = leave_one_out_split(random_dataset(30, 20, 0.3, 4, 9));
  auto cfg = small_config();
  cfg.dim = 0;
  CHECK_THROWS_AS(Trainer(split, cfg), ConfigError);
  cfg = small_config();
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(Trainer(split, cfg), ConfigError);
  cfg = small_config();
  cfg.beta2 = 1.0;
  CHECK_THROWS_AS(Trainer(split, cfg), ConfigError);
  cfg = small_config();
  CHECK_THROWS_AS(Trainer(split, cfg, init_params(3, 3, 8, 1)), ConfigError);
}

TEST_CASE("metrics row format") {
  EpochRecord r;
  r.epoch = 3;
  r.train_loss = 0.25;
  r.evaluated = true;
  r.val_hr10 = 0.5;
  r.val_ndcg10 = 0.125;
  r.wall_seconds = 1.23456;
  std::ostringstream out;
  write_metrics_row(r, out);
  CHECK(out.str() == "3,0.25,0.5,0.125,1.235\n");
}
