#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "bsteer/barrier.hpp"
#include "bsteer/mlp.hpp"
#include "bsteer/train.hpp"
#include "support/oracles.hpp"

using namespace bsteer;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// A bank whose head values are the state itself; lets loss tests pin exact
// hinge arithmetic without any model in the way.
struct IdentityBank {
  Vec values(const Vec& h) const { return h; }
};

LabeledState rec(const Vec& v, SafetyLabel l) { return {v, l, "t"}; }

}  // namespace

TEST_CASE("half-space barrier value and gradient") {
  HalfSpaceBarrier b(vec2(0.0, 1.0), 0.0);  // b(h) = h_y
  CHECK(b.value(vec2(3.0, 0.5)) == 0.5);
  CHECK(b.value(vec2(-1.0, -2.0)) == -2.0);
  Vec g = input_gradient(b, vec2(3.0, 0.5));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);

  HalfSpaceBarrier affine(vec2(2.0, -1.0), 0.25);
  CHECK(affine.value(vec2(1.0, 1.0)) == 1.25);
  Vec ga = input_gradient(affine, vec2(-5.0, 7.0));
  CHECK(ga[0] == 2.0);
  CHECK(ga[1] == -1.0);
}

TEST_CASE("sphere barrier value and gradient") {
  SphereBarrier b(Vec::Zero(2), 1.0);  // b(h) = 1 - |h|^2
  CHECK(b.value(vec2(0.0, 0.0)) == 1.0);
  CHECK(b.value(vec2(1.0, 0.0)) == 0.0);
  CHECK(b.value(vec2(0.5, 0.0)) == 0.75);
  Vec g = input_gradient(b, vec2(0.5, 0.0));
  CHECK(g[0] == -1.0);
  CHECK(g[1] == 0.0);

  SphereBarrier off(vec2(1.0, 2.0), 0.5);
  CHECK(off.value(vec2(1.0, 2.0)) == 0.25);
  Vec go = input_gradient(off, vec2(2.0, 2.0));
  CHECK(go[0] == -2.0);
  CHECK(go[1] == 0.0);
}

TEST_CASE("bank evaluates heads in declaration order") {
  std::vector<std::shared_ptr<const Barrier>> heads;
  heads.push_back(std::make_shared<HalfSpaceBarrier>(vec2(0.0, 1.0), 0.0));
  heads.push_back(std::make_shared<SphereBarrier>(Vec::Zero(2), 1.0));
  BarrierBank bank(heads, {"floor", "ball"});
  REQUIRE(bank.size() == 2);
  REQUIRE(bank.dim() == 2);
  Vec v = bank.values(vec2(0.5, 0.0));
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 0.75);
  CHECK(bank.min_margin(vec2(0.5, 0.0), 0.0) == 0.0);
  CHECK(bank.min_margin(vec2(0.5, 0.2), 0.1) == Catch::Approx(0.1));
  CHECK(bank.category_names()[0] == "floor");
  BarrierBank one = bank.single_head(1);
  CHECK(one.size() == 1);
  CHECK(one.values(vec2(0.5, 0.0))[0] == 0.75);
}

TEST_CASE("bank rejects mixed dimensions and invents head names") {
  std::vector<std::shared_ptr<const Barrier>> heads;
  heads.push_back(std::make_shared<HalfSpaceBarrier>(vec2(0.0, 1.0), 0.0));
  heads.push_back(std::make_shared<HalfSpaceBarrier>(Vec::Ones(3), 0.0));
  CHECK_THROWS_AS(BarrierBank(heads), DataError);
  heads.pop_back();
  BarrierBank bank(heads);
  CHECK(bank.category_names()[0] == "head0");
}

TEST_CASE("gelu fixed points") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu_derivative(0.0) == 0.5);
  // Large positive input passes through, large negative dies.
  CHECK(gelu(10.0) == Catch::Approx(10.0).margin(1e-9));
  CHECK(std::fabs(gelu(-10.0)) < 1e-9);
}

TEST_CASE("zero-initialized mlp is identically zero") {
  MlpBarrier b(4, {8, 4});
  Vec h = Vec::Ones(4);
  CHECK(b.value(h) == 0.0);
}

TEST_CASE("mlp with no hidden blocks is exactly linear") {
  MlpBarrier b(3, {});
  b.head_w = Vec::Zero(3);
  b.head_w << 1.0, -2.0, 0.5;
  b.head_b = 0.25;
  Vec h(3);
  h << 2.0, 1.0, 4.0;
  CHECK(b.value(h) == 1.0 * 2.0 + (-2.0) * 1.0 + 0.5 * 4.0 + 0.25);
  Vec g;
  b.value_and_gradient(h, g);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == -2.0);
  CHECK(g[2] == 0.5);
}

TEST_CASE("mlp random init is seed-deterministic") {
  MlpBarrier a(6, {16, 8}), b(6, {16, 8}), c(6, {16, 8});
  Rng r1(11), r2(11), r3(12);
  a.random_init(r1);
  b.random_init(r2);
  c.random_init(r3);
  Vec h(6);
  h << 0.3, -1.2, 0.0, 2.0, -0.5, 0.7;
  CHECK(a.value(h) == b.value(h));
  CHECK(a.value(h) != c.value(h));
}

TEST_CASE("mlp value agrees bitwise with its workspace forward pass") {
  MlpBarrier b(5, {12, 6});
  Rng rng(3);
  b.random_init(rng);
  MlpWorkspace ws;
  for (int i = 0; i < 20; ++i) {
    Vec h = oracle::random_vec(rng, 5);
    CHECK(b.value(h) == b.forward(h, ws));
  }
}

TEST_CASE("mlp gradient matches central differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    MlpBarrier b(4, {16, 8});
    b.random_init(rng);
    Vec h = oracle::random_vec(rng, 4);
    Vec g;
    b.value_and_gradient(h, g);
    Vec fd = oracle::fd_gradient(b, h);
    REQUIRE((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("mlp parameter gradients move the loss the right way") {
  // Descend the squared value at one point; a correct backward pass must
  // shrink it monotonically from a random start.
  MlpBarrier b(3, {8});
  Rng rng(23);
  b.random_init(rng);
  Vec h = oracle::random_vec(rng, 3);
  MlpWorkspace ws;
  double prev = std::fabs(b.value(h));
  for (int it = 0; it < 50; ++it) {
    double y = b.forward(h, ws);
    MlpGradients g = b.make_gradients();
    b.backward(h, ws, 2.0 * y, nullptr, &g);
    const double lr = 1e-2;
    for (std::size_t k = 0; k < b.blocks.size(); ++k) {
      b.blocks[k].W -= lr * g.blocks[k].W;
      b.blocks[k].b -= lr * g.blocks[k].b;
      b.blocks[k].ln_gain -= lr * g.blocks[k].ln_gain;
      b.blocks[k].ln_shift -= lr * g.blocks[k].ln_shift;
    }
    b.head_w -= lr * g.head_w;
    b.head_b -= lr * g.head_b;
  }
  CHECK(std::fabs(b.value(h)) < prev);
}

TEST_CASE("hinge losses reproduce the worked values") {
  IdentityBank bank;

  SECTION("safe hinge sums every negative head") {
    Vec v(4);
    v << 0.5, -0.2, 1.0, 0.0;
    CHECK(hinge_safe(v) == 0.2);
    std::vector<LabeledState> batch = {rec(v, SafetyLabel::Safe)};
    CHECK(loss_safe(bank, batch) == 0.2);
  }
  SECTION("safe hinge over two states") {
    Vec a(4), b(4);
    a << -1.0, -1.0, -1.0, -1.0;
    b << -0.5, 0.0, 0.0, 0.0;
    std::vector<LabeledState> batch = {rec(a, SafetyLabel::Safe), rec(b, SafetyLabel::Safe)};
    CHECK(loss_safe(bank, batch) == 4.5);
  }
  SECTION("unsafe hinge keys on the minimum head") {
    Vec v(4);
    v << 0.5, -0.2, 1.0, 0.0;
    CHECK(hinge_unsafe(v, 0.1) == 0.0);
    Vec w(4);
    w << 0.3, 0.4, 0.9, 0.5;
    CHECK(hinge_unsafe(w, 0.1) == Catch::Approx(0.4));
    Vec at_margin = Vec::Constant(4, -0.1);
    CHECK(hinge_unsafe(at_margin, 0.1) == 0.0);
  }
  SECTION("total loss weighs the unsafe term") {
    Vec s(4), u(4);
    s << -0.2, 1.0, 1.0, 1.0;
    u << 0.3, 0.4, 0.9, 0.5;
    std::vector<LabeledState> safe = {rec(s, SafetyLabel::Safe)};
    std::vector<LabeledState> unsafe_batch = {rec(u, SafetyLabel::Unsafe)};
    double total = total_loss(bank, safe, unsafe_batch, 2.0, 0.1);
    CHECK(total == Catch::Approx(1.0));
  }
  SECTION("empty batches contribute nothing") {
    std::vector<LabeledState> none;
    CHECK(loss_safe(bank, none) == 0.0);
    CHECK(loss_unsafe(bank, none, 0.1) == 0.0);
  }
}

TEST_CASE("loss terms enforce the label contract") {
  IdentityBank bank;
  Vec v = Vec::Ones(2);
  std::vector<LabeledState> wrong = {rec(v, SafetyLabel::Unsafe)};
  CHECK_THROWS_AS(loss_safe(bank, wrong), DataError);
  std::vector<LabeledState> wrong2 = {rec(v, SafetyLabel::Safe)};
  CHECK_THROWS_AS(loss_unsafe(bank, wrong2, 0.1), DataError);
  CHECK_THROWS_AS(loss_unsafe(bank, wrong, 0.0), DataError);
  CHECK_THROWS_AS(hinge_unsafe(Vec(), 0.1), DataError);
}

namespace {

// Two well-separated clusters, one per class.
SafetyDataset cluster_dataset(int n_per_class, std::uint64_t seed) {
  SafetyDataset data;
  data.dim = 2;
  Rng rng(seed);
  for (int i = 0; i < n_per_class; ++i) {
    Vec s = vec2(2.0 + 0.3 * rng.normal(), 2.0 + 0.3 * rng.normal());
    data.records.push_back({s, SafetyLabel::Safe, "s" + std::to_string(i)});
  }
  for (int i = 0; i < n_per_class; ++i) {
    Vec u = vec2(-2.0 + 0.3 * rng.normal(), -2.0 + 0.3 * rng.normal());
    data.records.push_back({u, SafetyLabel::Unsafe, "u" + std::to_string(i)});
  }
  return data;
}

}  // namespace

TEST_CASE("training reduces the loss on separable clusters") {
  SafetyDataset data = cluster_dataset(30, 5);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.heads = 2;
  cfg.hidden_dims = {8};
  cfg.batch_size = 16;
  cfg.seed = 1;
  auto [bank, result] = train(data, cfg);
  REQUIRE(result.loss_history.size() == 40);
  CHECK(result.loss_history.back() <= result.initial_loss);
  CHECK(accuracy(bank, data) > 0.9);
  CHECK(result.loss_history.back() == dataset_loss(bank, data, cfg));
}

TEST_CASE("training is bitwise deterministic per seed") {
  SafetyDataset data = cluster_dataset(20, 6);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.heads = 2;
  cfg.hidden_dims = {6};
  cfg.seed = 9;
  auto [bank1, r1] = train(data, cfg);
  auto [bank2, r2] = train(data, cfg);
  REQUIRE(r1.loss_history.size() == r2.loss_history.size());
  CHECK(r1.initial_loss == r2.initial_loss);
  for (std::size_t i = 0; i < r1.loss_history.size(); ++i)
    REQUIRE(r1.loss_history[i] == r2.loss_history[i]);
  Vec h = vec2(0.7, -0.3);
  for (std::size_t k = 0; k < bank1.heads.size(); ++k)
    REQUIRE(bank1.heads[k].value(h) == bank2.heads[k].value(h));
}

TEST_CASE("training requires both classes") {
  SafetyDataset data = cluster_dataset(10, 7);
  data.records.erase(data.records.begin() + 10, data.records.end());  // safe only
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(data, cfg), DataError);
}

TEST_CASE("training survives inseparable data") {
  // Both classes at the same point: no separator exists; training must
  // neither crash nor diverge, and accuracy lands at chance.
  SafetyDataset data;
  data.dim = 2;
  Vec p = vec2(0.5, 0.5);
  for (int i = 0; i < 10; ++i) {
    data.records.push_back({p, SafetyLabel::Safe, "s" + std::to_string(i)});
    data.records.push_back({p, SafetyLabel::Unsafe, "u" + std::to_string(i)});
  }
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.heads = 2;
  cfg.hidden_dims = {4};
  auto [bank, result] = train(data, cfg);
  for (double loss : result.loss_history) REQUIRE(std::isfinite(loss));
  CHECK(accuracy(bank, data) == 0.5);
}

TEST_CASE("diverging optimization reports a training error") {
  SafetyDataset data = cluster_dataset(10, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.heads = 1;
  cfg.hidden_dims = {4};
  cfg.optimizer = Optimizer::Sgd;
  cfg.learning_rate = 1e300;
  CHECK_THROWS_AS(train(data, cfg), TrainingError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.epsilon_margin = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.lambda_unsafe = -0.5;
  CHECK_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("loss depends on weights and data, not on how the bank was sized") {
  // Two banks with identical weights produce identical losses even when one
  // was constructed through a different declared architecture path.
  SafetyDataset data = cluster_dataset(8, 10);
  MlpBank a = make_mlp_bank(2, 2, {8, 4}, 21);
  MlpBank b = make_mlp_bank(2, 2, {8, 4}, 21);
  TrainConfig cfg;
  CHECK(dataset_loss(a, data, cfg) == dataset_loss(b, data, cfg));
  // Push one head far negative: every safe record then pays its hinge, so
  // the loss must move. (A positive push could land in the hinge's flat
  // region and legitimately change nothing.)
  b.heads[0].head_b -= 10.0;
  CHECK(dataset_loss(a, data, cfg) != dataset_loss(b, data, cfg));
}

TEST_CASE("bank wrapper exposes heads as barriers") {
  MlpBank bank = make_mlp_bank(3, 4, {6}, 2, {"a", "b", "c"});
  Rng rng(2);
  for (auto& head : bank.heads) head.random_init(rng);
  BarrierBank bb = bank.as_barrier_bank();
  REQUIRE(bb.size() == 3);
  CHECK(bb.category_names()[2] == "c");
  Vec h = oracle::random_vec(rng, 4);
  Vec direct = bank.values(h);
  Vec wrapped = bb.values(h);
  for (int k = 0; k < 3; ++k) REQUIRE(direct[k] == wrapped[k]);
}
