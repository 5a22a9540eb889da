#include "doctest.h"

#include "mirnn/error.hpp"
#include "mirnn/network.hpp"
#include "mirnn/physics.hpp"
#include "mirnn/trainer.hpp"

#include <cstring>
#include <filesystem>
#include <random>

using namespace mirnn;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

LayerSpec burgers_spec() { return burgers_problem().layer_spec(); }

MiRnnModel two_block_model(ConditioningPolicy policy, double ff = 0.5, std::uint64_t seed = 7) {
  return {init_params(burgers_spec(), seed), TimePartition::uniform(0.0, 5.0, 2, 0.1), policy,
          ForgetFactorSchedule::uniform(ff)};
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("parameter layout for a 2-input, 4x30, 1-output block") {
  LayerSpec s;
  s.inputs = 2;
  s.outputs = 1;
  BlockParams p = init_params(s, 1);
  REQUIRE(p.tensors.size() == 14);
  const int shapes[5][2] = {{30, 2}, {30, 30}, {30, 30}, {30, 30}, {1, 30}};
  for (int l = 0; l < 5; ++l) {
    CHECK(p.tensors[p.weight_index(l)].rows() == shapes[l][0]);
    CHECK(p.tensors[p.weight_index(l)].cols() == shapes[l][1]);
    CHECK(p.tensors[p.bias_index(l)].isZero());
  }
  for (int l = 0; l < 4; ++l) {
    CHECK(p.tensors[p.coupling_index(l)].rows() == 30);
    CHECK(p.tensors[p.coupling_index(l)].cols() == 30);
  }
  CHECK(p.tensor_name(p.coupling_index(3)) == "U3");
  CHECK(p.scalar_count() == 60 + 30 + 3 * 930 + 31 + 4 * 900);
}

TEST_CASE("initialization is deterministic and bounded") {
  const LayerSpec s = burgers_spec();
  const BlockParams a = init_params(s, 99);
  const BlockParams b = init_params(s, 99);
  const BlockParams c = init_params(s, 100);
  CHECK(a.flat() == b.flat());
  CHECK(a.flat() != c.flat());
  const double bound = std::sqrt(6.0 / (30 + 2));
  CHECK(a.tensors[0].cwiseAbs().maxCoeff() <= bound);
  CHECK(a.all_finite());
  LayerSpec bad = s;
  bad.width = 0;
  CHECK(code_of([&] { init_params(bad, 1); }) == ErrorCode::config);
}

TEST_CASE("flat round trip") {
  BlockParams p = init_params(burgers_spec(), 3);
  Eigen::VectorXd v = p.flat();
  v *= 2.0;
  p.assign_flat(v);
  CHECK(p.flat() == v);
  CHECK(code_of([&] { p.assign_flat(Eigen::VectorXd::Zero(3)); }) == ErrorCode::shape);
}

TEST_CASE("block_forward with ff = 0 equals the uncoupled pass") {
  const BlockParams p = init_params(burgers_spec(), 5);
  Eigen::MatrixXd pts = Eigen::MatrixXd::Random(2, 16).array() + 1.0;
  const BlockResult first = block_forward(p, pts, nullptr, 0.0);
  Eigen::MatrixXd other = pts.array() + 0.3;
  const BlockResult upstream = block_forward(p, other, nullptr, 0.0);
  const BlockResult coupled = block_forward(p, pts, &upstream.hidden, 0.0);
  CHECK(bitwise_equal(first.fields, coupled.fields));
  const BlockResult full = block_forward(p, pts, &upstream.hidden, 1.0);
  CHECK_FALSE(bitwise_equal(first.fields, full.fields));
  for (const auto& layer : full.hidden.layers) CHECK(layer.cwiseAbs().maxCoeff() < 1.0);
  CHECK(full.hidden.layers.size() == 4);
  CHECK(code_of([&] { block_forward(p, Eigen::MatrixXd::Zero(3, 2), nullptr, 0.5); }) ==
        ErrorCode::shape);
}

TEST_CASE("outputs are continuous in the forget factor") {
  const BlockParams p = init_params(burgers_spec(), 8);
  Eigen::MatrixXd pts(2, 1);
  pts << 1.2, 3.0;
  const BlockResult up = block_forward(p, pts, nullptr, 0.0);
  const double base = block_forward(p, pts, &up.hidden, 0.0).fields(0, 0);
  double prev = INFINITY;
  for (double ff : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const double d = std::abs(block_forward(p, pts, &up.hidden, ff).fields(0, 0) - base);
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("conditional hidden chain") {
  const MiRnnModel m = two_block_model(ConditioningPolicy::uniform(ConditioningRule::at(2.55)));
  const double point[] = {1.3, 4.0};
  const auto chain = build_chain(m, 1, point);
  REQUIRE(chain.size() == 1);
  CHECK(chain[0].coords(0, 0) == 1.3);
  CHECK(chain[0].coords(1, 0) == 2.55);
  const auto h = conditional_hidden(m.params, chain);
  REQUIRE(h.has_value());
  const BlockResult direct = block_forward(m.params, chain[0].coords, nullptr, 0.0);
  for (std::size_t l = 0; l < 4; ++l) CHECK(bitwise_equal(h->layers[l], direct.hidden.layers[l]));
  CHECK_FALSE(conditional_hidden(m.params, {}).has_value());
  CHECK(build_chain(m, 0, point).empty());
}

TEST_CASE("zero forget factors cut upstream influence") {
  // Three blocks: with ff = 0 the hidden state entering block 3 is block 2's
  // standalone activations.
  MiRnnModel m{init_params(burgers_spec(), 4), TimePartition::uniform(0.0, 5.0, 3, 0.2),
               ConditioningPolicy::uniform(ConditioningRule::at_preceding_end()),
               ForgetFactorSchedule::uniform(0.0)};
  const double point[] = {0.7, 4.5};
  const auto chain = build_chain(m, 2, point);
  REQUIRE(chain.size() == 2);
  const auto h = conditional_hidden(m.params, chain);
  const BlockResult standalone = block_forward(m.params, chain[1].coords, nullptr, 0.0);
  for (std::size_t l = 0; l < 4; ++l) CHECK(bitwise_equal(h->layers[l], standalone.hidden.layers[l]));
}

TEST_CASE("unroll: independent, mutual and outside queries") {
  const MiRnnModel m = two_block_model(ConditioningPolicy::uniform(ConditioningRule::aligned()));
  const double early[] = {1.0, 1.0};
  auto r = unroll(m, early);
  REQUIRE(r.size() == 1);
  CHECK(r[0].block == 0);
  Eigen::MatrixXd pts(2, 1);
  pts << 1.0, 1.0;
  CHECK(r[0].fields(0) == block_forward(m.params, pts, nullptr, 0.0).fields(0, 0));

  const double shared[] = {1.0, 2.53};
  r = unroll(m, shared);
  REQUIRE(r.size() == 2);
  CHECK(r[0].block == 0);
  CHECK(r[1].block == 1);
  CHECK(r[0].fields(0) != r[1].fields(0));

  const double outside[] = {1.0, 5.5};
  CHECK(code_of([&] { unroll(m, outside); }) == ErrorCode::domain);
}

TEST_CASE("batched predictor agrees bitwise with pointwise unroll") {
  for (auto rule : {ConditioningRule::aligned(), ConditioningRule::at(2.55),
                    ConditioningRule::at_preceding_end()}) {
    MiRnnModel m{init_params(burgers_spec(), 21), TimePartition::uniform(0.0, 5.0, 3, 0.3),
                 ConditioningPolicy{{rule, ConditioningRule::at(1.0), ConditioningRule::aligned()}},
                 ForgetFactorSchedule{{0.3, 0.7, 1.0}}};
    Predictor pred(m, 7);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> x(0.0, 4.0);
    std::uniform_real_distribution<double> t(0.0, 5.0);
    Eigen::MatrixXd pts(2, 40);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) pts.col(i) << x(rng), t(rng);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const double point[] = {pts(0, i), pts(1, i)};
      for (const auto& bp : unroll(m, point)) {
        const Eigen::MatrixXd one = pred.predict(bp.block, pts.col(i));
        CHECK(one(0, 0) == bp.fields(0));
      }
    }
  }
}

TEST_CASE("predictions do not depend on batch composition") {
  const MiRnnModel m = two_block_model(ConditioningPolicy::uniform(ConditioningRule::aligned()));
  Predictor a(m, 1000);
  Predictor b(m, 3);
  Eigen::MatrixXd pts(2, 50);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> x(0.0, 4.0);
  std::uniform_real_distribution<double> t(2.5, 5.0);
  for (Eigen::Index i = 0; i < pts.cols(); ++i) pts.col(i) << x(rng), t(rng);
  const Eigen::MatrixXd whole = a.predict(1, pts);
  Eigen::MatrixXd reversed = pts.rowwise().reverse();
  const Eigen::MatrixXd back = b.predict(1, reversed).rowwise().reverse();
  CHECK(bitwise_equal(whole, back));
}

TEST_CASE("weights are shared by every block") {
  MiRnnModel m = two_block_model(ConditioningPolicy::uniform(ConditioningRule::at(2.55)));
  const double p0[] = {1.0, 1.0};
  const double p1[] = {1.0, 4.0};
  const double a0 = unroll(m, p0)[0].fields(0);
  const double a1 = unroll(m, p1)[0].fields(0);
  m.params.tensors[m.params.weight_index(2)](0, 0) += 0.5;
  CHECK(unroll(m, p0)[0].fields(0) != a0);
  CHECK(unroll(m, p1)[0].fields(0) != a1);
}

TEST_CASE("gradients flow through the conditioning chain") {
  // Block 1's prediction depends on block 0 only through the coupling; the
  // coupling maps must receive gradient.
  const MiRnnModel m = two_block_model(ConditioningPolicy::uniform(ConditioningRule::aligned()));
  NetworkGraph net(m.params.spec);
  InputIds ids;
  QueryGraph q = build_query(net, m.policy, 1, ids, "q");
  std::vector<Eigen::MatrixXd> in(static_cast<std::size_t>(ids.count()));
  Eigen::MatrixXd pts(2, 4);
  pts << 0.5, 1.0, 2.0, 3.0, 2.6, 3.0, 4.0, 4.9;
  bind_query(q, m.partition, m.policy, m.ff, pts, in);
  ad::Expr loss = ad::mean(ad::square(ad::derivative(q.fields, q.coord_ids[1])));
  ad::Gradient g = ad::param_gradient(loss, {in, m.params.tensors});
  for (int l = 0; l < 4; ++l) CHECK(g[m.params.coupling_index(l)].norm() > 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint c;
  c.params = init_params(burgers_spec(), 77);
  c.ff = ForgetFactorSchedule{{0.1, 0.2, 0.3}};
  c.epoch = 3;
  c.adam.step = 3;
  for (const auto& t : c.params.tensors) {
    c.adam.m.push_back(t * 1e-3);
    c.adam.v.push_back(t.cwiseProduct(t) / 7.0);
  }
  const auto path = (std::filesystem::temp_directory_path() / "mirnn_ck_test.json").string();
  save_checkpoint(c, path);
  const Checkpoint d = load_checkpoint(path);
  CHECK(d.params.seed == 77);
  CHECK(d.ff.factors == c.ff.factors);
  CHECK(d.epoch == 3);
  REQUIRE(d.params.tensors.size() == c.params.tensors.size());
  for (std::size_t i = 0; i < c.params.tensors.size(); ++i) {
    CHECK(bitwise_equal(d.params.tensors[i], c.params.tensors[i]));
    CHECK(bitwise_equal(d.adam.m[i], c.adam.m[i]));
    CHECK(bitwise_equal(d.adam.v[i], c.adam.v[i]));
  }
  std::filesystem::remove(path);
  CHECK(code_of([&] { load_checkpoint(path); }) == ErrorCode::not_found);
}
