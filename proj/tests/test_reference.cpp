#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "etree/reference.hpp"
#include "etree/synthetic.hpp"
#include "etree/trainer.hpp"
#include "fixtures.hpp"

using namespace etree;
using namespace etree::reference;
using namespace etree::testing;

namespace {

/// No exactly for (Sunny, High), otherwise Yes.
std::uint32_t sunny_high_rule(const ValueRow& x) { return x[outlook] == 0 && x[humidity] == 0 ? 1 : 0; }

std::vector<ValueRow> rule_stream(std::mt19937_64& rng, std::size_t n) {
  const auto s = weather();
  std::vector<ValueRow> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = random_row(s, rng);
    row[label] = sunny_high_rule(row);
    out.push_back(row);
  }
  return out;
}

std::vector<ValueRow> all_weather_instances() {
  std::vector<ValueRow> out;
  for (std::uint32_t o = 0; o < 3; ++o)
    for (std::uint32_t w = 0; w < 2; ++w)
      for (std::uint32_t h = 0; h < 2; ++h)
        for (std::uint32_t t = 0; t < 2; ++t) out.push_back({o, w, h, t});
  return out;
}

}  // namespace

TEST(PointerTree, LearnsTheRunningExampleRule) {
  const auto s = weather();
  TrainerConfig cfg;
  cfg.n_min = 200;
  PointerTree tree(s);
  std::mt19937_64 rng(1);
  for (int b = 0; b < 40; ++b) tree.train_batch(rule_stream(rng, 100), cfg);
  EXPECT_GE(tree.leaf_count(), 4u);
  for (const auto& x : all_weather_instances()) EXPECT_EQ(tree.infer(x), sunny_high_rule(x));
}

TEST(PointerTree, RootStatisticsCountEverySample) {
  const auto s = weather();
  TrainerConfig cfg;
  cfg.n_min = 1000;
  PointerTree tree(s);
  std::mt19937_64 rng(2);
  const auto rows = rule_stream(rng, 50);
  tree.train_batch(rows, cfg);
  ASSERT_EQ(tree.leaf_count(), 1u);
  const auto& row = tree.nodes()[0].row;
  EXPECT_EQ(row[s.pair_space() + s.label_arity()], 50u);
  std::vector<word> oracle(s.pair_space(), 0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < s.attribute_count(); ++i) ++oracle[s.pair_index(i, r[i], r[label])];
  EXPECT_TRUE(std::equal(oracle.begin(), oracle.end(), row.begin()));
  EXPECT_THROW(tree.train_batch(std::vector<ValueRow>{{0, 0, 0}}, cfg), DataError);
}

TEST(LevelArrayTree, RouteFollowsTheLearnedPaths) {
  const auto s = weather();
  TrainerConfig cfg;
  cfg.n_min = 200;
  LevelArrayTree walk(s, 2);
  PointerTree tree(s);
  std::mt19937_64 rng(3);
  for (int b = 0; b < 40; ++b) {
    const auto rows = rule_stream(rng, 100);
    walk.train_batch(rows, cfg);
    tree.train_batch(rows, cfg);
  }
  const auto leaves = walk.leaves();
  for (const auto& x : all_weather_instances()) {
    EXPECT_EQ(walk.infer(x), sunny_high_rule(x));
    const std::vector<word> w(x.begin(), x.end());
    const word slot = walk.route(w);
    std::size_t matches = 0;
    for (const auto& [path, row] : leaves) {
      bool on_path = true;
      for (std::size_t i = 0; i < path.size(); ++i) on_path &= path[i] < 0 || path[i] == static_cast<int>(x[i]);
      matches += on_path;
    }
    EXPECT_EQ(matches, 1u);
    EXPECT_LT(slot, walk.slot_count());
    EXPECT_EQ(tree.nodes()[tree.route(x)].path, [&] {
      for (const auto& [path, row] : leaves) {
        bool on_path = true;
        for (std::size_t i = 0; i < path.size(); ++i) on_path &= path[i] < 0 || path[i] == static_cast<int>(x[i]);
        if (on_path) return path;
      }
      return std::vector<int>{};
    }());
  }
}

TEST(LevelArrayTree, EquivalentToPointerTreeAfterEveryBatch) {
  for (std::uint64_t seed : {1, 3, 4, 5}) {
    synthetic::Generator gen({6, 3, 2, 4, 0.05, seed});
    const auto& s = gen.schema();
    TrainerConfig cfg;
    cfg.n_min = 150;
    LevelArrayTree walk(s, 2);
    PointerTree tree(s);
    for (int b = 0; b < 40; ++b) {
      const auto rows = gen.generate(100);
      walk.train_batch(rows, cfg);
      tree.train_batch(rows, cfg);
      const auto rep = tree_equivalence(walk, tree);
      ASSERT_TRUE(rep.equivalent) << "seed " << seed << " batch " << b << "\n" << rep.diff;
    }
    EXPECT_GT(tree.leaf_count(), 1u) << "seed " << seed;
    const auto test = gen.generate(500);
    for (const auto& r : test) {
      const ValueRow x(r.begin(), r.end() - 1);
      ASSERT_EQ(walk.infer(x), tree.infer(x));
    }
  }
}

TEST(LevelArrayTree, TraceIsIndependentOfTheRoute) {
  const auto s = weather();
  TrainerConfig cfg;
  cfg.n_min = 200;
  LevelArrayTree walk(s, 2);
  std::mt19937_64 rng(4);
  for (int b = 0; b < 20; ++b) walk.train_batch(rule_stream(rng, 100), cfg);
  const auto xs = all_weather_instances();
  const auto reference_trace = obl::trace_of([&] { (void)walk.infer(xs[0]); });
  for (const auto& x : xs) EXPECT_EQ(obl::trace_of([&] { (void)walk.infer(x); }), reference_trace);
  std::mt19937_64 r2(5);
  const auto a = rule_stream(r2, 30), b = rule_stream(r2, 30);
  auto wa = walk, wb = walk;
  EXPECT_EQ(obl::trace_of([&] { wa.train_batch(a, cfg); }), obl::trace_of([&] { wb.train_batch(b, cfg); }));
}

TEST(Equivalence, DiffNamesThePerturbedLeaf) {
  const auto s = weather();
  TrainerConfig cfg;
  cfg.n_min = 200;
  PointerTree tree(s);
  auto model = ObliviousModel::init(s, 2);
  std::mt19937_64 rng(6);
  for (int b = 0; b < 20; ++b) {
    const auto rows = rule_stream(rng, 100);
    tree.train_batch(rows, cfg);
    train_batch(model, cfg, encode_rows(s, rows));
  }
  ASSERT_TRUE(tree_equivalence(model, tree).equivalent);
  auto left = snapshot(model);
  const auto right = snapshot(tree);
  auto it = left.begin();
  const std::string name = describe_path(s, it->first);
  it->second[s.pair_space() + s.label_arity()] += 1;
  const auto rep = compare_leaves(s, left, right);
  EXPECT_FALSE(rep.equivalent);
  EXPECT_NE(rep.diff.find("leaf " + name + ": n_total"), std::string::npos) << rep.diff;

  auto missing = snapshot(model);
  missing.erase(missing.begin());
  EXPECT_NE(compare_leaves(s, missing, right).diff.find("missing on the left"), std::string::npos);
}

TEST(Equivalence, DescribePathUsesValueNames) {
  const auto s = weather();
  EXPECT_EQ(describe_path(s, {0, -1, 0, -1}), "(Outlook=Sunny, Humidity=High)");
  EXPECT_EQ(describe_path(s, {-1, -1, -1, -1}), "()");
}
