#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "etree/bit_matrix.hpp"
#include "etree/error.hpp"
#include "etree/inference.hpp"
#include "etree/model.hpp"
#include "etree/oblivious.hpp"
#include "etree/schema.hpp"
#include "etree/trainer.hpp"

namespace etree {

/// Default subset size: ceil(sqrt(number of non-label features)).
inline std::size_t default_subset_size(const FeatureSchema& schema) {
  const auto n = static_cast<double>(schema.attribute_count());
  return static_cast<std::size_t>(std::ceil(std::sqrt(n)));
}

/// Draws `tree_count` subsets of distinct non-label features. Each subset is
/// a partial Fisher-Yates shuffle of [0, d-1) whose reads and swaps go
/// through oaccess/owrite. `subset_size` 0 selects the default; sizes above
/// d-1 are clamped.
inline std::vector<std::vector<std::size_t>> sample_feature_subsets(const FeatureSchema& schema,
                                                                    std::size_t tree_count, std::mt19937_64& rng,
                                                                    std::size_t subset_size = 0) {
  const std::size_t n = schema.attribute_count();
  const std::size_t s = std::min(subset_size == 0 ? default_subset_size(schema) : subset_size, n);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(tree_count);
  for (std::size_t t = 0; t < tree_count; ++t) {
    std::vector<word> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> subset(s);
    for (std::size_t k = 0; k < s; ++k) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(k, n - 1)(rng);
      const word picked = obl::oaccess(std::span<const word>(pool), j);
      obl::owrite(std::span<word>(pool), j, pool[k]);
      pool[k] = picked;
      subset[k] = picked;
    }
    out.push_back(std::move(subset));
  }
  return out;
}

/// Schema restricted to `subset` (in subset order) plus the label.
inline FeatureSchema project_schema(const FeatureSchema& schema, std::span<const std::size_t> subset) {
  std::vector<FeatureSpec> specs;
  for (std::size_t f : subset) specs.push_back(schema.specs().at(f));
  specs.push_back(schema.specs().at(schema.label_feature()));
  return FeatureSchema::build(std::move(specs));
}

namespace detail {

/// Value index per block of a one-hot row, computed without branching on the
/// bits. `blocks` is the number of leading schema features present in the row.
inline std::vector<word> block_values(const FeatureSchema& schema, const BitRow& bits, std::size_t blocks) {
  std::vector<word> v(blocks, 0);
  const auto words = bits.words();
  for (std::size_t i = 0; i < blocks; ++i)
    for (std::size_t j = 0; j < schema.arity(i); ++j) {
      const std::size_t b = schema.offset(i) + j;
      v[i] += j * ((words[b / 64] >> (b % 64)) & 1);
    }
  return v;
}

/// One-hot encodes `values` into `out` with a write to every bit.
inline void encode_values(const FeatureSchema& schema, std::span<const word> values, BitRow& out) {
  auto words = out.words();
  std::fill(words.begin(), words.end(), word{0});
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < schema.arity(i); ++j) {
      const std::size_t b = schema.offset(i) + j;
      words[b / 64] |= obl::detail::eq(values[i], j) << (b % 64);
    }
}

inline std::vector<word> project_values(std::span<const word> values, std::span<const std::size_t> subset,
                                        bool with_label) {
  std::vector<word> out;
  out.reserve(subset.size() + 1);
  for (std::size_t f : subset) out.push_back(obl::oaccess(values, f));
  if (with_label) out.push_back(values.back());
  return out;
}

}  // namespace detail

inline EncodedSample project_sample(const FeatureSchema& full, const FeatureSchema& projected,
                                    std::span<const std::size_t> subset, const EncodedSample& s) {
  const auto values = detail::block_values(full, s.bits, full.feature_count());
  const auto pv = detail::project_values(values, subset, true);
  EncodedSample out{BitRow(projected.total_bits())};
  detail::encode_values(projected, pv, out.bits);
  return out;
}

inline EncodedInstance project_instance(const FeatureSchema& full, const FeatureSchema& projected,
                                        std::span<const std::size_t> subset, const EncodedInstance& x) {
  const auto values = detail::block_values(full, x.bits, full.attribute_count());
  const auto pv = detail::project_values(values, subset, false);
  EncodedInstance out{BitRow(projected.instance_bits())};
  detail::encode_values(projected, pv, out.bits);
  return out;
}

struct ForestConfig {
  std::size_t tree_count = 10;
  std::size_t subset_size = 0;  // 0 = ceil(sqrt(d - 1))
  std::uint64_t seed = 0;
};

struct ForestTree {
  std::vector<std::size_t> subset;
  FeatureSchema schema;
  ObliviousModel model;
};

class ForestModel {
 public:
  ForestModel() = default;

  static ForestModel init(const FeatureSchema& schema, const ForestConfig& fc, std::size_t gamma) {
    if (fc.tree_count < 1) throw ConfigError("forest needs at least one tree");
    std::mt19937_64 rng(fc.seed);
    auto subsets = sample_feature_subsets(schema, fc.tree_count, rng, fc.subset_size);
    std::vector<ForestTree> trees;
    for (auto& subset : subsets) {
      auto ps = project_schema(schema, subset);
      auto model = ObliviousModel::init(ps, gamma);
      trees.push_back({std::move(subset), std::move(ps), std::move(model)});
    }
    return from_trees(schema, fc.seed, std::move(trees));
  }

  static ForestModel from_trees(FeatureSchema schema, std::uint64_t seed, std::vector<ForestTree> trees) {
    ForestModel f;
    f.schema_ = std::move(schema);
    f.seed_ = seed;
    f.trees_ = std::move(trees);
    for (const auto& t : f.trees_)
      if (!(t.schema == project_schema(f.schema_, t.subset)))
        throw IntegrityError("forest: tree schema does not match its feature subset");
    return f;
  }

  const FeatureSchema& schema() const { return schema_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t tree_count() const { return trees_.size(); }
  const std::vector<ForestTree>& trees() const { return trees_; }
  std::vector<ForestTree>& trees() { return trees_; }

  friend bool operator==(const ForestModel& a, const ForestModel& b) {
    if (!(a.schema_ == b.schema_) || a.seed_ != b.seed_ || a.trees_.size() != b.trees_.size()) return false;
    for (std::size_t t = 0; t < a.trees_.size(); ++t)
      if (a.trees_[t].subset != b.trees_[t].subset || !(a.trees_[t].model == b.trees_[t].model)) return false;
    return true;
  }

 private:
  FeatureSchema schema_;
  std::uint64_t seed_ = 0;
  std::vector<ForestTree> trees_;
};

namespace detail {

/// Runs f(t) for t in [0, n) on up to `threads` workers; rethrows the first
/// failure.
template <class F>
void for_each_tree(std::size_t n, std::size_t threads, F&& f) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t t = 0; t < n; ++t) f(t);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t = w; t < n; t += threads) {
        try {
          f(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Projects every sample onto each tree's subset and trains the trees
/// independently, `threads` at a time.
inline void train_forest(ForestModel& forest, const TrainerConfig& cfg, std::span<const EncodedSample> batch,
                         std::size_t threads = 1) {
  cfg.validate();
  auto& trees = forest.trees();
  detail::for_each_tree(trees.size(), threads, [&](std::size_t t) {
    auto& tree = trees[t];
    std::vector<EncodedSample> projected;
    projected.reserve(batch.size());
    for (const auto& s : batch) projected.push_back(project_sample(forest.schema(), tree.schema, tree.subset, s));
    train_batch(tree.model, cfg, projected);
  });
}

inline void train_forest_stream(ForestModel& forest, const TrainerConfig& cfg, std::span<const EncodedSample> samples,
                                std::size_t threads = 1) {
  for (std::size_t i = 0; i < samples.size(); i += cfg.batch_size)
    train_forest(forest, cfg, samples.subspan(i, std::min(cfg.batch_size, samples.size() - i)), threads);
}

struct ForestInference {
  std::vector<word> labels;               // majority vote per instance
  std::vector<std::vector<word>> votes;   // votes[t][n]: label of tree t
};

/// Majority over per-tree labels; ties go to the lowest label index.
inline std::vector<word> majority_vote(const std::vector<std::vector<word>>& votes, std::size_t label_arity) {
  const std::size_t n = votes.empty() ? 0 : votes.front().size();
  std::vector<word> out(n, 0);
  std::vector<word> counts(label_arity);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(counts.begin(), counts.end(), word{0});
    for (const auto& tree : votes)
      for (std::size_t k = 0; k < label_arity; ++k) counts[k] += obl::detail::eq(tree[i], k);
    word best = counts[0], idx = 0;
    for (std::size_t k = 1; k < label_arity; ++k) {
      const word gt = obl::detail::gt(counts[k], best);
      best = obl::detail::sel(gt, counts[k], best);
      idx = obl::detail::sel(gt, k, idx);
    }
    out[i] = idx;
  }
  return out;
}

/// Instance matrices of all trees side by side (N' x sum of tree widths)
/// against the block-diagonal arrangement of the tree matrices: one product
/// yields every tree's M'_r as a column block.
inline ForestInference infer_forest(const ForestModel& forest, std::span<const EncodedInstance> instances,
                                    std::size_t pad_to = 0) {
  const std::size_t rows = std::max(pad_to, instances.size());
  const auto& trees = forest.trees();
  std::vector<std::size_t> row_off{0}, col_off{0};
  for (const auto& t : trees) {
    if (t.model.paths() == 0 || t.model.is_dummy()[0] != 0) throw ConfigError("infer_forest: tree has no real root");
    row_off.push_back(row_off.back() + t.schema.instance_bits());
    col_off.push_back(col_off.back() + t.model.paths());
  }

  BitRows mi(rows, row_off.back());
  BitColumns mt(row_off.back(), col_off.back());
  obl::emit(obl::OpKind::scan, {rows, trees.size()});
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& tree = trees[t];
    for (std::size_t n = 0; n < instances.size(); ++n) {
      const auto x = project_instance(forest.schema(), tree.schema, tree.subset, instances[n]);
      for (std::size_t b = 0; b < tree.schema.instance_bits(); ++b)
        mi.set(n, row_off[t] + b, x.bits.get(b));
    }
    const auto& cols = tree.model.columns();
    for (std::size_t p = 0; p < cols.cols(); ++p)
      for (std::size_t b = 0; b < cols.rows(); ++b)
        mt.set(row_off[t] + b, col_off[t] + p, cols.get(b, p));
  }
  const CountMatrix results = matmul_counts(mi, mt);

  ForestInference out;
  std::vector<word> labels(rows), matches(rows);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    predict_rows(results, col_off[t], gather_paths(trees[t].model), labels, matches);
    out.votes.emplace_back(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(instances.size()));
  }
  out.labels = majority_vote(out.votes, forest.schema().label_arity());
  return out;
}

/// Reference path: one infer_batch per tree on projected instances.
inline ForestInference infer_forest_looped(const ForestModel& forest, std::span<const EncodedInstance> instances,
                                           std::size_t pad_to = 0, std::size_t threads = 1) {
  ForestInference out;
  out.votes.resize(forest.tree_count());
  detail::for_each_tree(forest.tree_count(), threads, [&](std::size_t t) {
    const auto& tree = forest.trees()[t];
    std::vector<EncodedInstance> projected;
    projected.reserve(instances.size());
    for (const auto& x : instances)
      projected.push_back(project_instance(forest.schema(), tree.schema, tree.subset, x));
    out.votes[t] = infer_batch(tree.model, projected, pad_to).labels;
  });
  out.labels = majority_vote(out.votes, forest.schema().label_arity());
  return out;
}

}  // namespace etree
