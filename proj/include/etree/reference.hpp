#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "etree/error.hpp"
#include "etree/model.hpp"
#include "etree/oblivious.hpp"
#include "etree/schema.hpp"
#include "etree/trainer.hpp"

namespace etree::reference {

/// Plaintext Hoeffding tree with explicit nodes. Samples are routed root to
/// leaf, counted, and leaves are split-checked after every batch with the
/// same conventions as the matrix engine. Serves as the correctness oracle.
class PointerTree {
 public:
  struct Node {
    int feature = -1;           // -1 for leaves
    std::vector<int> children;  // indexed by value
    std::vector<int> path;      // value per feature on the root path, -1 if unassigned
    std::vector<word> row;      // leaf statistics, same layout as a LeafTable row
  };

  PointerTree() = default;
  explicit PointerTree(FeatureSchema schema) : schema_(std::move(schema)) {
    nodes_.push_back(make_leaf(std::vector<int>(schema_.attribute_count(), -1)));
  }

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  std::size_t route(const ValueRow& x) const {
    std::size_t cur = 0;
    while (nodes_[cur].feature >= 0) cur = static_cast<std::size_t>(nodes_[cur].children.at(x.at(nodes_[cur].feature)));
    return cur;
  }

  void train_batch(std::span<const ValueRow> batch, const TrainerConfig& cfg) {
    const std::size_t attrs = schema_.attribute_count();
    const std::size_t pairs = schema_.pair_space();
    const std::size_t m_d = schema_.label_arity();
    for (const auto& s : batch) {
      if (s.size() != schema_.feature_count()) throw DataError("sample arity mismatch");
      Node& leaf = nodes_[route(s)];
      const std::uint32_t y = s[attrs];
      for (std::size_t i = 0; i < attrs; ++i)
        if (leaf.path[i] < 0) ++leaf.row[schema_.pair_index(i, s[i], y)];
      ++leaf.row[pairs + y];
      ++leaf.row[pairs + m_d];
    }
    const std::size_t existing = nodes_.size();
    for (std::size_t id = 0; id < existing; ++id) {
      if (nodes_[id].feature >= 0) continue;
      if (auto f = check(id, cfg)) split(id, *f);
    }
  }

  std::uint32_t infer(const ValueRow& x) const {
    const auto& row = nodes_[route(x)].row;
    const std::size_t pairs = schema_.pair_space();
    std::uint32_t best = 0;
    for (std::uint32_t k = 1; k < schema_.label_arity(); ++k)
      if (row[pairs + k] > row[pairs + best]) best = k;
    return best;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
  }

 private:
  Node make_leaf(std::vector<int> path) const {
    Node n;
    n.path = std::move(path);
    n.row.assign(schema_.pair_space() + schema_.label_arity() + 2, 0);
    return n;
  }

  std::optional<std::size_t> check(std::size_t id, const TrainerConfig& cfg) {
    Node& leaf = nodes_[id];
    const std::size_t attrs = schema_.attribute_count();
    const std::size_t pairs = schema_.pair_space();
    const std::size_t m_d = schema_.label_arity();
    const word n_total = leaf.row[pairs + m_d];
    word& n_last = leaf.row[pairs + m_d + 1];
    const bool open = std::any_of(leaf.path.begin(), leaf.path.end(), [](int v) { return v < 0; });
    if (!open || n_total - n_last < cfg.n_min) return std::nullopt;
    n_last = n_total;

    const std::span<const word> counts(leaf.row.data(), pairs);
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t i = 0; i < attrs; ++i)
      if (leaf.path[i] < 0) candidates.emplace_back(info_gain(counts, i, schema_), i);
    candidates.emplace_back(0.0, attrs);  // null split
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    const double best = candidates[0].first;
    const double second = candidates[1].first;
    const std::size_t best_idx = candidates[0].second;
    const double eps = hoeffding_bound(m_d, cfg.delta, n_total, cfg.range_log_base);
    if (best_idx < attrs && best - second > eps) return best_idx;
    return std::nullopt;
  }

  void split(std::size_t id, std::size_t feature) {
    const std::size_t arity = schema_.arity(feature);
    std::vector<int> children;
    for (std::size_t v = 0; v < arity; ++v) {
      auto path = nodes_[id].path;
      path[feature] = static_cast<int>(v);
      children.push_back(static_cast<int>(nodes_.size()));
      nodes_.push_back(make_leaf(std::move(path)));
    }
    Node& n = nodes_[id];
    n.feature = static_cast<int>(feature);
    n.children = std::move(children);
    n.row.clear();
  }

  FeatureSchema schema_;
  std::vector<Node> nodes_;
};

/// Baseline that keeps the pointer tree as per-depth node arrays padded with
/// dummy nodes and walks them with oaccess, one level at a time. Leaf
/// statistics live in a dummy-padded slot table read and written with full
/// scans per sample.
class LevelArrayTree {
 public:
  struct Node {
    word real = 0;
    word is_leaf = 0;
    word feature = 0;
    word child_base = 0;
    word leaf_slot = 0;
  };

  LevelArrayTree() = default;
  LevelArrayTree(FeatureSchema schema, std::size_t gamma) : schema_(std::move(schema)), gamma_(gamma) {
    if (gamma < 1) throw ConfigError("gamma must be >= 1");
    const std::size_t attrs = schema_.attribute_count();
    levels_.resize(attrs + 1);
    next_free_.assign(attrs + 1, 0);
    levels_[0].push_back(Node{1, 1, 0, 0, 0});
    next_free_[0] = 1;
    for (std::size_t l = 1; l <= attrs; ++l) levels_[l].resize(level_threshold());
    grow_slots(slot_threshold() + 1);
    slot_dummy_[0] = 0;
    auto meta = meta_line(0);
    for (std::size_t i = 0; i < attrs; ++i) meta[i] = 1;
  }

  const FeatureSchema& schema() const { return schema_; }
  std::size_t slot_threshold() const { return gamma_ * (schema_.max_attribute_arity() - 1); }
  std::size_t level_threshold() const { return gamma_ * schema_.max_attribute_arity(); }
  std::size_t slot_count() const { return slot_dummy_.size(); }
  std::size_t level_length(std::size_t l) const { return levels_.at(l).size(); }
  std::size_t row_stride() const { return schema_.pair_space() + schema_.label_arity() + 2; }
  /// Slot metadata: unassigned flags, level, position.
  std::size_t meta_stride() const { return schema_.attribute_count() + 2; }

  /// Leaf slot reached by `x` (feature values, optional trailing label).
  word route(std::span<const word> x) const {
    word cur = 0, slot = 0, done = 0;
    for (const auto& level : levels_) {
      const Node node = obl::oaccess(std::span<const Node>(level), cur);
      const word here = node.is_leaf & node.real & (done ^ 1);
      slot = obl::oselect(here, node.leaf_slot, slot);
      done |= here;
      const word v = obl::oaccess(x.first(schema_.attribute_count()), node.feature);
      cur = obl::oselect(done, word{0}, node.child_base + v);
    }
    return slot;
  }

  void train_batch(std::span<const ValueRow> batch, const TrainerConfig& cfg) {
    const std::size_t attrs = schema_.attribute_count();
    const std::size_t pairs = schema_.pair_space();
    const std::size_t m_d = schema_.label_arity();
    std::vector<word> x(attrs + 1), row(row_stride()), meta(meta_stride());
    for (const auto& s : batch) {
      if (s.size() != schema_.feature_count()) throw DataError("sample arity mismatch");
      std::copy(s.begin(), s.end(), x.begin());
      const word y = x[attrs];
      const word slot = route(x);
      obl::oaccess_line(rows_, row_stride(), slot, row);
      obl::oaccess_line(meta_, meta_stride(), slot, meta);
      obl::emit(obl::OpKind::scan, {pairs + m_d});
      for (std::size_t i = 0; i < attrs; ++i) {
        const word target = schema_.pair_block(i) + x[i] * m_d + y;
        const std::size_t lo = schema_.pair_block(i);
        const std::size_t hi = lo + schema_.arity(i) * m_d;
        for (std::size_t k = lo; k < hi; ++k) row[k] += obl::detail::eq(k, target) & meta[i];
      }
      for (std::size_t k = 0; k < m_d; ++k) row[pairs + k] += obl::detail::eq(k, y);
      row[pairs + m_d] += 1;
      obl::owrite_line(rows_, row_stride(), slot, row);
    }

    const std::size_t slots = slot_count();
    for (std::size_t s = 0; s < slots; ++s) {
      if (s % gamma_ == 0) replenish();
      const word real = 1 ^ slot_dummy_[s];
      auto r = std::span<word>(rows_).subspan(s * row_stride(), row_stride());
      auto flags = std::span<const word>(meta_).subspan(s * meta_stride(), attrs);
      const SplitDecision d = evaluate_split(r, flags, real, schema_, cfg);
      grow(s, d);
    }
  }

  word infer(std::span<const word> x) const {
    const word slot = route(x);
    std::vector<word> row(row_stride());
    obl::oaccess_line(rows_, row_stride(), slot, row);
    const std::size_t pairs = schema_.pair_space();
    word best = row[pairs], idx = 0;
    for (std::size_t k = 1; k < schema_.label_arity(); ++k) {
      const word gt = obl::ogreater(row[pairs + k], best);
      best = obl::oselect(gt, row[pairs + k], best);
      idx = obl::oselect(gt, word{k}, idx);
    }
    return idx;
  }

  word infer(const ValueRow& x) const {
    std::vector<word> w(x.begin(), x.end());
    return infer(std::span<const word>(w));
  }

  /// Real leaves as (path values, statistics row); walks the arrays in the
  /// clear, for comparisons only.
  std::vector<std::pair<std::vector<int>, std::vector<word>>> leaves() const {
    std::vector<std::pair<std::vector<int>, std::vector<word>>> out;
    std::vector<int> path(schema_.attribute_count(), -1);
    collect(0, 0, path, out);
    return out;
  }

 private:
  std::span<word> meta_line(std::size_t s) { return std::span<word>(meta_).subspan(s * meta_stride(), meta_stride()); }

  void collect(std::size_t level, std::size_t pos, std::vector<int>& path,
               std::vector<std::pair<std::vector<int>, std::vector<word>>>& out) const {
    const Node& n = levels_[level][pos];
    if (n.is_leaf) {
      const auto r = std::span<const word>(rows_).subspan(n.leaf_slot * row_stride(), row_stride());
      out.emplace_back(path, std::vector<word>(r.begin(), r.end()));
      return;
    }
    for (std::size_t v = 0; v < schema_.arity(n.feature); ++v) {
      path[n.feature] = static_cast<int>(v);
      collect(level + 1, n.child_base + v, path, out);
    }
    path[n.feature] = -1;
  }

  void grow_slots(std::size_t n) {
    rows_.resize(rows_.size() + n * row_stride(), 0);
    meta_.resize(meta_.size() + n * meta_stride(), 0);
    slot_dummy_.resize(slot_dummy_.size() + n, 1);
  }

  void replenish() {
    word dummies = 0;
    obl::emit(obl::OpKind::scan, {slot_count()});
    for (word d : slot_dummy_) dummies += d;
    if (dummies < slot_threshold()) grow_slots(slot_threshold());
    for (std::size_t l = 1; l < levels_.size(); ++l) {
      if (levels_[l].size() - next_free_[l] < level_threshold()) {
        obl::emit(obl::OpKind::assign, {level_threshold()});
        levels_[l].resize(levels_[l].size() + level_threshold());
      }
    }
  }

  /// Turns slot s's leaf into an internal node when d.fires; same writes
  /// either way.
  void grow(std::size_t s, const SplitDecision& d) {
    const std::size_t attrs = schema_.attribute_count();
    const std::size_t m_max = schema_.max_attribute_arity();
    const word f = d.fires & 1;
    std::vector<word> arities(attrs);
    for (std::size_t i = 0; i < attrs; ++i) arities[i] = schema_.arity(i);
    const word a = obl::oselect(f, d.feature, word{0});
    const word arity = obl::oaccess(std::span<const word>(arities), a);

    auto meta = meta_line(s);
    const word level = meta[attrs];
    const word pos = meta[attrs + 1];
    const word child_level = obl::oselect(f, level + 1, word{0});
    const word base = obl::oaccess(std::span<const word>(next_free_), child_level);

    std::vector<word> child_meta(meta.begin(), meta.end());
    for (std::size_t i = 0; i < attrs; ++i) child_meta[i] = obl::detail::sel(obl::detail::eq(i, a), 0, child_meta[i]);
    child_meta[attrs] = child_level;

    // Slots for children 1..arity-1: lowest-index dummies first.
    std::vector<word> child_slot(m_max, s);
    for (std::size_t r = 1; r < m_max; ++r) {
      const word cond = f & obl::ogreater(arity, word{r});
      child_meta[attrs + 1] = base + r;
      word found = 0;
      obl::emit(obl::OpKind::scan, {slot_count(), meta_stride() + 1});
      for (std::size_t q = 0; q < slot_count(); ++q) {
        const word dummy = slot_dummy_[q];
        const word take = cond & dummy & (found ^ 1);
        found |= dummy;
        obl::detail::cond_copy_words(take, meta_line(q), child_meta);
        slot_dummy_[q] = obl::detail::sel(take, 0, dummy);
        child_slot[r] = obl::detail::sel(take, q, child_slot[r]);
      }
      if (cond & (found ^ 1)) throw ConfigError("level walk: ran out of dummy slots");
    }
    // Slot s keeps child 0.
    child_meta[attrs + 1] = base;
    obl::detail::cond_copy_words(f, meta, child_meta);
    for (word& v : std::span<word>(rows_).subspan(s * row_stride(), row_stride())) v = obl::detail::sel(f, 0, v);

    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const word at_parent = f & obl::detail::eq(l, level);
      const word at_child = f & obl::detail::eq(l, child_level);
      obl::emit(obl::OpKind::scan, {levels_[l].size()});
      for (std::size_t q = 0; q < levels_[l].size(); ++q) {
        Node& n = levels_[l][q];
        Node parent = n;
        parent.is_leaf = 0;
        parent.feature = a;
        parent.child_base = base;
        obl::detail::cond_copy(at_parent & obl::detail::eq(q, pos), n, parent);

        const word off = q - base;
        const word in_range = (obl::detail::gt(base, q) ^ 1) & obl::detail::gt(arity, off);
        word slot = s;
        for (std::size_t r = 1; r < m_max; ++r) slot = obl::detail::sel(obl::detail::eq(off, r), child_slot[r], slot);
        const Node child{1, 1, 0, 0, slot};
        obl::detail::cond_copy(at_child & in_range, n, child);
      }
      next_free_[l] += obl::detail::sel(at_child, arity, 0);
    }
  }

  FeatureSchema schema_;
  std::size_t gamma_ = 1;
  std::vector<std::vector<Node>> levels_;
  std::vector<word> next_free_;
  std::vector<word> rows_;
  std::vector<word> meta_;
  std::vector<word> slot_dummy_;
};

/// Canonical leaf set: path values -> statistics row.
using LeafMap = std::map<std::vector<int>, std::vector<word>>;

inline LeafMap snapshot(const ObliviousModel& m) {
  LeafMap out;
  for (std::size_t p = 0; p < m.paths(); ++p) {
    if (m.is_dummy()[p]) continue;
    const auto r = m.leaves().row(p);
    out.emplace(m.path_values(p), std::vector<word>(r.begin(), r.end()));
  }
  return out;
}

inline LeafMap snapshot(const PointerTree& t) {
  LeafMap out;
  for (const auto& n : t.nodes())
    if (n.feature < 0) out.emplace(n.path, n.row);
  return out;
}

inline LeafMap snapshot(const LevelArrayTree& t) {
  LeafMap out;
  for (auto& [path, row] : t.leaves()) out.emplace(path, row);
  return out;
}

struct EquivalenceReport {
  bool equivalent = true;
  std::string diff;
};

inline std::string describe_path(const FeatureSchema& schema, const std::vector<int>& path) {
  std::string s = "(";
  bool first = true;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] < 0) continue;
    if (!first) s += ", ";
    s += schema.name(i) + "=" + schema.values(i).at(static_cast<std::size_t>(path[i]));
    first = false;
  }
  return s + ")";
}

/// Order-insensitive comparison of two leaf sets: same paths, same counters.
inline EquivalenceReport compare_leaves(const FeatureSchema& schema, const LeafMap& a, const LeafMap& b) {
  EquivalenceReport rep;
  std::ostringstream os;
  const std::size_t pairs = schema.pair_space();
  const std::size_t m_d = schema.label_arity();
  auto field = [&](std::size_t k) -> std::string {
    if (k < pairs) return "pair[" + std::to_string(k) + "]";
    if (k < pairs + m_d) return "label[" + schema.values(schema.label_feature())[k - pairs] + "]";
    return k == pairs + m_d ? "n_total" : "n_last_check";
  };
  for (const auto& [path, row] : a) {
    auto it = b.find(path);
    if (it == b.end()) {
      os << "leaf " << describe_path(schema, path) << " missing on the right\n";
      continue;
    }
    for (std::size_t k = 0; k < row.size(); ++k)
      if (row[k] != it->second.at(k))
        os << "leaf " << describe_path(schema, path) << ": " << field(k) << " " << row[k] << " vs "
           << it->second[k] << '\n';
  }
  for (const auto& [path, row] : b)
    if (!a.contains(path)) os << "leaf " << describe_path(schema, path) << " missing on the left\n";
  rep.diff = os.str();
  rep.equivalent = rep.diff.empty();
  return rep;
}

inline EquivalenceReport tree_equivalence(const ObliviousModel& model, const PointerTree& tree) {
  return compare_leaves(model.schema(), snapshot(model), snapshot(tree));
}

inline EquivalenceReport tree_equivalence(const LevelArrayTree& walk, const PointerTree& tree) {
  return compare_leaves(tree.schema(), snapshot(walk), snapshot(tree));
}

}  // namespace etree::reference
