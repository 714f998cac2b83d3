#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etree/bit_matrix.hpp"
#include "etree/error.hpp"
#include "etree/oblivious.hpp"
#include "etree/schema.hpp"

namespace etree {

/// Per-path statistics, one fixed-width row per column of the model matrix:
/// L pair counters, m_d label counters, n_total, n_last_check.
class LeafTable {
 public:
  LeafTable() = default;
  LeafTable(std::size_t rows, std::size_t pair_space, std::size_t label_arity)
      : rows_(rows), pairs_(pair_space), labels_(label_arity), data_(rows * stride(), 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t pair_space() const { return pairs_; }
  std::size_t label_arity() const { return labels_; }
  std::size_t stride() const { return pairs_ + labels_ + 2; }

  std::span<word> row(std::size_t p) { return {data_.data() + p * stride(), stride()}; }
  std::span<const word> row(std::size_t p) const { return {data_.data() + p * stride(), stride()}; }
  std::span<const word> pair_counts(std::size_t p) const { return row(p).first(pairs_); }
  std::span<const word> label_counts(std::size_t p) const { return row(p).subspan(pairs_, labels_); }
  word n_total(std::size_t p) const { return row(p)[pairs_ + labels_]; }
  word n_last_check(std::size_t p) const { return row(p)[pairs_ + labels_ + 1]; }

  std::size_t label_offset() const { return pairs_; }
  std::size_t n_total_offset() const { return pairs_ + labels_; }
  std::size_t n_last_offset() const { return pairs_ + labels_ + 1; }

  std::span<word> data() { return data_; }
  std::span<const word> data() const { return data_; }

  void append_rows(std::size_t n) {
    rows_ += n;
    data_.resize(rows_ * stride(), 0);
  }

  friend bool operator==(const LeafTable&, const LeafTable&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t pairs_ = 0;
  std::size_t labels_ = 0;
  std::vector<word> data_;
};

/// Query masks for all paths plus the per-path assigned-value counts used as
/// match thresholds (tau + 2 for pair masks, tau + 1 for label masks).
struct QueryMatrix {
  BitColumns masks;
  std::vector<word> tau;
};

/// Matrix form of a Hoeffding tree. Column p of the model matrix holds the
/// feature values assigned along path p (zero blocks for unassigned
/// features); dummy columns are all-zero placeholders that are converted into
/// real paths by splits. Whether a column is a dummy is secret: it is only
/// ever consumed through masks.
class ObliviousModel {
 public:
  ObliviousModel() = default;

  static ObliviousModel init(const FeatureSchema& schema, std::size_t gamma,
                             std::optional<std::size_t> initial_paths = std::nullopt) {
    if (gamma < 1) throw ConfigError("gamma must be >= 1");
    ObliviousModel m;
    m.schema_ = schema;
    m.gamma_ = gamma;
    const std::size_t p_init = initial_paths.value_or(m.replenish_threshold() + 1);
    if (p_init < 1) throw ConfigError("model needs at least one column");
    m.columns_ = BitColumns(schema.instance_bits(), 0);
    m.leaves_ = LeafTable(0, schema.pair_space(), schema.label_arity());
    m.grow(p_init);
    // Column 0 is the root: real, every feature unassigned, tau = 0.
    m.is_dummy_[0] = 0;
    auto root = m.node_mut(0);
    for (std::size_t i = 0; i < schema.attribute_count(); ++i) root[i] = 1;
    return m;
  }

  const FeatureSchema& schema() const { return schema_; }
  std::size_t gamma() const { return gamma_; }
  /// P: total number of columns (real + dummy). Public.
  std::size_t paths() const { return is_dummy_.size(); }
  /// W: masks per path, L pair masks followed by m_d label masks.
  std::size_t masks_per_path() const { return schema_.pair_space() + schema_.label_arity(); }
  /// T = gamma * (m_max - 1).
  std::size_t replenish_threshold() const { return gamma_ * (schema_.max_attribute_arity() - 1); }

  const BitColumns& columns() const { return columns_; }
  const LeafTable& leaves() const { return leaves_; }
  LeafTable& leaves() { return leaves_; }
  std::span<const word> is_dummy() const { return is_dummy_; }

  /// Node record p: d-1 unassigned flags followed by tau.
  std::size_t node_stride() const { return schema_.attribute_count() + 1; }
  std::span<const word> node(std::size_t p) const { return {nodes_.data() + p * node_stride(), node_stride()}; }
  std::span<const word> nodes() const { return nodes_; }
  word tau(std::size_t p) const { return node(p)[schema_.attribute_count()]; }

  // Diagnostics. These reveal secret structure and exist for tests, the
  // reference comparison and persistence; the engines never call them.
  std::size_t real_count() const {
    std::size_t n = 0;
    for (word d : is_dummy_) n += 1 - d;
    return n;
  }
  std::size_t dummy_count() const { return paths() - real_count(); }

  /// Value index assigned to each feature on path p, -1 where unassigned.
  std::vector<int> path_values(std::size_t p) const {
    std::vector<int> out(schema_.attribute_count(), -1);
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = 0; j < schema_.arity(i); ++j)
        if (columns_.get(schema_.offset(i) + j, p)) out[i] = static_cast<int>(j);
    return out;
  }

  /// Masks for path p: M x (L + m_d). See write_query_block.
  BitColumns query_matrix(std::size_t p) const {
    if (p >= paths()) throw std::out_of_range("query_matrix: path out of range");
    BitColumns out(schema_.total_bits(), masks_per_path());
    write_query_block(p, out, 0);
    return out;
  }

  /// Horizontal concatenation of every path's masks, M x (P * (L + m_d)).
  QueryMatrix full_query_matrix() const {
    QueryMatrix q{BitColumns(schema_.total_bits(), paths() * masks_per_path()), std::vector<word>(paths())};
    for (std::size_t p = 0; p < paths(); ++p) q.tau[p] = write_query_block(p, q.masks, p * masks_per_path());
    return q;
  }

  /// Column block for path p starting at `first_col`. Pair mask
  /// (i, j, k) = assigned values of p + v_{i,j} + label k when feature i is
  /// unassigned on a real path, else zero. Label mask k = assigned values +
  /// label k on real paths, else zero. The column, node record and dummy
  /// flag are fetched with full scans so every path costs the same.
  /// Returns tau_p.
  word write_query_block(std::size_t p, BitColumns& out, std::size_t first_col) const {
    const std::size_t attrs = schema_.attribute_count();
    const std::size_t qstride = out.stride();
    std::vector<word> col(columns_.stride());
    std::vector<word> rec(node_stride());
    obl::oaccess_line(columns_.words(), columns_.stride(), p, col);
    obl::oaccess_line(nodes_, node_stride(), p, rec);
    const word real = 1 ^ obl::oaccess(std::span<const word>(is_dummy_), p);
    const word tau = rec[attrs];

    std::vector<word> base(qstride, 0);
    for (std::size_t w = 0; w < col.size(); ++w) base[w] = col[w];
    const std::size_t label_base = schema_.instance_bits();
    const std::size_t m_d = schema_.label_arity();

    obl::emit(obl::OpKind::scan, {masks_per_path(), qstride});
    auto emit_mask = [&](std::size_t c, std::size_t value_bit, bool has_value, std::size_t label, word keep) {
      auto dst = out.line(first_col + c);
      const word m = obl::detail::mask(keep);
      for (std::size_t w = 0; w < qstride; ++w) {
        word v = base[w];
        if (has_value && value_bit / 64 == w) v |= word{1} << (value_bit % 64);
        if ((label_base + label) / 64 == w) v |= word{1} << ((label_base + label) % 64);
        dst[w] = v & m;
      }
    };
    std::size_t c = 0;
    for (std::size_t i = 0; i < attrs; ++i) {
      const word keep = real & rec[i];
      for (std::size_t j = 0; j < schema_.arity(i); ++j)
        for (std::size_t k = 0; k < m_d; ++k) emit_mask(c++, schema_.offset(i) + j, true, k, keep);
    }
    for (std::size_t k = 0; k < m_d; ++k) emit_mask(c++, 0, false, k, real);
    return obl::detail::sel(real, tau, 0);
  }

  /// Converts leaf p into an internal node on `feature` when `fires` is 1.
  /// Always performs m_max - 1 passes over all columns; pass r copies path p
  /// with feature := value r into the lowest-index remaining dummy, under a
  /// mask that is zero unless fires and r < arity(feature). Path p itself
  /// takes value 0 and its leaf row is reset. With fires == 0 the same
  /// writes happen and the model is left bit-identical.
  void extend(std::size_t p, word feature, word fires) {
    if (p >= paths()) throw std::out_of_range("extend: path out of range");
    const std::size_t attrs = schema_.attribute_count();
    const std::size_t m_max = schema_.max_attribute_arity();
    fires &= 1;

    std::vector<word> arities(attrs), offsets(attrs);
    for (std::size_t i = 0; i < attrs; ++i) {
      arities[i] = schema_.arity(i);
      offsets[i] = schema_.offset(i);
    }
    // Out-of-range features only occur together with fires == 0.
    const word safe_feature = obl::oselect(obl::ogreater(attrs, feature), feature, word{0});
    const word arity = obl::oaccess(std::span<const word>(arities), safe_feature);
    const word offset = obl::oaccess(std::span<const word>(offsets), safe_feature);

    const std::size_t cstride = columns_.stride();
    const std::vector<word> parent_col(columns_.line(p).begin(), columns_.line(p).end());
    std::vector<word> child_node(node(p).begin(), node(p).end());
    obl::emit(obl::OpKind::scan, {attrs});
    for (std::size_t i = 0; i < attrs; ++i)
      child_node[i] = obl::detail::sel(obl::detail::eq(i, safe_feature), 0, child_node[i]);
    child_node[attrs] += 1;

    auto with_value = [&](word value) {
      std::vector<word> col = parent_col;
      const word bit = offset + value;
      for (std::size_t w = 0; w < cstride; ++w)
        col[w] |= obl::detail::sel(obl::detail::eq(bit >> 6, w), word{1} << (bit & 63), 0);
      return col;
    };

    // Path p becomes the child for value 0.
    {
      auto col = with_value(0);
      obl::emit(obl::OpKind::assign, {cstride + node_stride() + leaves_.stride()});
      obl::detail::cond_copy_words(fires, columns_.line(p), col);
      auto rec = std::span<word>(nodes_).subspan(p * node_stride(), node_stride());
      obl::detail::cond_copy_words(fires, rec, child_node);
      for (word& v : leaves_.row(p)) v = obl::detail::sel(fires, 0, v);
    }

    word missing = 0;
    const std::size_t n = paths();
    for (std::size_t r = 1; r < m_max; ++r) {
      const word cond = fires & obl::ogreater(arity, word{r});
      const auto col = with_value(r);
      word found = 0;
      obl::emit(obl::OpKind::scan, {n, cstride + node_stride() + 1});
      for (std::size_t q = 0; q < n; ++q) {
        const word dummy = is_dummy_[q];
        const word take = cond & dummy & (found ^ 1);
        found |= dummy;
        obl::detail::cond_copy_words(take, columns_.line(q), col);
        obl::detail::cond_copy_words(take, std::span<word>(nodes_).subspan(q * node_stride(), node_stride()),
                                     child_node);
        is_dummy_[q] = obl::detail::sel(take, 0, dummy);
      }
      missing |= cond & (found ^ 1);
    }
    if (missing) throw ConfigError("extend: ran out of dummy columns; replenishment contract violated");
  }

  /// Counts dummies with a full scan; when fewer than T remain, appends T
  /// zero dummy columns and leaf rows. Returns the number of appended columns
  /// (the growth of P is public).
  std::size_t replenish_dummies() {
    word count = 0;
    obl::emit(obl::OpKind::scan, {paths()});
    for (word d : is_dummy_) count += d;
    const std::size_t t = replenish_threshold();
    if (count >= t) return 0;
    obl::emit(obl::OpKind::assign, {t});
    grow(t);
    return t;
  }

  /// Argmax over the label counters of row p; ties and empty rows go to the
  /// lowest label index.
  word majority_label(std::size_t p) const {
    if (p >= paths()) throw std::out_of_range("majority_label: path out of range");
    const auto counts = leaves_.label_counts(p);
    word best = counts[0];
    word idx = 0;
    for (std::size_t k = 1; k < counts.size(); ++k) {
      const word gt = obl::ogreater(counts[k], best);
      best = obl::oselect(gt, counts[k], best);
      idx = obl::oselect(gt, word{k}, idx);
    }
    return idx;
  }

  /// Checks the structural invariants; returns an empty string when they
  /// hold, else a description of the first violation.
  std::string check_invariants() const {
    const std::size_t attrs = schema_.attribute_count();
    if (columns_.cols() != paths() || leaves_.rows() != paths() || nodes_.size() != paths() * node_stride())
      return "dimension mismatch between columns, nodes and leaf table";
    if (paths() == 0 || is_dummy_[0] != 0) return "column 0 must be the real root path";
    for (std::size_t p = 0; p < paths(); ++p) {
      if (is_dummy_[p] > 1) return "isDummy entry is not a bit at column " + std::to_string(p);
      const auto values = path_values(p);
      std::size_t assigned = 0;
      for (std::size_t i = 0; i < attrs; ++i) {
        std::size_t bits = 0;
        for (std::size_t j = 0; j < schema_.arity(i); ++j) bits += columns_.get(schema_.offset(i) + j, p);
        if (bits > 1) return "column " + std::to_string(p) + " has several bits in one block";
        assigned += bits;
        const word flag = node(p)[i];
        if (is_dummy_[p] == 0 && flag != (values[i] < 0 ? 1u : 0u))
          return "unassigned flags disagree with column " + std::to_string(p);
      }
      if (tau(p) != assigned) return "tau disagrees with popcount of column " + std::to_string(p);
      if (is_dummy_[p] == 1) {
        if (assigned != 0) return "dummy column " + std::to_string(p) + " is not zero";
        for (word v : leaves_.row(p))
          if (v != 0) return "dummy leaf row " + std::to_string(p) + " is not zero";
        for (std::size_t i = 0; i < attrs; ++i)
          if (node(p)[i] != 0) return "dummy node record " + std::to_string(p) + " is not zero";
      } else {
        word labels = 0;
        for (word v : leaves_.label_counts(p)) labels += v;
        if (labels != leaves_.n_total(p)) return "label counts do not sum to n_total at " + std::to_string(p);
      }
    }
    return {};
  }

  friend bool operator==(const ObliviousModel& a, const ObliviousModel& b) {
    return a.schema_ == b.schema_ && a.gamma_ == b.gamma_ && a.columns_ == b.columns_ &&
           a.is_dummy_ == b.is_dummy_ && a.nodes_ == b.nodes_ && a.leaves_ == b.leaves_;
  }

  // Raw mutable views for the trainer and the persistence layer.
  std::span<word> node_words() { return nodes_; }
  std::span<word> dummy_words() { return is_dummy_; }
  BitColumns& columns_mut() { return columns_; }

  /// Rebuilds a model from raw parts; validates the invariants.
  static ObliviousModel from_parts(FeatureSchema schema, std::size_t gamma, BitColumns columns,
                                   std::vector<word> is_dummy, std::vector<word> nodes, LeafTable leaves) {
    ObliviousModel m;
    m.schema_ = std::move(schema);
    m.gamma_ = gamma;
    m.columns_ = std::move(columns);
    m.is_dummy_ = std::move(is_dummy);
    m.nodes_ = std::move(nodes);
    m.leaves_ = std::move(leaves);
    if (gamma < 1) throw IntegrityError("model: gamma must be >= 1");
    if (m.columns_.rows() != m.schema_.instance_bits()) throw IntegrityError("model: column height mismatch");
    if (auto err = m.check_invariants(); !err.empty()) throw IntegrityError("model: " + err);
    return m;
  }

 private:
  std::span<word> node_mut(std::size_t p) { return {nodes_.data() + p * node_stride(), node_stride()}; }

  void grow(std::size_t n) {
    columns_.append_lines(n);
    leaves_.append_rows(n);
    nodes_.resize(nodes_.size() + n * node_stride(), 0);
    is_dummy_.resize(is_dummy_.size() + n, 1);
  }

  FeatureSchema schema_;
  std::size_t gamma_ = 1;
  BitColumns columns_;
  std::vector<word> is_dummy_;
  std::vector<word> nodes_;
  LeafTable leaves_;
};

}  // namespace etree
