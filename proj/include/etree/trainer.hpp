#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "etree/bit_matrix.hpp"
#include "etree/error.hpp"
#include "etree/model.hpp"
#include "etree/oblivious.hpp"
#include "etree/schema.hpp"

namespace etree {

struct TrainerConfig {
  std::size_t batch_size = 100;  // N
  std::size_t n_min = 200;
  double delta = 1e-7;
  std::size_t gamma = 8;
  std::uint64_t seed = 0;
  /// Base of the logarithm in the Hoeffding range term log(c).
  double range_log_base = 2.0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (n_min < 1) throw ConfigError("n_min must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (gamma < 1) throw ConfigError("gamma must be >= 1");
    if (!(range_log_base > 1.0)) throw ConfigError("range log base must be > 1");
  }
};

/// N x M data matrix; rows past samples.size() up to `rows` stay zero.
inline BitRows build_data_matrix(const FeatureSchema& schema, std::span<const EncodedSample> samples,
                                 std::size_t rows) {
  if (samples.size() > rows) throw DataError("batch larger than the configured batch size");
  BitRows out(rows, schema.total_bits());
  obl::emit(obl::OpKind::scan, {rows, out.stride()});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& bits = samples[n].bits;
    if (bits.width() != schema.total_bits())
      throw DataError("sample width " + std::to_string(bits.width()) + " does not match schema width " +
                      std::to_string(schema.total_bits()));
    std::copy(bits.words().begin(), bits.words().end(), out.line(n).begin());
  }
  return out;
}

inline BitRows build_data_matrix(const FeatureSchema& schema, std::span<const EncodedSample> samples) {
  return build_data_matrix(schema, samples, samples.size());
}

/// Hoeffding bound sqrt(log_b(c)^2 * ln(1/delta) / (2n)).
inline double hoeffding_bound(std::size_t label_arity, double delta, std::uint64_t n, double log_base = 2.0) {
  if (n == 0) throw std::domain_error("hoeffding_bound: n must be >= 1");
  const double range = std::log(static_cast<double>(label_arity)) / std::log(log_base);
  return std::sqrt(range * range * std::log(1.0 / delta) / (2.0 * static_cast<double>(n)));
}

namespace detail {
/// c * log2(c) with 0 log 0 = 0, no branch on c.
inline double xlog2x(word c) {
  const word zero = obl::detail::eq(c, 0);
  const double x = static_cast<double>(obl::detail::sel(zero, 1, c));
  return obl::detail::sel_f64(zero, 0.0, x * std::log2(x));
}
}  // namespace detail

/// ID3 information gain of `feature` from one leaf's pair counters:
/// H(label) - sum_j n_j/n H(label | value j), entropies in bits. Fixed loops
/// over every (value, label) cell; n = 0 yields 0.
inline double info_gain(std::span<const word> pair_counts, std::size_t feature, const FeatureSchema& schema) {
  const std::size_t m = schema.arity(feature);
  const std::size_t m_d = schema.label_arity();
  const std::size_t base = schema.pair_block(feature);
  std::vector<word> label_marginal(m_d, 0);
  word n = 0;
  double cond = 0.0;  // sum_j (n_j log n_j - sum_k n_jk log n_jk)
  for (std::size_t j = 0; j < m; ++j) {
    word nj = 0;
    double cells = 0.0;
    for (std::size_t k = 0; k < m_d; ++k) {
      const word c = pair_counts[base + j * m_d + k];
      nj += c;
      label_marginal[k] += c;
      cells += detail::xlog2x(c);
    }
    n += nj;
    cond += detail::xlog2x(nj) - cells;
  }
  double marg = 0.0;
  for (word c : label_marginal) marg += detail::xlog2x(c);
  const word empty = obl::detail::eq(n, 0);
  const double nn = static_cast<double>(obl::detail::sel(empty, 1, n));
  // H = log2 n - marg / n ; conditional entropy = cond / n
  const double gain = std::log2(nn) - marg / nn - cond / nn;
  const double clamped = obl::detail::sel_f64(obl::detail::gt(obl::detail::total_order_key(gain),
                                                              obl::detail::total_order_key(0.0)),
                                              gain, 0.0);
  return obl::detail::sel_f64(empty, 0.0, clamped);
}

struct SplitDecision {
  word feature = 0;  // index of the best feature (meaningful only when fires)
  word fires = 0;
};

/// Hoeffding split test for one leaf row, shared by the matrix engine and the
/// oblivious level-walk baseline. `unassigned` holds one 0/1 flag per
/// feature. Updates n_last_check in `row` whenever the gate opens.
inline SplitDecision evaluate_split(std::span<word> row, std::span<const word> unassigned, word real,
                                    const FeatureSchema& schema, const TrainerConfig& cfg) {
  const std::size_t attrs = schema.attribute_count();
  const std::size_t pairs = schema.pair_space();
  const std::size_t m_d = schema.label_arity();
  const word n_total = row[pairs + m_d];
  word& n_last = row[pairs + m_d + 1];

  word open_features = 0;
  for (std::size_t i = 0; i < attrs; ++i) open_features += unassigned[i];
  const word since = n_total - n_last;
  const word gate = (obl::ogreater(word{cfg.n_min}, since) ^ 1) & (real & 1) & obl::ogreater(open_features, 0);

  // Candidates are every feature (assigned ones pinned to -1) followed by the
  // null split with gain 0; strict comparison keeps the lowest index on ties.
  double best = -2.0, second = -2.0;
  word best_idx = attrs;
  const auto counts = std::span<const word>(row).first(pairs);
  for (std::size_t i = 0; i <= attrs; ++i) {
    double g = 0.0;
    if (i < attrs) g = obl::oselect(unassigned[i], info_gain(counts, i, schema), -1.0);
    const word above_best = obl::ogreater(g, best);
    const word above_second = obl::ogreater(g, second);
    second = obl::oselect(above_best, best, obl::oselect(above_second, g, second));
    best = obl::oselect(above_best, g, best);
    best_idx = obl::oselect(above_best, word{i}, best_idx);
  }
  const word n_safe = obl::oselect(obl::oequal(n_total, 0), word{1}, n_total);
  const double eps = hoeffding_bound(m_d, cfg.delta, n_safe, cfg.range_log_base);
  const word fires = gate & obl::ogreater(best - second, eps);
  n_last = obl::oselect(gate, n_total, n_last);
  return {obl::oselect(fires, best_idx, word{0}), fires};
}

/// Counts, for path p, how many batch rows hit each of its masks and adds
/// them into leaf row p. Pair masks match at tau + 2, label masks at tau + 1.
/// Dummy paths go through the same scan and add zero.
inline void record_and_update(ObliviousModel& model, const CountMatrix& results, std::size_t p, word tau) {
  const std::size_t w = model.masks_per_path();
  const std::size_t pairs = model.schema().pair_space();
  const std::size_t m_d = model.schema().label_arity();
  const std::size_t first = p * w;
  if (first + w > results.cols()) throw std::out_of_range("record_and_update: path outside result matrix");

  using value = CountMatrix::value_type;
  const auto pair_thr = static_cast<value>(tau + 2);
  const auto label_thr = static_cast<value>(tau + 1);
  std::vector<std::uint32_t> hits(w, 0);
  obl::emit(obl::OpKind::scan, {results.rows(), w});
  for (std::size_t n = 0; n < results.rows(); ++n) {
    const value* r = results.row(n).data() + first;
    for (std::size_t k = 0; k < pairs; ++k) hits[k] += (r[k] == pair_thr);
    for (std::size_t k = pairs; k < w; ++k) hits[k] += (r[k] == label_thr);
  }

  const word real = 1 ^ obl::oaccess(model.is_dummy(), p);
  const word m = obl::detail::mask(real);
  auto row = model.leaves().row(p);
  obl::emit(obl::OpKind::assign, {w + 1});
  word routed = 0;
  for (std::size_t k = 0; k < w; ++k) row[k] += hits[k] & m;
  for (std::size_t k = pairs; k < w; ++k) routed += hits[k];
  row[pairs + m_d] += routed & m;
}

inline SplitDecision split_check(ObliviousModel& model, std::size_t p, const TrainerConfig& cfg) {
  const auto& schema = model.schema();
  std::vector<word> rec(model.node_stride());
  obl::oaccess_line(model.nodes(), model.node_stride(), p, rec);
  const word real = 1 ^ obl::oaccess(model.is_dummy(), p);
  return evaluate_split(model.leaves().row(p), std::span<const word>(rec).first(schema.attribute_count()), real,
                        schema, cfg);
}

/// Shapes observed during one training batch.
struct BatchReport {
  std::size_t data_rows = 0, data_cols = 0;    // M_d
  std::size_t query_rows = 0, query_cols = 0;  // M_q
  std::size_t result_rows = 0, result_cols = 0;  // M_r
  std::size_t paths_before = 0, paths_after = 0;
  std::size_t replenish_events = 0;
  std::size_t samples = 0;
};

/// One round of oblivious training over at most N samples; short batches are
/// padded with zero rows, which match no mask.
inline BatchReport train_batch(ObliviousModel& model, const TrainerConfig& cfg, std::span<const EncodedSample> batch) {
  cfg.validate();
  const auto& schema = model.schema();
  BatchReport rep;
  rep.samples = batch.size();
  rep.paths_before = model.paths();

  const BitRows data = build_data_matrix(schema, batch, cfg.batch_size);
  const QueryMatrix query = model.full_query_matrix();
  const CountMatrix results = matmul_counts(data, query.masks);
  rep.data_rows = data.rows();
  rep.data_cols = data.cols();
  rep.query_rows = query.masks.rows();
  rep.query_cols = query.masks.cols();
  rep.result_rows = results.rows();
  rep.result_cols = results.cols();

  const std::size_t paths = query.tau.size();
  for (std::size_t p = 0; p < paths; ++p) {
    // Every path runs one extend call, so this schedule is public.
    if (p % model.gamma() == 0 && model.replenish_dummies() > 0) ++rep.replenish_events;
    record_and_update(model, results, p, query.tau[p]);
    const SplitDecision d = split_check(model, p, cfg);
    model.extend(p, d.feature, d.fires);
  }
  rep.paths_after = model.paths();
  return rep;
}

/// Splits `samples` into batches of cfg.batch_size and trains on each.
inline std::vector<BatchReport> train_stream(ObliviousModel& model, const TrainerConfig& cfg,
                                             std::span<const EncodedSample> samples) {
  std::vector<BatchReport> out;
  for (std::size_t i = 0; i < samples.size(); i += cfg.batch_size)
    out.push_back(train_batch(model, cfg, samples.subspan(i, std::min(cfg.batch_size, samples.size() - i))));
  return out;
}

}  // namespace etree
