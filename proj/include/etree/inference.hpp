#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "etree/bit_matrix.hpp"
#include "etree/error.hpp"
#include "etree/model.hpp"
#include "etree/oblivious.hpp"
#include "etree/schema.hpp"

namespace etree {

struct InferenceBatchResult {
  std::vector<word> labels;
  std::uint64_t batch_id = 0;
  /// Real paths matched per instance. Diagnostic only: a model produced by
  /// the trainer yields exactly 1 everywhere once the root has split.
  std::vector<word> match_counts;
  std::size_t result_rows = 0, result_cols = 0;  // shape of M'_r
};

/// N' x (M - m_d) instance matrix; rows past instances.size() stay zero.
inline BitRows build_instance_matrix(const FeatureSchema& schema, std::span<const EncodedInstance> instances,
                                     std::size_t rows) {
  if (instances.size() > rows) throw DataError("inference batch larger than the configured batch size");
  BitRows out(rows, schema.instance_bits());
  obl::emit(obl::OpKind::scan, {rows, out.stride()});
  for (std::size_t n = 0; n < instances.size(); ++n) {
    const auto& bits = instances[n].bits;
    if (bits.width() != schema.instance_bits())
      throw DataError("instance width " + std::to_string(bits.width()) + " does not match schema width " +
                      std::to_string(schema.instance_bits()));
    std::copy(bits.words().begin(), bits.words().end(), out.line(n).begin());
  }
  return out;
}

inline BitRows build_instance_matrix(const FeatureSchema& schema, std::span<const EncodedInstance> instances) {
  return build_instance_matrix(schema, instances, instances.size());
}

/// Per-path labels, tau and real flags gathered with oblivious primitives.
struct PathTable {
  std::vector<word> label, tau, real;
};

inline PathTable gather_paths(const ObliviousModel& model) {
  const std::size_t paths = model.paths();
  const std::size_t attrs = model.schema().attribute_count();
  PathTable t{std::vector<word>(paths), std::vector<word>(paths), std::vector<word>(paths)};
  std::vector<word> rec(model.node_stride());
  for (std::size_t p = 0; p < paths; ++p) {
    t.label[p] = model.majority_label(p);
    obl::oaccess_line(model.nodes(), model.node_stride(), p, rec);
    t.tau[p] = rec[attrs];
    t.real[p] = 1 ^ obl::oaccess(model.is_dummy(), p);
  }
  return t;
}

/// Assigns each row of `results` (N' x P block starting at column `first`)
/// the label of the real path whose match count equals its tau >= 1. Rows
/// with no such path take the label of column 0, the root path.
inline void predict_rows(const CountMatrix& results, std::size_t first, const PathTable& t,
                         std::span<word> labels, std::span<word> matches) {
  const std::size_t paths = t.tau.size();
  obl::emit(obl::OpKind::scan, {results.rows(), paths});
  for (std::size_t n = 0; n < results.rows(); ++n) {
    const auto* r = results.row(n).data() + first;
    word label = t.label[0];
    word hits = 0;
    for (std::size_t p = 0; p < paths; ++p) {
      const word match = obl::detail::eq(r[p], t.tau[p]) & t.real[p] & obl::detail::gt(t.tau[p], 0);
      label = obl::detail::sel(match, t.label[p], label);
      hits += match;
    }
    labels[n] = label;
    matches[n] = hits;
  }
}

/// Oblivious batch classification: M'_r = M_i x M_t, then one scan per row.
/// `pad_to` (>= instances.size()) fixes N'; padded rows are dropped.
inline InferenceBatchResult infer_batch(const ObliviousModel& model, std::span<const EncodedInstance> instances,
                                        std::size_t pad_to = 0, std::uint64_t batch_id = 0) {
  if (model.paths() == 0 || model.is_dummy()[0] != 0) throw ConfigError("infer_batch: model has no real root path");
  const std::size_t rows = std::max(pad_to, instances.size());
  const PathTable table = gather_paths(model);
  const BitRows mi = build_instance_matrix(model.schema(), instances, rows);
  const CountMatrix results = matmul_counts(mi, model.columns());

  InferenceBatchResult out;
  out.batch_id = batch_id;
  out.result_rows = results.rows();
  out.result_cols = results.cols();
  std::vector<word> labels(rows), matches(rows);
  predict_rows(results, 0, table, labels, matches);
  labels.resize(instances.size());
  matches.resize(instances.size());
  out.labels = std::move(labels);
  out.match_counts = std::move(matches);
  return out;
}

}  // namespace etree
