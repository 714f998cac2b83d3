// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "etree/etree.hpp"
#include "fixtures.hpp"

using namespace etree;
using namespace etree::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

std::vector<EncodedSample> encode_span(const FeatureSchema& s, std::span<const ValueRow> rows) {
  std::vector<EncodedSample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(s.encode_sample(r));
  return out;
}

double accuracy(const ObliviousModel& m, const std::vector<ValueRow>& test) {
  const auto& s = m.schema();
  const auto xs = encode_instances(s, test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < xs.size(); i += 100) {
    const std::size_t n = std::min<std::size_t>(100, xs.size() - i);
    const auto r = infer_batch(m, std::span(xs).subspan(i, n), 100);
    for (std::size_t k = 0; k < n; ++k) hits += r.labels[k] == test[i + k].back();
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

// Criteria 1, 2 and 4 share one set of trained streams.
struct StreamResults {
  Outcome equivalence, inference, shapes;
};

StreamResults run_streams() {
  StreamResults out;
  double train_secs = 0.0;
  std::size_t streams = 0, batches = 0, grown = 0, instances = 0;
  for (std::size_t d : {3, 5, 7, 15})
    for (std::size_t arity : {2, 3})
      for (std::uint64_t seed : {11, 12, 13}) {
        ++streams;
        synthetic::Generator gen({d, arity, 2, 0, 0.05, seed});
        const auto& s = gen.schema();
        TrainerConfig cfg;
        cfg.batch_size = 100;
        cfg.n_min = 200;
        cfg.delta = 1e-7;
        auto model = ObliviousModel::init(s, cfg.gamma);
        reference::PointerTree tree(s);
        const auto rows = gen.generate(5000);
        const auto t0 = Clock::now();
        const std::string tag = "d=" + std::to_string(d) + " arity=" + std::to_string(arity) +
                                " seed=" + std::to_string(seed);
        for (std::size_t i = 0; i < rows.size(); i += cfg.batch_size) {
          const std::span<const ValueRow> batch(rows.data() + i, std::min(cfg.batch_size, rows.size() - i));
          const auto rep = train_batch(model, cfg, encode_span(s, batch));
          tree.train_batch(batch, cfg);
          ++batches;
          const auto eq = reference::tree_equivalence(model, tree);
          if (!eq.equivalent) out.equivalence.fail(tag + " batch " + std::to_string(i / cfg.batch_size) + ": " + eq.diff);

          const std::size_t width = rep.paths_before * model.masks_per_path();
          if (rep.data_rows != cfg.batch_size || rep.data_cols != s.total_bits() || rep.query_rows != s.total_bits() ||
              rep.query_cols != width || rep.result_rows != cfg.batch_size || rep.result_cols != width)
            out.shapes.fail(tag + ": training shape mismatch");
        }
        train_secs += seconds_since(t0);
        grown += tree.leaf_count() > 1;

        std::mt19937_64 rng(seed * 7919 + d);
        std::vector<ValueRow> test(10000);
        for (auto& x : test) {
          x.resize(s.attribute_count());
          for (std::size_t f = 0; f < x.size(); ++f) x[f] = static_cast<std::uint32_t>(rng() % s.arity(f));
        }
        std::vector<EncodedInstance> xs;
        for (const auto& x : test) xs.push_back(s.encode_instance(x));
        for (std::size_t i = 0; i < xs.size(); i += 100) {
          const std::size_t n = std::min<std::size_t>(100, xs.size() - i);
          const auto r = infer_batch(model, std::span(xs).subspan(i, n), 100);
          if (r.result_rows != 100 || r.result_cols != model.paths()) out.shapes.fail(tag + ": inference shape mismatch");
          for (std::size_t k = 0; k < n; ++k) {
            ++instances;
            if (r.labels[k] != tree.infer(test[i + k])) out.inference.fail(tag + ": label mismatch");
          }
        }
      }
  const double secs = train_secs;
  if (grown * 2 < streams) out.equivalence.fail("only " + std::to_string(grown) + " streams grew a tree");
  if (secs >= 120.0) out.equivalence.fail("runtime " + fmt(secs, 1) + " s exceeds 120 s");
  if (out.equivalence.pass)
    out.equivalence.detail = std::to_string(streams) + " streams, " + std::to_string(batches) +
                             " batches equivalent, " + std::to_string(grown) + " grew, " + fmt(secs, 1) + " s";
  if (out.inference.pass) out.inference.detail = std::to_string(instances) + " instances agree";
  if (out.shapes.pass) out.shapes.detail = std::to_string(batches) + " training and inference batches checked";
  return out;
}

Outcome criterion3() {
  Outcome o;
  std::mt19937_64 rng(3);
  std::size_t pairs = 0, skipped = 0, engineered = 0;

  // Random same-shape pairs from a shared model state.
  while (pairs < 100) {
    const std::size_t d = 2 + rng() % 5, arity = 2 + rng() % 2, labels = 2 + rng() % 2;
    synthetic::Generator gen({d, arity, labels, 0, 0.1, rng()});
    const auto& s = gen.schema();
    TrainerConfig cfg;
    cfg.batch_size = 50;
    cfg.n_min = 50;
    cfg.gamma = 2;
    auto base = ObliviousModel::init(s, cfg.gamma, 48);
    train_batch(base, cfg, encode_rows(s, gen.generate(50)));
    auto a = base, b = base;
    const auto ra = gen.generate(50), rb = gen.generate(50);
    BatchReport rep_a, rep_b;
    const auto ta = obl::trace_of([&] { rep_a = train_batch(a, cfg, encode_rows(s, ra)); });
    const auto tb = obl::trace_of([&] { rep_b = train_batch(b, cfg, encode_rows(s, rb)); });
    if (rep_a.paths_after != rep_b.paths_after || rep_a.replenish_events != rep_b.replenish_events) {
      ++skipped;
      continue;
    }
    ++pairs;
    if (ta != tb) o.fail("train_batch traces differ for a random pair");
    const auto xa = encode_instances(s, gen.generate(40)), xb = encode_instances(s, gen.generate(40));
    if (obl::trace_of([&] { (void)infer_batch(a, xa, 50); }) != obl::trace_of([&] { (void)infer_batch(a, xb, 50); }))
      o.fail("infer_batch traces differ for a random pair");
  }

  // Engineered pairs: one batch makes Windy a perfect predictor (real split),
  // the other has independent labels (the check runs, the split is a dummy).
  const auto s = weather();
  for (int t = 0; t < 20; ++t) {
    TrainerConfig cfg;
    cfg.batch_size = 200;
    cfg.n_min = 200;
    cfg.gamma = 2;
    auto a = ObliviousModel::init(s, cfg.gamma, 20);
    auto b = a;
    std::vector<ValueRow> ra, rb;
    for (int i = 0; i < 200; ++i) {
      auto x = random_row(s, rng);
      x[label] = x[windy];
      ra.push_back(x);
      auto y = random_row(s, rng);
      y[label] = static_cast<std::uint32_t>(rng() % 2);
      rb.push_back(y);
    }
    const auto ta = obl::trace_of([&] { train_batch(a, cfg, encode_rows(s, ra)); });
    const auto tb = obl::trace_of([&] { train_batch(b, cfg, encode_rows(s, rb)); });
    if (a.real_count() != 2 || b.real_count() != 1) {
      o.fail("engineered pair did not produce a real split against a dummy split");
      continue;
    }
    ++engineered;
    if (ta != tb) o.fail("real and dummy split traces differ");
  }
  if (o.pass)
    o.detail = std::to_string(pairs) + " random pairs (" + std::to_string(skipped) +
               " skipped for a different replenish schedule) and " + std::to_string(engineered) +
               " real-vs-dummy split pairs identical";
  return o;
}

Outcome criterion5() {
  Outcome o;
  const double eps = hoeffding_bound(2, 1e-7, 1000);
  const double direct = std::sqrt(std::pow(std::log2(2.0), 2) * std::log(1.0 / 1e-7) / (2.0 * 1000.0));
  if (std::abs(eps - 0.08976) > 1e-4) o.fail("eps(2, 1e-7, 1000) = " + fmt(eps, 6));
  if (std::abs(eps - direct) > 1e-12) o.fail("eps disagrees with the direct formula");
  for (std::uint64_t n : {1ull, 7ull, 1000ull, 123456ull}) {
    const double e1 = hoeffding_bound(2, 1e-7, n), e4 = hoeffding_bound(2, 1e-7, 4 * n);
    if (std::abs(e4 - e1 / 2.0) > 1e-12) o.fail("eps(4n) != eps(n)/2 at n=" + std::to_string(n));
  }
  if (o.pass) o.detail = "eps = " + fmt(eps, 6) + ", eps(4n) = eps(n)/2";
  return o;
}

Outcome criterion6() {
  Outcome o;
  synthetic::Generator gen({15, 2, 2, 0, 0.05, 8});
  const auto& s = gen.schema();
  const auto train = gen.generate(50000);
  const auto test = gen.generate(10000);
  const auto enc = encode_rows(s, train);
  std::map<std::size_t, double> acc;
  for (std::size_t n : {1, 32, 100, 128, 512}) {
    TrainerConfig cfg;
    cfg.batch_size = n;
    auto m = ObliviousModel::init(s, cfg.gamma);
    train_stream(m, cfg, enc);
    acc[n] = accuracy(m, test);
  }
  std::string table;
  for (const auto& [n, a] : acc) table += " N=" + std::to_string(n) + ":" + fmt(a);
  if (std::abs(acc[100] - acc[1]) > 0.02) o.fail("N=100 differs from N=1 by more than 2 points;" + table);
  const std::vector<std::size_t> trend{1, 32, 128, 512};
  for (std::size_t i = 1; i < trend.size(); ++i)
    if (acc[trend[i]] > acc[trend[i - 1]] + 0.01) o.fail("accuracy rises beyond the noise band;" + table);
  if (o.pass) o.detail = table.substr(1);
  return o;
}

Outcome criterion7() {
  Outcome o;
  const std::string csv_path = "acceptance_bench.csv";
  std::ofstream csv(csv_path);
  csv << "engine,d,arity,n,N,train_seconds,leaves,paths\n";
  std::string summary;
  for (std::size_t d : {3, 7, 15, 31, 63, 127}) {
    synthetic::Generator gen({d, 2, 2, 0, 0.05, 7});
    const auto& s = gen.schema();
    const auto rows = gen.generate(50000);
    const auto enc = encode_rows(s, rows);
    TrainerConfig cfg;
    cfg.batch_size = 100;

    auto m = ObliviousModel::init(s, cfg.gamma);
    auto t0 = Clock::now();
    train_stream(m, cfg, enc);
    const double matrix_s = seconds_since(t0);

    reference::LevelArrayTree walk(s, cfg.gamma);
    t0 = Clock::now();
    for (std::size_t i = 0; i < rows.size(); i += cfg.batch_size)
      walk.train_batch(std::span(rows).subspan(i, std::min(cfg.batch_size, rows.size() - i)), cfg);
    const double walk_s = seconds_since(t0);

    csv << "matrix," << d << ",2,50000,100," << matrix_s << ',' << m.real_count() << ',' << m.paths() << '\n';
    csv << "oblivwalk," << d << ",2,50000,100," << walk_s << ',' << walk.leaves().size() << ',' << walk.slot_count()
        << '\n';
    summary += " d=" + std::to_string(d) + ":" + fmt(matrix_s, 2) + "s/" + fmt(walk_s, 2) + "s";
    if (d <= 31 && !(matrix_s < walk_s))
      o.fail("matrix engine not faster at d=" + std::to_string(d) + ";" + summary);
  }
  if (o.pass) o.detail = "matrix/walk" + summary + " (written to " + csv_path + ")";
  return o;
}

Outcome criterion8() {
  Outcome o;
  synthetic::Generator gen({15, 2, 2, 0, 0.05, 8});
  const auto& s = gen.schema();
  TrainerConfig cfg;
  auto forest = ForestModel::init(s, {10, 0, 8}, cfg.gamma);
  train_forest_stream(forest, cfg, encode_rows(s, gen.generate(20000)), 2);
  const auto xs = encode_instances(s, gen.generate(1000));
  const auto combined = infer_forest(forest, xs);
  const auto looped = infer_forest_looped(forest, xs);
  if (combined.votes != looped.votes) o.fail("per-tree votes differ");
  if (combined.labels != looped.labels) o.fail("forest labels differ");

  auto brute = [](const std::vector<std::vector<word>>& votes, std::size_t labels) {
    std::vector<word> out;
    for (std::size_t i = 0; i < votes.front().size(); ++i) {
      std::vector<std::size_t> c(labels, 0);
      for (const auto& v : votes) ++c[v[i]];
      std::size_t best = 0;
      for (std::size_t k = 1; k < labels; ++k)
        if (c[k] > c[best]) best = k;
      out.push_back(static_cast<word>(best));
    }
    return out;
  };
  if (combined.labels != brute(combined.votes, s.label_arity())) o.fail("vote disagrees with brute force");
  std::mt19937_64 rng(88);
  std::size_t ties = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t trees = 2 + rng() % 6, labels = 2 + rng() % 3;
    std::vector<std::vector<word>> votes(trees, std::vector<word>(5));
    for (auto& v : votes)
      for (auto& x : v) x = rng() % labels;
    const auto bf = brute(votes, labels);
    if (majority_vote(votes, labels) != bf) o.fail("random vote disagrees with brute force");
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<std::size_t> c(labels, 0);
      for (const auto& v : votes) ++c[v[i]];
      ties += std::count(c.begin(), c.end(), c[bf[i]]) > 1;
    }
  }
  if (o.pass)
    o.detail = "10 trees, 1000 instances identical; 2000 random votes (" + std::to_string(ties) +
               " ties) match brute force";
  return o;
}

Outcome criterion9() {
  Outcome o;
  const auto s = weather();
  auto [owner, zone] = channel::setup(s);
  std::mt19937_64 rng(9);
  channel::SealedBatch early;
  for (int i = 0; i < 10000; ++i) {
    std::vector<EncodedSample> batch;
    for (std::size_t k = rng() % 8; k > 0; --k) batch.push_back(s.encode_sample(random_row(s, rng)));
    const auto sealed = owner.seal_training(batch);
    if (i == 10) early = sealed;
    const auto opened = zone.open_training(sealed);
    if (opened != batch) o.fail("round trip " + std::to_string(i) + " is not the identity");
  }

  std::vector<EncodedSample> batch;
  for (int k = 0; k < 4; ++k) batch.push_back(s.encode_sample(random_row(s, rng)));
  const auto wire = channel::encode_wire(owner.seal_training(batch));
  const std::size_t ct_len = wire.size() - (4 + 1 + 8 + 12 + 4 + 16);
  auto region = [&](std::size_t byte) -> std::string {
    if (byte < 4) return "magic";
    if (byte < 13) return "ad";
    if (byte < 25) return "nonce";
    if (byte < 29) return "length";
    if (byte < 29 + ct_len) return "ciphertext";
    return "tag";
  };
  std::map<std::string, std::size_t> rejected;
  for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
    auto bad = wire;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      zone.open_training(channel::decode_wire(bad));
      o.fail("flip of bit " + std::to_string(bit) + " (" + region(bit / 8) + ") accepted");
    } catch (const IntegrityError&) {
      ++rejected[region(bit / 8)];
    }
  }
  const auto good = channel::decode_wire(wire);
  if (zone.open_training(good) != batch) o.fail("uncorrupted batch failed to open");
  for (const channel::SealedBatch* replay : {&good, static_cast<const channel::SealedBatch*>(&early)}) {
    try {
      zone.open_training(*replay);
      o.fail("replayed batch " + std::to_string(replay->batch_id) + " accepted");
    } catch (const IntegrityError&) {
    }
  }
  if (o.pass) {
    o.detail = "10000 round trips; " + std::to_string(wire.size() * 8) + " bit flips rejected (";
    bool first = true;
    for (const auto& [k, v] : rejected) {
      o.detail += (first ? "" : ", ") + k + " " + std::to_string(v);
      first = false;
    }
    o.detail += "); replays rejected";
  }
  return o;
}

// Every sample lands in the one real leaf whose path it matches; a split
// replaces its leaf by fresh, empty children.
Outcome criterion10() {
  Outcome o;
  std::mt19937_64 rng(10);
  std::size_t consumed_total = 0, splits = 0;
  for (int c = 0; c < 50; ++c) {
    synthetic::GeneratorConfig gc{1 + rng() % 8, 2 + rng() % 3, 2 + rng() % 3, 0, (rng() % 20) / 100.0, rng()};
    synthetic::Generator gen(gc);
    const auto& s = gen.schema();
    TrainerConfig cfg;
    cfg.batch_size = 1 + rng() % 150;
    cfg.n_min = 10 + rng() % 300;
    cfg.gamma = 1 + rng() % 4;
    auto m = ObliviousModel::init(s, cfg.gamma);
    const std::size_t n = 200 + rng() % 2800;
    const auto rows = gen.generate(n);
    const std::string tag = "config " + std::to_string(c);
    std::map<std::vector<int>, word> routed;
    std::size_t consumed = 0;
    for (std::size_t i = 0; i < rows.size(); i += cfg.batch_size) {
      const std::span<const ValueRow> batch(rows.data() + i, std::min(cfg.batch_size, rows.size() - i));
      for (const auto& r : batch) {
        std::size_t hits = 0;
        for (std::size_t p = 0; p < m.paths(); ++p) {
          if (m.is_dummy()[p]) continue;
          const auto path = m.path_values(p);
          bool on = true;
          for (std::size_t f = 0; f < path.size(); ++f) on &= path[f] < 0 || path[f] == static_cast<int>(r[f]);
          if (on) {
            ++routed[path];
            ++hits;
          }
        }
        if (hits != 1) o.fail(tag + ": sample matches " + std::to_string(hits) + " real leaves");
      }
      const std::size_t before = m.real_count();
      train_batch(m, cfg, encode_span(s, batch));
      consumed += batch.size();
      splits += m.real_count() > before;

      std::map<std::vector<int>, word> live;
      word total = 0, expected = 0;
      for (std::size_t p = 0; p < m.paths(); ++p) {
        if (m.is_dummy()[p]) continue;
        const auto path = m.path_values(p);
        const word want = routed.contains(path) ? routed[path] : 0;
        live[path] = want;
        total += m.leaves().n_total(p);
        expected += want;
        if (m.leaves().n_total(p) != want) o.fail(tag + ": leaf n_total differs from routed samples");
        for (std::size_t f = 0; f < s.attribute_count(); ++f) {
          if (!m.node(p)[f]) continue;
          word sum = 0;
          for (std::size_t j = 0; j < s.arity(f); ++j)
            for (std::size_t k = 0; k < s.label_arity(); ++k) sum += m.leaves().row(p)[s.pair_index(f, j, k)];
          if (sum != m.leaves().n_total(p)) o.fail(tag + ": pair counts do not sum to n_total");
        }
      }
      if (total != expected) o.fail(tag + ": leaf totals differ from routed samples");
      if (m.real_count() == before && total != std::accumulate(routed.begin(), routed.end(), word{0},
                                                               [](word a, const auto& kv) { return a + kv.second; }))
        o.fail(tag + ": samples lost without a split");
      routed = std::move(live);
      const auto inv = m.check_invariants();
      if (!inv.empty()) o.fail(tag + ": " + inv);
    }
    consumed_total += consumed;
  }
  if (splits == 0) o.fail("no configuration split");
  if (o.pass)
    o.detail = "50 configs, " + std::to_string(consumed_total) + " samples, " + std::to_string(splits) +
               " batches with splits";
  return o;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
  StreamResults streams;
  bool streams_done = false;
  auto stream_part = [&](Outcome StreamResults::*field) {
    return [&, field] {
      if (!streams_done) {
        streams = run_streams();
        streams_done = true;
      }
      return streams.*field;
    };
  };
  criteria.emplace_back("oracle equivalence", stream_part(&StreamResults::equivalence));
  criteria.emplace_back("inference equivalence", stream_part(&StreamResults::inference));
  criteria.emplace_back("data-obliviousness", criterion3);
  criteria.emplace_back("shape contracts", stream_part(&StreamResults::shapes));
  criteria.emplace_back("hoeffding bound", criterion5);
  criteria.emplace_back("batch-size accuracy", criterion6);
  criteria.emplace_back("directional performance", criterion7);
  criteria.emplace_back("forest consistency", criterion8);
  criteria.emplace_back("channel integrity", criterion9);
  criteria.emplace_back("conservation invariants", criterion10);

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << " [" << fmt(seconds_since(t0), 1) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
