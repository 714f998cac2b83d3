// Command-line front end: schema building, synthetic streams, training and
// inference over CSV or sealed spools, UCI loaders and the benchmark grid.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "etree/etree.hpp"

namespace {

using namespace etree;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr int exit_usage = 2;
constexpr int exit_data = 3;
constexpr int exit_integrity = 4;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::size_t thread_budget() {
  if (const char* env = std::getenv("ETREE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError("ETREE_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string file_fingerprint(const std::string& path) { return crypto::to_hex(crypto::sha256(channel::read_file(path))); }

std::string rows_fingerprint(const FeatureSchema& s, const std::vector<ValueRow>& rows) {
  ByteWriter w;
  const auto h = s.hash();
  w.bytes(h);
  for (const auto& r : rows)
    for (auto v : r) w.u32(v);
  return crypto::to_hex(crypto::sha256(w.data()));
}

std::vector<EncodedSample> encode_all(const FeatureSchema& s, const std::vector<ValueRow>& rows) {
  std::vector<EncodedSample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(s.encode_sample(r));
  return out;
}

std::vector<EncodedInstance> encode_instances(const FeatureSchema& s, const std::vector<ValueRow>& rows) {
  std::vector<EncodedInstance> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(s.encode_instance(ValueRow(r.begin(), r.begin() + s.attribute_count())));
  return out;
}

void write_samples_csv(std::ostream& out, const FeatureSchema& s, const std::vector<ValueRow>& rows) {
  csv::write_row(out, csv::schema_header(s, true));
  for (const auto& r : rows) csv::write_row(out, s.tokens_of(r));
}

std::optional<crypto::Key128> optional_key(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return channel::load_key(path);
}

json leaves_json(const FeatureSchema& s, const reference::LeafMap& leaves) {
  json arr = json::array();
  for (const auto& [path, row] : leaves) arr.push_back({{"path", reference::describe_path(s, path)}, {"values", path}, {"row", row}});
  return arr;
}

struct Config {
  std::size_t batch = 100;
  std::size_t infer_batch = 100;
  std::size_t n_min = 200;
  double delta = 1e-7;
  std::size_t gamma = 8;
  std::uint64_t seed = 0;
  std::size_t trees = 0;
  std::size_t subset_size = 0;
  std::string engine = "matrix";

  TrainerConfig trainer() const {
    TrainerConfig c;
    c.batch_size = batch;
    c.n_min = n_min;
    c.delta = delta;
    c.gamma = gamma;
    c.seed = seed;
    c.validate();
    if (infer_batch < 1) throw ConfigError("inference batch size must be >= 1");
    return c;
  }

  json echo() const {
    return {{"N", batch},        {"N_infer", infer_batch}, {"n_min", n_min}, {"delta", delta}, {"gamma", gamma},
            {"seed", seed},      {"trees", trees},         {"subset_size", subset_size}, {"engine", engine}};
  }

  void add_flags(CLI::App* app) {
    app->add_option("--batch", batch, "training batch size N")->capture_default_str();
    app->add_option("--infer-batch", infer_batch, "inference batch size N'")->capture_default_str();
    app->add_option("--nmin", n_min, "samples between split checks")->capture_default_str();
    app->add_option("--delta", delta, "Hoeffding delta")->capture_default_str();
    app->add_option("--gamma", gamma, "dummy replenishment parameter")->capture_default_str();
    app->add_option("--seed", seed, "seed for forest subsets")->capture_default_str();
    app->add_option("--trees", trees, "train a forest of this many trees (0 = single tree)")->capture_default_str();
    app->add_option("--subset-size", subset_size, "features per forest tree (0 = ceil(sqrt(d-1)))")
        ->capture_default_str();
    app->add_option("--engine", engine, "matrix | insecure | oblivwalk")
        ->check(CLI::IsMember({"matrix", "insecure", "oblivwalk"}))
        ->capture_default_str();
  }
};

/// A trained model of any engine, with uniform training and inference.
class Trained {
 public:
  Trained(const FeatureSchema& schema, const Config& cfg) : cfg_(cfg), tc_(cfg.trainer()) {
    if (cfg.trees > 0) {
      if (cfg.engine != "matrix") throw ConfigError("forests are only supported by the matrix engine");
      forest_ = ForestModel::init(schema, {cfg.trees, cfg.subset_size, cfg.seed}, cfg.gamma);
    } else if (cfg.engine == "matrix") {
      model_ = ObliviousModel::init(schema, cfg.gamma);
    } else if (cfg.engine == "insecure") {
      pointer_ = reference::PointerTree(schema);
    } else {
      walk_ = reference::LevelArrayTree(schema, cfg.gamma);
    }
    schema_ = schema;
  }

  void train_batch(const std::vector<ValueRow>& rows, const std::vector<EncodedSample>& enc) {
    if (forest_)
      train_forest(*forest_, tc_, enc, thread_budget());
    else if (model_)
      etree::train_batch(*model_, tc_, enc);
    else if (pointer_)
      pointer_->train_batch(rows, tc_);
    else
      walk_->train_batch(rows, tc_);
    consumed_ += rows.size();
  }

  void train_all(const std::vector<ValueRow>& rows) {
    const auto enc = (forest_ || model_) ? encode_all(schema_, rows) : std::vector<EncodedSample>{};
    for (std::size_t i = 0; i < rows.size(); i += tc_.batch_size) {
      const std::size_t n = std::min(tc_.batch_size, rows.size() - i);
      std::vector<ValueRow> br(rows.begin() + static_cast<std::ptrdiff_t>(i),
                               rows.begin() + static_cast<std::ptrdiff_t>(i + n));
      std::vector<EncodedSample> be;
      if (!enc.empty())
        be.assign(enc.begin() + static_cast<std::ptrdiff_t>(i), enc.begin() + static_cast<std::ptrdiff_t>(i + n));
      train_batch(br, be);
    }
  }

  /// Labels for feature-value rows (trailing label ignored), N' at a time.
  std::vector<word> infer(const std::vector<ValueRow>& rows) const {
    std::vector<word> out;
    out.reserve(rows.size());
    if (pointer_ || walk_) {
      for (const auto& r : rows) {
        ValueRow x(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(schema_.attribute_count()));
        out.push_back(pointer_ ? pointer_->infer(x) : walk_->infer(x));
      }
      return out;
    }
    const auto inst = encode_instances(schema_, rows);
    for (std::size_t i = 0; i < inst.size(); i += cfg_.infer_batch) {
      const std::span<const EncodedInstance> chunk(inst.data() + i, std::min(cfg_.infer_batch, inst.size() - i));
      const auto labels = forest_ ? infer_forest(*forest_, chunk, cfg_.infer_batch).labels
                                  : infer_batch(*model_, chunk, cfg_.infer_batch).labels;
      out.insert(out.end(), labels.begin(), labels.end());
    }
    return out;
  }

  reference::LeafMap snapshot() const {
    if (model_) return reference::snapshot(*model_);
    if (pointer_) return reference::snapshot(*pointer_);
    if (walk_) return reference::snapshot(*walk_);
    throw ConfigError("leaf snapshots are not defined for forests");
  }

  json stats() const {
    json j{{"samples", consumed_}};
    if (model_) {
      j["paths"] = model_->paths();
      j["leaves"] = model_->real_count();
    } else if (forest_) {
      std::size_t paths = 0, leaves = 0;
      for (const auto& t : forest_->trees()) {
        paths += t.model.paths();
        leaves += t.model.real_count();
      }
      j["paths"] = paths;
      j["leaves"] = leaves;
    } else {
      j["leaves"] = snapshot().size();
    }
    return j;
  }

  std::optional<io::Stored> stored() const {
    if (model_) return io::Stored{*model_};
    if (forest_) return io::Stored{*forest_};
    return std::nullopt;
  }

  const std::optional<ObliviousModel>& matrix() const { return model_; }

 private:
  Config cfg_;
  TrainerConfig tc_;
  FeatureSchema schema_;
  std::optional<ObliviousModel> model_;
  std::optional<ForestModel> forest_;
  std::optional<reference::PointerTree> pointer_;
  std::optional<reference::LevelArrayTree> walk_;
  std::size_t consumed_ = 0;
};

double accuracy(const std::vector<word>& predicted, const std::vector<ValueRow>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) hits += predicted[i] == rows[i].back();
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

int cmd_schema(const std::vector<std::string>& features, const std::string& from_csv, const std::string& out_path) {
  FeatureSchema s;
  if (!from_csv.empty()) {
    const auto t = csv::read_file(from_csv);
    std::vector<FeatureSpec> specs;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      FeatureSpec fs{t.header[c], {}};
      for (const auto& r : t.rows)
        if (std::find(fs.values.begin(), fs.values.end(), r[c]) == fs.values.end()) fs.values.push_back(r[c]);
      specs.push_back(std::move(fs));
    }
    s = FeatureSchema::build(std::move(specs));
  } else {
    std::vector<FeatureSpec> specs;
    for (const auto& f : features) {
      const auto eq = f.find('=');
      if (eq == std::string::npos) throw ConfigError("--feature expects NAME=v1,v2,...");
      specs.push_back({f.substr(0, eq), csv::split(f.substr(eq + 1))});
    }
    s = FeatureSchema::build(std::move(specs));
  }
  if (out_path.empty())
    std::cout << s.to_json().dump(2) << '\n';
  else
    s.save(out_path);
  return 0;
}

int cmd_gen(const synthetic::GeneratorConfig& g, std::size_t samples, const std::string& drift, const std::string& out,
            const std::string& schema_out) {
  if (drift != "none") throw ConfigError("only --drift none is supported");
  synthetic::Generator gen(g);
  const auto rows = gen.generate(samples);
  if (out.empty()) {
    write_samples_csv(std::cout, gen.schema(), rows);
  } else {
    std::ofstream f(out);
    if (!f) throw DataError("cannot write '" + out + "'");
    write_samples_csv(f, gen.schema(), rows);
  }
  if (!schema_out.empty()) gen.schema().save(schema_out);
  return 0;
}

struct TrainArgs {
  std::string schema, input, spool, key, model, model_key, manifest, snapshot;
  bool verify = false;
};

int cmd_train(const TrainArgs& a, const Config& cfg) {
  const FeatureSchema schema = FeatureSchema::load(a.schema);
  std::vector<std::vector<ValueRow>> batches;
  std::string fingerprint;
  std::size_t total = 0;
  if (!a.spool.empty()) {
    if (a.key.empty()) throw ConfigError("--spool requires --key");
    channel::TrustedZone zone(schema, channel::preshared_session(channel::Role::trusted_zone,
                                                                 channel::load_key(a.key), schema));
    for (const auto& b : channel::read_spool(a.spool)) {
      std::vector<ValueRow> rows;
      for (const auto& s : zone.open_training(b)) rows.push_back(schema.decode(s.bits));
      if (rows.size() > cfg.batch) throw DataError("sealed batch larger than --batch");
      total += rows.size();
      batches.push_back(std::move(rows));
    }
    fingerprint = file_fingerprint(a.spool);
  } else if (!a.input.empty()) {
    const auto rows = csv::decode(schema, csv::read_file(a.input), true).rows;
    total = rows.size();
    for (std::size_t i = 0; i < rows.size(); i += cfg.batch)
      batches.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(i),
                           rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), i + cfg.batch)));
    fingerprint = file_fingerprint(a.input);
  } else {
    throw ConfigError("train needs --input or --spool");
  }

  Trained t(schema, cfg);
  std::optional<reference::PointerTree> oracle;
  const bool verify = a.verify && cfg.engine == "matrix" && cfg.trees == 0;
  if (a.verify && !verify) throw ConfigError("--verify applies to the single-tree matrix engine");
  if (verify) oracle.emplace(schema);
  bool equivalent = true;
  std::string first_diff;

  const auto t0 = Clock::now();
  for (const auto& rows : batches) {
    t.train_batch(rows, (cfg.engine == "matrix") ? encode_all(schema, rows) : std::vector<EncodedSample>{});
    if (oracle) {
      oracle->train_batch(rows, cfg.trainer());
      const auto rep = reference::tree_equivalence(*t.matrix(), *oracle);
      if (!rep.equivalent && equivalent) first_diff = rep.diff;
      equivalent = equivalent && rep.equivalent;
    }
  }
  const double secs = seconds_since(t0);

  if (!a.model.empty()) {
    const auto stored = t.stored();
    if (!stored) throw ConfigError("--model is only written by the matrix engine");
    io::save(a.model, *stored, optional_key(a.model_key));
  }
  if (!a.snapshot.empty()) write_json(a.snapshot, {{"leaves", leaves_json(schema, t.snapshot())}});

  json manifest{{"command", "train"},
                {"config", cfg.echo()},
                {"dataset", {{"fingerprint", fingerprint}, {"samples", total}}},
                {"metrics", t.stats()}};
  manifest["metrics"]["train_seconds"] = secs;
  if (verify) {
    manifest["tree_equivalence"] = equivalent;
    if (!equivalent) manifest["equivalence_diff"] = first_diff;
  }
  if (!a.manifest.empty()) write_json(a.manifest, manifest);
  std::cout << manifest.dump() << '\n';
  return verify && !equivalent ? exit_integrity : 0;
}

struct InferArgs {
  std::string model, input, output, model_key, manifest;
};

int cmd_infer(const InferArgs& a, const Config& cfg) {
  const io::Stored stored = io::load(a.model, optional_key(a.model_key));
  const FeatureSchema& schema = std::holds_alternative<ObliviousModel>(stored)
                                    ? std::get<ObliviousModel>(stored).schema()
                                    : std::get<ForestModel>(stored).schema();
  const auto decoded = csv::decode(schema, csv::read_file(a.input), false);
  std::vector<EncodedInstance> inst;
  for (const auto& r : decoded.rows) inst.push_back(schema.encode_instance(r));
  if (cfg.infer_batch < 1) throw ConfigError("inference batch size must be >= 1");

  const auto t0 = Clock::now();
  std::vector<word> labels;
  for (std::size_t i = 0; i < inst.size(); i += cfg.infer_batch) {
    const std::span<const EncodedInstance> chunk(inst.data() + i, std::min(cfg.infer_batch, inst.size() - i));
    const auto got = std::holds_alternative<ObliviousModel>(stored)
                         ? infer_batch(std::get<ObliviousModel>(stored), chunk, cfg.infer_batch).labels
                         : infer_forest(std::get<ForestModel>(stored), chunk, cfg.infer_batch).labels;
    labels.insert(labels.end(), got.begin(), got.end());
  }
  const double secs = seconds_since(t0);

  std::ofstream file;
  if (!a.output.empty()) {
    file.open(a.output);
    if (!file) throw DataError("cannot write '" + a.output + "'");
  }
  std::ostream& out = a.output.empty() ? std::cout : file;
  out << "row_id,label_token\n";
  const auto& vocab = schema.values(schema.label_feature());
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << vocab.at(labels[i]) << '\n';

  json manifest{{"command", "infer"},
                {"config", cfg.echo()},
                {"dataset", {{"fingerprint", file_fingerprint(a.input)}, {"instances", labels.size()}}},
                {"metrics", {{"infer_seconds", secs}}}};
  if (decoded.has_truth) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == decoded.truth[i];
    const double acc = labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
    manifest["metrics"]["accuracy"] = acc;
    manifest["metrics"]["correct"] = hits;
  }
  if (!a.manifest.empty()) write_json(a.manifest, manifest);
  std::cerr << manifest.dump() << '\n';
  return 0;
}

struct BenchArgs {
  std::vector<std::string> engines{"matrix", "oblivwalk", "insecure"};
  std::vector<std::size_t> d_list{3, 7, 15, 31};
  std::vector<std::size_t> n_list{50000};
  std::vector<std::size_t> batch_list{100};
  std::size_t arity = 2;
  std::size_t test = 10000;
  double noise = 0.05;
  std::string output;
};

const std::vector<std::string> bench_columns{
    "engine",  "d",     "arity",       "n",           "N",          "N_infer",       "n_min",
    "delta",   "gamma", "seed",        "trees",       "subset_size", "dataset_fingerprint", "train_seconds",
    "infer_seconds", "accuracy", "leaves", "paths"};

int cmd_bench(const BenchArgs& b, Config cfg) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!b.output.empty()) {
    const bool fresh = !std::filesystem::exists(b.output) || std::filesystem::file_size(b.output) == 0;
    if (!fresh) {
      std::ifstream in(b.output);
      std::string header;
      std::getline(in, header);
      if (csv::split(header) != bench_columns)
        throw DataError("existing bench file '" + b.output + "' has a different column layout");
    }
    file.open(b.output, std::ios::app);
    if (!file) throw DataError("cannot write '" + b.output + "'");
    out = &file;
    if (fresh) csv::write_row(file, bench_columns);
  } else {
    csv::write_row(std::cout, bench_columns);
  }

  for (std::size_t d : b.d_list)
    for (std::size_t n : b.n_list) {
      synthetic::Generator gen({d, b.arity, 2, 0, b.noise, cfg.seed});
      const auto rows = gen.generate(n);
      const auto test = gen.generate(b.test);
      const std::string fp = rows_fingerprint(gen.schema(), rows);
      for (std::size_t N : b.batch_list)
        for (const auto& engine : b.engines) {
          cfg.engine = engine;
          cfg.batch = N;
          Trained t(gen.schema(), cfg);
          auto t0 = Clock::now();
          t.train_all(rows);
          const double train_s = seconds_since(t0);
          t0 = Clock::now();
          const auto pred = t.infer(test);
          const double infer_s = seconds_since(t0);
          const json st = t.stats();
          std::ostringstream delta;
          delta << cfg.delta;
          csv::write_row(*out, {engine, std::to_string(d), std::to_string(b.arity), std::to_string(n), std::to_string(N),
                                std::to_string(cfg.infer_batch), std::to_string(cfg.n_min), delta.str(),
                                std::to_string(cfg.gamma), std::to_string(cfg.seed), std::to_string(cfg.trees),
                                std::to_string(cfg.subset_size), fp, std::to_string(train_s), std::to_string(infer_s),
                                std::to_string(accuracy(pred, test)), std::to_string(st.value("leaves", 0)),
                                std::to_string(st.value("paths", 0))});
          out->flush();
        }
    }
  return 0;
}

int cmd_load_uci(const std::string& preset, const std::string& input, const std::string& spec_path,
                 const std::string& schema_out, const std::string& out) {
  uci::DiscretizationSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw DataError("cannot open '" + spec_path + "'");
    try {
      spec = uci::DiscretizationSpec::from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw DataError(std::string("discretization spec is not valid json: ") + e.what());
    }
  }
  const auto ds = uci::load_file(preset, input, spec);
  ds.schema.save(schema_out);
  std::ofstream f(out);
  if (!f) throw DataError("cannot write '" + out + "'");
  write_samples_csv(f, ds.schema, ds.rows);
  std::cerr << json{{"preset", preset},
                    {"features", ds.schema.attribute_count()},
                    {"labels", ds.schema.label_arity()},
                    {"samples", ds.rows.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_keygen(const std::string& out) {
  const auto key = channel::generate_key();
  std::ofstream f(out);
  if (!f) throw DataError("cannot write '" + out + "'");
  f << crypto::to_hex(key) << '\n';
  return 0;
}

int cmd_seal(const std::string& schema_path, const std::string& input, const std::string& key,
             const std::string& spool, std::size_t batch, bool inference) {
  const FeatureSchema schema = FeatureSchema::load(schema_path);
  if (batch < 1) throw ConfigError("--batch must be >= 1");
  channel::DataOwner owner(schema,
                           channel::preshared_session(channel::Role::data_owner, channel::load_key(key), schema));
  const auto decoded = csv::decode(schema, csv::read_file(input), !inference);
  std::filesystem::remove(spool);
  for (std::size_t i = 0; i < decoded.rows.size(); i += batch) {
    const std::size_t n = std::min(batch, decoded.rows.size() - i);
    if (inference) {
      std::vector<EncodedInstance> inst;
      for (std::size_t k = i; k < i + n; ++k) inst.push_back(schema.encode_instance(decoded.rows[k]));
      channel::append_spool(spool, owner.seal_inference(inst));
    } else {
      std::vector<EncodedSample> s;
      for (std::size_t k = i; k < i + n; ++k) s.push_back(schema.encode_sample(decoded.rows[k]));
      channel::append_spool(spool, owner.seal_training(s));
    }
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Data-oblivious Hoeffding tree engine"};
  app.require_subcommand(1);

  std::vector<std::string> features;
  std::string from_csv, schema_out_path;
  auto* schema_cmd = app.add_subcommand("schema", "build a schema file");
  schema_cmd->add_option("--feature", features, "NAME=v1,v2,... (label last; repeatable)");
  schema_cmd->add_option("--from-csv", from_csv, "infer vocabularies from a sample CSV (first-seen order)");
  schema_cmd->add_option("-o,--output", schema_out_path, "schema file (default stdout)");

  synthetic::GeneratorConfig gcfg;
  std::size_t gen_samples = 1000;
  std::string drift = "none", gen_out, gen_schema;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic sample stream");
  gen_cmd->add_option("--features", gcfg.features, "non-label features")->capture_default_str();
  gen_cmd->add_option("--arity", gcfg.arity, "values per feature")->capture_default_str();
  gen_cmd->add_option("--labels", gcfg.label_arity, "label values")->capture_default_str();
  gen_cmd->add_option("--depth", gcfg.depth, "ground-truth depth (0 = min(d, 5))")->capture_default_str();
  gen_cmd->add_option("--noise", gcfg.noise, "label noise probability")->capture_default_str();
  gen_cmd->add_option("--samples", gen_samples, "number of samples")->capture_default_str();
  gen_cmd->add_option("--seed", gcfg.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--drift", drift, "drift model (none)")->capture_default_str();
  gen_cmd->add_option("-o,--output", gen_out, "sample CSV (default stdout)");
  gen_cmd->add_option("--schema-out", gen_schema, "also write the schema file");

  Config train_cfg;
  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model on a CSV or a sealed spool");
  train_cmd->add_option("--schema", ta.schema, "schema file")->required();
  train_cmd->add_option("--input", ta.input, "sample CSV");
  train_cmd->add_option("--spool", ta.spool, "sealed training spool");
  train_cmd->add_option("--key", ta.key, "pre-shared channel key file for --spool");
  train_cmd->add_option("--model", ta.model, "model file to write");
  train_cmd->add_option("--model-key", ta.model_key, "seal the model file with this key");
  train_cmd->add_option("--manifest", ta.manifest, "run manifest JSON");
  train_cmd->add_option("--snapshot", ta.snapshot, "write the leaf set as JSON");
  train_cmd->add_flag("--verify", ta.verify, "check equivalence with the pointer-tree oracle after every batch");
  train_cfg.add_flags(train_cmd);

  Config infer_cfg;
  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "classify an instance CSV");
  infer_cmd->add_option("--model", ia.model, "model file")->required();
  infer_cmd->add_option("--input", ia.input, "instance CSV (label column optional)")->required();
  infer_cmd->add_option("-o,--output", ia.output, "labels CSV (default stdout)");
  infer_cmd->add_option("--model-key", ia.model_key, "key for a sealed model file");
  infer_cmd->add_option("--manifest", ia.manifest, "run manifest JSON");
  infer_cfg.add_flags(infer_cmd);

  Config bench_cfg;
  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "benchmark engines over a parameter grid");
  bench_cmd->add_option("--engines", ba.engines, "engines")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--d", ba.d_list, "feature counts")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--n", ba.n_list, "training stream lengths")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--batches", ba.batch_list, "training batch sizes N")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--arity", ba.arity, "values per feature")->capture_default_str();
  bench_cmd->add_option("--test", ba.test, "held-out instances")->capture_default_str();
  bench_cmd->add_option("--noise", ba.noise, "label noise")->capture_default_str();
  bench_cmd->add_option("-o,--output", ba.output, "CSV to append to (default stdout)");
  bench_cfg.add_flags(bench_cmd);

  std::string preset, uci_in, uci_spec, uci_schema, uci_out;
  auto* uci_cmd = app.add_subcommand("load-uci", "convert an Adult or Covertype CSV");
  uci_cmd->add_option("--preset", preset, "adult | covertype")->required();
  uci_cmd->add_option("--input", uci_in, "dataset CSV")->required();
  uci_cmd->add_option("--spec", uci_spec, "discretization spec JSON");
  uci_cmd->add_option("--schema-out", uci_schema, "schema file")->required();
  uci_cmd->add_option("-o,--output", uci_out, "sample CSV")->required();

  std::string key_out;
  auto* keygen_cmd = app.add_subcommand("keygen", "write a random 128-bit key file");
  keygen_cmd->add_option("-o,--output", key_out, "key file")->required();

  std::string seal_schema, seal_in, seal_key, seal_spool;
  std::size_t seal_batch = 100;
  bool seal_inference = false;
  auto* seal_cmd = app.add_subcommand("seal", "seal a CSV into an encrypted batch spool");
  seal_cmd->add_option("--schema", seal_schema, "schema file")->required();
  seal_cmd->add_option("--input", seal_in, "CSV")->required();
  seal_cmd->add_option("--key", seal_key, "pre-shared key file")->required();
  seal_cmd->add_option("--spool", seal_spool, "spool file to write")->required();
  seal_cmd->add_option("--batch", seal_batch, "rows per sealed batch")->capture_default_str();
  seal_cmd->add_flag("--inference", seal_inference, "seal unlabelled instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  if (*schema_cmd) return cmd_schema(features, from_csv, schema_out_path);
  if (*gen_cmd) return cmd_gen(gcfg, gen_samples, drift, gen_out, gen_schema);
  if (*train_cmd) return cmd_train(ta, train_cfg);
  if (*infer_cmd) return cmd_infer(ia, infer_cfg);
  if (*bench_cmd) return cmd_bench(ba, bench_cfg);
  if (*uci_cmd) return cmd_load_uci(preset, uci_in, uci_spec, uci_schema, uci_out);
  if (*keygen_cmd) return cmd_keygen(key_out);
  if (*seal_cmd) return cmd_seal(seal_schema, seal_in, seal_key, seal_spool, seal_batch, seal_inference);
  return exit_usage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const etree::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const etree::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const etree::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return exit_integrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
