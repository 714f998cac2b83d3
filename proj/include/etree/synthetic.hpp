#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "etree/error.hpp"
#include "etree/schema.hpp"

namespace etree::synthetic {

struct GeneratorConfig {
  std::size_t features = 15;  // non-label features
  std::size_t arity = 2;
  std::size_t label_arity = 2;
  std::size_t depth = 0;  // ground-truth depth; 0 = min(features, 5)
  double noise = 0.05;    // probability of replacing the label with a random other one
  std::uint64_t seed = 1;
};

/// Uniform integer in [0, n) via multiply-shift; identical on every platform.
inline std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline FeatureSchema make_schema(std::size_t features, std::size_t arity, std::size_t label_arity) {
  if (features < 1) throw ConfigError("generator needs at least one feature");
  std::vector<FeatureSpec> specs;
  for (std::size_t i = 0; i < features; ++i) {
    FeatureSpec s{"f" + std::to_string(i), {}};
    for (std::size_t v = 0; v < arity; ++v) s.values.push_back("v" + std::to_string(v));
    specs.push_back(std::move(s));
  }
  FeatureSpec label{"label", {}};
  for (std::size_t k = 0; k < label_arity; ++k) label.values.push_back("c" + std::to_string(k));
  specs.push_back(std::move(label));
  return FeatureSchema::build(std::move(specs));
}

/// Stream drawn from a random ground-truth decision tree: feature values are
/// uniform, the label is the tree's leaf label, flipped with probability
/// `noise`. Every internal node has one child that keeps growing to the full
/// depth; the other children become labelled leaves with probability 1/2.
/// Deterministic per seed.
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg)
      : cfg_(cfg), schema_(make_schema(cfg.features, cfg.arity, cfg.label_arity)), rng_(cfg.seed) {
    if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
    const std::size_t depth = cfg.depth == 0 ? std::min<std::size_t>(cfg.features, 5) : std::min(cfg.depth, cfg.features);
    std::vector<bool> used(cfg.features, false);
    root_ = build(depth, used, bounded(rng_, cfg.label_arity));
  }

  const FeatureSchema& schema() const { return schema_; }

  /// Noise-free label of feature values `x`.
  std::uint32_t truth(const ValueRow& x) const {
    const Node* n = root_.get();
    while (!n->children.empty()) n = n->children[x.at(n->feature)].get();
    return n->label;
  }

  /// Next labelled sample (feature values then label).
  ValueRow next() {
    ValueRow row(cfg_.features + 1);
    for (std::size_t i = 0; i < cfg_.features; ++i) row[i] = static_cast<std::uint32_t>(bounded(rng_, cfg_.arity));
    std::uint32_t y = truth(row);
    if (cfg_.label_arity > 1 && unit(rng_) < cfg_.noise)
      y = static_cast<std::uint32_t>((y + 1 + bounded(rng_, cfg_.label_arity - 1)) % cfg_.label_arity);
    row[cfg_.features] = y;
    return row;
  }

  std::vector<ValueRow> generate(std::size_t n) {
    std::vector<ValueRow> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  struct Node {
    std::size_t feature = 0;
    std::uint32_t label = 0;
    std::vector<std::unique_ptr<Node>> children;
  };

  std::unique_ptr<Node> build(std::size_t depth, std::vector<bool>& used, std::size_t label) {
    auto n = std::make_unique<Node>();
    n->label = static_cast<std::uint32_t>(label);
    if (depth == 0) return n;
    std::size_t f = bounded(rng_, cfg_.features);
    while (used[f]) f = (f + 1) % cfg_.features;
    n->feature = f;
    used[f] = true;
    // One child always continues; the others stop early with probability 1/2.
    const std::size_t keep = bounded(rng_, cfg_.arity);
    for (std::size_t v = 0; v < cfg_.arity; ++v) {
      const bool leaf = v != keep && unit(rng_) < 0.5;
      const std::size_t child_label = bounded(rng_, cfg_.label_arity);
      n->children.push_back(build(leaf ? 0 : depth - 1, used, child_label));
    }
    // Leaves directly under one node never all share a label.
    bool uniform = cfg_.label_arity > 1;
    for (const auto& c : n->children) uniform = uniform && c->children.empty() && c->label == n->children[0]->label;
    if (uniform) n->children.back()->label = (n->children.back()->label + 1) % static_cast<std::uint32_t>(cfg_.label_arity);
    used[f] = false;
    return n;
  }

  GeneratorConfig cfg_;
  FeatureSchema schema_;
  std::mt19937_64 rng_;
  std::unique_ptr<Node> root_;
};

}  // namespace etree::synthetic
