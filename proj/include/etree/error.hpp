#pragma once

#include <stdexcept>
#include <string>

namespace etree {

/// Malformed input data: unknown tokens, wrong arity, bad schema files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Authentication or checksum failure on sealed batches and model files.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or a violated engine contract.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace etree
