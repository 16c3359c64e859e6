#pragma once

#include <stdexcept>
#include <string>

namespace act {

// Argument outside the mathematical domain of an operation (k > K, t < eps, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: wrong call order, missing/extra optional input, bad ordering of times.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the trainer when a loss goes NaN/inf. The state has already been
// written to `snapshot_path` when this is thrown (empty if no output dir).
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::string snapshot_path)
      : std::runtime_error(what), snapshot_path_(std::move(snapshot_path)) {}
  const std::string& snapshot_path() const noexcept { return snapshot_path_; }

 private:
  std::string snapshot_path_;
};

}  // namespace act
