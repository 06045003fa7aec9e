#ifndef AISC_ERRORS_HPP
#define AISC_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aisc {

/// Raised when a node id does not exist in a graph.
class LookupError : public std::out_of_range {
 public:
  explicit LookupError(const std::string& what) : std::out_of_range(what) {}
};

/// Invalid argument or shape/dimension mismatch.
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// A cycle was found where an acyclic graph is required. Carries one witness.
class CycleError : public std::runtime_error {
 public:
  CycleError(const std::string& what, std::vector<int> witness)
      : std::runtime_error(what), witness_(std::move(witness)) {}
  const std::vector<int>& witness() const { return witness_; }

 private:
  std::vector<int> witness_;
};

/// A (group, label) cell needed by a fairness statistic is empty.
class DegenerateCellError : public std::runtime_error {
 public:
  DegenerateCellError(const std::string& what, std::string cell)
      : std::runtime_error(what), cell_(std::move(cell)) {}
  const std::string& cell() const { return cell_; }

 private:
  std::string cell_;
};

/// A quantity is undefined for the given input (zero-norm explanation,
/// division by a vanishing denominator).
class DegenerateError : public std::domain_error {
 public:
  explicit DegenerateError(const std::string& what) : std::domain_error(what) {}
};

/// Loss became non-finite during training.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Schema or syntax problem in an input file. `row` is 1-based, 0 if unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::int64_t row = 0)
      : std::runtime_error(what), row_(row) {}
  std::int64_t row() const { return row_; }

 private:
  std::int64_t row_;
};

/// Configuration failed validation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aisc

#endif  // AISC_ERRORS_HPP
