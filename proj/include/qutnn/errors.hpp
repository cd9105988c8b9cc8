#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qutnn {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor does not have the shape required by the architecture. The message
/// names the offending layer.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// The residual norm fell below the differentiability guard of the
/// square-root loss.
class DegenerateResidual : public Error {
 public:
  using Error::Error;
};

/// The response vector is constant (up to the residual guard), so the null
/// statistic is undefined.
class ConstantResponse : public Error {
 public:
  using Error::Error;
};

/// Quantile of an empty sample requested.
class EmptySample : public Error {
 public:
  using Error::Error;
};

/// The optimizer produced a non-finite objective. Carries the objective
/// trace accumulated up to the failure for diagnostics.
class NonFiniteObjective : public Error {
 public:
  NonFiniteObjective(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// CSV ingestion failure, with 1-based line and column of the offending cell.
class CsvError : public Error {
 public:
  CsvError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what), line_(line), column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace qutnn
