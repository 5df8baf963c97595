#pragma once

#include <stdexcept>
#include <string>

namespace isolate {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A subject has fewer events than the requested event index.
class MissingEvent : public Error {
 public:
  using Error::Error;
};

/// An argument is outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A required outcome value is absent from a subject record.
class MissingOutcome : public Error {
 public:
  using Error::Error;
};

/// Distance computation was asked to run on an empty pool.
class EmptyPool : public Error {
 public:
  using Error::Error;
};

/// A named covariate cannot be resolved on a history view.
class UnresolvableCovariate : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// No treated unit in a stratum can be matched.
class InfeasibleStratum : public Error {
 public:
  using Error::Error;
};

/// An exhaustive computation exceeds its configured size cap.
class TooLarge : public Error {
 public:
  using Error::Error;
};

/// Inference was asked to run on a design with no matched sets.
class EmptyDesign : public Error {
 public:
  using Error::Error;
};

/// A root-finding bracket does not contain a sign change.
class BracketFailure : public Error {
 public:
  using Error::Error;
};

/// The dose estimating function has no root (dose unaffected by treatment).
class ZeroDoseEffect : public Error {
 public:
  using Error::Error;
};

/// A variable name is not known to the balance machinery.
class UnknownVariable : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (bad schema line, bad column, bad value).
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace isolate
