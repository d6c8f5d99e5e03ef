#pragma once

#include <stdexcept>
#include <string>

namespace betagas {

enum class ErrorKind {
  rejected_input,
  numeric,
  domain,
  no_one_cut,
  criticality,
  accuracy,
  shape,
  insufficient_data,
  config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::rejected_input: return "rejected_input";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::domain: return "domain";
    case ErrorKind::no_one_cut: return "no_one_cut_solution";
    case ErrorKind::criticality: return "criticality";
    case ErrorKind::accuracy: return "accuracy";
    case ErrorKind::shape: return "shape";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Process exit code used by the CLI for each error family.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::rejected_input:
    case ErrorKind::domain:
    case ErrorKind::shape:
    case ErrorKind::config:
      return 2;
    case ErrorKind::numeric:
    case ErrorKind::no_one_cut:
    case ErrorKind::criticality:
    case ErrorKind::accuracy:
      return 3;
    case ErrorKind::insufficient_data:
      return 4;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define BETAGAS_DEFINE_ERROR(Name, Kind)                                     \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

BETAGAS_DEFINE_ERROR(RejectedInput, rejected_input)
BETAGAS_DEFINE_ERROR(DomainError, domain)
BETAGAS_DEFINE_ERROR(NoOneCutSolution, no_one_cut)
BETAGAS_DEFINE_ERROR(CriticalityError, criticality)
BETAGAS_DEFINE_ERROR(AccuracyError, accuracy)
BETAGAS_DEFINE_ERROR(ShapeError, shape)
BETAGAS_DEFINE_ERROR(InsufficientData, insufficient_data)
BETAGAS_DEFINE_ERROR(ConfigError, config)

#undef BETAGAS_DEFINE_ERROR

/// Non-finite value met during quadrature; carries the offending node.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double node)
      : Error(ErrorKind::numeric, what + " (node " + std::to_string(node) + ")"), node_(node) {}
  double node() const noexcept { return node_; }

 private:
  double node_;
};

}  // namespace betagas
