#pragma once

#include <stdexcept>
#include <string>

namespace ocugaze {

enum class ErrorKind {
  DegenerateScene,
  NegativeExcess,
  UndefinedOcularity,
  Domain,
  Geometry,
  Mismatch,
  Schema,
  Parse,
  Version,
  Validation,
  UndefinedMetric,
  MalformedTrial,
  Io,
  Config,
  MissingInput,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DegenerateScene: return "degenerate-scene";
    case ErrorKind::NegativeExcess: return "negative-excess";
    case ErrorKind::UndefinedOcularity: return "undefined-ocularity";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Mismatch: return "mismatch";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Version: return "version";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::MalformedTrial: return "malformed-trial";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
    case ErrorKind::MissingInput: return "missing-input";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

  // Input problems (bad files, bad parameters) as opposed to runtime failures.
  bool is_input_error() const noexcept { return kind_ != ErrorKind::Io; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace ocugaze
