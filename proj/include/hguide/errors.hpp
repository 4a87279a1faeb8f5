// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hguide {

// Error taxonomy maps onto CLI exit codes: Config -> 2, Dependency -> 3,
// Numerical/Domain/Format -> 4.
enum class ErrorKind {
  Domain,      // invalid argument values (t outside [0,T], empty set, ...)
  Format,      // artifact/file parsing problems
  Config,      // bad or unknown configuration
  Dependency,  // missing prior-stage artifact
  Numerical,   // divergence, non-finite results
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_domain(const std::string& msg) { throw Error(ErrorKind::Domain, msg); }
[[noreturn]] inline void throw_format(const std::string& msg) { throw Error(ErrorKind::Format, msg); }
[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void throw_dependency(const std::string& msg) { throw Error(ErrorKind::Dependency, msg); }
[[noreturn]] inline void throw_numerical(const std::string& msg) { throw Error(ErrorKind::Numerical, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace hguide
