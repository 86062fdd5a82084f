// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hmnet {

// Error kinds. Each carries a short machine-friendly tag so the CLI can emit
// single-line "error: <kind>: <message>" reports.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define HMNET_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

HMNET_DEFINE_ERROR(DimensionError, "dimension")
HMNET_DEFINE_ERROR(IndexError, "index")
HMNET_DEFINE_ERROR(ContractError, "contract")
HMNET_DEFINE_ERROR(InputError, "input")
HMNET_DEFINE_ERROR(ConfigError, "config")
HMNET_DEFINE_ERROR(LookupError, "lookup")
HMNET_DEFINE_ERROR(ParseError, "parse")
HMNET_DEFINE_ERROR(ValidationError, "validation")
HMNET_DEFINE_ERROR(DivisionError, "division")
HMNET_DEFINE_ERROR(RunError, "run")
HMNET_DEFINE_ERROR(IoError, "io")

#undef HMNET_DEFINE_ERROR

}  // namespace hmnet
