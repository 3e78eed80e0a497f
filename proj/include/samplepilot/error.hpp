#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace samplepilot {

enum class ErrorCode {
  MalformedCsv,
  EmptyFile,
  TableTooLarge,
  UnknownColumn,
  TypeMismatch,
  EmptyStack,
  SizeExceedsTable,
  DegenerateCluster,
  DuplicateSampleId,
  MissingSample,
  InvalidArgument,
  EmptyCorpus,
  NoDisplay,
  EmptyGroundSet,
  TooShort,
  EmptySet,
  EmptyIntentSlice,
  NonFiniteLoss,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures surface as this exception; `code()` drives CLI exit
// codes and HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace samplepilot
