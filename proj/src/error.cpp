#include "samplepilot/error.hpp"

#include <cmath>

#include "samplepilot/rng.hpp"

namespace samplepilot {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::TableTooLarge: return "TableTooLarge";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::EmptyStack: return "EmptyStack";
    case ErrorCode::SizeExceedsTable: return "SizeExceedsTable";
    case ErrorCode::DegenerateCluster: return "DegenerateCluster";
    case ErrorCode::DuplicateSampleId: return "DuplicateSampleId";
    case ErrorCode::MissingSample: return "MissingSample";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NoDisplay: return "NoDisplay";
    case ErrorCode::EmptyGroundSet: return "EmptyGroundSet";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyIntentSlice: return "EmptyIntentSlice";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace samplepilot
