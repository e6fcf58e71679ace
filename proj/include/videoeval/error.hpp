#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "videoeval/aspect.hpp"

namespace videoeval {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  // frame pipeline
  UnreadableMedia,
  NoInterpolatorConfigured,
  InvalidTarget,
  TargetExceedsSource,
  TooFewFrames,
  // metrics / providers
  ShapeMismatch,
  ProviderError,
  // discretization
  OutOfDomain,
  RuleMismatch,
  MalformedRule,
  // scorer output parsing
  MissingAspect,
  OutOfRangeScore,
  DuplicateAspect,
  WrongArity,
  UnmappedAspect,
  // datasets and harness
  SchemaError,
  DuplicateId,
  OutOfRangeRating,
  NonIntegerScore,
  UnresolvedId,
  TooFewPrompts,
  EmptyModelGroup,
  AllParsesFailed,
};

std::string_view to_string(ErrorCode code);

// Errors raised while turning a scorer's output into AspectScores. The
// harness counts these as parse failures instead of aborting a run.
constexpr bool is_parse_failure(ErrorCode code) {
  return code == ErrorCode::MissingAspect || code == ErrorCode::OutOfRangeScore ||
         code == ErrorCode::DuplicateAspect || code == ErrorCode::WrongArity;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::optional<Aspect> aspect = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<Aspect> aspect() const noexcept { return aspect_; }

 private:
  ErrorCode code_;
  std::optional<Aspect> aspect_;
};

}  // namespace videoeval
