#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace memhub {

enum class ErrorCode {
  kInvalidArgument,
  kEmptyDocument,
  kAbstractionFailed,
  kWrongRepository,
  kDuplicateId,
  kInvalidRecord,
  kDimensionMismatch,
  kMalformedRanking,
  kSandboxUnavailable,
  kCoderUnavailable,
  kRejectedEpisode,
  kModelUnavailable,
  kActionParseError,
  kShapeError,
  kIncompatibleStore,
  kCorruptStore,
  kIngestError,
  kReportError,
  kConfigError,
};

std::string_view to_string(ErrorCode code);

// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class AbstractionFailed : public Error {
 public:
  AbstractionFailed(std::size_t chunk_index, const std::string& message)
      : Error(ErrorCode::kAbstractionFailed,
              "chunk " + std::to_string(chunk_index) + ": " + message),
        chunk_index_(chunk_index) {}

  std::size_t chunk_index() const noexcept { return chunk_index_; }

 private:
  std::size_t chunk_index_;
};

class IngestError : public Error {
 public:
  IngestError(std::size_t line, const std::string& message)
      : Error(ErrorCode::kIngestError, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace memhub
