#include "memhub/error.hpp"

namespace memhub {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyDocument: return "EmptyDocument";
    case ErrorCode::kAbstractionFailed: return "AbstractionFailed";
    case ErrorCode::kWrongRepository: return "WrongRepository";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kInvalidRecord: return "InvalidRecord";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMalformedRanking: return "MalformedRanking";
    case ErrorCode::kSandboxUnavailable: return "SandboxUnavailable";
    case ErrorCode::kCoderUnavailable: return "CoderUnavailable";
    case ErrorCode::kRejectedEpisode: return "RejectedEpisode";
    case ErrorCode::kModelUnavailable: return "ModelUnavailable";
    case ErrorCode::kActionParseError: return "ActionParseError";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kIncompatibleStore: return "IncompatibleStore";
    case ErrorCode::kCorruptStore: return "CorruptStore";
    case ErrorCode::kIngestError: return "IngestError";
    case ErrorCode::kReportError: return "ReportError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace memhub
