#include "bllopt/error.hpp"

namespace bllopt {

std::string_view to_string(IngestErrc c) noexcept {
  switch (c) {
    case IngestErrc::MissingColumn: return "MissingColumn";
    case IngestErrc::MalformedRow: return "MalformedRow";
    case IngestErrc::DuplicateCell: return "DuplicateCell";
    case IngestErrc::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(NormalizeErrc c) noexcept {
  switch (c) {
    case NormalizeErrc::Precondition: return "Precondition";
    case NormalizeErrc::ZeroMean: return "ZeroMean";
    case NormalizeErrc::DegenerateInput: return "DegenerateInput";
    case NormalizeErrc::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

std::string_view to_string(ClusterErrc c) noexcept {
  switch (c) {
    case ClusterErrc::Precondition: return "Precondition";
    case ClusterErrc::LengthMismatch: return "LengthMismatch";
    case ClusterErrc::KTooLarge: return "KTooLarge";
    case ClusterErrc::EmptyInput: return "EmptyInput";
    case ClusterErrc::InsufficientNeighborhoods: return "InsufficientNeighborhoods";
  }
  return "Unknown";
}

std::string_view to_string(OptimizeErrc c) noexcept {
  switch (c) {
    case OptimizeErrc::Precondition: return "Precondition";
    case OptimizeErrc::ZeroCityTests: return "ZeroCityTests";
    case OptimizeErrc::ZeroCityCases: return "ZeroCityCases";
    case OptimizeErrc::InfeasibleWeights: return "InfeasibleWeights";
    case OptimizeErrc::ShareMismatch: return "ShareMismatch";
    case OptimizeErrc::NoFeasiblePoint: return "NoFeasiblePoint";
  }
  return "Unknown";
}

std::string_view to_string(EvaluateErrc c) noexcept {
  switch (c) {
    case EvaluateErrc::Precondition: return "Precondition";
    case EvaluateErrc::DegeneratePooled: return "DegeneratePooled";
    case EvaluateErrc::UnassignedGeo: return "UnassignedGeo";
    case EvaluateErrc::UnknownGeo: return "UnknownGeo";
    case EvaluateErrc::MissingYear: return "MissingYear";
  }
  return "Unknown";
}

}  // namespace bllopt
