#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bllopt {

// Each module throws ModuleError<its own code enum>. The kind is the
// machine-readable part; what() carries a human-readable message.
template <typename Code>
class ModuleError : public std::runtime_error {
 public:
  ModuleError(Code code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

enum class IngestErrc { MissingColumn, MalformedRow, DuplicateCell, Io };
enum class NormalizeErrc { Precondition, ZeroMean, DegenerateInput, InsufficientData };
enum class ClusterErrc { Precondition, LengthMismatch, KTooLarge, EmptyInput, InsufficientNeighborhoods };
enum class OptimizeErrc {
  Precondition,
  ZeroCityTests,
  ZeroCityCases,
  InfeasibleWeights,
  ShareMismatch,
  NoFeasiblePoint,
};
enum class EvaluateErrc { Precondition, DegeneratePooled, UnassignedGeo, UnknownGeo, MissingYear };

using IngestError = ModuleError<IngestErrc>;
using NormalizeError = ModuleError<NormalizeErrc>;
using ClusterError = ModuleError<ClusterErrc>;
using OptimizeError = ModuleError<OptimizeErrc>;
using EvaluateError = ModuleError<EvaluateErrc>;

std::string_view to_string(IngestErrc c) noexcept;
std::string_view to_string(NormalizeErrc c) noexcept;
std::string_view to_string(ClusterErrc c) noexcept;
std::string_view to_string(OptimizeErrc c) noexcept;
std::string_view to_string(EvaluateErrc c) noexcept;

}  // namespace bllopt
