// SPDX-License-Identifier: Apache-2.0
#include "s2ag/error.hpp"

namespace s2ag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBone: return "DegenerateBone";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::IsolatedNode: return "IsolatedNode";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::GraphCycle: return "GraphCycle";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonPSD: return "NonPSD";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::RatioInvalid: return "RatioInvalid";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace s2ag
