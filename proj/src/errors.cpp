#include "headscope/errors.hpp"

namespace headscope {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteWeight: return "NonFiniteWeight";
    case ErrorCode::UntiedUnembedding: return "UntiedUnembedding";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::GapInIds: return "GapInIds";
    case ErrorCode::MalformedMergeLine: return "MalformedMergeLine";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::LogitsNotCaptured: return "LogitsNotCaptured";
    case ErrorCode::NeuronNotCaptured: return "NeuronNotCaptured";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::MalformedCorpus: return "MalformedCorpus";
    case ErrorCode::CorpusExhausted: return "CorpusExhausted";
    case ErrorCode::NoValidTruncation: return "NoValidTruncation";
    case ErrorCode::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorCode::HeadsNotCaptured: return "HeadsNotCaptured";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyPartition: return "EmptyPartition";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::UnparseableReply: return "UnparseableReply";
    case ErrorCode::DegenerateGroup: return "DegenerateGroup";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::UpstreamIncomplete: return "UpstreamIncomplete";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::InsufficientNeurons: return "InsufficientNeurons";
    case ErrorCode::RunLocked: return "RunLocked";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace headscope
