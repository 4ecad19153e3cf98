#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace headscope {

enum class ErrorCode {
  // model_io
  Io,
  InvalidConfig,
  MalformedHeader,
  MissingTensor,
  ShapeMismatch,
  NonFiniteWeight,
  UntiedUnembedding,
  // tokenizer tables
  DuplicateId,
  GapInIds,
  MalformedMergeLine,
  UnknownId,
  // transformer
  EmptySequence,
  SequenceTooLong,
  LogitsNotCaptured,
  NeuronNotCaptured,
  InvalidArgument,
  // neuron_scout / prompt_miner
  EmptyCandidateSet,
  MalformedCorpus,
  CorpusExhausted,
  NoValidTruncation,
  // head_attribution
  PositionOutOfRange,
  HeadsNotCaptured,
  EmptyInput,
  // explainer
  EmptyPartition,
  BackendUnavailable,
  EmptyCompletion,
  UnparseableReply,
  // ablation_lab / analytics
  DegenerateGroup,
  DegenerateVariance,
  TooFewSamples,
  EmptySample,
  // pipeline
  UpstreamIncomplete,
  HashMismatch,
  InsufficientNeurons,
  RunLocked,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library. The code identifies the contract
/// that was violated; the message carries the offending names and values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace headscope
