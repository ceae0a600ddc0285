#pragma once

#include <stdexcept>
#include <string>

namespace treval {

// Every failure the harness can signal. Pipeline stages quarantine
// per-record errors by code; the CLI maps codes onto exit statuses.
enum class Errc {
  // perturb
  NoEligibleWords,
  TooShort,
  NoLexiconHits,
  // corpus
  ParseError,
  EmptyCorpus,
  MissingAnswer,
  KTooLarge,
  // modelio
  Transport,
  MalformedResponse,
  NonFiniteScore,
  // metrics
  EmptyPopulation,
  InvalidRange,
  NonPositiveBaseline,
  IncompleteMatrix,
  // pipeline
  UnknownPrompt,
  PartialScores,
  StageIncomplete,
  // general
  ConfigError,
  IoError,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void raise(Errc code, const std::string& message);

}  // namespace treval
