#include "treval/error.hpp"

namespace treval {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::NoEligibleWords: return "NoEligibleWords";
    case Errc::TooShort: return "TooShort";
    case Errc::NoLexiconHits: return "NoLexiconHits";
    case Errc::ParseError: return "ParseError";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::MissingAnswer: return "MissingAnswer";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::Transport: return "Transport";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::NonFiniteScore: return "NonFiniteScore";
    case Errc::EmptyPopulation: return "EmptyPopulation";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::NonPositiveBaseline: return "NonPositiveBaseline";
    case Errc::IncompleteMatrix: return "IncompleteMatrix";
    case Errc::UnknownPrompt: return "UnknownPrompt";
    case Errc::PartialScores: return "PartialScores";
    case Errc::StageIncomplete: return "StageIncomplete";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message),
      code_(code) {}

void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace treval
