#pragma once

#include <stdexcept>
#include <string>

namespace msclip {

// Three root categories; the CLI maps them to exit codes
// (config/usage = 2, file I/O = 3, numeric divergence = 4).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingBandError : ConfigError {
  explicit MissingBandError(const std::string& band)
      : ConfigError("missing band: " + band) {}
};

struct InconsistentBandsError : ConfigError {
  explicit InconsistentBandsError(const std::string& what)
      : ConfigError("inconsistent band lists: " + what) {}
};

struct EmptyDatasetError : ConfigError {
  EmptyDatasetError() : ConfigError("dataset is empty") {}
  explicit EmptyDatasetError(const std::string& what)
      : ConfigError("dataset is empty: " + what) {}
};

struct InvalidConfigError : ConfigError {
  explicit InvalidConfigError(const std::string& what)
      : ConfigError("invalid config: " + what) {}
};

struct ShapeMismatchError : ConfigError {
  explicit ShapeMismatchError(const std::string& what)
      : ConfigError("shape mismatch: " + what) {}
};

struct InvalidPositionsError : ConfigError {
  explicit InvalidPositionsError(const std::string& what)
      : ConfigError("invalid channel positions: " + what) {}
};

struct MissingEosError : ConfigError {
  explicit MissingEosError(const std::string& what)
      : ConfigError("token sequence without EOS: " + what) {}
};

struct TokenOutOfRangeError : ConfigError {
  explicit TokenOutOfRangeError(const std::string& what)
      : ConfigError("token id out of range: " + what) {}
};

struct StepOutOfRangeError : ConfigError {
  explicit StepOutOfRangeError(const std::string& what)
      : ConfigError("schedule step out of range: " + what) {}
};

struct UnknownPatternError : ConfigError {
  explicit UnknownPatternError(const std::string& pattern)
      : ConfigError("freeze pattern matches no parameter: " + pattern) {}
};

struct EmptyTextError : ConfigError {
  EmptyTextError() : ConfigError("text is empty after normalization") {}
};

struct EmptyCaptionError : ConfigError {
  EmptyCaptionError() : ConfigError("caption is empty") {}
};

struct EmptyCorpusError : ConfigError {
  EmptyCorpusError() : ConfigError("corpus is empty") {}
};

struct CorpusTooSmallError : ConfigError {
  explicit CorpusTooSmallError(const std::string& what)
      : ConfigError("corpus too small: " + what) {}
};

struct EmptyTemplatesError : ConfigError {
  EmptyTemplatesError() : ConfigError("template list is empty") {}
  explicit EmptyTemplatesError(const std::string& what)
      : ConfigError("template list is empty: " + what) {}
};

struct LabelNotInClassSetError : ConfigError {
  explicit LabelNotInClassSetError(const std::string& label)
      : ConfigError("label not in class set: " + label) {}
};

struct NonFiniteInputError : NumericError {
  explicit NonFiniteInputError(const std::string& what)
      : NumericError("non-finite input: " + what) {}
};

struct NonFiniteGradientError : NumericError {
  explicit NonFiniteGradientError(const std::string& what)
      : NumericError("non-finite gradient: " + what) {}
};

struct DivergedLossError : NumericError {
  explicit DivergedLossError(const std::string& what)
      : NumericError("training loss diverged: " + what) {}
};

}  // namespace msclip
