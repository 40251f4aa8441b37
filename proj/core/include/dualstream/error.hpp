#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dualstream {

/// Base for every error raised by the library. The CLI maps the concrete
/// subclasses onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class TaxonomyError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Models that disagree on their category set cannot be ensembled.
class TaxonomyMismatchError : public ConfigurationError {
 public:
  using ConfigurationError::ConfigurationError;
};

class DegenerateSegmentError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

struct MissingFeature {
  std::string video_id;
  std::string modality;
  double timestamp = 0.0;
};

class MissingFeatureError : public Error {
 public:
  explicit MissingFeatureError(std::vector<MissingFeature> missing)
      : Error(describe(missing)), missing_(std::move(missing)) {}

  const std::vector<MissingFeature>& missing() const noexcept { return missing_; }

 private:
  static std::string describe(const std::vector<MissingFeature>& missing) {
    std::string out = "missing features for " + std::to_string(missing.size()) + " timestamp(s)";
    if (!missing.empty()) {
      const auto& first = missing.front();
      out += ", first (" + first.video_id + ", " + first.modality + ", " +
             std::to_string(first.timestamp) + ")";
    }
    return out;
  }

  std::vector<MissingFeature> missing_;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, int batch, const std::string& what)
      : Error("diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
              ": " + what),
        epoch_(epoch),
        batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// A cross-validation fold failed. The original exception is nested.
class FoldError : public Error {
 public:
  FoldError(int fold_id, const std::string& what)
      : Error("fold " + std::to_string(fold_id) + ": " + what), fold_id_(fold_id) {}

  int fold_id() const noexcept { return fold_id_; }

 private:
  int fold_id_;
};

}  // namespace dualstream
