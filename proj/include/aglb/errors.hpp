#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aglb {

// Every error raised by the library carries a short machine-readable code
// alongside the human-readable message. The CLI prints both on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define AGLB_DEFINE_ERROR(Name, Code)                            \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& message) : Error(Code, message) {} \
  };

AGLB_DEFINE_ERROR(ArgumentError, "argument")
AGLB_DEFINE_ERROR(NumericDomainError, "numeric-domain")
AGLB_DEFINE_ERROR(VocabularyError, "vocabulary")
AGLB_DEFINE_ERROR(DivergedTrainingError, "diverged-training")
AGLB_DEFINE_ERROR(CheckpointVersionError, "checkpoint-version")
AGLB_DEFINE_ERROR(CheckpointShapeError, "checkpoint-shape")
AGLB_DEFINE_ERROR(GenerationError, "generation")
AGLB_DEFINE_ERROR(UnsupportedTargetError, "unsupported-target")
AGLB_DEFINE_ERROR(IntegrityError, "integrity")
AGLB_DEFINE_ERROR(ConvergenceError, "convergence")
AGLB_DEFINE_ERROR(UndefinedStatisticError, "undefined-statistic")
AGLB_DEFINE_ERROR(AlignmentError, "alignment")
AGLB_DEFINE_ERROR(IoError, "io")

#undef AGLB_DEFINE_ERROR

// Raised when a checkpoint file ends before a declared block is complete.
class CheckpointTruncationError : public Error {
 public:
  CheckpointTruncationError(std::string block, const std::string& message)
      : Error("checkpoint-truncation", message), block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

// Complete separation in a logistic fit; names the offending column.
class SeparationError : public Error {
 public:
  SeparationError(std::string column, const std::string& message)
      : Error("separation", message), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

// Errors that carry a list of offending paths or cells.
class ListError : public Error {
 public:
  ListError(std::string code, const std::string& message,
            std::vector<std::string> items)
      : Error(std::move(code), message), items_(std::move(items)) {}
  const std::vector<std::string>& items() const noexcept { return items_; }

 private:
  std::vector<std::string> items_;
};

class ValidationError : public ListError {
 public:
  ValidationError(const std::string& message, std::vector<std::string> paths)
      : ListError("validation", message, std::move(paths)) {}
};

class IncompleteDesignError : public ListError {
 public:
  IncompleteDesignError(const std::string& message,
                        std::vector<std::string> cells)
      : ListError("incomplete-design", message, std::move(cells)) {}
};

}  // namespace aglb
