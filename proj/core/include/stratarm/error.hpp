#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace stratarm {

enum class ErrorCode {
  kInvalidArgument,
  kMissingColumn,
  kNonNumericCell,
  kNonBinaryTreatment,
  kRankDeficient,
  kEmptyInput,
  kStratumTooSmall,
  kSingleGroup,
  kEmptyArm,
  kDesignMismatch,
  kWeakFirstStage,
  kDegeneratePropensity,
  kMissingPairing,
  kDegenerateUnion,
  kNotRegressionBased,
  kUnknownModel,
  kFailureBudget,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  // Cell-level errors also record where they happened (1-based data row,
  // header name). row() is 0 when not applicable.
  Error(ErrorCode code, const std::string& what, long row, std::string column)
      : Error(code, what) {
    row_ = row;
    column_ = std::move(column);
  }

  ErrorCode code() const noexcept { return code_; }
  long row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  ErrorCode code_;
  long row_ = 0;
  std::string column_;
};

}  // namespace stratarm
