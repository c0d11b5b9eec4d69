#pragma once

#include <stdexcept>
#include <string>

namespace imc {

// Error categories. The CLI maps each to a process exit code.
enum class ErrorKind {
  Usage,        // bad flags / config keys
  Data,         // malformed files, empty datasets, I/O
  Dimension,    // tensor shape mismatch
  Index,        // label or index out of range
  Contract,     // violated precondition
  Numeric,      // non-finite values where finite are required
  Rank,         // PCA component count too large
  Divergence,   // training loss became non-finite
  Programming,  // closed-loop programming missed its RMSE criterion
  Capacity,     // model does not fit on the available tiles
  Calibration,  // ADC calibration could not meet its clamp budget
  Integrity,    // checksum, version, or fingerprint mismatch
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 0 success, 1 usage, 2 data, 3 divergence, 4 programming, 5 integrity.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Divergence: return 3;
    case ErrorKind::Programming: return 4;
    case ErrorKind::Integrity: return 5;
    default: return 2;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace imc
