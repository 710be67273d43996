// include/rnnt/error.h

#ifndef RNNT_ERROR_H_
#define RNNT_ERROR_H_

#include <stdexcept>
#include <string>

namespace rnnt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible operand shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad argument value (label out of range, empty sequence, negative scale...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Alignment lattice cannot contain any path for the requested transcription.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Malformed file: bad magic, unparsable content, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// File parsed fine but its dimensions disagree with what the caller expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Line-oriented parse failure; carries the 1-based line number.
class ParseError : public FormatError {
 public:
  ParseError(const std::string &file, size_t line, const std::string &what)
      : FormatError(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rnnt

#endif  // RNNT_ERROR_H_
