#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canvoi {

// Error families map one-to-one onto CLI exit codes: config -> 1, data -> 2,
// numeric -> 3.
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

// Shape disagreement between operands.
class DimensionError : public ConfigError {
 public:
  explicit DimensionError(const std::string& what) : ConfigError(what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : DataError(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class NotFoundError : public DataError {
 public:
  explicit NotFoundError(const std::string& what) : DataError(what) {}
};

// No tile survived tissue filtering.
class EmptySlideError : public DataError {
 public:
  explicit EmptySlideError(const std::string& slide_id)
      : DataError("empty slide: no tissue tiles in " + slide_id), slide_id_(slide_id) {}

  const std::string& slide_id() const noexcept { return slide_id_; }

 private:
  std::string slide_id_;
};

class BookkeepingError : public DataError {
 public:
  explicit BookkeepingError(const std::string& what) : DataError(what) {}
};

class UndefinedMetricError : public DataError {
 public:
  explicit UndefinedMetricError(const std::string& what) : DataError(what) {}
};

class DegenerateScoreError : public DataError {
 public:
  explicit DegenerateScoreError(const std::string& what) : DataError(what) {}
};

// Non-finite value during training; `where` is the step, epoch or parameter.
class NumericAbort : public Error {
 public:
  NumericAbort(const std::string& what, long long index = -1)
      : Error(ErrorKind::numeric, what), index_(index) {}

  long long index() const noexcept { return index_; }

 private:
  long long index_;
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::numeric: return 3;
  }
  return 1;
}

inline const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace canvoi
