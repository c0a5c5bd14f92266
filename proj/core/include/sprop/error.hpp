#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sprop {

// Base of every exception thrown by the library. The CLI maps these to the
// "data error" exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LexiconError : public Error {
 public:
  using Error::Error;
};

// Malformed CoNLL-U input. line() is 1-based, 0 when not tied to a line.
class ConlluError : public Error {
 public:
  ConlluError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class StatsError : public Error {
 public:
  using Error::Error;
};

}  // namespace sprop
