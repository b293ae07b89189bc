#pragma once

#include <stdexcept>
#include <string>

namespace mmict {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ContextLengthError : public Error {
 public:
  ContextLengthError(std::size_t length, std::size_t max)
      : Error("context length " + std::to_string(length) + " exceeds maximum " + std::to_string(max)),
        length_(length),
        max_(max) {}
  std::size_t length() const { return length_; }
  std::size_t max() const { return max_; }

 private:
  std::size_t length_;
  std::size_t max_;
};

class LexicalError : public Error {
 public:
  explicit LexicalError(const std::string& word)
      : Error("out-of-vocabulary word: '" + word + "'"), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (dataset, checkpoint, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmict
