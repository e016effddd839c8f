#pragma once

#include <stdexcept>
#include <string>

namespace xq {

// Base of every error the toolkit throws on a broken contract or bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IllegalMove : public Error {
 public:
  using Error::Error;
};

class NotTerminal : public Error {
 public:
  using Error::Error;
};

class NoLegalMove : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

class InsufficientBuffer : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace xq
