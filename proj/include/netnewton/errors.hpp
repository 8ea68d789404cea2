#pragma once

#include <stdexcept>
#include <string>

namespace netnewton {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Graph generation could not produce a connected instance.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class SolveError : public Error {
 public:
  SolveError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace netnewton
