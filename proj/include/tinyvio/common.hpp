#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tinyvio {

// Thrown when an input file fails to parse; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Thrown when file counts / shapes are mutually inconsistent.
class StructuralError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when an operation is invoked on an object in the wrong state
// (e.g. inference with uninitialized running statistics).
class StateError : public std::logic_error {
  using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace tinyvio
