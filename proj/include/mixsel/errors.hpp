#pragma once

#include <stdexcept>
#include <string>

namespace mixsel {

struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularMatrix : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ComplexityLimit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EstimatorDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateModelSpace : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mixsel
