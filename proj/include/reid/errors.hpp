#ifndef REID_ERRORS_HPP_
#define REID_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace reid {

// Base of every error the library throws. Subclasses name the failure
// category so callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class BatchSizeError : public Error { using Error::Error; };
class LabelError : public Error { using Error::Error; };
class BatchCompositionError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class DatasetError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class EvaluationError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace reid

#endif  // REID_ERRORS_HPP_
