#ifndef HIPRSSM_ERRORS_HPP_
#define HIPRSSM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace hiprssm {

// All library errors derive from Error so callers can catch one type at the
// CLI boundary and map to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

class PatternViolation : public Error {
 public:
  explicit PatternViolation(const std::string& msg) : Error(msg) {}
};

class SingularMatrix : public Error {
 public:
  explicit SingularMatrix(const std::string& msg) : Error(msg) {}
};

class PSDViolation : public Error {
 public:
  explicit PSDViolation(const std::string& msg) : Error(msg) {}
};

class EmptyTape : public Error {
 public:
  explicit EmptyTape(const std::string& msg) : Error(msg) {}
};

class OddLatentDim : public Error {
 public:
  explicit OddLatentDim(const std::string& msg) : Error(msg) {}
};

class IntegrationDiverged : public Error {
 public:
  explicit IntegrationDiverged(const std::string& msg) : Error(msg) {}
};

class TrajectoryTooShort : public Error {
 public:
  explicit TrajectoryTooShort(const std::string& msg) : Error(msg) {}
};

class ManifestMismatch : public Error {
 public:
  explicit ManifestMismatch(const std::string& msg) : Error(msg) {}
};

class ShortFile : public Error {
 public:
  explicit ShortFile(const std::string& msg) : Error(msg) {}
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& msg) : Error(msg) {}
};

class EmptyMask : public Error {
 public:
  explicit EmptyMask(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class CheckpointMismatch : public Error {
 public:
  explicit CheckpointMismatch(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace hiprssm

#endif  // HIPRSSM_ERRORS_HPP_
