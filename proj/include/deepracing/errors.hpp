#pragma once

#include <stdexcept>
#include <string>

namespace deepracing {

/// Least-squares fit requested with fewer samples than unknowns.
class UnderdeterminedError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Regression input that admits no fit (e.g. all abscissae identical).
class DegenerateDataError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Too few usable samples to run an estimator.
class InsufficientDataError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed datagram content (bad magic, garbage fields).
class ProtocolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Datagram shorter or longer than the fixed wire size.
class TruncationError : public ProtocolError {
public:
  using ProtocolError::ProtocolError;
};

/// Wire version this build does not speak.
class UnsupportedVersionError : public ProtocolError {
public:
  using ProtocolError::ProtocolError;
};

/// Simulation state went non-finite.
class SimulationFault : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Filesystem or socket failure surfaced to the caller.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace deepracing
