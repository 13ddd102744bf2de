#pragma once

#include <stdexcept>
#include <string>

namespace lumpflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: lattice, grid size, configuration document.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Two fields defined over different tori were combined.
class LatticeMismatch : public Error {
public:
  LatticeMismatch() : Error("fields live on different lattices") {}
};

/// A numerical procedure could not produce a trustworthy answer.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// The moduli point left the admissible region (a zero approached a pole,
/// two zeros or two poles merged, or lambda vanished).
class ChartExit : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// NaN or an energy spike during wave-map evolution.
class BlowUp : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace lumpflow
