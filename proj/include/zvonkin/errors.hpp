// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace zvonkin {

/// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- problem construction / validation ---
class UnknownKind : public Error {
  public:
    using Error::Error;
};
class InvalidConstant : public Error {
  public:
    using Error::Error;
};
class DimensionMismatch : public Error {
  public:
    using Error::Error;
};
class EvaluationFailure : public Error {
  public:
    using Error::Error;
};
class NonSymmetricProduct : public Error {
  public:
    using Error::Error;
};

// --- reference measure ---
class NotOneDimensional : public Error {
  public:
    using Error::Error;
};
class NonConstantSigma : public Error {
  public:
    using Error::Error;
};
class MassLeak : public Error {
  public:
    using Error::Error;
};

// --- corrector solve ---
class UnsupportedDimension : public Error {
  public:
    using Error::Error;
};
class SingularAssembly : public Error {
  public:
    using Error::Error;
};
class LinearSolveFailure : public Error {
  public:
    using Error::Error;
};
class LambdaSearchExhausted : public Error {
  public:
    using Error::Error;
};
class NoConvergence : public Error {
  public:
    using Error::Error;
};

// --- sampling ---
class NonFiniteState : public Error {
  public:
    using Error::Error;
};
class ExcursionGuard : public Error {
  public:
    using Error::Error;
};
class Case1Unsupported : public Error {
  public:
    using Error::Error;
};

// --- metrics / fitting ---
class EmptySampleSet : public Error {
  public:
    using Error::Error;
};
class InsufficientPoints : public Error {
  public:
    using Error::Error;
};
class DegenerateFit : public Error {
  public:
    using Error::Error;
};

// --- io / config ---
class IoFailure : public Error {
  public:
    using Error::Error;
};
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Violated precondition or type invariant (programming or usage contract).
class PreconditionViolation : public Error {
  public:
    using Error::Error;
};

}  // namespace zvonkin
