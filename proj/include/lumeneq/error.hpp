// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lumeneq {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside its mathematical domain (probabilities, rates, labels).
class DomainError : public Error {
public:
    using Error::Error;
};

class EmptySequenceError : public Error {
public:
    using Error::Error;
};

/// Non-finite sample where a finite one is required.
class NumericDomainError : public DomainError {
public:
    using DomainError::DomainError;
};

/// SNR is undefined for a signal with zero mean power.
class ZeroPowerError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DegenerateBatchError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class DegenerateDataError : public Error {
public:
    using Error::Error;
};

/// A documented precondition between components was broken by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Model file loading. Each failure mode has its own type so callers can
// tell a stale file from a damaged one.
class ModelFileError : public Error {
public:
    using Error::Error;
};

class VersionMismatchError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

class ArchitectureMismatchError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

class ChecksumError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

class TruncatedFileError : public ModelFileError {
public:
    using ModelFileError::ModelFileError;
};

}  // namespace lumeneq
