#pragma once

#include <stdexcept>
#include <string>

namespace semidrd {

// Bad user-supplied configuration (missing pools, invalid ranges, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or incompatible serialized artifact (checkpoint, manifest, weight file).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sampling from a memory bank with no matching entries. Callers that can
// fall back (negative augmentation) catch this.
class EmptyBankError : public std::runtime_error {
public:
    explicit EmptyBankError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a training step produces a non-finite loss. Carries the last
// per-term breakdown so the failure is diagnosable from the message alone.
class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace semidrd
