#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace muscale {

/// Invalid model/experiment specification (bad width, vocab, config keys...).
class SpecError : public std::runtime_error {
 public:
  explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor shape mismatch; carries the offending graph node when raised by an op.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(const std::string& what, int node = -1)
      : std::runtime_error(node >= 0 ? what + " (node " + std::to_string(node) + ")" : what),
        node_id(node) {}
  int node_id;
};

/// API misuse (backward before forward, grad read before backward, ...).
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Corpus/file format violations; carries the byte offset when known.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what, std::int64_t offset = -1)
      : std::runtime_error(offset >= 0 ? what + " (byte offset " + std::to_string(offset) + ")"
                                       : what),
        byte_offset(offset) {}
  std::int64_t byte_offset;
};

/// Nonlinear fit could not produce a usable optimum; carries solver diagnostics.
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

/// A forward/backward pass produced a non-finite value. This is a signal, not a
/// defect: training loops catch it and flag the run as diverged.
class DivergenceSignal : public std::runtime_error {
 public:
  DivergenceSignal(int node, const std::string& op)
      : std::runtime_error("non-finite value produced by op '" + op + "' at node " +
                           std::to_string(node)),
        node_id(node),
        op_name(op) {}
  int node_id;
  std::string op_name;
};

}  // namespace muscale
