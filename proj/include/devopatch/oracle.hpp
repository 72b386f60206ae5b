#pragma once

#include <atomic>
#include <concepts>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "devopatch/fitness.hpp"
#include "devopatch/image.hpp"

namespace devopatch {

/// Transport-level failure talking to a remote model. The model was not (known to be) consulted.
class OracleFailure : public std::runtime_error {
 public:
  enum class Kind { Timeout, Connection, Status, Malformed, Eof, Parse, ChildExit };

  OracleFailure(Kind kind, const std::string& what, int attempts = 1, int status = 0)
      : std::runtime_error(what), kind_(kind), attempts_(attempts), status_(status) {}

  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  /// HTTP status for Kind::Status, 0 otherwise.
  int status() const { return status_; }

 private:
  Kind kind_;
  int attempts_;
  int status_;
};

inline std::string_view to_string(OracleFailure::Kind k) {
  switch (k) {
    case OracleFailure::Kind::Timeout: return "timeout";
    case OracleFailure::Kind::Connection: return "connection";
    case OracleFailure::Kind::Status: return "status";
    case OracleFailure::Kind::Malformed: return "malformed";
    case OracleFailure::Kind::Eof: return "eof";
    case OracleFailure::Kind::Parse: return "parse";
    case OracleFailure::Kind::ChildExit: return "child-exit";
  }
  return "unknown";
}

template <class O>
concept label_oracle = requires(O& o, const O& co, const Image& x) {
  { o.classify(x) } -> std::convertible_to<Label>;
  { co.query_count() } -> std::convertible_to<std::size_t>;
};

/// Hard-label classifier with an exact count of model queries.
///
/// classify() counts a query only once the model has answered; failures surface as
/// OracleFailure and leave the counter untouched.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  LabelOracle(const LabelOracle&) = delete;
  LabelOracle& operator=(const LabelOracle&) = delete;

  Label classify(const Image& x) {
    if (shape_ && x.shape() != *shape_) {
      throw std::invalid_argument("oracle expects " + to_string(*shape_) + " images, got " + to_string(x.shape()));
    }
    const Label label = do_classify(x);
    queries_.fetch_add(1, std::memory_order_relaxed);
    return label;
  }

  std::size_t query_count() const { return queries_.load(std::memory_order_relaxed); }

  const std::optional<Shape>& declared_shape() const { return shape_; }

  /// Whether repeated queries of the same image are guaranteed to agree.
  virtual bool deterministic() const { return true; }

 protected:
  explicit LabelOracle(std::optional<Shape> shape = std::nullopt) : shape_(shape) {}

  virtual Label do_classify(const Image& x) = 0;

 private:
  std::optional<Shape> shape_;
  std::atomic<std::size_t> queries_{0};
};

static_assert(label_oracle<LabelOracle>);

}  // namespace devopatch
