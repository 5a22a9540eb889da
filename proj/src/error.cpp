#include "mirnn/error.hpp"

namespace mirnn {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::binding: return "binding";
    case ErrorCode::numeric_overflow: return "numeric_overflow";
    case ErrorCode::unsupported_order: return "unsupported_order";
    case ErrorCode::shape: return "shape";
    case ErrorCode::config: return "config";
    case ErrorCode::domain: return "domain";
    case ErrorCode::partition: return "partition";
    case ErrorCode::degenerate_overlap: return "degenerate_overlap";
    case ErrorCode::degenerate_domain: return "degenerate_domain";
    case ErrorCode::degenerate_target: return "degenerate_target";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace mirnn
