#pragma once

// Exhaustive checks of the debouncer against a reference written from the
// gating rule, over every candidate stream up to a given length.

#include <cstdint>
#include <string>
#include <vector>

#include "gesturebench/stream.hpp"

namespace gbtest {

struct DebounceAudit {
  std::uint64_t sequences = 0;     // brute-force streams checked
  std::uint64_t transitions = 0;   // offers made across both passes
  std::uint64_t states = 0;        // distinct joint states reached by the closure pass
  std::uint64_t emits = 0;
  std::vector<std::string> violations;  // first few only
  bool ok() const { return violations.empty(); }
};

// Brute force: all streams of length <= brute_len over a 4-symbol outcome
// alphabet (two classes above tau, one at exactly tau, one below), with full
// history checks. Closure: every joint (debouncer, reference) state reachable
// in <= closure_len candidates, which covers all streams of that length.
DebounceAudit audit_debouncer(const gesturebench::StreamConfig& config, std::size_t brute_len,
                              std::size_t closure_len);

}  // namespace gbtest
