#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace acceptance {

// One line per criterion: "[PASS] 4 metrics engine: ...".
class Ledger {
 public:
  void record(const std::string& id, const std::string& title, bool ok, const std::string& detail) {
    std::printf("[%s] %s %s: %s\n", ok ? "PASS" : "FAIL", id.c_str(), title.c_str(), detail.c_str());
    std::fflush(stdout);
    failed_ = failed_ || !ok;
  }
  void blocked(const std::string& id, const std::string& title, const std::string& detail) {
    std::printf("[BLOCKED] %s %s: %s\n", id.c_str(), title.c_str(), detail.c_str());
    std::fflush(stdout);
    blocked_ = true;
  }
  bool failed() const { return failed_; }
  bool any_blocked() const { return blocked_; }

 private:
  bool failed_ = false;
  bool blocked_ = false;
};

}  // namespace acceptance
