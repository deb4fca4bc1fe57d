#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dtc {

// Records which dataset ids were read, and under which pipeline stage.
// Reads are reported by the corpus accessors (texts_of / labels_of) while an
// AuditScope is active on the current thread.
class ReadAudit {
 public:
  enum class Field { text, label };

  void record(std::string_view stage, Field field, std::span<const std::int64_t> ids);

  std::vector<std::string> stages() const;
  std::set<std::int64_t> ids(std::string_view stage, Field field) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::set<std::int64_t>, std::less<>> text_reads_;
  std::map<std::string, std::set<std::int64_t>, std::less<>> label_reads_;
};

class AuditScope {
 public:
  AuditScope(ReadAudit* audit, std::string stage);
  ~AuditScope();
  AuditScope(const AuditScope&) = delete;
  AuditScope& operator=(const AuditScope&) = delete;

  // Active audit and stage on this thread, or nullptr.
  static ReadAudit* active();
  static const std::string& active_stage();

 private:
  ReadAudit* prev_audit_;
  std::string prev_stage_;
};

}  // namespace dtc
