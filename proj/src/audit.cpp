#include "dtc/audit.hpp"

namespace dtc {

namespace {
thread_local ReadAudit* t_audit = nullptr;
thread_local std::string t_stage;
}  // namespace

void ReadAudit::record(std::string_view stage, Field field,
                       std::span<const std::int64_t> ids) {
  std::lock_guard lock(mu_);
  auto& table = field == Field::text ? text_reads_ : label_reads_;
  auto it = table.find(stage);
  if (it == table.end()) it = table.emplace(std::string(stage), std::set<std::int64_t>{}).first;
  it->second.insert(ids.begin(), ids.end());
}

std::vector<std::string> ReadAudit::stages() const {
  std::lock_guard lock(mu_);
  std::set<std::string> all;
  for (const auto& [k, v] : text_reads_) all.insert(k);
  for (const auto& [k, v] : label_reads_) all.insert(k);
  return {all.begin(), all.end()};
}

std::set<std::int64_t> ReadAudit::ids(std::string_view stage, Field field) const {
  std::lock_guard lock(mu_);
  const auto& table = field == Field::text ? text_reads_ : label_reads_;
  auto it = table.find(stage);
  return it == table.end() ? std::set<std::int64_t>{} : it->second;
}

AuditScope::AuditScope(ReadAudit* audit, std::string stage)
    : prev_audit_(t_audit), prev_stage_(std::move(t_stage)) {
  t_audit = audit;
  t_stage = std::move(stage);
}

AuditScope::~AuditScope() {
  t_audit = prev_audit_;
  t_stage = std::move(prev_stage_);
}

ReadAudit* AuditScope::active() { return t_audit; }

const std::string& AuditScope::active_stage() { return t_stage; }

}  // namespace dtc
