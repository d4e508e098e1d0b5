#pragma once

#include <functional>
#include <string>
#include <vector>

namespace hitok::verify {

struct CheckResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

// A named check. `run` fills passed/detail; exceeding the time budget fails
// the check even if its assertions held.
struct Check {
  std::string id;
  std::string title;
  double budget_seconds = 0.0;
  std::function<void(CheckResult&)> run;
};

// Criteria AC-1 .. AC-10.
std::vector<Check> acceptance_checks();
// Fast module-level properties.
std::vector<Check> invariant_checks();

CheckResult run_check(const Check& c);
// "PASS AC-3  title  (12.3 s / 600 s)  detail"
std::string format_result(const CheckResult& r);

}  // namespace hitok::verify
