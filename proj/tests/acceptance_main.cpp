#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "hitok/verify.hpp"

// Runs every acceptance criterion, one result line each. Arguments, if
// given, restrict the run to the named criteria (e.g. AC-3 AC-8).
int main(int argc, char** argv) {
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0, ran = 0;
  for (const auto& check : hitok::verify::acceptance_checks()) {
    bool selected = only.empty();
    for (const auto& o : only) selected |= o == check.id;
    if (!selected) continue;
    const auto r = hitok::verify::run_check(check);
    std::printf("%s\n", hitok::verify::format_result(r).c_str());
    std::fflush(stdout);
    ++ran;
    failed += !r.passed;
  }
  std::printf("%d/%d acceptance criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
