#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace acceptance {

// One acceptance criterion: prints its evidence into `log` and returns
// pass/fail.  Criteria must not depend on each other's side effects.
struct Criterion {
    int number;
    std::string title;
    std::function<bool(std::ostringstream& log)> run;
};

const std::vector<Criterion>& all_criteria();

}  // namespace acceptance
