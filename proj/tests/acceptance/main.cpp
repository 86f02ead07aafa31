// Acceptance gate: one line per criterion, CRITERION <k>: PASS|FAIL.
// --only <k> runs a single criterion (used by the ctest registration);
// --verbose prints the evidence log for passing criteria too.

#include <cstring>
#include <iostream>
#include <sstream>

#include "criteria.hpp"

int main(int argc, char** argv) {
    int only = 0;
    bool verbose = false;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
            only = std::atoi(argv[++i]);
        else if (std::strcmp(argv[i], "--verbose") == 0)
            verbose = true;
        else {
            std::cerr << "usage: rbmlab_acceptance [--only K] [--verbose]\n";
            return 2;
        }
    }

    int failures = 0, ran = 0;
    for (const auto& c : acceptance::all_criteria()) {
        if (only && c.number != only) continue;
        ran++;
        std::ostringstream log;
        bool pass = false;
        try {
            pass = c.run(log);
        } catch (const std::exception& ex) {
            log << "exception: " << ex.what() << '\n';
        }
        std::cout << "CRITERION " << c.number << ": "
                  << (pass ? "PASS" : "FAIL") << " — " << c.title << '\n';
        if (!pass || verbose) {
            std::istringstream lines(log.str());
            std::string line;
            while (std::getline(lines, line))
                std::cout << "    " << line << '\n';
        }
        if (!pass) failures++;
    }
    if (only && ran == 0) {
        std::cerr << "no criterion numbered " << only << '\n';
        return 2;
    }
    return failures ? 1 : 0;
}
