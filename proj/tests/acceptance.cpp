#include <cstdio>
#include <cstdlib>
#include <string>

#include "conewave/experiments.hpp"

// Runs every acceptance criterion; one line each. Optional args pick criteria.
int main(int argc, char** argv)
{
    conewave::AcceptanceOptions opt;
    for (int i = 1; i < argc; ++i) opt.only.push_back(std::atoi(argv[i]));
    int failed = 0;
    conewave::run_acceptance(opt, [&](const conewave::CriterionResult& r) {
        std::printf("%s\n", conewave::format_criterion(r).c_str());
        std::fflush(stdout);
        failed += r.pass ? 0 : 1;
    });
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
