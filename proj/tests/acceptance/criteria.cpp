#include "criteria.hpp"

namespace acceptance {

namespace {

bool not_implemented(std::ostringstream& log) {
    log << "not implemented yet\n";
    return false;
}

}  // namespace

const std::vector<Criterion>& all_criteria() {
    static const std::vector<Criterion> criteria = {
        {1, "exact target construction", not_implemented},
        {2, "MNIST statistics", not_implemented},
        {3, "exact evaluation engine", not_implemented},
        {4, "flow field matches the loss gradient", not_implemented},
        {5, "autocorrelation estimator calibration", not_implemented},
        {6, "tradeoff bound and stages", not_implemented},
        {7, "overfitting signature", not_implemented},
        {8, "proxy metric ranking", not_implemented},
        {9, "deterministic reruns", not_implemented},
    };
    return criteria;
}

}  // namespace acceptance
