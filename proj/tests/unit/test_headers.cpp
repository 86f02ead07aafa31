// Every public header must compile on its own terms when pulled in together.
#include "rbmlab/autocorr.hpp"
#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"
#include "rbmlab/exact.hpp"
#include "rbmlab/flow.hpp"
#include "rbmlab/gibbs.hpp"
#include "rbmlab/io.hpp"
#include "rbmlab/metrics.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"
#include "rbmlab/sampleset.hpp"
#include "rbmlab/targets/mnist.hpp"
#include "rbmlab/targets/patterns.hpp"
#include "rbmlab/targets/tfic.hpp"
#include "rbmlab/tradeoff.hpp"
#include "rbmlab/train.hpp"

#include "doctest.h"

TEST_CASE("library namespace is reachable") {
    rbmlab::RBM r(2, 2);
    CHECK(r.w.size() == 4);
}
