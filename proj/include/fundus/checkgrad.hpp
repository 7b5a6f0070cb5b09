#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fundus/rng.hpp"
#include "fundus/tape.hpp"
#include "fundus/tensor.hpp"

namespace fundus::checkgrad {

// Builds a scalar loss over the parameters in the store. With a tape the
// call must record the graph; with nullptr it must only compute the value.
using LossFn = std::function<Tensor<double>(Tape<double>*, ParamStore<double>&)>;

struct CaseResult {
    std::string name;
    double max_rel_err = 0;
    bool pass = false;
};

// Central finite differences at 64-bit, step 1e-5, against tape gradients.
// Relative error uses max(|analytic|, |fd|, 0.01) as denominator so
// near-zero gradients degrade to an absolute check. `max_coords` 0 probes
// every coordinate, otherwise a seeded random subset.
double check_case(const LossFn& f, ParamStore<double>& params, Rng& rng, int max_coords = 0);

inline constexpr double kTolerance = 1e-4;

// One entry per differentiable op plus the composite model forwards.
std::vector<CaseResult> run_all(std::uint64_t seed, std::ostream& out);

}  // namespace fundus::checkgrad
