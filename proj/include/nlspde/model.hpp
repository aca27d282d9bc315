#pragma once

#include <vector>

#include "nlspde/cauchy.hpp"
#include "nlspde/coefficients.hpp"
#include "nlspde/grid.hpp"
#include "nlspde/operators.hpp"

namespace nlspde {

/// A fully assembled discrete problem: meshes, coefficients, A(.) and
/// B_i(.) on every knot, and the theta-stepper over A. Immutable and safe to
/// share read-only across workers.
struct Model {
    Grid grid;
    TimeGrid time;
    CoefficientSet coeffs;
    double theta = 1.0;
    OperatorSequence A;
    std::vector<OperatorSequence> B;
    ThetaStepper stepper;

    static Model assemble(const Grid& grid, const TimeGrid& time, const CoefficientSet& coeffs,
                          double theta = 1.0);

    int size() const { return grid.size(); }
    int steps() const { return time.steps(); }
    int noise_count() const { return static_cast<int>(B.size()); }
};

}  // namespace nlspde
