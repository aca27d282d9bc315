#include "nlspde/model.hpp"

#include <omp.h>

namespace nlspde {

Model Model::assemble(const Grid& grid, const TimeGrid& time, const CoefficientSet& coeffs,
                      double theta) {
    OperatorSequence a = OperatorSequence::generator(coeffs, grid, time);
    std::vector<OperatorSequence> b;
    for (int i = 0; i < coeffs.noise_count(); ++i) {
        b.push_back(OperatorSequence::noise(coeffs, grid, time, i));
    }
    ThetaStepper stepper(a, time, theta);
    return Model{grid, time, coeffs, theta, std::move(a), std::move(b), std::move(stepper)};
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

}  // namespace nlspde
