#pragma once

#include "muasv/types.hpp"

namespace muasv {

// Mean squared abundance error: ||A - Ahat||_F^2 / (N*P).
double mse_abundance(const AbundanceMatrix& truth, const AbundanceMatrix& est);

// Mean squared endmember error: sum_n ||M_n - Mhat_n||_F^2 / (N*L*P).
double mse_endmembers(const EndmemberField& truth, const EndmemberField& est);

// Mean squared reconstruction error: sum_n ||y_n - Mhat_n ahat_n||^2 / (N*L).
double mse_reconstruction(const HsiCube& cube, const EndmemberField& field,
                          const AbundanceMatrix& ab);

// Average spectral angle, summed over endmembers and averaged over pixels
// only (not over pixels*endmembers).
double sam_endmembers(const EndmemberField& truth, const EndmemberField& est);

}  // namespace muasv
