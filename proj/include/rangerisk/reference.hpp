#pragma once

#include <string>
#include <vector>

#include "rangerisk/riskmeasures.hpp"

// Built-in example models and the published values they reproduce; the data
// behind the `paper-tables` CLI command and the acceptance suite.
namespace rangerisk::reference {

struct NamedRange {
    std::string name;
    RangeSpec range;
};

// Three-asset example: common location/scale, normal / Student-t(4) / Laplace.
EllipticalModel triplet_model(Family fam);
std::vector<NamedRange> triplet_ranges();

// Five-asset Student-t model with fitted parameters used as fixtures.
EllipticalModel five_asset_model();
std::vector<NamedRange> five_asset_ranges();

// VaR table of the triplet models: probability levels x 9 columns
// (U1 U2 U3 V1 V2 V3 W1 W2 W3).
const std::vector<double>& var_levels3();
double var_value3(int level_idx, int col);

// MRVaR rows (4 ranges x 3 components) per family.
Eigen::MatrixXd mrvar_table(Family fam);

// MRCov / MRCorr (range_idx 0..3), full symmetric 3x3 matrices.
Eigen::MatrixXd mrcov_matrix(Family fam, int range_idx);
Eigen::MatrixXd mrcorr_matrix(Family fam, int range_idx);

// Five-asset VaR table (levels x 5), MRVaR rows (3 x 5), MRCov (range 0..2).
const std::vector<double>& var_levels5();
double var_value5(int level_idx, int col);
Eigen::MatrixXd mrvar_table5();
Eigen::MatrixXd mrcov_matrix5(int range_idx);

}  // namespace rangerisk::reference
