#include "polm/raster.hpp"

namespace polm {

std::vector<std::string> default_pol_labels(int P) {
    std::vector<std::string> labels;
    if (P == 2) {
        labels = {"a_hh", "b_hh", "a_vv", "b_vv"};
    } else {
        for (int p = 1; p <= P; ++p) {
            labels.push_back("a_" + std::to_string(p));
            labels.push_back("b_" + std::to_string(p));
        }
    }
    return labels;
}

}  // namespace polm
