#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace clademap {

/// Expected allele counts per carrier class; row 0 controls, row 1 cases.
/// With two classes, column 0 is the non-carrier (allele 0) class and
/// column 1 the carrier (allele 1) class.
struct AlleleCountTable {
  std::vector<double> controls;
  std::vector<double> cases;

  std::size_t classes() const { return controls.size(); }
  double control_total() const { return std::accumulate(controls.begin(), controls.end(), 0.0); }
  double case_total() const { return std::accumulate(cases.begin(), cases.end(), 0.0); }
};

}  // namespace clademap
