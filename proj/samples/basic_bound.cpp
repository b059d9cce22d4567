// Prints alpha_N for a few horizons, by closed form and by LP.

#include <cstdio>

#include "mfmpc/lp.hpp"

int main() {
  for (double nu : {1.0, 10.0, 100.0}) {
    std::printf("nu = %g\n", nu);
    for (std::size_t n : {2, 3, 5, 10, 20}) {
      const auto r = mfmpc::evaluate_bound_for_nu(nu, n);
      std::printf("  N = %2zu  alpha = % .10f  (lp % .10f)%s\n", n, r.alpha_closed_form, r.alpha_lp,
                  r.feasible ? "" : "  no estimate");
    }
  }
}
