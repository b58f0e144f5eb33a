#include "aipw/rng.hpp"

#include "aipw/stats.hpp"

namespace aipw {

double Rng::normal() {
  // uniform() can return exactly 0; nudge into (0,1).
  double u = uniform();
  if (u <= 0.0) u = 0x1.0p-54;
  return inv_norm_cdf(u);
}

}  // namespace aipw
