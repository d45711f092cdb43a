#include <limits>

#include "nwq/training.hpp"

namespace nwq {

double plateau_scheduler(std::span<const double> history, double lr, double factor,
                         std::size_t patience) {
  if (history.empty()) throw ContractError("plateau_scheduler: empty history");
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  bool reduced_last = false;
  for (double loss : history) {
    reduced_last = false;
    if (loss < best) {
      best = loss;
      bad = 0;
    } else if (++bad >= patience) {
      bad = 0;
      reduced_last = true;
    }
  }
  return reduced_last ? lr * factor : lr;
}

bool should_stop_early(std::span<const double> history, std::size_t patience) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t since = 0;
  for (double loss : history) {
    if (loss < best) {
      best = loss;
      since = 0;
    } else {
      ++since;
    }
  }
  return !history.empty() && since >= patience;
}

}  // namespace nwq
